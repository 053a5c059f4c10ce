import argparse
import logging
import sys

from config import setup_logging
from errors import EXIT_USAGE, DiffwaveError

# 引入子命令
from commands import profile, simulate, rates, verify

logger = logging.getLogger("diffwave")

COMMANDS = (profile, simulate, rates, verify)


def build_parser() -> argparse.ArgumentParser:
    """建立命令列解析器並註冊所有子命令"""
    parser = argparse.ArgumentParser(
        prog="diffwave",
        description="Damped p-system / M1 diffusion-wave laboratory",
    )
    parser.add_argument("--log-level", default=None, help="override DIFFWAVE_LOG_LEVEL")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # 註冊子命令
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.log_level:
        setup_logging(args.log_level.upper())
    else:
        setup_logging()

    try:
        return args.handler(args)
    except DiffwaveError as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
