import os
import logging
from dotenv import load_dotenv

load_dotenv()

# 平行運算
DIFFWAVE_THREADS = max(1, int(os.getenv("DIFFWAVE_THREADS", str(os.cpu_count() or 1))))

# 輸出
OUTPUT_DIR = os.getenv("DIFFWAVE_OUTPUT_DIR", "output")

# 日誌
LOG_LEVEL = os.getenv("DIFFWAVE_LOG_LEVEL", "INFO").upper()
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# 數值預設
DEFAULT_CFL = 0.45
DEFAULT_N_CELLS = 4096
DEFAULT_SAMPLES = 96
DEFAULT_PROFILE_CELLS = 4096
DEFAULT_PROFILE_TOL = 1e-9
DEFAULT_XI_FACTOR = 12.0  # Ξ = 12/√α
MIN_XI_FACTOR = 8.0

# 定理假設的小量上限
MAX_WAVE_STRENGTH = 0.5
MAX_AMPLITUDE = 0.1


def setup_logging(level: str = LOG_LEVEL):
    """設定根 logger（只安裝一次）"""
    root = logging.getLogger()
    if root.handlers:
        root.setLevel(level)
        return
    logging.basicConfig(level=level, format=LOG_FORMAT)
