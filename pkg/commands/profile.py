"""profile 子命令：求解擴散波剖面並輸出 CSV"""
import logging
from pathlib import Path

import numpy as np

from diffusion_wave import flux_relation_check, solve_profile, verify_gaussian_tail
from parser import load_config, to_scenario
from services.writers import write_json, write_profile_csv

logger = logging.getLogger(__name__)


def register(subparsers):
    """註冊子命令"""
    p = subparsers.add_parser("profile", help="solve the diffusion-wave profile and write profile.csv")
    p.add_argument("--config", required=True, help="run configuration (TOML)")
    p.add_argument("--out", default=None, help="output directory (default: output.directory)")
    p.set_defaults(handler=run)


def run(args) -> int:
    cfg = load_config(args.config)
    spec = to_scenario(cfg)
    closure = spec.closure()
    out = Path(args.out or cfg.output.directory)

    profile = solve_profile(
        closure,
        spec.v_minus,
        spec.v_plus,
        closure.alpha,
        xi_max=spec.profile_xi_factor / np.sqrt(closure.alpha),
        n_cells=spec.profile_cells,
        tol=spec.profile_tol,
        richardson=spec.profile_richardson,
    )
    write_profile_csv(out / "profile.csv", profile)

    summary = {
        "closure": closure.name,
        "v_minus": profile.v_minus,
        "v_plus": profile.v_plus,
        "alpha": profile.alpha,
        "xi_max": profile.xi_max,
        "n_cells": len(profile.xi_grid) - 1,
        "residual": profile.residual,
        "phi_at_zero": float(profile.phi_derivative(0, 0.0)),
    }
    if not profile.is_constant:
        tail = verify_gaussian_tail(profile)
        summary.update(
            tail_c=tail.c_decay,
            tail_prefactor=tail.prefactor,
            tail_max_rel_residual=tail.max_rel_residual,
            flux_relation_mismatch=flux_relation_check(profile, -2.0, 2.0),
        )
    write_json(out / "profile.json", summary)

    print(f"profile: {closure.name}  v-={profile.v_minus:g}  v+={profile.v_plus:g}  residual={profile.residual:.2e}")
    print(f"  phi(0) = {summary['phi_at_zero']:.12f}")
    if "tail_c" in summary:
        print(f"  gaussian tail c = {summary['tail_c']:.4f}")
    return 0
