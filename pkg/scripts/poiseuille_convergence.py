"""Plane-channel flow under grid refinement: centreline ratio and profile error.

    python3 scripts/poiseuille_convergence.py --gaps 8 16 32 64
"""
import argparse
import time

import numpy as np

from porevox.flow import FlowOptions, flux_balance, solve_steady_flow
from porevox.synthetic import plane_channel


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--gaps", type=int, nargs="+", default=[8, 16, 32, 64])
    ap.add_argument("--slip", type=float, default=0.0, help="dimensionless slip length (gap width = 1)")
    args = ap.parse_args()
    beta = args.slip
    print("gap,steps,seconds,centre_over_mean,analytic,profile_error,order,max_div,flux_mismatch")
    prev = None
    for gap in args.gaps:
        length = 3 * gap
        g = plane_channel(gap, length)
        t0 = time.perf_counter()
        f = solve_steady_flow(g, 1e-3, 1.0 / gap, slip_beta_hat=(beta,), opts=FlowOptions(lateral_bc="symmetry"))
        sec = time.perf_counter() - t0
        w = f.u[2][0, 1:-1, length // 2]
        y = (np.arange(gap) + 0.5) / gap
        exact = w.mean() * (y * (1 - y) + beta) / (1 / 6 + beta)
        err = np.abs(w - exact).max() / exact.max()
        order = "" if prev is None else f"{np.log2(prev / err):.3f}"
        prev = err
        q_in, q_out = flux_balance(f, g)
        centre = 0.5 * (w[gap // 2 - 1] + w[gap // 2]) / w.mean() if gap % 2 == 0 else w[gap // 2] / w.mean()
        analytic = (1 / 8 + beta / 2) / (1 / 12 + beta / 2)
        print(f"{gap},{f.steps},{sec:.2f},{centre:.6f},{analytic:.6f},{err:.3e},{order},"
              f"{np.abs(f.divergence()[g.fluid]).max():.1e},{abs(q_in - q_out) / q_in:.1e}")


if __name__ == "__main__":
    main()
