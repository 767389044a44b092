#!/usr/bin/env python3
"""Hold the expanding de Sitter root and report the per-segment deviation.

The source term vanishes at H0 = sqrt(Hc^2 - sqrt(Hc^4 - 960 pi^2 lam)), so
the continued solution should sit on the constant profile to solver accuracy.
"""

from __future__ import annotations

import argparse
import math

import numpy as np

from semiflrw import (
    DEFAULT_HUBBLE_CRITICAL,
    InitialData,
    PhysicalParams,
    SolverConfig,
    WickConfig,
    continue_maximal,
)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--segments", type=int, default=12, help="horizon in segment spans")
    parser.add_argument("--fraction", type=float, default=0.5,
                        help="lambda as a fraction of Hc^4 / (960 pi^2), in (0, 1)")
    args = parser.parse_args()

    hc = DEFAULT_HUBBLE_CRITICAL
    lam = args.fraction * hc**4 / (960.0 * math.pi**2)
    h0 = math.sqrt(hc**2 - math.sqrt(hc**4 - 960.0 * math.pi**2 * lam))
    params = PhysicalParams(mass=0.0, cosmological_constant=lam)
    wick = WickConfig(k_max=40.0, n_k=192)

    probe, _ = continue_maximal(
        InitialData(0.0, 1.0, h0), 1.0, params, wick, SolverConfig(max_segments=1)
    )
    span = float(probe.taus[-1] - probe.taus[0])
    horizon = args.segments * span

    solution, report = continue_maximal(
        InitialData(0.0, 1.0, h0), horizon, params, wick, SolverConfig()
    )
    print(f"lambda = {lam:.6e}  H0 = {h0:.12f}  horizon = {horizon:.6e}")
    print(f"termination: {report.reason} at tau = {report.tau_stop!r}")
    print(f"{'segment':>7} {'tau_end':>14} {'sup|H - H0|':>13} {'iterations':>10}")
    bounds = np.asarray(solution.segment_bounds)
    for i, rep in enumerate(solution.reports):
        mask = solution.taus <= bounds[i + 1] + 1e-300
        dev = float(np.max(np.abs(solution.hubble[mask] - h0)))
        print(f"{i:>7} {bounds[i + 1]:>14.6e} {dev:>13.3e} {rep.iterates:>10}")
    print(f"overall sup|H - H0| = {np.max(np.abs(solution.hubble - h0)):.3e}")


if __name__ == "__main__":
    main()
