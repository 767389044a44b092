"""System-level acceptance sweep: eleven numbered criteria, one line each.

Run with `pytest tests/test_acceptance.py -s -q` to see every verdict line;
without -s the lines still surface for any failing criterion.
"""

from __future__ import annotations

import itertools
import json
import math
import time

import numpy as np
import pytest

from semiflrw import cli
from semiflrw.core import (
    DEFAULT_HUBBLE_CRITICAL,
    Grid,
    InitialData,
    PhysicalParams,
    SampledFunction,
)
from semiflrw.energy import initial_energy_from_modes, initial_energy_integral
from semiflrw.fixedpoint import RetardedFunctional, picard_solve
from semiflrw.modes import (
    ModeBank,
    Potential,
    evolve_bank,
    evolve_mode,
    initial_mode,
    perturbative_mode,
    perturbative_orders,
    resolve_substep,
)
from semiflrw.solver import (
    SolverConfig,
    continue_maximal,
    friedmann_rhs,
    initial_segment_state,
    solve_segment,
)
from semiflrw.wick import WickConfig, radial_grid, wick_integrand, wick_square_renormalized

HC = DEFAULT_HUBBLE_CRITICAL
W0 = WickConfig(k_max=40.0, n_k=192)


def _verdict(num: int, label: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {num:02d} {label}: {detail}")
    assert ok, f"criterion {num} ({label}): {detail}"


def lam_for_root(h_root: float) -> float:
    return (2.0 * HC**2 * h_root**2 - h_root**4) / (960.0 * math.pi**2)


@pytest.fixture(scope="module")
def sine_background():
    grid = Grid.uniform(0.0, 2.0, 2001)
    a_fun = SampledFunction(grid, 1.0 + 0.1 * np.sin(grid.nodes))
    pot = Potential.from_scale_factor(a_fun, 1.0)
    return grid, a_fun, pot


@pytest.fixture(scope="module")
def k_nodes_64():
    cfg = WickConfig(k_max=50.0, n_k=64, panel_points=8)
    momenta, weights = radial_grid(cfg)
    return momenta, weights


def test_criterion_01_wronskian_conservation(sine_background, k_nodes_64):
    grid, _, pot = sine_background
    momenta, weights = k_nodes_64
    started = time.perf_counter()
    bank = ModeBank.at_initial(momenta, weights, a0=1.0, mass=1.0, tau0=0.0)
    err_base = evolve_bank(bank, pot, grid.nodes, substep_cap=0.02).wronskian_error_max
    err_half = evolve_bank(bank, pot, grid.nodes, substep_cap=0.01).wronskian_error_max
    elapsed = time.perf_counter() - started
    ratio = err_base / err_half
    ok = err_base < 1e-8 and ratio >= 8.0 and elapsed < 10.0
    _verdict(
        1,
        "wronskian conservation",
        ok,
        f"max |W - i| {err_base:.3e} (< 1e-8), halving ratio {ratio:.1f}x"
        f" (>= 8x), {elapsed:.1f}s (< 10s)",
    )


def test_criterion_02_mode_oracle_equivalence(sine_background, k_nodes_64):
    grid, _, pot = sine_background
    momenta, _ = k_nodes_64
    scaled = Potential.from_samples(
        SampledFunction(grid, 0.05 * pot.V.values),
        SampledFunction(grid, 0.05 * pot.Vp.values),
        pot.freq_shift,
    )
    omega_max = math.sqrt(50.0**2 + 1.0 + max(float(np.max(scaled.V.values.real)), 0.0))
    step = resolve_substep(2.0, omega_max, budget=1e-10)
    worst = 0.0
    for k in momenta:
        traj = evolve_mode(
            initial_mode(float(k), 1.0, 1.0, 0.0), scaled, 2.0, step,
            wronskian_tol=1e-3,
        )
        oracle = perturbative_mode(float(k), scaled, 6, 2.0)
        worst = max(worst, abs(traj.chi[-1] - oracle) / abs(oracle))
    ok = worst < 1e-6
    _verdict(
        2,
        "mode oracle equivalence",
        ok,
        f"worst |evolved - series| / |chi| {worst:.3e} (< 1e-6) over"
        f" {momenta.size} k-nodes",
    )


def test_criterion_03_order_cancellations(sine_background, k_nodes_64):
    from scipy.integrate import simpson

    grid, _, pot = sine_background
    momenta, _ = k_nodes_64
    worst_zeroth = 0.0
    for k in momenta[::8]:
        k0 = math.sqrt(float(k) ** 2 + pot.freq_shift)
        chi0 = perturbative_orders(float(k), pot, 0, 2.0)[0]
        worst_zeroth = max(worst_zeroth, abs(wick_integrand(chi0, float(k), k0, 0.0)))
    worst_first = 0.0
    for k in (0.7, 2.3, 11.0):
        k0 = math.sqrt(k**2 + pot.freq_shift)
        orders = perturbative_orders(k, pot, 1, 2.0)
        v_tau = float(pot.V(2.0).real)
        first = 2.0 * (orders[1] * np.conj(orders[0])).real + v_tau / (4.0 * k0**3)
        etas = grid.nodes
        transform = simpson(
            np.cos(2.0 * k0 * (etas - 2.0)) * pot.Vp(etas).real, x=etas
        ) / (4.0 * k0**3)
        worst_first = max(worst_first, abs(first - transform))
    ok = worst_zeroth < 1e-15 and worst_first < 1e-8
    _verdict(
        3,
        "zeroth/first order cancellation",
        ok,
        f"zeroth residue {worst_zeroth:.3e} (< 1e-15), first-order vs cosine"
        f" transform {worst_first:.3e} (< 1e-8)",
    )


def test_criterion_04_tail_decay(sine_background):
    grid, a_fun, pot = sine_background
    params = PhysicalParams(mass=1.0)
    tau_eval = 1.0
    sub = grid.nodes[grid.nodes <= tau_eval + 1e-12]

    def renormalized(k_max, n_k):
        cfg = WickConfig(k_max=k_max, n_k=n_k, panel_points=8)
        momenta, weights = radial_grid(cfg)
        bank = ModeBank.at_initial(momenta, weights, a0=1.0, mass=1.0, tau0=0.0)
        hist = evolve_bank(bank, pot, sub)
        return wick_square_renormalized(
            a_fun, hist.final, float(sub[-1]), params, cfg, detail=True
        )

    w_base, detail_base = renormalized(40.0, 192)
    w_doubled, detail_doubled = renormalized(80.0, 384)
    rel_change = abs(w_doubled - w_base) / abs(w_base)
    p_base = detail_base.tail.p_raw
    p_doubled = detail_doubled.tail.p_raw
    ok = p_base >= 3.0 and p_doubled >= 3.0 and rel_change < 1e-4
    _verdict(
        4,
        "integrand tail decay",
        ok,
        f"fitted p {p_base:.2f}/{p_doubled:.2f} (>= 3.0), k_max doubling moves"
        f" W_ren by {rel_change:.3e} rel (< 1e-4)",
    )


def test_criterion_05_energy_closed_form():
    cfg = WickConfig(k_max=20.0, n_k=64)
    worst_int = 0.0
    worst_modes = 0.0
    for m, a0, da0 in itertools.product(
        (0.1, 1.0, 10.0), (0.5, 1.0, 2.0), (0.0, 1.0, 5.0)
    ):
        closed = m**2 * da0**2 / 24.0
        integral = initial_energy_integral(a0, da0, m, cfg)
        if da0 == 0.0:
            worst_int = max(worst_int, abs(integral))
        else:
            worst_int = max(worst_int, abs(integral - closed) / closed)
        grid = Grid.uniform(0.0, 0.5, 201)
        a_fun = SampledFunction(grid, a0 + da0 * grid.nodes)
        modes = initial_energy_from_modes(a_fun, m, cfg)
        worst_modes = max(worst_modes, abs(modes - closed) / max(1.0, closed))
    ok = worst_int < 1e-8 and worst_modes < 1e-6
    _verdict(
        5,
        "initial energy closed form",
        ok,
        f"27-point sweep: quadrature vs m^2 da0^2/24 {worst_int:.3e} rel"
        f" (< 1e-8), mode-sum route {worst_modes:.3e} (< 1e-6)",
    )


def test_criterion_06_massless_conformal_vacuum():
    params = PhysicalParams(mass=0.0, cosmological_constant=1.0e4)
    carry = initial_segment_state(InitialData(0.0, 1.0, 20.0), params, W0)
    grid = Grid.uniform(0.0, 1e-3, 25)
    h_vals = 20.0 + 500.0 * grid.nodes
    rhs = friedmann_rhs(SampledFunction(grid, h_vals), carry, params, W0)
    integral = np.concatenate(
        ([0.0], np.cumsum(0.5 * np.diff(grid.nodes) * (h_vals[:-1] + h_vals[1:])))
    )
    a_vals = 1.0 / (1.0 - integral)
    quartic = a_vals * (
        h_vals**4 - 2.0 * HC**2 * h_vals**2 + 960.0 * math.pi**2 * 1.0e4
    ) / (HC**2 - h_vals**2)
    rhs_gap = float(np.max(np.abs(rhs.values.real / quartic - 1.0)))

    solution, report = continue_maximal(
        InitialData(0.0, 1.0, 0.0), 10.0, PhysicalParams(mass=0.0), W0,
        SolverConfig(max_segments=20000),
    )
    h_norm = float(np.max(np.abs(solution.hubble)))
    w_norm = float(np.max(np.abs(solution.wick_square)))
    ok = (
        rhs_gap < 1e-12
        and report.reason == "TimeHorizon"
        and h_norm < 1e-12
        and w_norm == 0.0
    )
    _verdict(
        6,
        "massless conformal vacuum",
        ok,
        f"RHS vs pure quartic {rhs_gap:.3e} rel (< 1e-12), Minkowski [0, 10]"
        f" sup|H| {h_norm:.3e} (< 1e-12), W_ren sup {w_norm:.1e} (== 0)",
    )


@pytest.fixture(scope="module")
def de_sitter_setup():
    lam = 0.5 * HC**4 / (960.0 * math.pi**2)
    h0 = math.sqrt(HC**2 - math.sqrt(HC**4 - 960.0 * math.pi**2 * lam))
    params = PhysicalParams(mass=0.0, cosmological_constant=lam)
    initial = InitialData(0.0, 1.0, h0)
    return params, initial, h0


def test_criterion_07_de_sitter_fixed_point(de_sitter_setup):
    params, initial, h0 = de_sitter_setup
    started = time.perf_counter()
    carry = initial_segment_state(initial, params, W0)
    one = solve_segment(carry, 1.0, params, W0, SolverConfig())
    err_one = float(np.max(np.abs(one.hist_hubble - h0)))
    span = float(one.hist_taus[-1] - one.hist_taus[0])
    solution, report = continue_maximal(
        initial, 10.5 * span, params, W0, SolverConfig()
    )
    err_many = float(np.max(np.abs(solution.hubble - h0)))
    elapsed = time.perf_counter() - started
    segments = len(solution.reports)
    ok = (
        err_one < 1e-8
        and segments >= 10
        and err_many < 1e-6
        and report.reason == "TimeHorizon"
        and elapsed < 60.0
    )
    _verdict(
        7,
        "de Sitter fixed point",
        ok,
        f"one segment sup|H - H0| {err_one:.3e} (< 1e-8), {segments} segments"
        f" {err_many:.3e} (< 1e-6), {elapsed:.1f}s (< 60s)",
    )


def test_criterion_08_singularity_detection():
    lam_wall = 1.1 * HC**4 / (960.0 * math.pi**2)
    params_wall = PhysicalParams(mass=0.0, cosmological_constant=lam_wall)
    sol_wall, rep_wall = continue_maximal(
        InitialData(0.0, 1.0, 0.0), 10.0, params_wall, W0, SolverConfig()
    )
    monotone = bool(np.all(np.diff(sol_wall.hubble) > 0.0))

    h_const = 60.0
    params_blow = PhysicalParams(
        mass=0.0, cosmological_constant=lam_for_root(h_const)
    )
    sol_blow, rep_blow = continue_maximal(
        InitialData(0.0, 1.0, h_const), 1.0, params_blow, W0, SolverConfig()
    )
    breach = rep_blow.diagnostics["extrapolated_breach_tau"]
    blow_gap = abs(breach - 1.0 / h_const)
    ok = (
        rep_wall.reason == "HitCriticalHubble"
        and monotone
        and rep_blow.reason == "ScaleFactorBlowUp"
        and blow_gap < 1e-3
    )
    _verdict(
        8,
        "singularity detection",
        ok,
        f"supercritical source: {rep_wall.reason}, H monotone {monotone};"
        f" constant-H breach predicted within {blow_gap:.1e} of 1/(a0 H)"
        f" (< 1e-3)",
    )


def test_criterion_09_picard_contraction(de_sitter_setup):
    params, initial, h0 = de_sitter_setup
    carry = initial_segment_state(initial, params, W0)
    one = solve_segment(carry, 1.0, params, W0, SolverConfig())
    grid = Grid(one.hist_taus)
    span = float(grid.nodes[-1] - grid.nodes[0])
    delta = 0.1 * h0 * np.cos(2.0 * math.pi * (grid.nodes - grid.nodes[0]) / span)
    seed = SampledFunction(grid, h0 + delta)
    functional = RetardedFunctional(
        eval=lambda x: friedmann_rhs(x, carry, params, W0).values.real
    )
    tol = 1e-10
    _, report = picard_solve(
        SampledFunction.constant(grid, h0), functional, grid, tol=tol,
        max_iter=40, x0=seed,
    )
    residuals = np.asarray(report.residuals)
    decreasing = bool(np.all(np.diff(residuals[1:]) < 0.0))
    ok = (
        float(np.max(np.abs(delta))) == 0.1 * h0
        and report.converged
        and decreasing
        and residuals[-1] < 2.0 * tol
    )
    _verdict(
        9,
        "Picard contraction",
        ok,
        f"seed ||dH|| = 0.1 H0, residuals strictly decreasing from iteration 2"
        f" {decreasing}, final {residuals[-1]:.3e} (< 2 tol)",
    )


def test_criterion_10_segmentation_uniqueness():
    params = PhysicalParams(mass=0.1)
    initial = InitialData(0.0, 1.0, 0.0)
    horizon = 1e-3
    sol_one, _ = continue_maximal(
        initial, horizon, params, W0,
        SolverConfig(dt_target=horizon, nodes_per_segment=97),
    )
    sol_two, _ = continue_maximal(
        initial, horizon, params, W0,
        SolverConfig(dt_target=horizon / 2.0, nodes_per_segment=49),
    )
    segments = (len(sol_one.reports), len(sol_two.reports))
    np.testing.assert_allclose(sol_one.taus, sol_two.taus, rtol=0.0, atol=1e-15)
    gap = float(np.max(np.abs(sol_one.hubble - sol_two.hubble)))
    tol = SolverConfig().tol
    ok = segments == (1, 2) and gap < 5.0 * tol
    _verdict(
        10,
        "segmentation uniqueness",
        ok,
        f"one vs two segments {segments}, sup|dH| {gap:.3e} (< 5 tol ="
        f" {5.0 * tol:.1e})",
    )


def test_criterion_11_determinism(tmp_path):
    config = {
        "mass": 1.0,
        "H0": 0.0,
        "horizon": 0.002,
        "state": {"type": "bogoliubov-gaussian", "amplitude": 0.1, "k_scale": 2.0},
    }
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps(config))
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    code_a = cli.main(["run", str(cfg_path), "--out", str(out_a), "--threads", "1"])
    code_b = cli.main(["run", str(cfg_path), "--out", str(out_b), "--threads", "4"])
    run_identical = (out_a / "solution.csv").read_bytes() == (
        (out_b / "solution.csv").read_bytes()
    ) and (out_a / "summary.json").read_bytes() == (
        (out_b / "summary.json").read_bytes()
    )

    sweep_dir = tmp_path / "configs"
    sweep_dir.mkdir()
    for i, m in enumerate((0.5, 1.0)):
        (sweep_dir / f"m{i}.json").write_text(
            json.dumps({"mass": m, "H0": 0.0, "horizon": 0.001})
        )
    sw_a, sw_b = tmp_path / "sw_a", tmp_path / "sw_b"
    cli.main(["sweep", str(sweep_dir), "--out", str(sw_a), "--threads", "1"])
    cli.main(["sweep", str(sweep_dir), "--out", str(sw_b), "--threads", "3"])
    sweep_identical = (sw_a / "sweep.csv").read_bytes() == (
        (sw_b / "sweep.csv").read_bytes()
    ) and all(
        (sw_a / name / "solution.csv").read_bytes()
        == (sw_b / name / "solution.csv").read_bytes()
        for name in ("m0", "m1")
    )
    ok = code_a == 0 and code_b == 0 and run_identical and sweep_identical
    _verdict(
        11,
        "bitwise determinism",
        ok,
        f"run CSV+summary identical across thread counts {run_identical},"
        f" sweep outputs identical {sweep_identical}",
    )
