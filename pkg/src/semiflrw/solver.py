"""Segment-by-segment driver for the semiclassical Friedmann equation.

The Hubble rate solves the retarded Volterra equation

    H(tau) = H0 + int_{tau0}^{tau} f(H),
    f(H) = a(H) (H^4 - 2 Hc^2 H^2 + 240 pi^2 m^2 W_ren - (15/2) m^4
           + 960 pi^2 Lambda) / (Hc^2 - H^2),

in units 8 pi G = c = hbar = 1, with a(H) = a_carry / (1 - a_carry int H) on
each segment and W_ren from the tau0-anchored mode bank evolved against a(H).
Each segment picks a span small enough that the Picard map stays inside a
tube around the constant start value (radius half the distance to the
critical rate, further limited so the scale-factor denominator keeps at
least half its value), iterates to the fixed point, carries the state
forward, and the outer loop continues until the time horizon or the first
regularity breach.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import (
    BlowUp,
    Grid,
    InitialData,
    PhysicalParams,
    SampledFunction,
    ricci_scalar,
    scale_factor_from_hubble,
)
from .fixedpoint import (
    NoConvergence,
    PicardReport,
    RetardedFunctional,
    picard_solve_with_halving,
    select_step,
)
from .modes import SUBSTEP_CAP, ModeBank, Potential, evolve_bank
from .wick import (
    BogoliubovProfile,
    WickConfig,
    radial_grid,
    wick_square_bogoliubov_delta,
    wick_square_renormalized,
)

REASON_TIME_HORIZON = "TimeHorizon"
REASON_CRITICAL_HUBBLE = "HitCriticalHubble"
REASON_SCALE_BLOWUP = "ScaleFactorBlowUp"
REASON_NO_CONVERGENCE = "ConvergenceFailure"

EXIT_CODES = {
    REASON_TIME_HORIZON: 0,
    REASON_CRITICAL_HUBBLE: 10,
    REASON_SCALE_BLOWUP: 11,
    REASON_NO_CONVERGENCE: 20,
}


class CriticalHubble(RuntimeError):
    """|H| reached the critical rate where the equation degenerates."""

    def __init__(self, message: str, node_index: int, tau: float):
        super().__init__(message)
        self.node_index = node_index
        self.tau = tau


@dataclass(frozen=True)
class SolverConfig:
    """Segmenting, iteration, and guard-band knobs.

    dt_target None means the per-segment heuristic
    0.1 / max(|H| a, a m, 1) evaluated at the carried boundary.
    """

    dt_target: float | None = None
    tol: float = 1e-10
    max_iter: int = 40
    max_halvings: int = 6
    nodes_per_segment: int = 49
    epsilon_critical: float = 1e-6
    epsilon_scale: float = 1e-6
    safety: float = 0.5
    substep_cap: float = SUBSTEP_CAP
    wronskian_budget: float = 1e-8
    wronskian_tolerance: float = 1e-5
    max_segments: int = 10000

    def __post_init__(self):
        if self.dt_target is not None and not self.dt_target > 0.0:
            raise ValueError("dt_target must be > 0 when given")
        if not self.tol > 0.0:
            raise ValueError("tol must be > 0")
        if self.nodes_per_segment < 3:
            raise ValueError("nodes_per_segment must be >= 3")
        if not 0.0 < self.epsilon_critical < 0.1:
            raise ValueError("epsilon_critical must lie in (0, 0.1)")
        if not 0.0 < self.epsilon_scale < 0.1:
            raise ValueError("epsilon_scale must lie in (0, 0.1)")
        if not 0.0 < self.safety <= 1.0:
            raise ValueError("safety must lie in (0, 1]")
        if self.max_segments < 1:
            raise ValueError("max_segments must be >= 1")


@dataclass(frozen=True, eq=False)
class SegmentState:
    """Carried solution state at the current segment boundary.

    Histories cover [tau0, tau_start] inclusive; the mode bank (massive case
    only) sits at tau_start and is anchored at tau0 for its whole life,
    witnessed by anchor_digest.
    """

    initial: InitialData
    hist_taus: np.ndarray
    hist_hubble: np.ndarray
    hist_a: np.ndarray
    hist_wick: np.ndarray
    a_carry: float
    mode_bank_carry: ModeBank | None
    anchor_digest: str | None
    h_solution: SampledFunction | None = None
    last_report: PicardReport | None = None

    @property
    def tau_start(self) -> float:
        return float(self.hist_taus[-1])

    @property
    def hubble_start(self) -> float:
        return float(self.hist_hubble[-1])

    def scale_denominator(self) -> float:
        """Global 1 - a0 int H = a0 / a, the blow-up margin."""
        return self.initial.a0 / self.a_carry


@dataclass(frozen=True)
class TerminationReport:
    reason: str
    tau_stop: float
    diagnostics: dict

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.reason]


@dataclass(frozen=True, eq=False)
class MaximalSolution:
    """Concatenated solution on [tau0, tau_stop] plus per-segment records."""

    taus: np.ndarray
    hubble: np.ndarray
    scale_factor: np.ndarray
    wick_square: np.ndarray
    reports: tuple[PicardReport, ...]
    segment_bounds: tuple[float, ...]
    final_state: SegmentState

    def hubble_function(self) -> SampledFunction:
        return SampledFunction(Grid(self.taus), self.hubble)

    def scale_function(self) -> SampledFunction:
        return SampledFunction(Grid(self.taus), self.scale_factor)


def effective_wick_config(
    config: WickConfig, initial: InitialData, params: PhysicalParams
) -> WickConfig:
    """Fill the grading knee at 10 a0 m when the config leaves it unset."""
    if config.k_knee == 0.0 and params.mass > 0.0:
        return replace(config, k_knee=10.0 * initial.a0 * params.mass)
    return config


def default_dt_target(hubble: float, a_val: float, mass: float) -> float:
    return 0.1 / max(abs(hubble) * a_val, a_val * mass, 1.0)


def initial_segment_state(
    initial: InitialData,
    params: PhysicalParams,
    wick_cfg: WickConfig,
    profile: BogoliubovProfile | None = None,
) -> SegmentState:
    initial.validate_against(params)
    if params.mass > 0.0:
        momenta, weights = radial_grid(effective_wick_config(wick_cfg, initial, params))
        bank = ModeBank.at_initial(
            momenta, weights, a0=initial.a0, mass=params.mass, tau0=initial.tau0
        )
        digest = bank.anchor_digest()
    else:
        bank = None
        digest = None
    w0 = _wick_at_carry(bank, initial.a0, params, wick_cfg, profile)
    return SegmentState(
        initial=initial,
        hist_taus=np.array([initial.tau0]),
        hist_hubble=np.array([initial.hubble0]),
        hist_a=np.array([initial.a0]),
        hist_wick=np.array([w0]),
        a_carry=initial.a0,
        mode_bank_carry=bank,
        anchor_digest=digest,
    )


def _profile_config(wick_cfg: WickConfig) -> WickConfig:
    # profile corrections decay faster than any power; fitting one misfires
    return replace(wick_cfg, tail_model="none")


def _wick_at_carry(
    bank: ModeBank | None,
    a_val: float,
    params: PhysicalParams,
    wick_cfg: WickConfig,
    profile: BogoliubovProfile | None = None,
) -> float:
    if bank is None:
        return 0.0
    value = wick_square_renormalized(a_val, bank, bank.tau, params, wick_cfg)
    if profile is not None:
        value += wick_square_bogoliubov_delta(
            bank, profile, a_val, _profile_config(wick_cfg)
        )
    return value


def _rhs_detail(
    hubble: SampledFunction,
    carry: SegmentState,
    params: PhysicalParams,
    wick_cfg: WickConfig,
    substep_cap: float = SUBSTEP_CAP,
    wronskian_budget: float = 1e-8,
    profile: BogoliubovProfile | None = None,
):
    """f(H) on the segment plus the byproducts (W series, a, evolved bank)."""
    grid = hubble.grid
    if not math.isclose(grid.tau_start, carry.tau_start, rel_tol=0.0, abs_tol=1e-10):
        raise ValueError("segment grid must start at the carried boundary")
    h_vals = hubble.values.real
    critical = params.hubble_critical
    hard_wall = critical * (1.0 - 1e-12)
    over = np.abs(h_vals) >= hard_wall
    if np.any(over):
        j = int(np.argmax(over))
        raise CriticalHubble(
            f"|H| = {abs(h_vals[j]):.6g} reached the critical rate {critical:.6g}",
            j,
            float(grid.nodes[j]),
        )
    a_fun = scale_factor_from_hubble(hubble, carry.a_carry)
    a_vals = a_fun.values.real
    if params.mass > 0.0:
        potential = Potential.from_scale_factor(a_fun, params.mass, a0=carry.initial.a0)
        history = evolve_bank(
            carry.mode_bank_carry, potential, grid.nodes, substep_cap, wronskian_budget
        )
        delta_cfg = _profile_config(wick_cfg) if profile is not None else None
        w_vals = np.empty(grid.size)
        for j in range(grid.size):
            bank_j = carry.mode_bank_carry.moved_to(
                history.chi[j], history.dchi[j], float(grid.nodes[j])
            )
            w_vals[j] = wick_square_renormalized(
                float(a_vals[j]), bank_j, float(grid.nodes[j]), params, wick_cfg
            )
            if profile is not None:
                w_vals[j] += wick_square_bogoliubov_delta(
                    bank_j, profile, float(a_vals[j]), delta_cfg
                )
        bank_final = history.final
    else:
        w_vals = np.zeros(grid.size)
        bank_final = None
    source = (
        h_vals**4
        - 2.0 * critical**2 * h_vals**2
        + 240.0 * math.pi**2 * params.mass**2 * w_vals
        - 7.5 * params.mass**4
        + 960.0 * math.pi**2 * params.cosmological_constant
    )
    f_vals = a_vals * source / (critical**2 - h_vals**2)
    return f_vals, w_vals, a_fun, bank_final


def friedmann_rhs(
    hubble: SampledFunction,
    carry: SegmentState,
    params: PhysicalParams,
    wick_cfg: WickConfig,
    substep_cap: float = SUBSTEP_CAP,
    wronskian_budget: float = 1e-8,
    profile: BogoliubovProfile | None = None,
) -> SampledFunction:
    """Retarded right-hand side f(H) sampled on the segment grid."""
    f_vals, _, _, _ = _rhs_detail(
        hubble, carry, params, wick_cfg, substep_cap, wronskian_budget, profile
    )
    return SampledFunction(hubble.grid, f_vals)


def _rhs_bound(
    carry: SegmentState,
    params: PhysicalParams,
    wick_cfg: WickConfig,
    h_max: float,
    profile: BogoliubovProfile | None = None,
) -> float:
    """Uniform bound on |f| over the tube |H| <= h_max with a <= 2 a_carry."""
    critical = params.hubble_critical
    w_carry = _wick_at_carry(
        carry.mode_bank_carry, carry.a_carry, params, wick_cfg, profile
    )
    w_bound = 2.0 * abs(w_carry) + params.mass**2 / (16.0 * math.pi**2)
    numerator = (
        h_max**4
        + 2.0 * critical**2 * h_max**2
        + 240.0 * math.pi**2 * params.mass**2 * w_bound
        + 7.5 * params.mass**4
        + 960.0 * math.pi**2 * abs(params.cosmological_constant)
    )
    return 2.0 * carry.a_carry * numerator / (critical**2 - h_max**2)


def solve_segment(
    carry: SegmentState,
    tau_horizon: float,
    params: PhysicalParams,
    wick_cfg: WickConfig,
    solver_cfg: SolverConfig = SolverConfig(),
    profile: BogoliubovProfile | None = None,
) -> SegmentState:
    """Advance the carried state by one converged segment.

    Raises NoConvergence after the halving retries are exhausted and
    propagates CriticalHubble / BlowUp with their locations.
    """
    bank = carry.mode_bank_carry
    if bank is not None:
        if bank.anchor_digest() != carry.anchor_digest:
            raise RuntimeError("mode bank identity changed since tau0")
        if bank.wronskian_error_max > solver_cfg.wronskian_tolerance:
            raise RuntimeError(
                f"carried Wronskian drift {bank.wronskian_error_max:.3g} exceeds "
                f"tolerance {solver_cfg.wronskian_tolerance:g}"
            )
    remaining = tau_horizon - carry.tau_start
    if remaining <= 0.0:
        raise ValueError("carry is already at or past the horizon")
    h_start = carry.hubble_start
    critical = params.hubble_critical
    gap = critical - abs(h_start)
    delta = 0.5 * gap
    h_max = abs(h_start) + delta
    bound = _rhs_bound(carry, params, wick_cfg, h_max, profile)
    tube_step = select_step(h_start, bound, delta, remaining, solver_cfg.safety)
    # keep a_carry * int H below 1/2 so a(H) at most doubles on the segment
    denominator_step = 1.0 / (2.0 * carry.a_carry * h_max)
    dt_cap = solver_cfg.dt_target
    if dt_cap is None:
        dt_cap = default_dt_target(h_start, carry.a_carry, params.mass)
    dt = min(tube_step, denominator_step, dt_cap, remaining)
    grid = Grid.uniform(carry.tau_start, carry.tau_start + dt, solver_cfg.nodes_per_segment)

    def build(subgrid: Grid):
        f0 = SampledFunction.constant(subgrid, h_start)
        functional = RetardedFunctional(
            eval=lambda x: _rhs_detail(
                x, carry, params, wick_cfg,
                solver_cfg.substep_cap, solver_cfg.wronskian_budget, profile,
            )[0],
            bound_hint=bound,
        )
        return f0, functional

    solution, report, used_grid = picard_solve_with_halving(
        build, grid, solver_cfg.tol, solver_cfg.max_iter, solver_cfg.max_halvings
    )
    _, w_vals, a_fun, bank_final = _rhs_detail(
        solution, carry, params, wick_cfg,
        solver_cfg.substep_cap, solver_cfg.wronskian_budget, profile,
    )
    return SegmentState(
        initial=carry.initial,
        hist_taus=np.concatenate([carry.hist_taus, used_grid.nodes[1:]]),
        hist_hubble=np.concatenate([carry.hist_hubble, solution.values.real[1:]]),
        hist_a=np.concatenate([carry.hist_a, a_fun.values.real[1:]]),
        hist_wick=np.concatenate([carry.hist_wick, w_vals[1:]]),
        a_carry=float(a_fun.values.real[-1]),
        mode_bank_carry=bank_final,
        anchor_digest=carry.anchor_digest,
        h_solution=solution,
        last_report=report,
    )


def _report_diagnostics(
    carry: SegmentState, params: PhysicalParams, n_segments: int, **extra
) -> dict:
    critical = params.hubble_critical
    out = {
        "hubble_final": float(carry.hist_hubble[-1]),
        "scale_factor_final": float(carry.hist_a[-1]),
        "wick_square_final": float(carry.hist_wick[-1]),
        "margin_hubble": float(critical - abs(carry.hist_hubble[-1])),
        "margin_scale": float(carry.scale_denominator()),
        "segments": n_segments,
    }
    out.update(extra)
    return out


def _truncate(carry: SegmentState, keep: int) -> SegmentState:
    """Drop history past node index keep (inclusive end).

    The carried mode bank stays at the untruncated segment end; truncation
    only happens in terminal states where no further segment is solved.
    """
    return SegmentState(
        initial=carry.initial,
        hist_taus=carry.hist_taus[: keep + 1],
        hist_hubble=carry.hist_hubble[: keep + 1],
        hist_a=carry.hist_a[: keep + 1],
        hist_wick=carry.hist_wick[: keep + 1],
        a_carry=float(carry.hist_a[keep]),
        mode_bank_carry=carry.mode_bank_carry,
        anchor_digest=carry.anchor_digest,
        h_solution=carry.h_solution,
        last_report=carry.last_report,
    )


def continue_maximal(
    initial: InitialData,
    tau_horizon: float,
    params: PhysicalParams,
    wick_cfg: WickConfig,
    solver_cfg: SolverConfig = SolverConfig(),
    resume_from: SegmentState | None = None,
    prior_reports: Sequence[PicardReport] = (),
    prior_bounds: Sequence[float] = (),
    profile: BogoliubovProfile | None = None,
    segment_callback=None,
) -> tuple[MaximalSolution, TerminationReport]:
    """Extend the solution segment by segment to the horizon or first breach.

    All failure modes are reported through TerminationReport, never raised.
    segment_callback(carry, reports, bounds), when given, runs after every
    completed segment; it must not mutate its arguments.
    """
    if tau_horizon <= initial.tau0:
        raise ValueError("tau_horizon must exceed tau0")
    wick_cfg = effective_wick_config(wick_cfg, initial, params)
    if resume_from is None:
        carry = initial_segment_state(initial, params, wick_cfg, profile)
    else:
        carry = resume_from
    reports = list(prior_reports)
    bounds = list(prior_bounds) if prior_bounds else [carry.tau_start]
    critical = params.hubble_critical
    wall = (1.0 - solver_cfg.epsilon_critical) * critical
    reason = None
    diagnostics_extra = {}
    horizon_slack = 1e-12 * max(1.0, abs(tau_horizon))

    for _ in range(solver_cfg.max_segments):
        if abs(carry.hubble_start) >= wall:
            reason = REASON_CRITICAL_HUBBLE
            break
        if carry.scale_denominator() <= solver_cfg.epsilon_scale:
            reason = REASON_SCALE_BLOWUP
            break
        if tau_horizon - carry.tau_start <= horizon_slack:
            reason = REASON_TIME_HORIZON
            break
        try:
            carry = solve_segment(
                carry, tau_horizon, params, wick_cfg, solver_cfg, profile
            )
        except NoConvergence as err:
            reason = REASON_NO_CONVERGENCE
            diagnostics_extra = {"picard_residuals": list(err.report.residuals)}
            break
        except CriticalHubble as err:
            reason = REASON_CRITICAL_HUBBLE
            diagnostics_extra = {"raised_at_tau": err.tau}
            break
        except BlowUp as err:
            reason = REASON_SCALE_BLOWUP
            diagnostics_extra = {"raised_at_tau": err.tau}
            break
        reports.append(carry.last_report)
        carry, reason = _scan_new_nodes(carry, params, solver_cfg, wall)
        bounds.append(carry.tau_start)
        if segment_callback is not None:
            segment_callback(carry, tuple(reports), tuple(bounds))
        if reason is not None:
            break
    else:
        reason = REASON_NO_CONVERGENCE
        diagnostics_extra = {"note": "segment budget exhausted before the horizon"}

    diagnostics = _report_diagnostics(
        carry, params, len(reports), **diagnostics_extra
    )
    if reason == REASON_SCALE_BLOWUP:
        diagnostics["extrapolated_breach_tau"] = _extrapolate_blowup(carry)
    if reason == REASON_CRITICAL_HUBBLE:
        diagnostics["extrapolated_breach_tau"] = _extrapolate_wall(carry, wall)
    report = TerminationReport(
        reason=reason, tau_stop=carry.tau_start, diagnostics=diagnostics
    )
    solution = MaximalSolution(
        taus=carry.hist_taus.copy(),
        hubble=carry.hist_hubble.copy(),
        scale_factor=carry.hist_a.copy(),
        wick_square=carry.hist_wick.copy(),
        reports=tuple(reports),
        segment_bounds=tuple(bounds),
        final_state=carry,
    )
    return solution, report


def _scan_new_nodes(carry, params, solver_cfg, wall):
    """Truncate at the first in-segment regularity breach, if any."""
    h_seg = carry.h_solution
    if h_seg is None:
        return carry, None
    n_new = h_seg.grid.size - 1
    start = len(carry.hist_taus) - n_new
    h_tail = carry.hist_hubble[start:]
    a_tail = carry.hist_a[start:]
    denom_tail = carry.initial.a0 / a_tail
    hubble_breach = np.abs(h_tail) >= wall
    scale_breach = denom_tail <= solver_cfg.epsilon_scale
    j_h = int(np.argmax(hubble_breach)) if np.any(hubble_breach) else n_new + 1
    j_s = int(np.argmax(scale_breach)) if np.any(scale_breach) else n_new + 1
    if j_h > n_new and j_s > n_new:
        return carry, None
    if j_h <= j_s:
        return _truncate(carry, start + j_h), REASON_CRITICAL_HUBBLE
    return _truncate(carry, start + j_s), REASON_SCALE_BLOWUP


def _extrapolate_blowup(carry: SegmentState) -> float:
    denominator = carry.scale_denominator()
    h_final = carry.hist_hubble[-1]
    slope = carry.initial.a0 * h_final
    if slope <= 0.0:
        return carry.tau_start
    return carry.tau_start + denominator / slope


def _extrapolate_wall(carry: SegmentState, wall: float) -> float:
    taus = carry.hist_taus
    h_abs = np.abs(carry.hist_hubble)
    if h_abs[-1] < wall or taus.size < 2:
        return carry.tau_start
    below = np.nonzero(h_abs < wall)[0]
    if below.size == 0:
        return float(taus[0])
    j = int(below[-1])
    if j + 1 >= taus.size or h_abs[j + 1] == h_abs[j]:
        return float(taus[-1])
    frac = (wall - h_abs[j]) / (h_abs[j + 1] - h_abs[j])
    return float(taus[j] + frac * (taus[j + 1] - taus[j]))


def solution_diagnostics(
    solution: MaximalSolution, params: PhysicalParams
) -> dict[str, np.ndarray]:
    """Time series for reporting: tau, t, a, H, H', R, W_ren, source, margins."""
    taus = solution.taus
    if taus.size >= 3:
        grid = Grid(taus)
        h_fun = SampledFunction(grid, solution.hubble)
        a_fun = SampledFunction(grid, solution.scale_factor)
        dh = h_fun.derivative().values.real
        ricci = ricci_scalar(h_fun, a_fun).values.real
        t_of_tau = _cosmological_series(a_fun)
    else:
        dh = np.zeros_like(taus)
        ricci = 6.0 * 2.0 * solution.hubble**2
        t_of_tau = np.zeros_like(taus)
    critical = params.hubble_critical
    source = (
        solution.hubble**4
        - 2.0 * critical**2 * solution.hubble**2
        + 240.0 * math.pi**2 * params.mass**2 * solution.wick_square
        - 7.5 * params.mass**4
        + 960.0 * math.pi**2 * params.cosmological_constant
    )
    a0 = solution.final_state.initial.a0
    return {
        "tau": taus,
        "t": t_of_tau,
        "a": solution.scale_factor,
        "H": solution.hubble,
        "dH": dh,
        "R": ricci,
        "W_ren": solution.wick_square,
        "source": source,
        "margin_hubble": critical - np.abs(solution.hubble),
        "margin_scale": a0 / solution.scale_factor,
    }


def _cosmological_series(a_fun: SampledFunction) -> np.ndarray:
    from .core import cosmological_time

    return cosmological_time(a_fun, 0.0).values.real


def save_checkpoint(
    path,
    carry: SegmentState,
    reports: Sequence[PicardReport],
    segment_bounds: Sequence[float],
    tau_horizon: float,
) -> None:
    """Serialize the carried state and accumulated series; floats survive
    the JSON round trip exactly (repr-based)."""
    bank = carry.mode_bank_carry
    payload = {
        "version": 1,
        "tau_horizon": tau_horizon,
        "initial": {
            "tau0": carry.initial.tau0,
            "a0": carry.initial.a0,
            "hubble0": carry.initial.hubble0,
        },
        "history": {
            "taus": carry.hist_taus.tolist(),
            "hubble": carry.hist_hubble.tolist(),
            "a": carry.hist_a.tolist(),
            "wick": carry.hist_wick.tolist(),
        },
        "a_carry": carry.a_carry,
        "anchor_digest": carry.anchor_digest,
        "bank": None
        if bank is None
        else {
            "momenta": bank.momenta.tolist(),
            "weights": bank.weights.tolist(),
            "chi_re": bank.chi.real.tolist(),
            "chi_im": bank.chi.imag.tolist(),
            "dchi_re": bank.dchi.real.tolist(),
            "dchi_im": bank.dchi.imag.tolist(),
            "tau": bank.tau,
            "a0_anchor": bank.a0_anchor,
            "mass": bank.mass,
            "tau0_anchor": bank.tau0_anchor,
        },
        "reports": [r.as_dict() for r in reports],
        "segment_bounds": list(segment_bounds),
    }
    with open(path, "w") as handle:
        json.dump(payload, handle)


def load_checkpoint(path):
    """Rebuild (carry, reports, segment_bounds, tau_horizon) from a file."""
    with open(path) as handle:
        payload = json.load(handle)
    if payload.get("version") != 1:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')!r}")
    initial = InitialData(
        tau0=payload["initial"]["tau0"],
        a0=payload["initial"]["a0"],
        hubble0=payload["initial"]["hubble0"],
    )
    raw_bank = payload["bank"]
    if raw_bank is None:
        bank = None
    else:
        bank = ModeBank(
            momenta=np.array(raw_bank["momenta"]),
            weights=np.array(raw_bank["weights"]),
            k0=np.sqrt(
                np.array(raw_bank["momenta"]) ** 2
                + (raw_bank["a0_anchor"] * raw_bank["mass"]) ** 2
            ),
            chi=np.array(raw_bank["chi_re"]) + 1j * np.array(raw_bank["chi_im"]),
            dchi=np.array(raw_bank["dchi_re"]) + 1j * np.array(raw_bank["dchi_im"]),
            tau=raw_bank["tau"],
            a0_anchor=raw_bank["a0_anchor"],
            mass=raw_bank["mass"],
            tau0_anchor=raw_bank["tau0_anchor"],
        )
    carry = SegmentState(
        initial=initial,
        hist_taus=np.array(payload["history"]["taus"]),
        hist_hubble=np.array(payload["history"]["hubble"]),
        hist_a=np.array(payload["history"]["a"]),
        hist_wick=np.array(payload["history"]["wick"]),
        a_carry=payload["a_carry"],
        mode_bank_carry=bank,
        anchor_digest=payload["anchor_digest"],
    )
    reports = tuple(
        PicardReport(
            iterates=r["iterates"],
            residuals=tuple(r["residuals"]),
            converged=r["converged"],
            tol=r["tol"],
            equation_residual=r["equation_residual"],
            halvings=r.get("halvings", 0),
        )
        for r in payload["reports"]
    )
    return carry, reports, tuple(payload["segment_bounds"]), payload["tau_horizon"]
