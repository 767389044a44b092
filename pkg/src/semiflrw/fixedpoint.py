"""Picard iteration for retarded Volterra equations X = F0 + int f(X).

The step selector keeps the iteration inside an admissible tube of radius
delta around F0 (step <= safety * delta / K for a uniform bound K on f), the
iterator runs X_{n+1} = F0 + int_a^t f(X_n) with trapezoid quadrature until
the discrete uniform norm of the update falls below tol, and the halving
driver shrinks the segment (up to 6 times) when convergence fails on the
requested span.  Convergence is always confirmed a posteriori through the
equation residual, so the bound estimates only influence step size, never
correctness.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import Grid, SampledFunction


class ZeroStep(RuntimeError):
    """Step selection underflowed to zero."""


class NaNDetected(RuntimeError):
    """An iterate left the reals; carries the first offending node."""

    def __init__(self, message: str, node_index: int, tau: float):
        super().__init__(message)
        self.node_index = node_index
        self.tau = tau


class NoConvergence(RuntimeError):
    """Residual tolerance not reached within max_iter; carries the report."""

    def __init__(self, message: str, report: PicardReport):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class RetardedFunctional:
    """f(X) evaluated on the whole grid; f(X)(s) may depend only on X|[a, s]."""

    eval: Callable[[SampledFunction], np.ndarray]
    bound_hint: float | None = None
    lipschitz_hint: float | None = None


@dataclass(frozen=True)
class PicardReport:
    iterates: int
    residuals: tuple[float, ...]
    converged: bool
    tol: float
    equation_residual: float | None = None
    halvings: int = 0

    @property
    def contraction_ratios(self) -> tuple[float, ...]:
        out = []
        for prev, cur in zip(self.residuals[:-1], self.residuals[1:]):
            out.append(cur / prev if prev > 0.0 else 0.0)
        return tuple(out)

    def as_dict(self) -> dict:
        return {
            "iterates": self.iterates,
            "residuals": list(self.residuals),
            "contraction_ratios": list(self.contraction_ratios),
            "converged": self.converged,
            "tol": self.tol,
            "equation_residual": self.equation_residual,
            "halvings": self.halvings,
        }


def select_step(
    f0_value: float,
    bound: float,
    delta: float,
    span: float,
    safety: float = 0.5,
) -> float:
    """Largest admissible step min(safety * delta / bound, span).

    f0_value is accepted for diagnostics; the tube argument only needs the
    bound on f and the tube radius.
    """
    if not bound > 0.0:
        raise ValueError("bound must be > 0")
    if not delta > 0.0:
        raise ValueError("delta must be > 0")
    if not 0.0 < safety <= 1.0:
        raise ValueError("safety must lie in (0, 1]")
    if not span > 0.0:
        raise ValueError("span must be > 0")
    step = min(safety * delta / bound, span)
    if step <= 0.0 or not np.isfinite(step):
        raise ZeroStep(f"step underflow: delta={delta}, bound={bound}")
    return step


def _integral_term(values: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    widths = np.diff(nodes)
    increments = 0.5 * widths * (values[:-1] + values[1:])
    out = np.empty_like(values)
    out[0] = 0.0
    np.cumsum(increments, out=out[1:])
    return out


def picard_solve(
    f0: SampledFunction,
    functional: RetardedFunctional,
    grid: Grid,
    tol: float = 1e-10,
    max_iter: int = 60,
    x0: SampledFunction | None = None,
) -> tuple[SampledFunction, PicardReport]:
    """Iterate X_{n+1} = F0 + int_a^t f(X_n) until the update norm is < tol.

    The first iterate is F0 unless a seed x0 is supplied; the equation
    solved is the same either way.  Raises NaNDetected on the first
    non-finite node and NoConvergence (with the report attached) when
    max_iter is exhausted.  On success the equation residual
    ||X - F0 - int f(X)|| is recorded and guaranteed < 2 tol.
    """
    if f0.grid != grid:
        raise ValueError("f0 must be sampled on the iteration grid")
    if x0 is not None and x0.grid != grid:
        raise ValueError("x0 must be sampled on the iteration grid")
    if tol <= 0.0:
        raise ValueError("tol must be > 0")
    current = f0 if x0 is None else x0
    residuals: list[float] = []
    for iteration in range(1, max_iter + 1):
        rhs = np.asarray(functional.eval(current), dtype=np.float64)
        if rhs.shape != grid.nodes.shape:
            raise ValueError("functional must return one value per grid node")
        bad = ~np.isfinite(rhs)
        if np.any(bad):
            j = int(np.argmax(bad))
            raise NaNDetected(
                f"functional produced non-finite value at node {j}",
                j,
                float(grid.nodes[j]),
            )
        new_values = f0.values.real + _integral_term(rhs, grid.nodes)
        bad = ~np.isfinite(new_values)
        if np.any(bad):
            j = int(np.argmax(bad))
            raise NaNDetected(
                f"iterate became non-finite at node {j}", j, float(grid.nodes[j])
            )
        residual = float(np.max(np.abs(new_values - current.values.real)))
        residuals.append(residual)
        current = SampledFunction(grid, new_values)
        if residual < tol:
            final_rhs = np.asarray(functional.eval(current), dtype=np.float64)
            eq_residual = float(
                np.max(
                    np.abs(
                        current.values.real
                        - f0.values.real
                        - _integral_term(final_rhs, grid.nodes)
                    )
                )
            )
            report = PicardReport(
                iterates=iteration,
                residuals=tuple(residuals),
                converged=True,
                tol=tol,
                equation_residual=eq_residual,
            )
            return current, report
    report = PicardReport(
        iterates=max_iter, residuals=tuple(residuals), converged=False, tol=tol
    )
    raise NoConvergence(f"no convergence after {max_iter} iterations", report)


def verify_retardation(
    functional: RetardedFunctional, probe: SampledFunction
) -> bool:
    """Perturb the probe on a trailing subinterval; the functional must be
    unchanged (bit-identical) on the leading part."""
    base = np.asarray(functional.eval(probe), dtype=np.float64)
    split = probe.grid.size // 2
    scale = max(1.0, float(np.max(np.abs(probe.values.real))))
    perturbed_values = probe.values.real.copy()
    perturbed_values[split + 1 :] += 0.37 * scale
    perturbed = SampledFunction(probe.grid, perturbed_values)
    shifted = np.asarray(functional.eval(perturbed), dtype=np.float64)
    return bool(np.array_equal(base[: split + 1], shifted[: split + 1]))


def estimate_lipschitz(
    functional: RetardedFunctional,
    base: SampledFunction,
    delta: float,
    n_probes: int = 4,
) -> float:
    """Sampled directional-derivative bound on f over the delta-tube.

    Probes are deterministic cosine directions of uniform norm delta; the
    max measured ratio is doubled as a safety margin.  Affects step size
    only; convergence is re-checked a posteriori.
    """
    if delta <= 0.0:
        raise ValueError("delta must be > 0")
    if n_probes < 1:
        raise ValueError("n_probes must be >= 1")
    nodes = base.grid.nodes
    span = nodes[-1] - nodes[0]
    u = (nodes - nodes[0]) / span
    f_base = np.asarray(functional.eval(base), dtype=np.float64)
    worst = 0.0
    for j in range(n_probes):
        direction = delta * np.cos(j * np.pi * u)
        probe = SampledFunction(base.grid, base.values.real + direction)
        f_probe = np.asarray(functional.eval(probe), dtype=np.float64)
        ratio = float(np.max(np.abs(f_probe - f_base))) / delta
        worst = max(worst, ratio)
    return 2.0 * worst


def _front_half(grid: Grid) -> Grid:
    keep = (grid.size + 1) // 2
    if keep < 3:
        raise ValueError("grid too short to halve")
    return Grid(grid.nodes[:keep].copy())


def picard_solve_with_halving(
    build: Callable[[Grid], tuple[SampledFunction, RetardedFunctional]],
    grid: Grid,
    tol: float = 1e-10,
    max_iter: int = 60,
    max_halvings: int = 6,
) -> tuple[SampledFunction, PicardReport, Grid]:
    """Run picard_solve, halving the segment on NoConvergence.

    build(grid) must produce the (F0, functional) pair for any leading
    subgrid; the returned grid is the span that actually converged.
    """
    halvings = 0
    current_grid = grid
    while True:
        f0, functional = build(current_grid)
        try:
            solution, report = picard_solve(f0, functional, current_grid, tol, max_iter)
        except NoConvergence as err:
            if halvings >= max_halvings:
                raise NoConvergence(
                    f"no convergence after {halvings} halvings", err.report
                ) from err
            halvings += 1
            current_grid = _front_half(current_grid)
            continue
        if halvings:
            report = PicardReport(
                iterates=report.iterates,
                residuals=report.residuals,
                converged=report.converged,
                tol=report.tol,
                equation_residual=report.equation_residual,
                halvings=halvings,
            )
        return solution, report, current_grid
