"""Nonlinear persistence dynamics driven by the dispersal generator.

The population model couples the linear flow with a density-dependent death
term::

    du/dt = (K u - b u) + u * (lam * m(t, x) - crowding(u))

The crowding term vanishes at ``u = 0``, so the linearization at extinction is
exactly the weighted generator whose principal spectrum point the rest of the
package computes.  Persistence of the nonlinear dynamics therefore switches at
the positive root of ``mu(lam)``: below it every population dies out, above it
a unique positive time-periodic state attracts positive initial data.

The periodic state is found by iterating the period map of the nonlinear flow
(a Poincare iteration) from a small positive constant until the iterates
either stabilize away from zero or collapse below an extinction floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .evolution import (MIN_STEPS_PER_PERIOD, Trajectory, UnstableStepError,
                        propagate)
from .operator import DispersalOperator
from .weighted_solver import (STATUS_UNIQUE, LambdaPResult, solve_lambda_p)
from .weights import DEFAULT_N_TIME, Weight, sup_abs

TOL_FIX = 1e-9
TOL_EXT = 1e-8
MAX_PERIODS = 500


@dataclass(frozen=True)
class Nonlinearity:
    """Density-dependent per-capita crowding penalty.

    ``logistic`` uses ``crowding(u) = c * u``; ``saturating`` uses
    ``c * u / (1 + d * u)``, which caps the penalty at ``c / d`` and therefore
    needs ``c / d`` to exceed the best-case growth rate for the dynamics to
    stay bounded.
    """

    kind: str = "logistic"
    crowding: float = 1.0
    saturation: float = 0.0

    def __post_init__(self):
        if self.kind not in ("logistic", "saturating"):
            raise ValueError(f"unknown nonlinearity kind {self.kind!r}")
        if not self.crowding > 0.0:
            raise ValueError("crowding coefficient must be positive")
        if self.saturation < 0.0:
            raise ValueError("saturation coefficient must be nonnegative")
        if self.kind == "logistic" and self.saturation != 0.0:
            raise ValueError("logistic crowding takes no saturation coefficient")

    def penalty(self, u):
        """Per-capita crowding at density ``u`` (elementwise)."""
        if self.kind == "logistic" or self.saturation == 0.0:
            return self.crowding * u
        return self.crowding * u / (1.0 + self.saturation * u)

    def check_bounded(self, growth_sup: float) -> None:
        """Require the penalty to dominate the growth rate at large density."""
        if self.kind == "saturating" and self.saturation > 0.0:
            cap = self.crowding / self.saturation
            if cap <= growth_sup:
                raise ValueError(
                    "saturating penalty caps at "
                    f"{cap:.6g} <= best-case growth {growth_sup:.6g}; "
                    "the dynamics would blow up")

    def carrying_scale(self, growth_sup: float) -> float:
        """Density where the penalty balances the best-case growth rate.

        Above this level the per-capita rate is negative everywhere, so the
        region ``[0, scale]`` absorbs the flow.  When the growth rate is
        nonpositive the scale degenerates; a positive fallback keeps initial
        conditions meaningful in extinction regimes.
        """
        if growth_sup <= 0.0:
            return 1.0 / self.crowding
        self.check_bounded(growth_sup)
        if self.kind == "logistic" or self.saturation == 0.0:
            return growth_sup / self.crowding
        return growth_sup / (self.crowding - self.saturation * growth_sup)


def _kpp_steps(period: float, rate: float) -> int:
    return max(MIN_STEPS_PER_PERIOD, int(math.ceil(8.0 * period * (1.0 + rate))))


def simulate_kpp(op: DispersalOperator, weight: Weight, nonlin: Nonlinearity,
                 lam: float, u0, t0: float, t1: float, *,
                 n_steps: int | None = None, record_every: int = 1) -> Trajectory:
    """Integrate the nonlinear dynamics from ``u0`` over ``[t0, t1]``."""
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (op.n,):
        raise ValueError(f"initial state has shape {u0.shape}, expected ({op.n},)")
    if np.any(u0 < 0.0) or not np.all(np.isfinite(u0)):
        raise ValueError("initial state must be finite and nonnegative")
    if not np.any(u0 > 0.0):
        raise ValueError("initial state must not be identically zero")
    if not t1 > t0:
        raise ValueError("need t1 > t0")
    growth_sup = lam * sup_abs(weight, op.grid) if lam >= 0 else abs(lam) * sup_abs(weight, op.grid)
    nonlin.check_bounded(growth_sup)
    scale = max(nonlin.carrying_scale(growth_sup), float(u0.max()), 1e-30)
    if n_steps is None:
        n_steps = _kpp_steps(t1 - t0, growth_sup + nonlin.penalty(scale))
    h = (t1 - t0) / n_steps
    K, b = op.K, op.b

    def rhs(t, u):
        m = weight.evaluate(t, op.grid)
        return K @ u - b * u + u * (lam * m - nonlin.penalty(u))

    limit = 10.0 * scale
    times = [t0]
    states = [u0.copy()]
    sups = [float(np.abs(u0).max())]
    u = u0.copy()
    t = t0
    for step in range(n_steps):
        k1 = rhs(t, u)
        k2 = rhs(t + 0.5 * h, u + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, u + 0.5 * h * k2)
        k4 = rhs(t + h, u + h * k3)
        u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        # the flow preserves nonnegativity; scrub rounding-level undershoot only
        u[(u < 0.0) & (u > -1e-12 * scale)] = 0.0
        t = t0 + (step + 1) * h
        sup = float(np.abs(u).max())
        if not np.isfinite(sup) or sup > limit or np.any(u < 0.0):
            raise UnstableStepError(
                f"state left the invariant region near t={t:.6g} "
                f"(sup {sup:.3e}, ceiling {limit:.3e}); refine n_steps")
        if (step + 1) % record_every == 0 or step == n_steps - 1:
            times.append(t)
            states.append(u.copy())
            sups.append(sup)
    return Trajectory(np.asarray(times), np.asarray(states), np.asarray(sups))


@dataclass(frozen=True)
class PeriodicOrbit:
    """Outcome of the Poincare iteration for one ``lam``."""

    verdict: str                       # "persistence" | "extinction" | "undecided"
    lam: float
    fixed_point: np.ndarray | None     # state at t = 0 when persistent
    residual: float                    # sup|P(u*) - u*| at the final iterate
    min_of_orbit: float
    sup_of_orbit: float
    periods_used: int
    uniqueness_gap: float | None       # gap between fixed points from two starts
    orbit_times: np.ndarray | None
    orbit_states: np.ndarray | None
    certificate: str | None = None     # extra evidence behind the verdict

    @property
    def persists(self) -> bool:
        return self.verdict == "persistence"


def _contraction_factor(op, weight, lam, u, n_steps):
    """Uniform contraction factor of one linear period applied to ``u``.

    Crowding only removes mass, so the nonlinear flow is dominated by the
    linear one; if ``Phi u <= theta u`` with ``theta < 1`` the iterates decay
    at least geometrically from here on and extinction is certain.
    """
    lin = propagate(op, weight, lam, u, 0.0, weight.period,
                    n_steps=n_steps, record_every=n_steps).final
    positive = u > 0.0
    if np.any(lin[~positive] > 0.0):
        return math.inf
    if not positive.any():
        return 0.0
    return float((lin[positive] / u[positive]).max())


def _poincare_iterate(op, weight, nonlin, lam, u, n_steps, tol_fix, tol_ext,
                      max_periods, floor):
    """Iterate the nonlinear period map until it stabilizes or collapses."""
    period = weight.period
    prev_sup = float(np.abs(u).max())
    for k in range(1, max_periods + 1):
        traj = simulate_kpp(op, weight, nonlin, lam, u, 0.0, period,
                            n_steps=n_steps, record_every=n_steps)
        nxt = traj.final
        sup = float(np.abs(nxt).max())
        diff = float(np.abs(nxt - u).max())
        if sup <= tol_ext * floor:
            return "extinction", nxt, diff, k, "sup norm fell below the extinction floor"
        if sup < 0.5 * floor and sup < prev_sup and k % 5 == 0:
            theta = _contraction_factor(op, weight, lam, nxt, n_steps)
            if theta < 1.0 - 1e-9:
                return ("extinction", nxt, diff, k,
                        f"one linear period contracts the state uniformly "
                        f"(factor {theta:.6g} < 1)")
        if diff < tol_fix * max(sup, 1e-300) and sup > 100.0 * tol_ext * floor:
            return "persistence", nxt, diff, k, None
        u = nxt
        prev_sup = sup
    return "undecided", u, float("nan"), max_periods, None


def find_periodic_solution(op: DispersalOperator, weight: Weight,
                           nonlin: Nonlinearity, lam: float, *,
                           n_steps: int | None = None, tol_fix: float = TOL_FIX,
                           tol_ext: float = TOL_EXT, max_periods: int = MAX_PERIODS,
                           n_snap: int = 16, check_uniqueness: bool = True) -> PeriodicOrbit:
    """Classify ``lam`` as persistent or extinct via the Poincare iteration.

    Persistence means the iteration from a small positive constant stabilizes
    (relative change below ``tol_fix``) at a state bounded away from zero;
    extinction means the sup norm fell below ``tol_ext`` times the carrying
    scale, or a linear period was observed to contract the current state
    uniformly, which bounds all later iterates by a geometric decay.  A second
    start near the carrying scale cross-checks uniqueness of the stabilized
    state.
    """
    growth_sup = abs(lam) * sup_abs(weight, op.grid)
    nonlin.check_bounded(growth_sup)
    scale = nonlin.carrying_scale(growth_sup)
    period = weight.period
    if n_steps is None:
        n_steps = _kpp_steps(period, growth_sup + nonlin.penalty(scale))

    u_low = np.full(op.n, 0.1 * scale)
    verdict, u_star, residual, used, certificate = _poincare_iterate(
        op, weight, nonlin, lam, u_low, n_steps, tol_fix, tol_ext, max_periods, scale)

    gap = None
    if verdict == "persistence" and check_uniqueness:
        u_high = np.full(op.n, 0.9 * scale)
        verdict2, u_star2, _, _, _ = _poincare_iterate(
            op, weight, nonlin, lam, u_high, n_steps, tol_fix, tol_ext,
            max_periods, scale)
        if verdict2 == "persistence":
            gap = float(np.abs(u_star - u_star2).max() / max(np.abs(u_star).max(), 1e-300))

    if verdict != "persistence":
        return PeriodicOrbit(verdict, lam, None, residual, 0.0, 0.0, used,
                             gap, None, None, certificate)

    snap_steps = max(n_steps, n_snap)
    snap_steps += (-snap_steps) % n_snap  # divisible by n_snap
    traj = simulate_kpp(op, weight, nonlin, lam, u_star, 0.0, period,
                        n_steps=snap_steps, record_every=snap_steps // n_snap)
    orbit = traj.states
    return PeriodicOrbit(
        verdict="persistence",
        lam=lam,
        fixed_point=u_star,
        residual=float(np.abs(traj.final - u_star).max()),
        min_of_orbit=float(orbit.min()),
        sup_of_orbit=float(orbit.max()),
        periods_used=used,
        uniqueness_gap=gap,
        orbit_times=traj.times,
        orbit_states=orbit,
    )


@dataclass(frozen=True)
class ThresholdScan:
    """Verdicts across a ladder of ``lam`` values against the linear threshold."""

    orbits: tuple[PeriodicOrbit, ...]
    lambda_result: LambdaPResult
    switch_bracket: tuple[float, float] | None
    monotone: bool
    consistent_with_root: bool | None


def threshold_scan(op: DispersalOperator, weight: Weight, nonlin: Nonlinearity,
                   lams, *, n_steps: int | None = None,
                   n_time: int = DEFAULT_N_TIME,
                   solver_result: LambdaPResult | None = None,
                   max_periods: int = MAX_PERIODS) -> ThresholdScan:
    """Run the persistence test at each ``lam`` and compare with the root.

    The scan records where the verdict switches from extinction to
    persistence, checks that the pattern is monotone (no persistence below an
    extinction), and, when the linear problem has a unique positive root,
    whether that root sits inside the switch bracket.
    """
    lams = sorted(float(v) for v in lams)
    if not lams:
        raise ValueError("need at least one lam to scan")
    orbits = tuple(
        find_periodic_solution(op, weight, nonlin, lam, n_steps=n_steps,
                               max_periods=max_periods, check_uniqueness=False)
        for lam in lams)
    if solver_result is None:
        solver_result = solve_lambda_p(op, weight, n_steps=n_steps, n_time=n_time)
    return summarize_scan(orbits, solver_result)


def summarize_scan(orbits, solver_result: LambdaPResult) -> ThresholdScan:
    """Condense per-``lam`` orbits into the switch bracket and consistency flags."""
    orbits = tuple(sorted(orbits, key=lambda orbit: orbit.lam))
    last_ext = None
    first_per = None
    monotone = True
    seen_persistence = False
    for orbit in orbits:
        if orbit.verdict == "persistence":
            seen_persistence = True
            if first_per is None:
                first_per = orbit.lam
        elif orbit.verdict == "extinction":
            if seen_persistence:
                monotone = False
            last_ext = orbit.lam
    bracket = None
    if last_ext is not None and first_per is not None and last_ext < first_per:
        bracket = (last_ext, first_per)

    consistent = None
    if solver_result.status == STATUS_UNIQUE and bracket is not None:
        consistent = bracket[0] <= solver_result.lambda_p <= bracket[1]
    return ThresholdScan(orbits, solver_result, bracket, monotone, consistent)
