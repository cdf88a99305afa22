"""Positive roots of ``lam -> mu(lam)``: the weighted threshold problem.

``mu(lam)`` is convex in ``lam`` with ``mu(0) < 0`` under the hostile-exterior
boundary and ``mu(0) = 0`` under the mass-conserving ones.  That shape drives
the search:

* Dirichlet-type: double ``lam`` until the curve turns positive, then refine
  the sign change.  A unique positive root exists iff the accumulated best-case
  growth ``P`` is positive.
* Neumann-type / periodic: the curve leaves zero with slope proportional to
  the space-time integral of the weight, so a positive root requires an
  initial negative dip followed by the convex upturn.  The solver hunts the
  dip on a geometric ``lam`` ladder and then brackets the upward crossing.

When the applicable existence condition fails, one-signedness of the curve
follows from analytic envelopes (``mu(lam) <= mu(0) + lam * P / T`` from
pointwise domination by the spatially-best weight, and convexity from zero for
the nonnegative-slope case); the solver records the certificate and a sampled
prefix of the curve instead of stepping the integrator at astronomically large
``lam`` where the required step count would explode.

Root refinement is plain bisection with secant acceleration, accepted only
inside the confirmed bracket; monotone convergence is worth more than
quadratic convergence near a root whose residual floor is set by quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Boundary
from .operator import DispersalOperator
from .spectrum import (SpectrumReport, autonomous_spectrum_point,
                       principal_spectrum_point)
from .weights import (DEFAULT_N_TIME, ConditionReport, Weight, check_conditions,
                      space_independent, summarize)

STATUS_UNIQUE = "unique_root"
STATUS_NONE = "no_positive_root"
STATUS_ALL = "all_positive_roots"
STATUS_MARGINAL = "marginal"

LAMBDA_CAP = 1e6
TOL_ROOT = 1e-8
DIP_EPS = 1e-3
TOL_DIP = 1e-9
XTOL_REL = 1e-10
FLAT_SEARCH_CAP = 1024.0


@dataclass(frozen=True)
class LambdaPResult:
    status: str
    boundary: Boundary
    lambda_p: float | None
    mu_at_root: float | None
    bracket: tuple[float, float] | None
    curve: tuple[tuple[float, float], ...]  # sampled (lam, mu) pairs, sorted
    condition_report: ConditionReport
    evidence: str


class _MuCache:
    def __init__(self, fn):
        self.fn = fn
        self.cache: dict[float, float] = {}

    def __call__(self, lam: float) -> float:
        lam = float(lam)
        if lam not in self.cache:
            self.cache[lam] = float(self.fn(lam))
        return self.cache[lam]

    def curve(self) -> tuple[tuple[float, float], ...]:
        return tuple(sorted(self.cache.items()))


def _refine_root(mu: _MuCache, lo: float, hi: float, mu_lo: float, mu_hi: float,
                 tol_root: float, xtol_rel: float, max_iter: int = 200):
    """Shrink a sign-change bracket until the residual and width tolerances hold."""
    prev = (lo, mu_lo)
    cur = (hi, mu_hi)
    best = min(prev, cur, key=lambda p: abs(p[1]))
    for _ in range(max_iter):
        width = hi - lo
        cand = None
        denom = cur[1] - prev[1]
        if denom != 0.0:
            cand = cur[0] - cur[1] * (cur[0] - prev[0]) / denom
        if cand is None or not (lo + 0.01 * width < cand < hi - 0.01 * width):
            cand = 0.5 * (lo + hi)
        val = mu(cand)
        prev, cur = cur, (cand, val)
        if abs(val) < abs(best[1]):
            best = (cand, val)
        if val < 0.0:
            lo, mu_lo = cand, val
        else:
            hi, mu_hi = cand, val
        if abs(best[1]) < tol_root and (hi - lo) <= xtol_rel * max(1.0, hi):
            break
    return best


def _mu_period_map(op: DispersalOperator, weight: Weight, n_steps, n_time):
    def fn(lam):
        return principal_spectrum_point(op, weight, lam, n_steps=n_steps, n_time=n_time,
                                        with_s_conditions=False).mu_n
    return _MuCache(fn)


def _solve_dirichlet(mu: _MuCache, cond: ConditionReport, weight_period: float,
                     tol_root: float, lam_cap: float, xtol_rel: float):
    mu0 = mu(0.0)
    if not cond.d_holds:
        for lam in (1.0, 4.0, 16.0):
            mu(lam)
        note = "P is within tolerance of zero; " if cond.p_marginal else ""
        return (STATUS_NONE, None, None, None,
                note + "the curve is dominated by mu(0) + lam * P / T <= mu(0) < 0, "
                "so it stays negative for every positive lam")
    lo, mu_lo = 0.0, mu0
    lam = 1.0
    while lam <= lam_cap:
        val = mu(lam)
        if val > tol_root:
            best = _refine_root(mu, lo, lam, mu_lo, val, tol_root, xtol_rel)
            return (STATUS_UNIQUE, best[0], best[1], (lo, lam),
                    f"sign change bracketed in [{lo:.6g}, {lam:.6g}] and refined")
        if val < -tol_root:
            lo, mu_lo = lam, val
        lam *= 2.0
    return (STATUS_NONE, None, None, None,
            f"no sign change found for lam up to {lam_cap:.3g}")


def _solve_mass_conserving(mu: _MuCache, cond: ConditionReport, period: float,
                           tol_root: float, lam_cap: float, xtol_rel: float):
    p_fails = cond.p_value <= cond.tol_p
    if p_fails:
        for lam in (1.0, 4.0, 16.0):
            mu(lam)
        return (STATUS_NONE, None, None, None,
                "P <= 0, so mu(lam) <= lam * P / T <= 0: the curve never reaches "
                "positive values and the only root is lam = 0")
    if cond.integral_marginal:
        # boundary of the existence condition: the curve leaves zero with
        # vanishing slope, so one-signedness is not decided by the iff result
        for lam in (DIP_EPS, 1e-2, 1e-1):
            mu(lam)
        return (STATUS_MARGINAL, None, None, None,
                "P > 0 but the space-time integral of the weight vanishes within "
                "tolerance: the existence condition sits exactly on its boundary, "
                "so neither a root nor one-signedness is certified")

    # hunt the initial negative dip on a geometric ladder
    lam = DIP_EPS
    dip_lam = None
    while lam <= lam_cap:
        val = mu(lam)
        if val < -TOL_DIP:
            dip_lam = lam
            break
        if val > tol_root:
            break
        if dip_lam is None and lam > FLAT_SEARCH_CAP:
            return (STATUS_MARGINAL, None, None, None,
                    f"curve stayed within +/-{TOL_DIP:.1e} of zero for lam up to "
                    f"{FLAT_SEARCH_CAP:.3g}; no sign structure to bracket")
        lam *= 2.0

    if dip_lam is None:
        if cond.time_space_integral >= -cond.tol_integral:
            return (STATUS_NONE, None, None, None,
                    "the space-time integral of the weight is nonnegative, so the "
                    "curve leaves zero with nonnegative slope and convexity keeps "
                    "it nonnegative: no positive root")
        # negative slope promised a dip but the ladder missed it: look closer to zero
        lam = DIP_EPS / 2.0
        while lam >= 1e-6:
            val = mu(lam)
            if val < -TOL_DIP:
                dip_lam = lam
                break
            lam /= 2.0
        if dip_lam is None:
            return (STATUS_MARGINAL, None, None, None,
                    "the weight promises an initial dip (negative space-time "
                    "integral) but none was resolved above the noise floor")

    lo, mu_lo = dip_lam, mu(dip_lam)
    lam = dip_lam * 2.0
    while lam <= lam_cap:
        val = mu(lam)
        if val > tol_root:
            best = _refine_root(mu, lo, lam, mu_lo, val, tol_root, xtol_rel)
            return (STATUS_UNIQUE, best[0], best[1], (lo, lam),
                    f"dip at lam={dip_lam:.6g}, upward crossing bracketed in "
                    f"[{lo:.6g}, {lam:.6g}] and refined")
        if val < -tol_root:
            lo, mu_lo = lam, val
        lam *= 2.0
    return (STATUS_NONE, None, None, None,
            f"curve dipped negative at lam={dip_lam:.6g} but never re-crossed zero "
            f"below the cap {lam_cap:.3g}")


def _solve_core(mu: _MuCache, boundary: Boundary, cond: ConditionReport,
                space_indep: bool, m_hat_mean: float, m_scale: float, period: float,
                tol_root: float, lam_cap: float, xtol_rel: float) -> LambdaPResult:
    if boundary is Boundary.DIRICHLET:
        status, lam_p, mu_root, bracket, evidence = _solve_dirichlet(
            mu, cond, period, tol_root, lam_cap, xtol_rel)
    elif space_indep:
        # mu(lam) = lam * mean(m): degenerate closed form
        tol_avg = 1e-9 * (1.0 + m_scale)
        if abs(m_hat_mean) <= tol_avg:
            status, lam_p, mu_root, bracket = STATUS_ALL, None, None, None
            evidence = ("spatially constant weight with zero time mean: "
                        "mu vanishes identically, every positive lam is a root")
        else:
            status, lam_p, mu_root, bracket = STATUS_NONE, None, None, None
            evidence = (f"spatially constant weight: mu(lam) = lam * {m_hat_mean:.6g} "
                        "is one-signed for lam > 0")
    else:
        status, lam_p, mu_root, bracket, evidence = _solve_mass_conserving(
            mu, cond, period, tol_root, lam_cap, xtol_rel)
    return LambdaPResult(
        status=status,
        boundary=boundary,
        lambda_p=lam_p,
        mu_at_root=mu_root,
        bracket=bracket,
        curve=mu.curve(),
        condition_report=cond,
        evidence=evidence,
    )


def solve_lambda_p(op: DispersalOperator, weight: Weight, *,
                   n_steps: int | None = None, n_time: int = DEFAULT_N_TIME,
                   tol_root: float = TOL_ROOT, lam_cap: float = LAMBDA_CAP,
                   xtol_rel: float = XTOL_REL) -> LambdaPResult:
    """Find the positive root of the principal-spectrum-point curve, if any."""
    cond = check_conditions(weight, op.grid, n_time)
    summary = summarize(weight, op.grid, n_time)
    mu = _mu_period_map(op, weight, n_steps, n_time)
    indep = space_independent(weight, op.grid, n_time)
    return _solve_core(mu, op.boundary, cond, indep, float(summary.m_hat.mean()),
                       summary.sup_abs, weight.period, tol_root, lam_cap, xtol_rel)


@dataclass(frozen=True)
class UpperBoundResult:
    """Roots of the time-dependent problem and of its time-averaged companion."""

    time_dependent: LambdaPResult
    averaged: LambdaPResult
    bound_holds: bool | None  # None unless both problems have a unique root
    slack: float | None


def upper_bound_lambda_p(op: DispersalOperator, weight: Weight, *,
                         n_steps: int | None = None, n_time: int = DEFAULT_N_TIME,
                         tol_root: float = TOL_ROOT, lam_cap: float = LAMBDA_CAP,
                         xtol_rel: float = XTOL_REL) -> UpperBoundResult:
    """Compare the threshold of ``m`` with that of its time average.

    Averaging the weight in time can only raise the threshold, so
    ``lambda_p(m) <= lambda_p(m_hat) + 1e-8`` whenever both exist.  The
    averaged problem is autonomous and is solved by the same search logic on
    the exact spectral bound of the frozen generator (no time stepping).
    """
    res_time = solve_lambda_p(op, weight, n_steps=n_steps, n_time=n_time,
                              tol_root=tol_root, lam_cap=lam_cap, xtol_rel=xtol_rel)
    summary = summarize(weight, op.grid, n_time)
    m_hat = summary.m_hat

    mu_auto = _MuCache(lambda lam: autonomous_spectrum_point(op, m_hat, lam).mu)
    p_auto = weight.period * summary.m_hat_max
    tol_p = 1e-9 * (1.0 + abs(p_auto))
    integral = summary.time_space_integral
    tol_i = 1e-9 * (1.0 + abs(integral))
    mass_holds = p_auto > tol_p and integral < -tol_i
    cond_auto = ConditionReport(
        p_value=p_auto, time_space_integral=integral,
        d_holds=p_auto > tol_p, n_holds=mass_holds, p_holds=mass_holds,
        p_marginal=abs(p_auto) <= tol_p, integral_marginal=abs(integral) <= tol_i,
        tol_p=tol_p, tol_integral=tol_i,
    )
    spread = summary.m_hat_max - summary.m_hat_min
    indep = spread <= 1e-12 * (1.0 + abs(summary.m_hat_max))
    res_avg = _solve_core(mu_auto, op.boundary, cond_auto, indep,
                          float(m_hat.mean()), float(np.abs(m_hat).max()),
                          weight.period, tol_root, lam_cap, xtol_rel)

    bound = None
    slack = None
    if res_time.status == STATUS_UNIQUE and res_avg.status == STATUS_UNIQUE:
        slack = res_avg.lambda_p - res_time.lambda_p
        bound = res_time.lambda_p <= res_avg.lambda_p + 1e-8
    return UpperBoundResult(res_time, res_avg, bound, slack)


@dataclass(frozen=True)
class PeSufficiency:
    is_principal_eigenvalue: str  # "yes" | "no" | "unknown"
    basis: str | None             # "S1" | "S3" | "gap" when yes
    report: SpectrumReport


def pe_sufficiency(op: DispersalOperator, weight: Weight, result: LambdaPResult, *,
                   n_steps: int | None = None, n_time: int = DEFAULT_N_TIME) -> PeSufficiency:
    """Decide whether the spectrum point at the root is a true eigenvalue.

    Analytic sufficiency (smooth flat interior maximum, or divergent contact
    integral) is preferred; the numerical gap classification is the fallback.
    """
    if result.status != STATUS_UNIQUE or result.lambda_p is None:
        raise ValueError("pe_sufficiency needs a unique_root result")
    report = principal_spectrum_point(op, weight, result.lambda_p,
                                      n_steps=n_steps, n_time=n_time)
    s = report.s_conditions
    if s.s1 == "yes":
        return PeSufficiency("yes", "S1", report)
    if s.s3 == "yes":
        return PeSufficiency("yes", "S3", report)
    if report.is_principal_eigenvalue == "yes":
        return PeSufficiency("yes", "gap", report)
    if report.is_principal_eigenvalue == "no":
        return PeSufficiency("no", None, report)
    return PeSufficiency("unknown", None, report)
