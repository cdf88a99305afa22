"""Principal spectrum points: oracles, envelope bounds, and classification."""

import math

import numpy as np
import pytest
import scipy.linalg

from perispec.evolution import period_map
from perispec.geometry import Boundary, build_grid, make_kernel, wrap_kernel
from perispec.operator import assemble
from perispec.spectrum import (
    PowerIterationError,
    SpectrumReport,
    _power_iteration,
    autonomous_spectrum_point,
    check_S_conditions,
    classify_principal_eigenvalue,
    essential_interval,
    localization_width,
    lyapunov_estimate,
    principal_spectrum_point,
    refinement_diagnostics,
)
from perispec.weights import S1Data, closed_form, time_average


def make_op(boundary, n=32, r=1.0):
    grid = build_grid(boundary, (1.0,), n)
    if boundary is Boundary.PERIODIC:
        return assemble(wrap_kernel(make_kernel("parabolic", r), [1.0]), grid)
    return assemble(make_kernel("parabolic", r), grid)


STANDARD_WEIGHT = "sin(2*pi*t/T) + cos(2*pi*x) - 0.2"


def analytic_parabolic_mass(x, r=1.0):
    def g(s):
        s = min(s, r)
        return 3.0 / (4.0 * r) * (s - s ** 3 / (3.0 * r * r))
    return g(1.0 - x) + g(x)


# ------------------------------------------------------------ dense oracles

@pytest.mark.parametrize("boundary", list(Boundary))
def test_power_iteration_matches_dense_eigensolver(boundary):
    op = make_op(boundary, n=16)
    w = closed_form(STANDARD_WEIGHT, 1.0)
    pm = period_map(op, w, 1.0)
    rep = principal_spectrum_point(op, w, 1.0, pmap=pm, with_s_conditions=False)
    rho = float(np.abs(np.linalg.eigvals(pm.matrix)).max())
    assert rep.mu_n == pytest.approx(math.log(rho) / 1.0, abs=1e-10)


def test_autonomous_route_matches_dense_eigensolver():
    op = make_op(Boundary.DIRICHLET, n=14)
    m = np.cos(2 * np.pi * op.grid.nodes[:, 0]) - 0.2
    auto = autonomous_spectrum_point(op, m, 1.3)
    gen = op.K - np.diag(op.b) + 1.3 * np.diag(m)
    top = float(np.linalg.eigvals(gen).real.max())
    assert auto.mu == pytest.approx(top, abs=1e-10)
    assert auto.residual < 1e-8
    assert np.all(auto.eigenfunction >= 0.0)


def test_periodic_route_agrees_with_autonomous_for_frozen_weight():
    op = make_op(Boundary.NEUMANN, n=20)
    w = closed_form("cos(2*pi*x) - 0.2", 1.0)
    rep = principal_spectrum_point(op, w, 1.0, n_steps=256, with_s_conditions=False)
    auto = autonomous_spectrum_point(op, w.evaluate(0.0, op.grid), 1.0)
    assert rep.mu_n == pytest.approx(auto.mu, abs=1e-7)


def test_autonomous_map_against_expm_radius():
    op = make_op(Boundary.PERIODIC, n=12)
    w = closed_form("cos(2*pi*x)", 1.0)
    pm = period_map(op, w, 0.7, n_steps=256)
    gen = op.K - np.diag(op.b) + 0.7 * np.diag(w.evaluate(0.0, op.grid))
    np.testing.assert_allclose(pm.matrix, scipy.linalg.expm(gen), atol=1e-8)


# --------------------------------------------------------- zero-weight point

@pytest.mark.parametrize("boundary", [Boundary.NEUMANN, Boundary.PERIODIC])
def test_mass_conserving_zero_point(boundary):
    # constants are equilibria, so the spectrum point at lam = 0 is exactly 0
    op = make_op(boundary)
    w = closed_form(STANDARD_WEIGHT, 1.0)
    rep = principal_spectrum_point(op, w, 0.0, with_s_conditions=False)
    assert abs(rep.mu_n) < 1e-10
    assert rep.residual < 1e-10
    np.testing.assert_allclose(rep.eigenfunction, 1.0, atol=1e-9)


def test_dirichlet_zero_point_negative():
    op = make_op(Boundary.DIRICHLET, n=64)
    w = closed_form(STANDARD_WEIGHT, 1.0)
    rep = principal_spectrum_point(op, w, 0.0, with_s_conditions=False)
    assert rep.mu_n < -1e-3


# ------------------------------------------------------ two-method agreement

@pytest.mark.parametrize("boundary", list(Boundary))
@pytest.mark.parametrize("lam", [0.0, 0.5, 1.0, 2.0])
def test_lyapunov_route_agrees_with_period_map(boundary, lam):
    op = make_op(boundary)
    w = closed_form(STANDARD_WEIGHT, 1.0)
    pm = period_map(op, w, lam)
    rep = principal_spectrum_point(op, w, lam, pmap=pm, with_s_conditions=False)
    mu_lyap = lyapunov_estimate(op, w, lam, n_periods=400, pmap=pm)
    assert abs(rep.mu_n - mu_lyap) < 1e-6


def test_cross_validation_diagnostics():
    op = make_op(Boundary.DIRICHLET, n=16)
    w = closed_form(STANDARD_WEIGHT, 1.0)
    rep = principal_spectrum_point(op, w, 1.0, cross_validate=True)
    assert "lyapunov_mu" in rep.diagnostics and "method_gap" in rep.diagnostics
    assert rep.diagnostics["method_gap"] < 1e-3


def test_lyapunov_validates_inputs():
    op = make_op(Boundary.DIRICHLET, n=8)
    w = closed_form("0", 1.0)
    with pytest.raises(ValueError):
        lyapunov_estimate(op, w, 0.0, n_periods=5)
    with pytest.raises(ValueError):
        lyapunov_estimate(op, w, 0.0, u0=np.ones(3))
    with pytest.raises(ValueError):
        lyapunov_estimate(op, w, 0.0, u0=-np.ones(op.n))
    with pytest.raises(ValueError):
        lyapunov_estimate(op, w, 0.0, u0=np.zeros(op.n))


# --------------------------------------------------------- envelope interval

def test_dirichlet_envelope_at_zero_is_minus_one():
    op = make_op(Boundary.DIRICHLET)
    w = closed_form(STANDARD_WEIGHT, 1.0)
    lo, hi = essential_interval(op, w, 0.0)
    assert lo == -1.0 and hi == -1.0


def test_neumann_envelope_matches_analytic_mass():
    op = make_op(Boundary.NEUMANN, n=64)
    w = closed_form("sin(2*pi*t/T)", 1.0)  # m_hat = 0: envelope is -b
    lo, hi = essential_interval(op, w, 1.0)
    x_edge = op.grid.nodes[0, 0]
    assert hi == pytest.approx(-analytic_parabolic_mass(x_edge), abs=1e-4)
    assert lo == pytest.approx(-analytic_parabolic_mass(0.5), abs=1e-4)


def test_envelope_shifts_with_weight_average():
    op = make_op(Boundary.DIRICHLET)
    w = closed_form("cos(2*pi*x)", 1.0)
    m_hat = time_average(w, op.grid)
    lam = 1.7
    lo, hi = essential_interval(op, w, lam)
    assert lo == pytest.approx(float((-op.b + lam * m_hat).min()), rel=1e-12)
    assert hi == pytest.approx(float((-op.b + lam * m_hat).max()), rel=1e-12)


@pytest.mark.parametrize("boundary", list(Boundary))
@pytest.mark.parametrize("lam", [0.0, 0.5, 2.0])
def test_spectrum_point_dominates_envelope(boundary, lam):
    op = make_op(boundary)
    w = closed_form(STANDARD_WEIGHT, 1.0)
    rep = principal_spectrum_point(op, w, lam, with_s_conditions=False)
    assert rep.mu_n >= rep.h_hat_max - 1e-8


def test_time_averaging_lower_bound():
    # averaging the weight in time can only lower the spectrum point
    for boundary in Boundary:
        op = make_op(boundary)
        w = closed_form(STANDARD_WEIGHT, 1.0)
        rep = principal_spectrum_point(op, w, 1.5, with_s_conditions=False)
        auto = autonomous_spectrum_point(op, time_average(w, op.grid), 1.5)
        assert rep.mu_n >= auto.mu - 1e-8


# ----------------------------------------------------- structure in the weight

def test_shift_law_for_spectrum_point():
    op = make_op(Boundary.DIRICHLET)
    w = closed_form(STANDARD_WEIGHT, 1.0)
    lam, c = 1.2, 0.45
    mu = principal_spectrum_point(op, w, lam, n_steps=192, with_s_conditions=False).mu_n
    mu_shift = principal_spectrum_point(op, w.shifted(c), lam, n_steps=192,
                                        with_s_conditions=False).mu_n
    assert mu_shift == pytest.approx(mu + lam * c, abs=1e-9)


def test_monotone_in_the_weight():
    op = make_op(Boundary.NEUMANN)
    base = closed_form(STANDARD_WEIGHT, 1.0)
    bump = closed_form("0.3 * (1 + cos(2*pi*x))", 1.0)  # nonnegative
    mu_lo = principal_spectrum_point(op, base, 1.0, n_steps=192,
                                     with_s_conditions=False).mu_n
    mu_hi = principal_spectrum_point(op, base + bump, 1.0, n_steps=192,
                                     with_s_conditions=False).mu_n
    assert mu_hi >= mu_lo - 1e-10


def test_continuity_in_the_weight():
    # a sup-norm perturbation of size eps moves the spectrum point by <= eps
    op = make_op(Boundary.DIRICHLET)
    w = closed_form(STANDARD_WEIGHT, 1.0)
    eps = 0.01
    g = closed_form(f"({eps!r}) * sin(2*pi*x)", 1.0)  # |g| <= eps
    mu = principal_spectrum_point(op, w, 1.0, n_steps=192, with_s_conditions=False).mu_n
    mu_pert = principal_spectrum_point(op, w + g, 1.0, n_steps=192,
                                       with_s_conditions=False).mu_n
    assert abs(mu_pert - mu) <= eps + 1e-8


def test_midpoint_convexity_in_lam():
    op = make_op(Boundary.DIRICHLET)
    w = closed_form(STANDARD_WEIGHT, 1.0)

    def mu(lam):
        return principal_spectrum_point(op, w, lam, n_steps=256,
                                        with_s_conditions=False).mu_n

    for lo, hi in [(0.0, 1.0), (0.5, 2.0), (1.0, 3.0)]:
        assert mu(0.5 * (lo + hi)) <= 0.5 * (mu(lo) + mu(hi)) + 1e-9


def test_strict_convexity_on_space_dependent_weight():
    op = make_op(Boundary.DIRICHLET)
    w = closed_form("cos(2*pi*x)", 1.0)
    n = 256
    mus = [principal_spectrum_point(op, w, lam, n_steps=n, with_s_conditions=False).mu_n
           for lam in (0.0, 1.0, 2.0)]
    assert 0.5 * (mus[0] + mus[2]) - mus[1] > 1e-6


def test_space_independent_weight_is_affine_in_lam():
    # m = a(t): mu(lam) = mu(0) + lam * mean(a), exactly linear
    op = make_op(Boundary.NEUMANN)
    w = closed_form("0.5 + 0.3*sin(2*pi*t/T)", 1.0)
    mus = [principal_spectrum_point(op, w, lam, n_steps=256, with_s_conditions=False).mu_n
           for lam in (0.0, 1.0, 2.0)]
    assert mus[0] == pytest.approx(0.0, abs=1e-10)
    assert mus[1] == pytest.approx(0.5, abs=1e-8)
    assert mus[2] == pytest.approx(1.0, abs=1e-8)


# ----------------------------------------------------------- classification

def _report_with(mu, h_max, residual):
    return SpectrumReport(
        mu_n=mu, method="period_map_radius", lam=1.0, eigenfunction=None,
        residual=residual, h_hat_min=h_max - 1.0, h_hat_max=h_max,
        is_principal_eigenvalue="marginal", s_conditions=None, iterations=10,
        localization_width=0.5, diagnostics={},
    )


def test_classifier_branches():
    # clear gap with a converged eigenpair
    assert classify_principal_eigenvalue(_report_with(0.5, 0.0, 1e-12)) == "yes"
    # sitting on the envelope sup without a converged eigenpair
    assert classify_principal_eigenvalue(_report_with(0.0, 0.0, 1e-4)) == "no"
    # near-ties go to marginal rather than a guess
    assert classify_principal_eigenvalue(_report_with(0.0, 0.0, 1e-12)) == "marginal"
    assert classify_principal_eigenvalue(_report_with(0.5, 0.0, 1e-4)) == "marginal"


def test_standard_case_is_eigenvalue():
    op = make_op(Boundary.DIRICHLET, n=64)
    w = closed_form(STANDARD_WEIGHT, 1.0)
    rep = principal_spectrum_point(op, w, 1.0)
    assert rep.is_principal_eigenvalue == "yes"
    assert rep.mu_n > rep.h_hat_max + 1e-3
    assert rep.residual < 1e-8


def test_flat_kernel_cusp_weight_never_certifies_eigenvalue():
    # a nearly flat kernel makes the dispersal coupling ~ 1e-5, so the
    # spectrum point hugs the envelope sup; the cusp forces the discrete
    # eigenfunction to localize at the maximizer, collapsing under refinement
    w = closed_form("-((x - 0.5)**2)**0.25", 1.0)
    reports = []
    for n in (64, 128):
        grid = build_grid(Boundary.DIRICHLET, (1.0,), n)
        op = assemble(make_kernel("parabolic", 1e5), grid)
        reports.append(principal_spectrum_point(op, w, 1.0))
    for rep in reports:
        assert rep.is_principal_eigenvalue != "yes"
        assert abs(rep.mu_n - rep.h_hat_max) < 1e-6 * (1 + abs(rep.mu_n))
    diag = refinement_diagnostics(*reports)
    assert diag["width_fine"] < 0.75 * diag["width_coarse"]


def test_near_degenerate_top_reports_no():
    # moving the cusp slightly off the midpoint between two nodes leaves the
    # two best sites almost tied with no symmetry to separate them, so the
    # iteration budget runs out with a lingering eigen-residual
    grid = build_grid(Boundary.DIRICHLET, (1.0,), 64)
    op = assemble(make_kernel("parabolic", 1e5), grid)
    w = closed_form("-((x - 0.50005)**2)**0.25", 1.0)
    rep = principal_spectrum_point(op, w, 1.0)
    assert rep.is_principal_eigenvalue == "no"
    assert rep.residual >= 1e-8
    assert abs(rep.mu_n - rep.h_hat_max) < 1e-6 * (1 + abs(rep.mu_n))


def test_refinement_keeps_width_for_true_eigenfunction():
    w = closed_form(STANDARD_WEIGHT, 1.0)
    reports = [principal_spectrum_point(make_op(Boundary.DIRICHLET, n=n), w, 1.0)
               for n in (32, 64)]
    diag = refinement_diagnostics(*reports)
    assert diag["width_ratio"] > 0.9
    assert diag["gap_coarse"] > 0 and diag["gap_fine"] > 0


def test_localization_width_extremes():
    w = np.full(50, 0.02)  # uniform weights, domain volume 1
    assert localization_width(np.ones(50), w) == pytest.approx(1.0)
    spike = np.zeros(50)
    spike[25] = 1.0
    assert localization_width(spike, w) == pytest.approx(1.0 / 50.0)


# ------------------------------------------------------- sufficiency checks

def test_s1_requires_metadata():
    op = make_op(Boundary.DIRICHLET)
    w = closed_form("-(x - 0.5)**2", 1.0)
    assert check_S_conditions(w, op, 1.0).s1 == "unknown"


def test_s1_accepts_consistent_metadata():
    op = make_op(Boundary.DIRICHLET)
    data = S1Data(smoothness=math.inf, maximizer=(0.5,), flat_order=1)
    w = closed_form("-(x - 0.5)**2", 1.0, s1_data=data)
    assert check_S_conditions(w, op, 1.0).s1 == "yes"


def test_s1_rejects_boundary_maximizer():
    op = make_op(Boundary.DIRICHLET)
    data = S1Data(smoothness=math.inf, maximizer=(0.0,), flat_order=1)
    w = closed_form("-x**2", 1.0, s1_data=data)
    assert check_S_conditions(w, op, 1.0).s1 == "no"


def test_s1_rejects_rough_envelope():
    op = make_op(Boundary.DIRICHLET)
    data = S1Data(smoothness=0, maximizer=(0.5,), flat_order=1)
    w = closed_form("-((x - 0.5)**2)**0.25", 1.0, s1_data=data)
    assert check_S_conditions(w, op, 1.0).s1 == "no"


def test_s1_distrusts_inconsistent_maximizer():
    op = make_op(Boundary.DIRICHLET)
    data = S1Data(smoothness=math.inf, maximizer=(0.2,), flat_order=1)
    w = closed_form("-(x - 0.5)**2", 1.0, s1_data=data)  # actual peak at 0.5
    assert check_S_conditions(w, op, 1.0).s1 == "unknown"


def test_s1_neumann_always_unknown():
    # the envelope maximizer moves with lam through the nonconstant b, so
    # supplied metadata about m_hat alone cannot settle the question
    op = make_op(Boundary.NEUMANN)
    data = S1Data(smoothness=math.inf, maximizer=(0.5,), flat_order=1)
    w = closed_form("-(x - 0.5)**2", 1.0, s1_data=data)
    assert check_S_conditions(w, op, 0.0).s1 == "unknown"
    assert check_S_conditions(w, op, 1.0).s1 == "unknown"


def test_s1_zero_and_negative_lam():
    op = make_op(Boundary.DIRICHLET)
    data = S1Data(smoothness=math.inf, maximizer=(0.5,), flat_order=1)
    w = closed_form("-(x - 0.5)**2", 1.0, s1_data=data)
    assert check_S_conditions(w, op, 0.0).s1 == "yes"   # constant envelope
    assert check_S_conditions(w, op, -1.0).s1 == "unknown"


def test_s2_oscillation_bound():
    op = make_op(Boundary.DIRICHLET)
    w = closed_form("cos(2*pi*x)", 1.0)
    spread = float(np.ptp(time_average(w, op.grid)))
    sc_small = check_S_conditions(w, op, 0.9 / spread)
    assert sc_small.s2 == "yes"
    assert sc_small.s2_lhs == pytest.approx(0.9)
    assert sc_small.s2_rhs == 1.0  # Dirichlet: b = 1
    sc_large = check_S_conditions(w, op, 1.1 / spread)
    assert sc_large.s2 == "no"


def test_s3_contact_exponents():
    op = make_op(Boundary.DIRICHLET, n=65)  # odd: the peak lands on a node
    quad = check_S_conditions(closed_form("-(x - 0.5)**2", 1.0), op, 1.0)
    assert quad.s3 == "yes" and quad.s3_exponent == pytest.approx(2.0, abs=0.2)
    cusp = check_S_conditions(closed_form("-((x - 0.5)**2)**0.25", 1.0), op, 1.0)
    assert cusp.s3 == "no" and cusp.s3_exponent == pytest.approx(0.5, abs=0.2)
    kink = check_S_conditions(closed_form("-((x - 0.5)**2)**0.5", 1.0), op, 1.0)
    assert kink.s3 == "yes" and kink.s3_exponent == pytest.approx(1.0, abs=0.1)


def test_s3_off_grid_peak_still_resolved():
    op = make_op(Boundary.DIRICHLET, n=64)  # peak falls between nodes
    quad = check_S_conditions(closed_form("-(x - 0.5)**2", 1.0), op, 1.0)
    assert quad.s3 == "yes" and quad.s3_exponent == pytest.approx(2.0, abs=0.2)
    cusp = check_S_conditions(closed_form("-((x - 0.5)**2)**0.25", 1.0), op, 1.0)
    assert cusp.s3 == "no"


def test_s3_flat_envelope_divergent():
    op = make_op(Boundary.DIRICHLET)
    sc = check_S_conditions(closed_form("sin(2*pi*t/T)", 1.0), op, 1.0)
    assert sc.s3 == "yes" and math.isinf(sc.s3_exponent)


def test_s3_two_dimensional_quadratic_cap():
    grid = build_grid(Boundary.DIRICHLET, (1.0, 1.0), 17)
    op = assemble(make_kernel("parabolic", 1.0, dim=2), grid)
    w = closed_form("-(x - 0.5)**2 - (y - 0.5)**2", 1.0)
    sc = check_S_conditions(w, op, 1.0)
    assert sc.s3 == "yes" and sc.s3_exponent == pytest.approx(2.0, abs=0.3)


def test_any_holds_property():
    op = make_op(Boundary.DIRICHLET)
    sc = check_S_conditions(closed_form("cos(2*pi*x)", 1.0), op, 0.1)
    assert sc.any_holds  # S2 certainly holds at tiny lam
    assert check_S_conditions(closed_form("-((x - 0.5)**2)**0.25", 1.0),
                              make_op(Boundary.NEUMANN), 5.0).s3 == "no"


# ----------------------------------------------------------- failure paths

def test_power_iteration_rejects_degenerate_matrix():
    w = np.full(4, 0.25)
    with pytest.raises(PowerIterationError):
        _power_iteration(np.zeros((4, 4)), np.ones(4), w)


def test_report_bookkeeping():
    op = make_op(Boundary.DIRICHLET, n=16)
    w = closed_form(STANDARD_WEIGHT, 1.0)
    rep = principal_spectrum_point(op, w, 0.8)
    assert rep.method == "period_map_radius"
    assert rep.lam == 0.8
    assert rep.iterations >= 1
    assert float(rep.eigenfunction.max()) == pytest.approx(1.0)
    assert np.all(rep.eigenfunction >= 0.0)
    assert rep.s_conditions is not None
    rep_bare = principal_spectrum_point(op, w, 0.8, with_s_conditions=False)
    assert rep_bare.s_conditions is None
