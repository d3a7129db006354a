import csv
from dataclasses import replace

import numpy as np
import pytest

from pqss.cli import write_field_csv
from pqss.errors import (DomainTooLargeError, FlatnessViolationError, LambdaTooSmallError,
                         SpectralGapError, ThresholdUnreachableError)
from pqss.fem import Field, check_subsuper
from pqss.iterate import monotone_iterate
from pqss.nonlinearity import lower_bound_k0
from pqss.problem import ProblemParams
from pqss.spectral import TorsionData, spectral_data
from pqss.subsuper import (_super_attempt, admissible_theta, construct_pair, construct_strict_pair,
                           construct_subsolution, construct_supersolution,
                           existence_threshold, g_functions, subsolution_fields)

from conftest import ex31_quad, ex32_quad

NL = ex31_quad()
K0 = 1.5
BASE = ProblemParams(2.0, 2.0, 1.0, 1.0, 1.0, 1.0)


@pytest.fixture(scope="module")
def spec(interval128):
    return spectral_data(interval128, 2.0, 2.0)


@pytest.fixture(scope="module")
def threshold(spec):
    return existence_threshold(BASE, NL, spec, K0)


@pytest.fixture(scope="module")
def built(spec, threshold):
    params = BASE.with_sums(*threshold.passing)
    return params, construct_pair(params, NL, spec, K0)


def test_k0_fixture():
    assert lower_bound_k0(*NL, BASE.sup_norms()) == K0


def test_zero_sums_rejected(spec):
    with pytest.raises(LambdaTooSmallError) as exc:
        construct_subsolution(ProblemParams(2, 2), NL, spec, K0)
    assert exc.value.condition == "(2.3)"


def test_subsolution_p2_max(spec):
    params = BASE.with_sums(100.0, 100.0)
    u, v = subsolution_fields(params, spec, K0)
    assert u.max() == pytest.approx(100.0 * K0 / spec.m / 2.0, rel=1e-12)


def test_too_small_lambda_carries_margin(spec):
    with pytest.raises(LambdaTooSmallError) as exc:
        construct_subsolution(BASE, NL, spec, K0)
    assert exc.value.margin < 0 and exc.value.condition == "(2.3)"
    assert "(2.3)" in str(exc.value)


def test_threshold_brackets(spec, threshold):
    s1, s2 = threshold.passing
    assert threshold.failing == (s1 / 2, s2 / 2)
    construct_subsolution(BASE.with_sums(2 * s1, 2 * s2), NL, spec, K0)
    again = existence_threshold(BASE, NL, spec, K0, start=s1)
    assert again.passing == (s1, s2) and again.failing is None and again.steps == 1


def test_threshold_unreachable(spec):
    with pytest.raises(ThresholdUnreachableError):
        existence_threshold(BASE, NL, spec, K0, cap=8.0)


def test_pair_certificates(built):
    params, (pair, sub, sup) = built
    assert pair.passed
    sides = {(c["side"], c["component"]) for c in pair.certificates}
    assert sides == {("sub", "u"), ("sub", "v"), ("super", "u"), ("super", "v")}
    assert all(c["passed"] for c in pair.certificates)
    for f in (pair.sub_u, pair.sub_v, pair.super_u, pair.super_v):
        assert np.all(f.values >= 0) and np.all(f.values[f.mesh.boundary_nodes] == 0)
    assert np.all(pair.sub_u.values <= pair.super_u.values + 1e-12)
    assert np.all(pair.sub_v.values <= pair.super_v.values + 1e-12)
    ok, _, _ = pair.verify(params, NL)
    assert ok


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_subsolution_power_law(spec, interval128, p):
    sp = spec if p == 2.0 else spectral_data(interval128, p, 2.0)
    params = ProblemParams(p, 2.0, 5.0, 5.0, 5.0, 5.0)
    u1, _ = subsolution_fields(params, sp, K0)
    u2, _ = subsolution_fields(params.scaled(2.0), sp, K0)
    inner = interval128.interior_nodes
    ratio = u2.values[inner] / u1.values[inner]
    assert np.allclose(ratio, 2.0 ** (1.0 / (p - 1.0)), rtol=1e-14, atol=0)


def test_supersolution_minimal_C(spec, built):
    params, (pair, sub, sup) = built
    assert sup.last_failing_C == sup.C / 2
    lower = (sub.u, sub.v)
    assert _super_attempt(params, NL, spec.tor_p, spec.tor_q, sup.C / 2, lower, 1e-8) is None
    assert sup.checks["(2.6)"]["passed"]


def test_interval_torsion_precondition(spec):
    assert spec.tor_p.nu == pytest.approx(0.125, abs=1e-4)
    assert 1.0 - spec.tor_p.nu > 0


def test_domain_too_large(spec, built):
    params = built[0]
    fake = TorsionData(2.0, spec.tor_p.omega, 1.2)
    with pytest.raises(DomainTooLargeError):
        construct_supersolution(params, NL, fake, spec.tor_q)


def test_pair_csv_round_trip(tmp_path, built):
    params, (pair, _, _) = built
    loaded = []
    for name in ("sub_u", "sub_v", "super_u", "super_v"):
        write_field_csv(tmp_path / f"{name}.csv", getattr(pair, name))
        with open(tmp_path / f"{name}.csv") as fh:
            vals = [float(r["value"]) for r in csv.DictReader(fh)]
        loaded.append(Field(pair.sub_u.mesh, vals))
    for got, name in zip(loaded, ("sub_u", "sub_v", "super_u", "super_v")):
        assert np.array_equal(got.values, getattr(pair, name).values)
    reps = (check_subsuper(loaded[0], loaded[1], "sub", params, NL)
            + check_subsuper(loaded[2], loaded[3], "super", params, NL))
    assert all(r.passed for r in reps)


# -- strict pair ---------------------------------------------------------------

NL32 = ex32_quad()


@pytest.fixture(scope="module")
def strict(spec):
    shifted = NL32.shifted()
    k0 = lower_bound_k0(*shifted, BASE.sup_norms())
    thr = existence_threshold(BASE, shifted, spec, k0)
    params = BASE.with_sums(4 * thr.passing[0], 4 * thr.passing[1])
    pair, _, _ = construct_pair(params, shifted, spec, k0)
    b = monotone_iterate(pair, params, shifted, "up")
    return params, construct_strict_pair(params, NL32, spec, (b.u, b.v))


def test_strict_pair_invariants(spec, strict):
    params, sp = strict
    assert sp.noncomparability and 0 < sp.rho <= sp.theta
    Gp, Gq = g_functions(params, NL32, spec.eig_p, spec.eig_q, sp.C1, sp.C2)
    assert Gp(sp.rho * spec.eig_p.phi.max()) > 0 and Gq(sp.rho * spec.eig_q.phi.max()) > 0
    assert all(c["passed"] and c["strict"] for c in sp.certificates)
    inner = spec.mesh.interior_nodes
    assert (np.any(sp.omega1.values[inner] > sp.zeta1.values[inner])
            or np.any(sp.omega2.values[inner] > sp.zeta2.values[inner]))


def test_strict_margin_at_peak(spec, strict):
    params, sp = strict
    reps = check_subsuper(sp.zeta1, sp.zeta2, "super", params, NL32, strict=True)
    assert all(r.violation < 0 for r in reps)


def test_theta_exists_for_quadratic_flatness(spec):
    params = BASE.with_sums(100.0, 100.0)
    Gp, Gq = g_functions(params, NL32, spec.eig_p, spec.eig_q, 1.0, 1.0)
    theta = admissible_theta(Gp, Gq)
    assert theta is not None and theta > 0
    # G_p(x) = (π² − 1)x − 50x² − 50x² near zero
    assert theta <= (spec.eig_p.sigma - 1) / 100.0


def test_spectral_gap_error(spec):
    low = replace(spec, eig_p=replace(spec.eig_p, sigma=0.9))
    with pytest.raises(SpectralGapError):
        construct_strict_pair(BASE, NL32, low, lambda: None)


def test_flatness_gate(spec):
    with pytest.raises(FlatnessViolationError):
        construct_strict_pair(BASE, NL, spec, lambda: None)
