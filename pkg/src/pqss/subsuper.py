"""Explicit ordered sub/supersolution pairs, the existence threshold and the
strict pair used for multiplicity.

Condition labels in error messages, e.g. "(2.3)", name the inequality of the
construction that failed.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (DomainTooLargeError, FlatnessViolationError,
                     LambdaTooSmallError, NoncomparabilityError, SpectralGapError,
                     SupersolutionSearchError, ThresholdUnreachableError,
                     UncertifiedPairError)
from .fem import Field, check_subsuper
from .nonlinearity import check_flatness
from .spectral import comparability_constants

__all__ = [
    "OrderedPair", "StrictPair", "SubsolutionResult", "SupersolutionResult",
    "ThresholdResult", "subsolution_fields", "condition_23", "construct_subsolution",
    "existence_threshold", "construct_supersolution", "construct_pair",
    "torsion_supersolution", "g_functions", "admissible_theta",
    "construct_strict_pair", "ordering_report", "multiplicity_preconditions",
]

CAP = 2.0 ** 60
ORDER_TOL = 1e-12


def _reports_dict(reports):
    return [r.to_dict() for r in reports]


def ordering_report(lower_u, lower_v, upper_u, upper_v, tol=ORDER_TOL):
    """Nodal check lower <= upper for both components (relative tolerance)."""
    out = {}
    for comp, lo, hi in (("u", lower_u, upper_u), ("v", lower_v, upper_v)):
        scale = max(1.0, float(np.max(np.abs(hi.values))), float(np.max(np.abs(lo.values))))
        gap = float(np.max(lo.values - hi.values))
        out[comp] = {"max_excess": gap, "passed": gap <= tol * scale}
    out["passed"] = out["u"]["passed"] and out["v"]["passed"]
    return out


@dataclass(frozen=True, eq=False)
class OrderedPair:
    """Sub- and supersolution with sub <= super nodally."""

    sub_u: Field
    sub_v: Field
    super_u: Field
    super_v: Field
    C: float = None
    k0: float = None
    certificates: list = field(default_factory=list)
    ordering: dict = field(default_factory=dict)
    tag: str = ""

    @property
    def passed(self):
        return (all(c["passed"] for c in self.certificates)
                and self.ordering.get("passed", False))

    def verify(self, params, nl, tol=1e-8):
        """Re-run every certificate from the stored fields."""
        reps = (check_subsuper(self.sub_u, self.sub_v, "sub", params, nl, tol)
                + check_subsuper(self.super_u, self.super_v, "super", params, nl, tol))
        order = ordering_report(self.sub_u, self.sub_v, self.super_u, self.super_v)
        return all(r.passed for r in reps) and order["passed"], reps, order

    def to_dict(self):
        return {"C": self.C, "k0": self.k0, "tag": self.tag,
                "certificates": self.certificates, "ordering": self.ordering,
                "max": {"sub_u": self.sub_u.max(), "sub_v": self.sub_v.max(),
                        "super_u": self.super_u.max(), "super_v": self.super_v.max()}}


# -- subsolution ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SubsolutionResult:
    u: Field
    v: Field
    margin: float
    condition: dict
    certificates: list


def subsolution_fields(params, spectral, k0):
    """u = ((λ1+μ1) k0/m)^{1/(p-1)} (p-1)/p φ_p^{p/(p-1)} and its q-analogue."""
    s1, s2 = params.sums
    m = spectral.m
    p, q = params.p, params.q
    phi_p, phi_q = spectral.eig_p.phi.values, spectral.eig_q.phi.values
    u = (s1 * k0 / m) ** (1.0 / (p - 1.0)) * (p - 1.0) / p * phi_p ** (p / (p - 1.0))
    v = (s2 * k0 / m) ** (1.0 / (q - 1.0)) * (q - 1.0) / q * phi_q ** (q / (q - 1.0))
    mesh = spectral.mesh
    return Field(mesh, u), Field(mesh, v)


def condition_23(params, nl, spectral, k0, u, v):
    """Margins of a1 f(v), α1 h(u), b1 g(u), β1 γ(v) >= (k0/m) max σ off the
    strip.  Terms whose parameter (λ or μ) is zero do not enter the
    subsolution inequality and are skipped.  The margin is relative to the
    right-hand side."""
    a1, b1, al1, be1 = params.lower_bounds()
    rhs = k0 / spectral.m * spectral.sigma_max
    nodes = spectral.complement()
    uu, vv = np.maximum(u.values[nodes], 0.0), np.maximum(v.values[nodes], 0.0)
    terms = {
        "f": (params.lambda1, a1 * nl.f._raw(vv)),
        "h": (params.mu1, al1 * nl.h._raw(uu)),
        "g": (params.lambda2, b1 * nl.g._raw(uu)),
        "gamma": (params.mu2, be1 * nl.gamma._raw(vv)),
    }
    out = {"rhs": rhs}
    margins = []
    for name, (coef, vals) in terms.items():
        if coef <= 0.0:
            out[name] = None
            continue
        mg = (float(np.min(vals)) - rhs) / rhs
        out[name] = mg
        margins.append(mg)
    out["margin"] = min(margins) if margins else np.inf
    return out


def construct_subsolution(params, nl, spectral, k0, *, tol=1e-8):
    """Subsolution of the explicit family, certified by condition (2.3) and
    the discrete sub-inequalities."""
    s1, s2 = params.sums
    if not (s1 > 0.0 and s2 > 0.0):
        raise LambdaTooSmallError("λ1+μ1 and λ2+μ2 must both be positive",
                                  stage="subsolution", condition="(2.3)", margin=-np.inf)
    u, v = subsolution_fields(params, spectral, k0)
    cond = condition_23(params, nl, spectral, k0, u, v)
    if cond["margin"] < 0.0:
        raise LambdaTooSmallError(
            f"off-strip bound short by relative margin {cond['margin']:.3e}",
            stage="subsolution", condition="(2.3)", margin=cond["margin"])
    reps = check_subsuper(u, v, "sub", params, nl, tol)
    bad = [r for r in reps if not r.passed]
    if bad:
        worst = max(r.violation / r.scale if r.scale else np.inf for r in bad)
        raise LambdaTooSmallError(
            f"discrete sub-inequality violated (relative {worst:.3e})",
            stage="subsolution", condition="(2.1)", margin=-worst)
    return SubsolutionResult(u, v, cond["margin"], cond, _reports_dict(reps))


@dataclass(frozen=True)
class ThresholdResult:
    passing: tuple
    failing: tuple
    steps: int

    def to_dict(self):
        return {"passing": list(self.passing),
                "failing": None if self.failing is None else list(self.failing),
                "steps": self.steps}


def existence_threshold(params, nl, spectral, k0, *, start=1.0, cap=CAP, tol=1e-8):
    """Doubling search on S = λ1+μ1 = λ2+μ2, keeping the λ/μ split of
    ``params``.  Returns the first passing pair of sums and the last failing
    one (None when ``start`` already passes)."""
    S, failing, steps = float(start), None, 0
    while S <= cap:
        steps += 1
        try:
            construct_subsolution(params.with_sums(S, S), nl, spectral, k0, tol=tol)
            return ThresholdResult((S, S), failing, steps)
        except LambdaTooSmallError:
            failing = (S, S)
            S *= 2.0
    raise ThresholdUnreachableError(
        f"no feasible λ+μ up to {cap:.3e}", stage="threshold", condition="(2.3)")


# -- supersolution -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SupersolutionResult:
    u: Field
    v: Field
    C: float
    checks: dict
    certificates: list
    ordering: dict
    last_failing_C: float = None


def _super_fields(params, nl, tor_p, tor_q, C):
    p, q = params.p, params.q
    a_n, b_n, al_n, be_n = params.sup_norms()
    A = params.lambda1 * a_n + params.mu1 * al_n
    B = params.lambda2 * b_n + params.mu2 * be_n
    nu_p, nu_q = tor_p.nu, tor_q.nu
    P = (A / (1.0 - nu_p ** (p - 1.0))) ** (1.0 / (p - 1.0))
    gC = float(nl.g._raw(np.array([C * P]))[0])
    if gC <= 0.0:
        return None
    Vs = (B * gC / (1.0 - nu_q ** (q - 1.0))) ** (1.0 / (q - 1.0))
    u = (C / nu_p) * P * tor_p.omega.values
    v = Vs * tor_q.omega.values
    vmax = Vs * nu_q
    lhs26 = (C / nu_p) ** (p - 1.0) * A
    rhs26 = (params.lambda1 * a_n * float(nl.f._raw(np.array([vmax]))[0])
             + params.mu1 * al_n * float(nl.h._raw(np.array([C * P]))[0]))
    gam = float(nl.gamma._raw(np.array([vmax]))[0])
    checks = {
        "A": A, "B": B, "P": P,
        "(2.6)": {"lhs": lhs26, "rhs": rhs26, "passed": lhs26 >= rhs26},
        # g(C P) >= γ(max v) is what the v-inequality needs when μ2 > 0
        "(2.9)": {"lhs": gC, "rhs": gam, "passed": params.mu2 == 0.0 or gC >= gam},
    }
    return Field(tor_p.omega.mesh, u), Field(tor_q.omega.mesh, v), checks


def _super_attempt(params, nl, tor_p, tor_q, C, lower, tol):
    got = _super_fields(params, nl, tor_p, tor_q, C)
    if got is None:
        return None
    u, v, checks = got
    if not (checks["(2.6)"]["passed"] and checks["(2.9)"]["passed"]):
        return None
    reps = check_subsuper(u, v, "super", params, nl, tol)
    if not all(r.passed for r in reps):
        return None
    order = {"passed": True}
    if lower is not None:
        order = ordering_report(lower[0], lower[1], u, v)
        if not order["passed"]:
            return None
    return SupersolutionResult(u, v, C, checks, _reports_dict(reps), order)


def construct_supersolution(params, nl, tor_p, tor_q, *, lower=None, tol=1e-8, cap=CAP):
    """Supersolution (C/ν_p) P ω_p, (B g(CP)/(1-ν_q^{q-1}))^{1/(q-1)} ω_q.

    C starts at 1 and doubles until (2.6), the γ-bound, the discrete
    super-inequalities and (when ``lower`` is given) the ordering
    lower <= super all hold.  When C = 1 already works it is halved while it
    still does, so the returned C is minimal up to a factor 2.
    """
    for tor, r in ((tor_p, params.p), (tor_q, params.q)):
        if tor.nu ** (r - 1.0) >= 1.0:
            raise DomainTooLargeError(
                f"ν^(r-1) = {tor.nu ** (r - 1.0):.4g} >= 1 for r = {r}",
                stage="supersolution", condition="(2.4)-(2.5)")
    C = 1.0
    res = _super_attempt(params, nl, tor_p, tor_q, C, lower, tol)
    if res is not None:
        for _ in range(60):
            smaller = _super_attempt(params, nl, tor_p, tor_q, C / 2.0, lower, tol)
            if smaller is None:
                break
            C, res = C / 2.0, smaller
        return _with_failing(res, C / 2.0)
    while C < cap:
        C *= 2.0
        res = _super_attempt(params, nl, tor_p, tor_q, C, lower, tol)
        if res is not None:
            return _with_failing(res, C / 2.0)
    raise SupersolutionSearchError(f"no admissible C up to {cap:.3e}",
                                   stage="supersolution", condition="(2.6)")


def _with_failing(res, c_fail):
    return SupersolutionResult(res.u, res.v, res.C, res.checks, res.certificates,
                               res.ordering, c_fail)


def construct_pair(params, nl, spectral, k0, *, tol=1e-8):
    """Ordered pair for the current parameters."""
    sub = construct_subsolution(params, nl, spectral, k0, tol=tol)
    sup = construct_supersolution(params, nl, spectral.tor_p, spectral.tor_q,
                                  lower=(sub.u, sub.v), tol=tol)
    certs = sub.certificates + sup.certificates
    order = ordering_report(sub.u, sub.v, sup.u, sup.v)
    pair = OrderedPair(sub.u, sub.v, sup.u, sup.v, sup.C, k0, certs, order, "sub-super")
    if not pair.passed:
        raise UncertifiedPairError("constructed pair failed re-verification",
                                   stage="pair")
    return pair, sub, sup


def torsion_supersolution(params, nl, tor_p, tor_q, *, lower=None, tol=1e-8, cap=CAP):
    """Supersolution c (ω_p, ω_q) with c found by doubling.

    Used when the growth hypotheses are not available (for example linear
    test problems) and the explicit family does not apply.
    """
    c = 1.0
    while c <= cap:
        u, v = tor_p.omega * c, tor_q.omega * c
        reps = check_subsuper(u, v, "super", params, nl, tol)
        order = (ordering_report(lower[0], lower[1], u, v) if lower is not None
                 else {"passed": True})
        if all(r.passed for r in reps) and order["passed"]:
            return u, v, c, _reports_dict(reps)
        c *= 2.0
    raise SupersolutionSearchError(f"no multiple of the torsion pair up to {cap:.3e}",
                                   stage="supersolution")


# -- strict pair (multiplicity) ------------------------------------------------

def g_functions(params, nl, eig_p, eig_q, C1, C2):
    """G_p(x) = (σ_p-1)x^{p-1} - λ1|a| f(C2 x) - μ1|α| h(x) and the q-analogue."""
    a_n, b_n, al_n, be_n = params.sup_norms()
    p, q = params.p, params.q

    def Gp(x):
        x = np.asarray(x, dtype=float)
        return ((eig_p.sigma - 1.0) * x ** (p - 1.0)
                - params.lambda1 * a_n * nl.f._raw(C2 * x) - params.mu1 * al_n * nl.h._raw(x))

    def Gq(x):
        x = np.asarray(x, dtype=float)
        return ((eig_q.sigma - 1.0) * x ** (q - 1.0)
                - params.lambda2 * b_n * nl.g._raw(C1 * x) - params.mu2 * be_n * nl.gamma._raw(x))

    return Gp, Gq


THETA_GRID = np.logspace(-10.0, 1.0, 256)


def admissible_theta(Gp, Gq, grid=THETA_GRID):
    """Largest grid point θ with G_p, G_q > 0 at every grid point in (0, θ]."""
    ok = (Gp(grid) > 0.0) & (Gq(grid) > 0.0)
    if not ok[0]:
        return None
    bad = np.flatnonzero(~ok)
    k = len(grid) - 1 if bad.size == 0 else bad[0] - 1
    return float(grid[k])


@dataclass(frozen=True, eq=False)
class StrictPair:
    omega1: Field
    omega2: Field
    zeta1: Field
    zeta2: Field
    rho: float
    theta: float
    C1: float
    C2: float
    noncomparability: bool
    certificates: list = field(default_factory=list)
    halvings: int = 0

    def to_dict(self):
        return {"rho": self.rho, "theta": self.theta, "C1": self.C1, "C2": self.C2,
                "noncomparability": self.noncomparability, "halvings": self.halvings,
                "certificates": self.certificates,
                "max": {"omega1": self.omega1.max(), "omega2": self.omega2.max(),
                        "zeta1": self.zeta1.max(), "zeta2": self.zeta2.max()}}


def multiplicity_preconditions(params, nl, spectral):
    """σ_p, σ_q > 1 and flat nonlinearities at zero."""
    for eig in (spectral.eig_p, spectral.eig_q):
        if not eig.sigma > 1.0:
            raise SpectralGapError(f"σ = {eig.sigma:.6g} <= 1 for r = {eig.r}",
                                   stage="strict-pair", condition="(2.12)-(2.13)")
    flat = check_flatness(nl, params.p, params.q)
    if not flat["passed"]:
        names = [k for k, v in flat.items() if k != "passed" and not v["passed"]]
        raise FlatnessViolationError(
            "nonlinearities not flat enough at zero: " + ", ".join(names),
            stage="strict-pair", condition="flatness")
    return flat


def construct_strict_pair(params, nl, spectral, omega, *, tol=1e-8, max_halvings=60):
    """Strict supersolution ζ = ρ(φ_p, φ_q) not dominating the strict
    subsolution ``omega``.

    ``omega`` is the pair of Fields solving the shifted system, or a callable
    returning it.
    """
    multiplicity_preconditions(params, nl, spectral)
    C1, C2 = comparability_constants(spectral.eig_p.phi, spectral.eig_q.phi)
    Gp, Gq = g_functions(params, nl, spectral.eig_p, spectral.eig_q, C1, C2)
    theta = admissible_theta(Gp, Gq)
    if theta is None:
        raise FlatnessViolationError("G_p or G_q not positive near zero",
                                     stage="strict-pair", condition="(2.12)-(2.13)")
    if callable(omega):
        omega = omega()
    w1, w2 = omega
    inner = spectral.mesh.interior_nodes
    phi_p, phi_q = spectral.eig_p.phi, spectral.eig_q.phi
    rho = theta
    for k in range(max_halvings + 1):
        z1, z2 = phi_p * rho, phi_q * rho
        witness = bool(np.any(w1.values[inner] > z1.values[inner])
                       or np.any(w2.values[inner] > z2.values[inner]))
        if witness:
            reps = check_subsuper(z1, z2, "super", params, nl, tol, strict=True)
            if all(r.passed for r in reps):
                sub_reps = check_subsuper(w1, w2, "sub", params, nl, tol, strict=True)
                certs = _reports_dict(reps) + _reports_dict(sub_reps)
                return StrictPair(w1, w2, z1, z2, rho, theta, C1, C2, True, certs, k)
        rho /= 2.0
    raise NoncomparabilityError(
        f"no ρ in [θ 2^-{max_halvings}, θ] gives a strict supersolution below ω",
        stage="strict-pair", condition="(2.12)-(2.13)")
