"""Monotone (Picard) iteration between ordered pairs, and the existence and
multiplicity pipelines built on it.

One sweep solves

    -Δ_p u_{k+1} = |u_k|^{p-2} u_k + λ1 a f(v_k) + μ1 α h(u_k)
    -Δ_q v_{k+1} = |v_k|^{q-2} v_k + λ2 b g(u_{k+1}) + μ2 β γ(v_k)

so the left-hand operator is the plain r-Laplacian (which has a discrete
comparison principle) and the right-hand side is nondecreasing in the lagged
fields.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import (HypothesisError, MonotonicityBreakdownError, NonconvergenceError,
                     PqssError)
from .fem import (Field, SolverOptions, at_quadrature, p_flux_vector, p_jacobian,
                  power_mass_vector, solve_scalar_dirichlet, source_vectors,
                  weak_residual_system, weighted_mass_matrix, _weight_q)
from .nonlinearity import check_hypotheses, lower_bound_k0
from .spectral import EigenOptions, spectral_data
from .subsuper import (OrderedPair, construct_pair, construct_strict_pair,
                       construct_supersolution, existence_threshold,
                       multiplicity_preconditions, ordering_report)

__all__ = [
    "IterateOptions", "PipelineOptions", "SolutionBundle", "picard_step",
    "monotone_iterate", "ExistenceResult", "solve_existence",
    "MultiplicityResult", "solve_multiplicity", "newton_system",
    "distinctness_report", "is_positive",
]


@dataclass
class IterateOptions:
    """``res_tol=None`` picks 1e-8 when p = q = 2 and 1e-6 otherwise."""

    step_tol: float = 1e-10
    res_tol: float = None
    max_iter: int = 500
    order_tol: float = 1e-10
    solver: SolverOptions = field(default_factory=SolverOptions)

    def residual_tolerance(self, params):
        if self.res_tol is not None:
            return self.res_tol
        return 1e-8 if params.p == 2.0 and params.q == 2.0 else 1e-6

    def to_dict(self):
        out = {k: v for k, v in self.__dict__.items() if k != "solver"}
        out["solver"] = self.solver.to_dict()
        return out


@dataclass(frozen=True, eq=False)
class SolutionBundle:
    u: Field
    v: Field
    residual_norms: tuple
    iterations: int
    history: tuple
    interval_tag: str
    direction: str = ""

    def positivity_min(self):
        inner = self.u.mesh.interior_nodes
        return (float(np.min(self.u.values[inner])), float(np.min(self.v.values[inner])))

    def to_dict(self):
        return {"iterations": self.iterations,
                "residuals": list(self.residual_norms),
                "positivity_min": list(self.positivity_min()),
                "max": [self.u.max(), self.v.max()],
                "interval_tag": self.interval_tag, "direction": self.direction,
                "history_tail": list(self.history[-5:])}


def is_positive(bundle, rel=1e-8, zero_tol=1e-8):
    """Minimum interior value above ``rel`` times the field maximum.

    Fields whose maximum is below ``zero_tol`` count as the zero solution
    (iterates decaying to 0 stop once their residual is below tolerance).
    """
    mins = bundle.positivity_min()
    maxs = (bundle.u.max(), bundle.v.max())
    return all(mx > zero_tol and mn > rel * mx for mn, mx in zip(mins, maxs))


def picard_step(u, v, params, nl, solver=None, order=3):
    """One Gauss-Seidel sweep of the lagged scheme; returns the new fields."""
    mesh = u.mesh
    src_u, _ = source_vectors(mesh, u.values, v.values, params, nl, order)
    load_u = power_mass_vector(mesh, u.values, params.p, order) + src_u
    u_new = solve_scalar_dirichlet(params.p, None, mesh, solver, initial=u.values,
                                   load=load_u)
    _, src_v = source_vectors(mesh, u.values, v.values, params, nl, order,
                              u_for_g=u_new.values)
    load_v = power_mass_vector(mesh, v.values, params.q, order) + src_v
    v_new = solve_scalar_dirichlet(params.q, None, mesh, solver, initial=v.values,
                                   load=load_v)
    return u_new, v_new


def _bundle(u, v, params, nl, iterations, history, tag, direction):
    ru, rv = weak_residual_system(u, v, params, nl)
    return SolutionBundle(u, v, (ru.norm, rv.norm), iterations, tuple(history),
                          tag, direction)


def monotone_iterate(pair, params, nl, direction="up", opts=None, *, tag=None):
    """Iterate from the lower (``up``) or upper (``down``) end of ``pair``.

    Every sweep is checked for monotonicity and containment in the pair's
    interval.  Stops when the nodal max-change is below ``step_tol`` (relative
    to the field maximum) and both weak residual norms are below the residual
    tolerance.
    """
    if direction not in ("up", "down"):
        raise ValueError("direction must be 'up' or 'down'")
    opts = opts or IterateOptions()
    tag = tag or getattr(pair, "tag", "") or "pair"
    res_tol = opts.residual_tolerance(params)
    lo_u, lo_v, hi_u, hi_v = (pair.sub_u.values, pair.sub_v.values,
                              pair.super_u.values, pair.super_v.values)
    u, v = (pair.sub_u, pair.sub_v) if direction == "up" else (pair.super_u, pair.super_v)
    sign = 1.0 if direction == "up" else -1.0
    scale_u = max(1.0, float(np.max(np.abs(hi_u))))
    scale_v = max(1.0, float(np.max(np.abs(hi_v))))
    history = []
    for k in range(1, opts.max_iter + 1):
        u_new, v_new = picard_step(u, v, params, nl, opts.solver)
        tol_u, tol_v = opts.order_tol * scale_u, opts.order_tol * scale_v
        for name, new, old, lo, hi, t in (("u", u_new.values, u.values, lo_u, hi_u, tol_u),
                                          ("v", v_new.values, v.values, lo_v, hi_v, tol_v)):
            drop = float(np.max(sign * (old - new)))
            if drop > t:
                raise MonotonicityBreakdownError(
                    f"{name} moved against the {direction} direction by {drop:.3e} "
                    f"at sweep {k}", stage="iterate", iteration=k,
                    last=(Field(u.mesh, u_new.values), Field(v.mesh, v_new.values)))
            out = max(float(np.max(lo - new)), float(np.max(new - hi)))
            if out > t:
                raise MonotonicityBreakdownError(
                    f"{name} left the ordered interval by {out:.3e} at sweep {k}",
                    stage="iterate", iteration=k,
                    last=(Field(u.mesh, u_new.values), Field(v.mesh, v_new.values)))
        change = max(float(np.max(np.abs(u_new.values - u.values))) / max(1.0, u_new.max()),
                     float(np.max(np.abs(v_new.values - v.values))) / max(1.0, v_new.max()))
        history.append(change)
        u, v = u_new, v_new
        if change <= opts.step_tol:
            bundle = _bundle(u, v, params, nl, k, history, tag, direction)
            if max(bundle.residual_norms) <= res_tol:
                return bundle
    last = _bundle(u, v, params, nl, opts.max_iter, history, tag, direction)
    raise NonconvergenceError(
        f"monotone iteration did not converge in {opts.max_iter} sweeps "
        f"(last change {history[-1]:.3e}, residuals {last.residual_norms})",
        stage="iterate", last=last)


# -- pipelines -----------------------------------------------------------------

@dataclass
class PipelineOptions:
    eigen: EigenOptions = field(default_factory=EigenOptions)
    iterate: IterateOptions = field(default_factory=IterateOptions)
    check_tol: float = 1e-8
    strip_rule: str = "balanced"
    deltas: tuple = None
    threshold_start: float = 1.0
    hypothesis_method: str = "auto"
    distinct_tol: float = 1e-3

    @property
    def solver(self):
        return self.iterate.solver

    def to_dict(self):
        return {"eigen": self.eigen.to_dict(), "iterate": self.iterate.to_dict(),
                "check_tol": self.check_tol, "strip_rule": self.strip_rule,
                "deltas": None if self.deltas is None else list(self.deltas),
                "threshold_start": self.threshold_start,
                "hypothesis_method": self.hypothesis_method,
                "distinct_tol": self.distinct_tol}


def _k0(params, nl):
    # sup-norm weights bound weight * spec from below wherever spec < 0
    return lower_bound_k0(*nl, params.sup_norms())


def _hypotheses(params, nl, opts):
    rep = check_hypotheses(*nl, params.lower_bounds(), params.p, params.q,
                           method=opts.hypothesis_method)
    if not rep.passed:
        raise HypothesisError("hypotheses failed: " + ", ".join(rep.failed()).upper(),
                              stage="hypotheses", condition="(H1)-(H4)", report=rep)
    return rep


def _spectral(mesh, params, opts):
    return spectral_data(mesh, params.p, params.q, opts.eigen, opts.solver,
                         deltas=opts.deltas, rule=opts.strip_rule)


def _resolve_params(params, nl, spec, k0, mode, factor, opts):
    if mode == "fixed":
        return params, None
    thr = existence_threshold(params, nl, spec, k0, start=opts.threshold_start,
                              tol=opts.check_tol)
    s1, s2 = thr.passing
    return params.with_sums(factor * s1, factor * s2), thr


@dataclass(frozen=True, eq=False)
class ExistenceResult:
    bundle: SolutionBundle
    pair: OrderedPair
    params: object
    k0: float
    threshold: object
    spectral: object
    hypotheses: object

    def stages(self):
        return {
            "hypotheses": self.hypotheses.to_dict(),
            "spectral": self.spectral.to_dict(),
            "k0": self.k0,
            "threshold": None if self.threshold is None else self.threshold.to_dict(),
            "parameters": self.params.summary(),
            "pair": self.pair.to_dict(),
            "solution": self.bundle.to_dict(),
        }


def solve_existence(mesh, params, nl, *, mode="auto", threshold_factor=1.0, opts=None,
                    spectral=None):
    """Hypotheses -> spectral data -> k0 -> threshold (``mode="auto"``) or the
    given λ, μ (``mode="fixed"``) -> ordered pair -> upward iteration."""
    opts = opts or PipelineOptions()
    hyp = _hypotheses(params, nl, opts)
    spec = spectral or _spectral(mesh, params, opts)
    k0 = _k0(params, nl)
    run_params, thr = _resolve_params(params, nl, spec, k0, mode, threshold_factor, opts)
    pair, _, _ = construct_pair(run_params, nl, spec, k0, tol=opts.check_tol)
    bundle = monotone_iterate(pair, run_params, nl, "up", opts.iterate, tag="sub-super")
    return ExistenceResult(bundle, pair, run_params, k0, thr, spec, hyp)


# -- multiplicity --------------------------------------------------------------

def _system_residual(mesh, u, v, params, nl, order=3):
    su, sv = source_vectors(mesh, u, v, params, nl, order)
    ru = p_flux_vector(mesh, u, params.p) - power_mass_vector(mesh, u, params.p, order) - su
    rv = p_flux_vector(mesh, v, params.q) - power_mass_vector(mesh, v, params.q, order) - sv
    return ru, rv


def _nl_prime_q(spec, w_q):
    return spec._raw_derivative(np.maximum(w_q, 0.0)) * (w_q > 0.0)


def newton_system(u, v, params, nl, *, tol=1e-10, max_iter=50, eps=1e-14, order=3):
    """Newton's method on the full discrete system from (u, v).

    Used to polish an approximate (possibly unstable) solution.  The
    Jacobian uses a tiny gradient regularisation when p or q differs from 2.
    Returns the polished fields or raises NonconvergenceError.
    """
    mesh = u.mesh
    inner = mesh.interior_nodes
    n = inner.size
    x_u, x_v = u.values.copy(), v.values.copy()
    a, b, al, be = (_weight_q(mesh, getattr(params, k), order)
                    for k in ("a", "b", "alpha", "beta"))
    res = np.inf
    for _ in range(max_iter):
        ru, rv = _system_residual(mesh, x_u, x_v, params, nl, order)
        res = max(float(np.max(np.abs(ru[inner]))), float(np.max(np.abs(rv[inner]))))
        if res <= tol:
            return Field(mesh, x_u), Field(mesh, x_v), res
        uq, vq = at_quadrature(mesh, x_u, order), at_quadrature(mesh, x_v, order)
        Juu = (p_jacobian(mesh, x_u, params.p, 0.0 if params.p == 2 else eps)
               - weighted_mass_matrix(mesh, (params.p - 1) * np.abs(uq) ** (params.p - 2)
                                      if params.p != 2 else 1.0, order)
               - weighted_mass_matrix(mesh, params.mu1 * al * _nl_prime_q(nl.h, uq), order))
        Juv = -weighted_mass_matrix(mesh, params.lambda1 * a * _nl_prime_q(nl.f, vq), order)
        Jvu = -weighted_mass_matrix(mesh, params.lambda2 * b * _nl_prime_q(nl.g, uq), order)
        Jvv = (p_jacobian(mesh, x_v, params.q, 0.0 if params.q == 2 else eps)
               - weighted_mass_matrix(mesh, (params.q - 1) * np.abs(vq) ** (params.q - 2)
                                      if params.q != 2 else 1.0, order)
               - weighted_mass_matrix(mesh, params.mu2 * be * _nl_prime_q(nl.gamma, vq), order))
        J = sp.bmat([[Juu[inner][:, inner], Juv[inner][:, inner]],
                     [Jvu[inner][:, inner], Jvv[inner][:, inner]]]).tocsc()
        d = spsolve(J, -np.concatenate([ru[inner], rv[inner]]))
        x_u[inner] += d[:n]
        x_v[inner] += d[n:]
    raise NonconvergenceError(f"coupled Newton stalled at residual {res:.3e}",
                              stage="multiplicity")


def distinctness_report(bundles):
    """Pairwise relative nodal max distance between candidate solutions."""
    out = []
    for i in range(len(bundles)):
        for j in range(i + 1, len(bundles)):
            A, B = bundles[i], bundles[j]
            du = np.max(np.abs(A.u.values - B.u.values)) / max(A.u.max(), B.u.max(), 1e-300)
            dv = np.max(np.abs(A.v.values - B.v.values)) / max(A.v.max(), B.v.max(), 1e-300)
            out.append({"a": A.interval_tag, "b": B.interval_tag,
                        "distance": float(max(du, dv))})
    return out


@dataclass(frozen=True, eq=False)
class MultiplicityResult:
    candidates: list
    positive: list
    distances: list
    found: bool
    params: object
    strict: object
    big: object
    shifted: object
    threshold: object
    spectral: object
    diagnostics: dict

    def stages(self):
        return {
            "spectral": self.spectral.to_dict(),
            "threshold_shifted": None if self.threshold is None else self.threshold.to_dict(),
            "parameters": self.params.summary(),
            "shifted_solution": self.shifted.bundle.to_dict(),
            "supersolution": {"C": self.big.C, "checks": self.big.checks,
                              "certificates": self.big.certificates},
            "strict_pair": self.strict.to_dict(),
            "candidates": [b.to_dict() for b in self.candidates],
            "positive": [b.interval_tag for b in self.positive],
            "distances": self.distances,
            "found": self.found,
            "diagnostics": self.diagnostics,
        }


def _classify(u, v, params, nl, zeta, omega, solver, max_sweeps, step_tol):
    """Run Picard sweeps from (u, v) until the iterate lies below ζ ("low"),
    above ω ("high") or stops moving ("fixed").  Returns the label, the
    iterate with the smallest step seen and that step."""
    best = (np.inf, u, v)
    for _ in range(max_sweeps):
        if np.all(u.values <= zeta[0].values) and np.all(v.values <= zeta[1].values):
            return "low", best
        if np.all(u.values >= omega[0].values) and np.all(v.values >= omega[1].values):
            return "high", best
        un, vn = picard_step(u, v, params, nl, solver)
        step = max(np.max(np.abs(un.values - u.values)), np.max(np.abs(vn.values - v.values)))
        step /= max(1.0, un.max(), vn.max())
        if step < best[0]:
            best = (step, un, vn)
        u, v = un, vn
        if step <= step_tol:
            return "fixed", best
    return "undecided", best


def _separatrix(top, params, nl, zeta, omega, opts, max_bisect=48, max_sweeps=3000):
    """Bisection on the ordered segment s -> s·top between trajectories that
    fall below ζ and trajectories that rise above ω.  Picard sweeps are order
    preserving, so the labels are monotone in s; near the switching point
    the iterates linger at the unstable solution in between."""
    mesh = top.u.mesh
    lo, hi = 0.0, 1.0
    best = (np.inf, None, None)
    trail = []
    for _ in range(max_bisect):
        s = 0.5 * (lo + hi)
        u0, v0 = Field(mesh, s * top.u.values), Field(mesh, s * top.v.values)
        label, cand = _classify(u0, v0, params, nl, zeta, omega, opts.solver,
                                max_sweeps, opts.step_tol)
        trail.append((s, label))
        if cand[0] < best[0]:
            best = cand
        if label == "low":
            lo = s
        elif label == "high":
            hi = s
        else:
            break
        if hi - lo < 1e-14:
            break
    return best, trail


def solve_multiplicity(mesh, params, nl, *, mode="auto", threshold_factor=4.0, opts=None,
                       spectral=None):
    """Look for two distinct positive solutions.

    Builds the strict subsolution ω (solution of the shifted system), a large
    supersolution z ≥ ω and a strict supersolution ζ = ρφ not above ω, then
    iterates in [0, ζ] (down from ζ), [ω, z] (up from ω) and [0, z] (down from
    z).  When these do not give two distinct positive solutions, the unstable
    solution between 0 and the large one is located by bisection on the
    segment from 0 to the maximal solution and polished by Newton.
    """
    opts = opts or PipelineOptions()
    it = opts.iterate
    # precondition gates before any solve
    _hypotheses(params, nl, opts)
    spec = spectral or _spectral(mesh, params, opts)
    multiplicity_preconditions(params, nl, spec)

    shifted_nl = nl.shifted()
    k0s = _k0(params, shifted_nl)
    run_params, thr = _resolve_params(params, shifted_nl, spec, k0s, mode,
                                      threshold_factor, opts)
    pair_s, _, _ = construct_pair(run_params, shifted_nl, spec, k0s, tol=opts.check_tol)
    shifted_bundle = monotone_iterate(pair_s, run_params, shifted_nl, "up", it,
                                      tag="shifted")
    shifted = ExistenceResult(shifted_bundle, pair_s, run_params, k0s, thr, spec, None)
    omega = (shifted_bundle.u, shifted_bundle.v)

    big = construct_supersolution(run_params, nl, spec.tor_p, spec.tor_q, lower=omega,
                                  tol=opts.check_tol)
    strict = construct_strict_pair(run_params, nl, spec, omega, tol=opts.check_tol)
    zeta = (strict.zeta1, strict.zeta2)
    zero = Field(mesh, np.zeros(mesh.num_nodes))

    def interval(lo, hi, tag):
        order = ordering_report(lo[0], lo[1], hi[0], hi[1])
        return OrderedPair(lo[0], lo[1], hi[0], hi[1], ordering=order, tag=tag)

    diagnostics = {"failures": {}}
    candidates = []
    runs = (("psi-zeta", (zero, zero), zeta, "down"),
            ("omega-z", omega, (big.u, big.v), "up"),
            ("psi-z", (zero, zero), (big.u, big.v), "down"))
    for tag, lo, hi, direction in runs:
        pair = interval(lo, hi, tag)
        if not pair.ordering["passed"]:
            diagnostics["failures"][tag] = "interval endpoints not ordered"
            continue
        try:
            candidates.append(monotone_iterate(pair, run_params, nl, direction, it, tag=tag))
        except PqssError as exc:
            diagnostics["failures"][tag] = str(exc)

    res_tol = it.residual_tolerance(run_params)

    def good(b):
        return is_positive(b) and max(b.residual_norms) <= res_tol

    positive = _distinct([b for b in candidates if good(b)], opts.distinct_tol)
    top = next((b for b in candidates if b.interval_tag == "psi-z" and good(b)), None)
    if len(positive) < 2 and top is not None:
        (step, u0, v0), trail = _separatrix(top, run_params, nl, zeta, omega, it)
        diagnostics["separatrix"] = {"bisections": len(trail),
                                     "closest_step": None if u0 is None else float(step),
                                     "last_label": trail[-1][1] if trail else None}
        if u0 is not None:
            try:
                uu, vv, _ = newton_system(u0, v0, run_params, nl,
                                          tol=0.01 * res_tol)
                cand = _bundle(uu, vv, run_params, nl, len(trail), [float(step)],
                               "separatrix", "newton")
                candidates.append(cand)
                if good(cand):
                    positive = _distinct(positive + [cand], opts.distinct_tol)
            except PqssError as exc:
                diagnostics["failures"]["separatrix"] = str(exc)
    distances = distinctness_report(positive)
    found = len(positive) >= 2
    if not found:
        diagnostics["status"] = "multiplicity-not-found"
    return MultiplicityResult(candidates, positive, distances, found, run_params,
                              strict, big, shifted, thr, spec, diagnostics)


def _distinct(bundles, tol):
    """Keep bundles whose distance to every kept one exceeds ``tol``."""
    kept = []
    for b in bundles:
        if all(distinctness_report([k, b])[0]["distance"] > tol for k in kept):
            kept.append(b)
    return kept
