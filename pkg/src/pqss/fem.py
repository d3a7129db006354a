"""P1 finite elements for the (p, q)-Laplacian system.

Gradients of P1 fields are constant per element, so the flux
|∇u|^{p-2}∇u is integrated exactly.  The zeroth-order terms (power mass and
the nonlinear sources) go through a Gauss rule on every element.

Vectors returned by the assembly helpers are indexed by node; entry ``i`` is
the form tested against the hat function of node ``i``.  All reductions go
through ``np.bincount`` over the fixed element order, so results do not
depend on scheduling.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import (BoundaryConditionError, MeshMismatchError, NonconvergenceError,
                     PqssError)

__all__ = [
    "Field", "WeakResidual", "SubSuperReport", "SolverOptions", "SolveInfo",
    "quadrature_rule", "apply_p_laplacian_form", "apply_power_mass_form",
    "p_energy", "p_flux_vector", "power_mass_vector", "load_vector",
    "source_vectors", "weak_residual_system", "solve_scalar_dirichlet",
    "check_subsuper", "element_gradients", "at_quadrature", "weighted_mass_matrix",
    "p_jacobian", "integrate",
]


@dataclass(frozen=True, eq=False)
class Field:
    """Nodal P1 field on a mesh."""

    mesh: object
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.mesh.num_nodes,):
            raise MeshMismatchError(
                f"field has {vals.shape} values for {self.mesh.num_nodes} nodes")
        if not np.all(np.isfinite(vals)):
            raise PqssError("field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, mesh, fun):
        return cls(mesh, fun(mesh.nodes))

    @classmethod
    def constant(cls, mesh, c):
        return cls(mesh, np.full(mesh.num_nodes, float(c)))

    def max(self):
        return float(np.max(self.values))

    def __mul__(self, c):
        return Field(self.mesh, self.values * c)

    __rmul__ = __mul__


def _same_mesh(*fields):
    mesh = fields[0].mesh
    for f in fields[1:]:
        if f.mesh is not mesh:
            raise MeshMismatchError("fields live on different meshes")
    return mesh


# -- quadrature ---------------------------------------------------------------

def quadrature_rule(dim, order=3):
    """Barycentric points (Q, dim+1) and weights summing to 1.

    ``order`` is the number of Gauss-Legendre points per direction; on
    triangles the square rule is collapsed onto the simplex.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    t, wt = (x + 1.0) / 2.0, w / 2.0
    if dim == 1:
        return np.column_stack([1.0 - t, t]), wt
    s, r = np.meshgrid(t, t, indexing="ij")
    ws, wr = np.meshgrid(wt, wt, indexing="ij")
    s, r, ws, wr = s.ravel(), r.ravel(), ws.ravel(), wr.ravel()
    x1, x2 = s, r * (1.0 - s)
    weights = 2.0 * ws * wr * (1.0 - s)
    return np.column_stack([1.0 - x1 - x2, x1, x2]), weights


def _quad(mesh, order):
    key = ("quad", order)
    if key not in mesh._cache:
        mesh._cache[key] = quadrature_rule(mesh.dimension, order)
    return mesh._cache[key]


def at_quadrature(mesh, values, order=3):
    """P1 interpolant at quadrature points, shape (E, Q)."""
    bary, _ = _quad(mesh, order)
    return np.asarray(values, dtype=float)[mesh.elements] @ bary.T


def element_gradients(mesh, values):
    """Elementwise-constant gradients, shape (E, d)."""
    vals = np.asarray(values, dtype=float)[mesh.elements]
    return np.einsum("ek,ekd->ed", vals, mesh.grad_basis)


def _assemble(mesh, local):
    return np.bincount(mesh.elements.ravel(), weights=local.ravel(),
                       minlength=mesh.num_nodes)


def integrate(mesh, values, order=3):
    """∫ of a P1 field (or of values given at quadrature points)."""
    _, w = _quad(mesh, order)
    vq = values if np.ndim(values) == 2 else at_quadrature(mesh, values, order)
    return float(mesh.element_measures @ (vq @ w))


def load_vector(mesh, source_q, order=3):
    """∫ F ξ_i for F given at quadrature points (E, Q) or as a scalar."""
    bary, w = _quad(mesh, order)
    if np.ndim(source_q) == 0:
        source_q = np.full((mesh.num_elements, len(w)), float(source_q))
    local = mesh.element_measures[:, None] * ((source_q * w) @ bary)
    return _assemble(mesh, local)


def weighted_mass_matrix(mesh, coef_q, order=3):
    """Sparse ∫ c ξ_j ξ_i with c given at quadrature points."""
    bary, w = _quad(mesh, order)
    if np.ndim(coef_q) == 0:
        coef_q = np.full((mesh.num_elements, len(w)), float(coef_q))
    local = np.einsum("eq,q,qk,ql->ekl", coef_q, w, bary, bary)
    local *= mesh.element_measures[:, None, None]
    return _sparse(mesh, local)


def _sparse(mesh, local):
    n = mesh.elements.shape[1]
    rows = np.repeat(mesh.elements, n, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, n)).ravel()
    N = mesh.num_nodes
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(N, N)).tocsr()


# -- p-Laplacian forms -------------------------------------------------------

def _flux_coef(sq, p, eps):
    if p == 2.0:
        return np.ones_like(sq)
    s = sq + eps
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(s > 0.0, s ** ((p - 2.0) / 2.0), 0.0)
    return c


def p_flux_vector(mesh, values, p, eps=0.0, *, absolute=False):
    """∫ (|∇u|^2 + eps)^{(p-2)/2} ∇u·∇ξ_i for every node i.

    With ``absolute=True`` the element contributions are summed in absolute
    value (used to bound the rounding error of the residual).
    """
    g = element_gradients(mesh, values)
    c = _flux_coef(np.sum(g * g, axis=1), p, eps)
    local = np.einsum("ekd,ed->ek", mesh.grad_basis, g) * (c * mesh.element_measures)[:, None]
    return _assemble(mesh, np.abs(local) if absolute else local)


def _roundoff_floor(mesh, w, p, eps, b):
    """Residual level below which Newton cannot make progress."""
    terms = p_flux_vector(mesh, w, p, eps, absolute=True)[mesh.interior_nodes]
    return 64.0 * np.finfo(float).eps * float(np.max(terms + np.abs(b), initial=0.0))


def p_energy(mesh, values, p, eps=0.0):
    """Σ_e |e| (|∇u|^2 + eps)^{p/2} / p."""
    g = element_gradients(mesh, values)
    s = np.sum(g * g, axis=1) + eps
    return float(mesh.element_measures @ (s ** (p / 2.0))) / p


def p_jacobian(mesh, values, p, eps):
    """Sparse Hessian of the regularized p-energy."""
    g = element_gradients(mesh, values)
    sq = np.sum(g * g, axis=1)
    s = sq + eps
    c = _flux_coef(sq, p, eps)
    with np.errstate(divide="ignore", invalid="ignore"):
        c2 = np.where(s > 0.0, (p - 2.0) * s ** ((p - 4.0) / 2.0), 0.0)
    gb = mesh.grad_basis
    dots = np.einsum("ekd,eld->ekl", gb, gb)
    proj = np.einsum("ekd,ed->ek", gb, g)
    local = c[:, None, None] * dots + c2[:, None, None] * proj[:, :, None] * proj[:, None, :]
    local *= mesh.element_measures[:, None, None]
    return _sparse(mesh, local)


def _signed_power(x, e):
    return np.sign(x) * np.abs(x) ** e


def power_mass_vector(mesh, values, p, order=3):
    """∫ |u|^{p-2} u ξ_i for every node i."""
    return load_vector(mesh, _signed_power(at_quadrature(mesh, values, order), p - 1.0), order)


def apply_p_laplacian_form(u, xi, p, eps=0.0):
    """∫ (|∇u|^2 + eps)^{(p-2)/2} ∇u·∇ξ with P1 fields u, ξ."""
    mesh = _same_mesh(u, xi)
    return float(p_flux_vector(mesh, u.values, p, eps) @ xi.values)


def apply_power_mass_form(u, xi, p, order=3):
    """∫ |u|^{p-2} u ξ by Gauss quadrature."""
    mesh = _same_mesh(u, xi)
    uq = at_quadrature(mesh, u.values, order)
    xq = at_quadrature(mesh, xi.values, order)
    _, w = _quad(mesh, order)
    return float(mesh.element_measures @ ((_signed_power(uq, p - 1.0) * xq) @ w))


# -- the coupled system -------------------------------------------------------

def _weight_q(mesh, w, order):
    w = np.asarray(w, dtype=float)
    if w.ndim == 0 or w.size == 1:
        return float(w.reshape(-1)[0])
    return at_quadrature(mesh, w, order)


def source_vectors(mesh, u, v, params, nl, order=3, *, u_for_g=None):
    """Right-hand sides of the two weak equations.

    Returns (λ1 ∫a f(v)ξ + μ1 ∫α h(u)ξ, λ2 ∫b g(u)ξ + μ2 ∫β γ(v)ξ).
    Nonlinearities are extended to negative arguments by their value at 0.
    ``u_for_g`` substitutes the u used inside g (Gauss-Seidel sweeps).
    """
    uq = np.maximum(at_quadrature(mesh, u, order), 0.0)
    vq = np.maximum(at_quadrature(mesh, v, order), 0.0)
    ug = uq if u_for_g is None else np.maximum(at_quadrature(mesh, u_for_g, order), 0.0)
    a, b, al, be = (_weight_q(mesh, getattr(params, n), order)
                    for n in ("a", "b", "alpha", "beta"))
    src_u = params.lambda1 * a * nl.f._raw(vq) + params.mu1 * al * nl.h._raw(uq)
    src_v = params.lambda2 * b * nl.g._raw(ug) + params.mu2 * be * nl.gamma._raw(vq)
    return load_vector(mesh, src_u, order), load_vector(mesh, src_v, order)


def _system_terms(mesh, u, v, params, nl, order):
    lhs_u = p_flux_vector(mesh, u, params.p) - power_mass_vector(mesh, u, params.p, order)
    lhs_v = p_flux_vector(mesh, v, params.q) - power_mass_vector(mesh, v, params.q, order)
    rhs_u, rhs_v = source_vectors(mesh, u, v, params, nl, order)
    return lhs_u, rhs_u, lhs_v, rhs_v


@dataclass(frozen=True)
class WeakResidual:
    """Residual against every interior hat function; boundary entries are 0."""

    values: np.ndarray
    norm: float


def _check_boundary(mesh, *vals):
    for x in vals:
        bvals = np.asarray(x)[mesh.boundary_nodes]
        scale = max(1.0, float(np.max(np.abs(x))))
        if np.any(np.abs(bvals) > 1e-12 * scale):
            raise BoundaryConditionError("fields must vanish on boundary nodes",
                                         stage="fem")


def _as_residual(mesh, vec):
    vec = np.array(vec, dtype=float)
    vec[mesh.boundary_nodes] = 0.0
    return WeakResidual(vec, float(np.max(np.abs(vec))) if vec.size else 0.0)


def weak_residual_system(u, v, params, nl, order=3):
    """Discrete weak residuals of both equations."""
    mesh = _same_mesh(u, v)
    _check_boundary(mesh, u.values, v.values)
    lu, ru, lv, rv = _system_terms(mesh, u.values, v.values, params, nl, order)
    return _as_residual(mesh, lu - ru), _as_residual(mesh, lv - rv)


@dataclass(frozen=True)
class SubSuperReport:
    side: str
    component: str
    violation: float
    passed: bool
    tolerance: float = 0.0
    scale: float = 0.0
    strict: bool = False

    def to_dict(self):
        return {"side": self.side, "component": self.component,
                "violation": self.violation, "passed": self.passed,
                "tolerance": self.tolerance, "scale": self.scale,
                "strict": self.strict}


def check_subsuper(pair_u, pair_v, side, params, nl, tol=1e-8, *, strict=False,
                   order=3):
    """Signed gap of the sub- (side="sub") or supersolution (side="super")
    inequalities against every interior hat function.

    Violation is max over interior nodes of (lhs - rhs) for "sub" and
    (rhs - lhs) for "super".  The check passes when the violation is at most
    ``tol`` times the largest absolute weak-form entry, or, with
    ``strict=True``, when it is strictly negative.
    """
    if side not in ("sub", "super"):
        raise ValueError("side must be 'sub' or 'super'")
    mesh = _same_mesh(pair_u, pair_v)
    _check_boundary(mesh, pair_u.values, pair_v.values)
    lu, ru, lv, rv = _system_terms(mesh, pair_u.values, pair_v.values, params, nl, order)
    inner = mesh.interior_nodes
    reports = []
    for comp, lhs, rhs in (("u", lu, ru), ("v", lv, rv)):
        gap = (lhs - rhs)[inner] if side == "sub" else (rhs - lhs)[inner]
        scale = float(max(np.max(np.abs(lhs[inner]), initial=0.0),
                          np.max(np.abs(rhs[inner]), initial=0.0)))
        viol = float(np.max(gap, initial=-np.inf)) if inner.size else 0.0
        tol_abs = tol * scale
        ok = viol < 0.0 if strict else viol <= tol_abs
        reports.append(SubSuperReport(side, comp, viol, bool(ok), tol_abs, scale, strict))
    return reports


# -- scalar Dirichlet solver -------------------------------------------------

@dataclass
class SolverOptions:
    """Options for the damped-Newton p-Laplacian solver.

    ``tolerance`` applies to the max-norm of the weak residual, scaled by
    max(1, |load|_inf).
    """

    tolerance: float = 1e-11
    stage_tolerance: float = 1e-6
    max_iter: int = 400
    max_stall: int = 8
    eps_start: float = 1e-2
    eps_end: float = 1e-10
    eps_factor: float = 0.1
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    max_backtracks: int = 40
    quad_order: int = 3

    def eps_schedule(self, p):
        if p == 2.0:
            return [0.0]
        n = int(round(np.log(self.eps_end / self.eps_start) / np.log(self.eps_factor)))
        return list(self.eps_start * self.eps_factor ** np.arange(n + 1))

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class SolveInfo:
    iterations: int = 0
    residual: float = np.inf
    energies: list = field(default_factory=list)
    stage_iterations: list = field(default_factory=list)


def _interior_factor(mesh, key, build):
    cache = mesh._cache.setdefault("factor", {})
    if key not in cache:
        cache[key] = build()
    return cache[key]


def _solve_interior(H, rhs):
    return splu(H.tocsc()).solve(rhs)


def solve_scalar_dirichlet(p, rhs, mesh, opts=None, *, initial=None, load=None,
                           return_info=False):
    """Solve -Δ_p w = rhs in Ω, w = 0 on ∂Ω.

    ``rhs`` is a constant, a nodal array (its P1 interpolant is integrated by
    quadrature) or ``None`` when a precomputed ``load`` vector is passed.
    Damped Newton on the regularized energy
    Σ|e|(|∇w|^2 + eps)^{p/2}/p - ∫ rhs w, with eps continuation and Armijo
    backtracking.
    """
    opts = opts or SolverOptions()
    if not p > 1.0:
        raise PqssError("p must exceed 1", stage="solver")
    if load is None:
        if np.ndim(rhs) == 0:
            load = load_vector(mesh, float(rhs), opts.quad_order)
        else:
            rhs = np.asarray(rhs, dtype=float)
            if not np.all(np.isfinite(rhs)):
                raise PqssError("rhs must be finite", stage="solver")
            load = load_vector(mesh, at_quadrature(mesh, rhs, opts.quad_order),
                               opts.quad_order)
    load = np.asarray(load, dtype=float)
    inner = mesh.interior_nodes
    b = load[inner]
    scale = max(1.0, float(np.max(np.abs(b), initial=0.0)))
    w = np.zeros(mesh.num_nodes) if initial is None else np.array(initial, dtype=float)
    w[mesh.boundary_nodes] = 0.0
    info = SolveInfo()

    if p == 2.0:
        lu = _interior_factor(mesh, ("stiffness", 2.0), lambda: splu(
            p_jacobian(mesh, np.zeros(mesh.num_nodes), 2.0, 0.0)[inner][:, inner].tocsc()))
        r = p_flux_vector(mesh, w, 2.0)[inner] - b
        w[inner] -= lu.solve(r)
        info.iterations = 1
        info.residual = float(np.max(np.abs(p_flux_vector(mesh, w, 2.0)[inner] - b), initial=0.0))
        info.energies.append(p_energy(mesh, w, 2.0) - float(load @ w))
        out = Field(mesh, w)
        return (out, info) if return_info else out

    schedule = opts.eps_schedule(p)
    total = 0
    for stage, eps in enumerate(schedule):
        last = stage == len(schedule) - 1
        target = (opts.tolerance if last else opts.stage_tolerance) * scale
        energy = lambda x: p_energy(mesh, x, p, eps) - float(load @ x)
        E = energy(w)
        best, stall, k = np.inf, 0, 0
        while True:
            r = p_flux_vector(mesh, w, p, eps)[inner] - b
            res = float(np.max(np.abs(r), initial=0.0))
            if res <= max(target, _roundoff_floor(mesh, w, p, eps, b)):
                break
            if res < best * (1.0 - 1e-3):
                best, stall = res, 0
            else:
                stall += 1
            if stall > opts.max_stall or total >= opts.max_iter:
                if last:
                    raise NonconvergenceError(
                        f"Newton stalled at residual {res:.3e} (target {target:.3e})",
                        stage="solver", last=Field(mesh, w))
                break
            H = p_jacobian(mesh, w, p, eps)[inner][:, inner]
            d = _solve_interior(H, -r)
            slope = float(r @ d)
            trial = w.copy()
            trial[inner] = w[inner] + d
            E_new = energy(trial)
            # energy differences this small are rounding noise; judge the full
            # step by the residual instead
            noise = 1e-13 * (abs(E) + p_energy(mesh, w, p, eps) + abs(float(load @ w)))
            if abs(E_new - E) <= noise:
                r_new = p_flux_vector(mesh, trial, p, eps)[inner] - b
                accepted = np.max(np.abs(r_new)) < res
            else:
                alpha, accepted = 1.0, False
                for _ in range(opts.max_backtracks):
                    if E_new <= E + opts.armijo_c * alpha * slope:
                        accepted = True
                        break
                    alpha *= opts.armijo_shrink
                    trial[inner] = w[inner] + alpha * d
                    E_new = energy(trial)
            if not accepted:
                stall = opts.max_stall + 1
                continue
            w = trial
            E = E_new
            info.energies.append(E)
            k += 1
            total += 1
        info.stage_iterations.append(k)
    info.iterations = total
    info.residual = res
    out = Field(mesh, w)
    return (out, info) if return_info else out
