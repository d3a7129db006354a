"""First Dirichlet eigenpair and torsion function of -Δ_r, boundary-strip
constants and eigenfunction comparability constants."""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (DegenerateEigenfunctionError, MeshMismatchError, NonconvergenceError,
                     PqssError, StripFailureError)
from .fem import (Field, SolverOptions, element_gradients, integrate, p_energy,
                  power_mass_vector, solve_scalar_dirichlet, at_quadrature)
from .mesh import boundary_strip

__all__ = [
    "EigenOptions", "EigenData", "TorsionData", "StripConstants",
    "first_eigenpair", "rayleigh_quotient", "torsion_function", "nodal_gradients",
    "strip_constants", "default_deltas", "comparability_constants",
    "SpectralData", "spectral_data",
]


@dataclass
class EigenOptions:
    """Options for the nonlinear inverse power iteration.

    ``tolerance`` bounds the relative change of the eigenvalue between sweeps
    and the agreement of eigenvalues across restarts.
    """

    tolerance: float = 1e-10
    phi_tolerance: float = 1e-8
    max_iter: int = 500
    restarts: int = 2
    seed: int = 0
    solver: SolverOptions = field(default_factory=SolverOptions)

    def to_dict(self):
        out = {k: v for k, v in self.__dict__.items() if k != "solver"}
        out["solver"] = self.solver.to_dict()
        return out


@dataclass(frozen=True, eq=False)
class EigenData:
    r: float
    sigma: float
    phi: Field
    m: float = None
    eta: float = None
    delta: float = None
    m_alt: float = None
    iterations: int = 0
    restart_sigmas: tuple = ()

    def with_strip(self, strip):
        return replace(self, m=strip.m, eta=strip.eta, delta=strip.delta,
                       m_alt=strip.m_alt)

    def to_dict(self):
        return {"r": self.r, "sigma": self.sigma, "m": self.m, "eta": self.eta,
                "delta": self.delta, "m_alt": self.m_alt,
                "iterations": self.iterations,
                "restart_sigmas": list(self.restart_sigmas)}


@dataclass(frozen=True, eq=False)
class TorsionData:
    r: float
    omega: Field
    nu: float
    iterations: int = 0

    def to_dict(self):
        return {"r": self.r, "nu": self.nu, "iterations": self.iterations}


def _lr_power(mesh, w, r, order):
    return integrate(mesh, np.abs(at_quadrature(mesh, w, order)) ** r, order)


def rayleigh_quotient(mesh, w, r, order=3):
    """∫|∇w|^r / ∫|w|^r."""
    return r * p_energy(mesh, w, r) / _lr_power(mesh, w, r, order)


def _inverse_power(mesh, r, start, opts):
    order = opts.solver.quad_order
    w = np.maximum(np.asarray(start, dtype=float), 0.0)
    w[mesh.boundary_nodes] = 0.0
    w /= _lr_power(mesh, w, r, order) ** (1.0 / r)
    sigma = rayleigh_quotient(mesh, w, r, order)
    phi = w / w.max()
    for k in range(1, opts.max_iter + 1):
        load = power_mass_vector(mesh, w, r, order)
        guess = w * sigma ** (-1.0 / (r - 1.0))
        nxt = solve_scalar_dirichlet(r, None, mesh, opts.solver, initial=guess,
                                     load=load).values
        nxt = np.maximum(nxt, 0.0)
        nxt /= _lr_power(mesh, nxt, r, order) ** (1.0 / r)
        s_new = rayleigh_quotient(mesh, nxt, r, order)
        phi_new = nxt / nxt.max()
        done = (abs(s_new - sigma) <= opts.tolerance * s_new
                and np.max(np.abs(phi_new - phi)) <= opts.phi_tolerance)
        w, sigma, phi = nxt, s_new, phi_new
        if done:
            return sigma, phi, k
    raise NonconvergenceError(
        f"Rayleigh quotient did not stabilise in {opts.max_iter} sweeps "
        f"(last {sigma:.12g})", stage="eigen", last=Field(mesh, phi))


def first_eigenpair(mesh, r, opts=None):
    """First Dirichlet eigenpair of -Δ_r by nonlinear inverse iteration.

    Each sweep solves -Δ_r w_{k+1} = |w_k|^{r-2} w_k, projects onto the
    nonnegative cone and renormalises in L^r.  The first run starts from the
    domain bump; further restarts use seeded random positive perturbations of
    it and must agree on sigma.  The returned phi has sup-norm 1.
    """
    if not r > 1.0:
        raise PqssError("r must exceed 1", stage="eigen")
    opts = opts or EigenOptions()
    bump = mesh.domain.bump(mesh.nodes)
    rng = np.random.default_rng(opts.seed)
    runs = []
    for i in range(max(1, opts.restarts)):
        start = bump if i == 0 else bump * (0.5 + rng.random(mesh.num_nodes))
        runs.append(_inverse_power(mesh, r, start, opts))
    sigmas = [s for s, _, _ in runs]
    spread = max(sigmas) - min(sigmas)
    if spread > 100 * opts.tolerance * min(sigmas):
        raise NonconvergenceError(
            f"restarts disagree on sigma (spread {spread:.3e})", stage="eigen")
    sigma, phi, its = min(runs, key=lambda t: t[0])
    phi[mesh.boundary_nodes] = 0.0
    return EigenData(float(r), float(sigma), Field(mesh, phi), iterations=its,
                     restart_sigmas=tuple(float(s) for s in sigmas))


def torsion_function(mesh, r, opts=None):
    """ω_r solving -Δ_r ω = 1 with zero boundary values; ν_r = max ω_r."""
    omega, info = solve_scalar_dirichlet(r, 1.0, mesh, opts, return_info=True)
    vals = np.maximum(omega.values, 0.0)
    return TorsionData(float(r), Field(mesh, vals), float(vals.max()), info.iterations)


def nodal_gradients(mesh, values):
    """Volume-weighted average of the element gradients around each node."""
    g = element_gradients(mesh, values)
    k = mesh.elements.shape[1]
    idx = mesh.elements.ravel()
    wts = np.repeat(mesh.element_measures, k)
    denom = np.bincount(idx, weights=wts, minlength=mesh.num_nodes)
    out = np.empty((mesh.num_nodes, mesh.dimension))
    for d in range(mesh.dimension):
        out[:, d] = np.bincount(idx, weights=wts * np.repeat(g[:, d], k),
                                minlength=mesh.num_nodes) / denom
    return out


@dataclass(frozen=True)
class StripConstants:
    m: float
    eta: float
    delta: float
    m_alt: float
    rule: str
    scanned: int

    def __iter__(self):
        return iter((self.m, self.eta, self.delta))

    def to_dict(self):
        return dict(self.__dict__)


def default_deltas(mesh, count=64):
    rad = mesh.domain.inradius
    return np.logspace(np.log10(rad / 1000.0), np.log10(0.9 * rad), count)


def _strip_terms(eig, mesh):
    phi = eig.phi.values
    grad = np.sum(nodal_gradients(mesh, phi) ** 2, axis=1) ** (eig.r / 2.0)
    return grad - eig.sigma * phi ** eig.r, grad - eig.sigma * phi


def strip_constants(eigs, mesh, *, deltas=None, rule="balanced"):
    """Scan strip widths δ and pick constants (m, η, δ) with

        |∇φ_r|^r - σ_r φ_r^r >= m   on interior nodes within δ of the boundary,
        φ_r >= η                    on the remaining nodes,

    holding for every eigenpair in ``eigs`` (one EigenData or several sharing
    the mesh).  ``rule="max-m"`` returns the admissible δ with the largest m;
    ``rule="balanced"`` maximises m · min_r η^{r/(r-1)}, which keeps the
    subsolution threshold moderate.  ``m_alt`` is the same minimum with
    φ_r in place of φ_r^r.
    """
    if isinstance(eigs, EigenData):
        eigs = (eigs,)
    if rule not in ("balanced", "max-m"):
        raise PqssError(f"unknown strip rule {rule!r}", stage="strip")
    deltas = default_deltas(mesh) if deltas is None else np.atleast_1d(deltas)
    terms = [_strip_terms(e, mesh) for e in eigs]
    bdry = mesh.boundary_mask()
    best, best_score = None, -np.inf
    for delta in deltas:
        ns = boundary_strip(mesh, float(delta))
        # Ω_δ is part of the open domain: boundary nodes do not constrain m
        strip = ns.indices[~bdry[ns.indices]]
        if ns.complement_indices.size == 0 or strip.size == 0:
            continue
        m = min(float(np.min(t[strip])) for t, _ in terms)
        m_alt = min(float(np.min(t[strip])) for _, t in terms)
        etas = [float(np.min(e.phi.values[ns.complement_indices])) for e in eigs]
        eta = min(etas)
        if not (m > 0.0 and eta > 0.0):
            continue
        if rule == "max-m":
            score = m
        else:
            score = m * min(x ** (e.r / (e.r - 1.0)) for x, e in zip(etas, eigs))
        if score > best_score:
            best_score = score
            best = StripConstants(m, eta, float(delta), m_alt, rule, len(deltas))
    if best is None:
        raise StripFailureError(
            "no admissible strip width: |∇φ|^r - σφ^r is not positive on any "
            "scanned boundary strip (mesh under-resolved?)", stage="strip")
    return best


def comparability_constants(phi_p, phi_q):
    """C1 = max φ_p/φ_q and C2 = max φ_q/φ_p over interior nodes."""
    mesh = phi_p.mesh
    if phi_q.mesh is not mesh:
        raise MeshMismatchError("eigenfunctions live on different meshes")
    inner = mesh.interior_nodes
    a, b = phi_p.values[inner], phi_q.values[inner]
    if np.any(a <= 0.0) or np.any(b <= 0.0):
        raise DegenerateEigenfunctionError(
            "eigenfunction vanishes at an interior node", stage="comparability")
    return float(np.max(a / b)), float(np.max(b / a))


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Eigenpairs, torsion functions and the common strip constants for the
    exponents p and q on one mesh."""

    mesh: object
    eig_p: EigenData
    eig_q: EigenData
    tor_p: TorsionData
    tor_q: TorsionData
    strip: StripConstants

    @property
    def m(self):
        return self.strip.m

    @property
    def sigma_max(self):
        return max(self.eig_p.sigma, self.eig_q.sigma)

    def complement(self):
        """Nodes off the boundary strip."""
        return boundary_strip(self.mesh, self.strip.delta).complement_indices

    def to_dict(self):
        return {"eigen_p": self.eig_p.to_dict(), "eigen_q": self.eig_q.to_dict(),
                "torsion_p": self.tor_p.to_dict(), "torsion_q": self.tor_q.to_dict(),
                "strip": self.strip.to_dict()}


def spectral_data(mesh, p, q, eigen_opts=None, solver_opts=None, *, deltas=None,
                  rule="balanced"):
    eigen_opts = eigen_opts or EigenOptions()
    eig_p = first_eigenpair(mesh, p, eigen_opts)
    eig_q = eig_p if q == p else first_eigenpair(mesh, q, eigen_opts)
    tor_p = torsion_function(mesh, p, solver_opts)
    tor_q = tor_p if q == p else torsion_function(mesh, q, solver_opts)
    strip = strip_constants((eig_p, eig_q), mesh, deltas=deltas, rule=rule)
    return SpectralData(mesh, eig_p.with_strip(strip), eig_q.with_strip(strip),
                        tor_p, tor_q, strip)
