"""Declarative nonlinearities f, g, h, γ and the growth hypotheses on them.

Three kinds are supported:

``polynomial-sum``
    s -> Σ c_i s^{e_i} - offset, with c_i, e_i >= 0.
``piecewise-power``
    s -> s^{inner} for s <= 1 and (inner/outer) s^{outer} + (1 - inner/outer)
    for s > 1, minus offset.  Value and slope match at s = 1.
``custom-table``
    piecewise-linear interpolation of (s, value) samples, continued linearly
    past the last sample, minus offset.

Power-type specs carry exact exponent metadata, so the limits in the growth
hypotheses can be decided by exponent arithmetic.  Tables fall back to a
sampled check.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from .errors import NonlinearityDomainError, UnboundedNonlinearityError, ConfigError

__all__ = [
    "NonlinearitySpec", "NonlinearityQuad", "HypothesisReport",
    "polynomial_sum", "piecewise_power", "custom_table",
    "evaluate", "eval_derivative", "shift", "check_hypotheses",
    "check_flatness", "lower_bound_k0", "infimum",
]

KINDS = ("polynomial-sum", "piecewise-power", "custom-table")


@dataclass(frozen=True)
class NonlinearitySpec:
    kind: str
    terms: tuple = ()
    offset: float = 0.0
    inner: float = 0.0
    outer: float = 0.0
    table: tuple = ()
    monotone: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown nonlinearity kind {self.kind!r}")
        object.__setattr__(self, "terms",
                           tuple((float(c), float(e)) for c, e in self.terms))
        object.__setattr__(self, "table",
                           tuple((float(s), float(y)) for s, y in self.table))
        object.__setattr__(self, "offset", float(self.offset))
        if self.offset < 0:
            raise ConfigError("offset must be >= 0")
        if self.kind == "polynomial-sum":
            if not self.terms:
                raise ConfigError("polynomial-sum needs at least one term")
            if any(c < 0 or e < 0 for c, e in self.terms):
                raise ConfigError("polynomial-sum coefficients and exponents must be >= 0")
        elif self.kind == "piecewise-power":
            if not (self.inner > 0 and self.outer > 0):
                raise ConfigError("piecewise-power exponents must be positive")
        else:
            s = np.array([t[0] for t in self.table])
            if len(s) < 2 or s[0] != 0.0 or np.any(np.diff(s) <= 0):
                raise ConfigError("custom-table needs increasing abscissae starting at 0")
        if self.monotone and not _sampled_monotone(self):
            raise ConfigError(f"{self.kind} spec flagged monotone but decreases")

    # evaluation -------------------------------------------------------------

    def __call__(self, s):
        return evaluate(self, s)

    def derivative(self, s):
        return eval_derivative(self, s)

    def _raw(self, s):
        """Unchecked evaluation for s >= 0 (array in, array out)."""
        if self.kind == "polynomial-sum":
            out = np.zeros_like(s)
            for c, e in self.terms:
                out = out + c * (s ** e if e > 0 else 1.0)
        elif self.kind == "piecewise-power":
            k = self.inner / self.outer
            lo = np.minimum(s, 1.0) ** self.inner
            hi = k * np.maximum(s, 1.0) ** self.outer + (1.0 - k)
            out = np.where(s <= 1.0, lo, hi)
        else:
            xs, ys = np.array(self.table).T
            out = np.interp(s, xs, ys)
            slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
            out = np.where(s > xs[-1], ys[-1] + slope * (s - xs[-1]), out)
        return out - self.offset

    def _raw_derivative(self, s):
        s = np.maximum(s, 1e-300)
        if self.kind == "polynomial-sum":
            out = np.zeros_like(s)
            for c, e in self.terms:
                if e > 0:
                    out = out + c * e * s ** (e - 1.0)
        elif self.kind == "piecewise-power":
            out = np.where(s <= 1.0, self.inner * np.minimum(s, 1.0) ** (self.inner - 1.0),
                           self.inner * np.maximum(s, 1.0) ** (self.outer - 1.0))
        else:
            xs, ys = np.array(self.table).T
            slopes = np.diff(ys) / np.diff(xs)
            idx = np.clip(np.searchsorted(xs, s, side="right") - 1, 0, len(slopes) - 1)
            out = slopes[idx]
        return out

    # exponent metadata ------------------------------------------------------

    @property
    def exact(self):
        return self.kind != "custom-table"

    @property
    def leading_exponent(self):
        if self.kind == "polynomial-sum":
            return max((e for c, e in self.terms if c > 0), default=0.0)
        if self.kind == "piecewise-power":
            return self.outer
        return None

    @property
    def leading_coefficient(self):
        if self.kind == "polynomial-sum":
            e = self.leading_exponent
            return sum(c for c, ee in self.terms if ee == e and c > 0)
        if self.kind == "piecewise-power":
            return self.inner / self.outer
        return None

    @property
    def smallest_exponent(self):
        """Exponent of the lowest-order term at s = 0 (0 for a nonzero constant)."""
        if self.kind == "polynomial-sum":
            return min((e for c, e in self.terms if c > 0), default=np.inf)
        if self.kind == "piecewise-power":
            return self.inner
        return None

    def to_dict(self):
        out = {"kind": self.kind}
        if self.kind == "polynomial-sum":
            out["terms"] = [list(t) for t in self.terms]
        elif self.kind == "piecewise-power":
            out["inner"] = self.inner
            out["outer"] = self.outer
        else:
            out["table"] = [list(t) for t in self.table]
        out["offset"] = self.offset
        out["monotone"] = self.monotone
        return out

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        allowed = {"kind", "terms", "offset", "inner", "outer", "table", "monotone"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown nonlinearity key(s): {sorted(unknown)}")
        if "kind" not in d:
            raise ConfigError("nonlinearity needs a 'kind'")
        return cls(**d)


def polynomial_sum(terms, offset=0.0):
    """Σ c s^e - offset.  ``terms`` is a sequence of (coefficient, exponent)."""
    return NonlinearitySpec("polynomial-sum", terms=tuple(terms), offset=offset)


def piecewise_power(inner, outer, offset=0.0):
    return NonlinearitySpec("piecewise-power", inner=float(inner),
                            outer=float(outer), offset=offset)


def custom_table(points, offset=0.0, monotone=True):
    return NonlinearitySpec("custom-table", table=tuple(points), offset=offset,
                            monotone=monotone)


def _as_array(s):
    arr = np.asarray(s, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise NonlinearityDomainError("nonlinearities are defined for s >= 0 only",
                                      stage="nonlinearity")
    return arr


def evaluate(spec, s):
    """Evaluate ``spec`` at ``s >= 0``; scalar in, float out."""
    arr = _as_array(s)
    out = spec._raw(np.atleast_1d(arr))
    return float(out[0]) if arr.ndim == 0 else out


def eval_derivative(spec, s):
    arr = _as_array(s)
    out = spec._raw_derivative(np.atleast_1d(arr))
    return float(out[0]) if arr.ndim == 0 else out


def shift(spec, amount=1.0):
    """The shifted nonlinearity s -> spec(s) - amount."""
    return replace(spec, offset=spec.offset + amount)


_LOG_GRID = np.concatenate([[0.0], np.logspace(-8, 8, 10_000)])


def _sampled_monotone(spec):
    vals = spec._raw(_LOG_GRID)
    return bool(np.all(np.diff(vals) >= -1e-12 * np.maximum(1.0, np.abs(vals[1:]))))


@dataclass(frozen=True)
class NonlinearityQuad:
    """The four nonlinearities of the system, in the order (f, g, h, γ)."""

    f: NonlinearitySpec
    g: NonlinearitySpec
    h: NonlinearitySpec
    gamma: NonlinearitySpec

    def __iter__(self):
        return iter((self.f, self.g, self.h, self.gamma))

    def shifted(self, amount=1.0):
        return NonlinearityQuad(*(shift(s, amount) for s in self))

    def to_dict(self):
        return {"f": self.f.to_dict(), "g": self.g.to_dict(),
                "h": self.h.to_dict(), "gamma": self.gamma.to_dict()}


# -- hypotheses ---------------------------------------------------------------

@dataclass
class HypothesisReport:
    h1: dict
    h2: dict
    h3: dict
    h4: dict
    method: str
    flatness: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(x["passed"] for x in (self.h1, self.h2, self.h3, self.h4))

    def failed(self):
        return [name for name in ("h1", "h2", "h3", "h4")
                if not getattr(self, name)["passed"]]

    def to_dict(self):
        return {"method": self.method, "passed": self.passed,
                "h1": self.h1, "h2": self.h2, "h3": self.h3, "h4": self.h4,
                "flatness": self.flatness}


_SAMPLE_S = 10.0 ** np.arange(2, 9)
_SAMPLE_M = (1.0, 10.0, 100.0)


def _decays(ratios, final_tol=1e-3, slope_tol=-0.05):
    """Sampled decay test for a ratio sequence on s = 1e2..1e8.

    Passes if the tail is nonincreasing in magnitude and either the last value
    is below ``final_tol`` or the log-log slope over the last three decades is
    at most ``slope_tol``.
    """
    r = np.abs(np.asarray(ratios, dtype=float))
    tail = r[-4:]
    if not np.all(np.isfinite(tail)):
        return False
    if np.any(np.diff(tail) > 1e-12 * tail[:-1]):
        return False
    if tail[-1] < final_tol:
        return True
    if np.any(tail <= 0):
        return True
    slope = np.polyfit(np.log10(_SAMPLE_S[-4:]), np.log10(tail), 1)[0]
    return bool(slope <= slope_tol)


def _h3_ratios(f, g, p, q, M):
    gs = np.maximum(g._raw(_SAMPLE_S), 0.0)
    return f._raw(M * gs ** (1.0 / (q - 1.0))) / _SAMPLE_S ** (p - 1.0)


def check_hypotheses(f, g, h, gamma, weights, p, q, method="auto"):
    """Check (H1)-(H4).

    ``weights`` holds the lower bounds (a1, b1, α1, β1).  ``method`` is
    ``"exact"``, ``"sampled"`` or ``"auto"`` (exact when every spec carries
    exponent metadata).  Failures are reported, never raised.
    """
    specs = {"f": f, "g": g, "h": h, "gamma": gamma}
    exact_ok = all(s.exact for s in specs.values())
    if method == "auto":
        method = "exact" if exact_ok else "sampled"
    if method == "exact" and not exact_ok:
        raise ConfigError("exact hypothesis check needs power-type specs")

    bounds = dict(zip(("a1", "b1", "alpha1", "beta1"), map(float, weights)))
    h1 = {"passed": all(v > 0 for v in bounds.values()), "bounds": bounds}

    if method == "exact":
        detail = {n: {"monotone": s.monotone,
                      "leading_exponent": s.leading_exponent,
                      "leading_coefficient": s.leading_coefficient}
                  for n, s in specs.items()}
        h2 = {"passed": all(s.monotone and s.leading_exponent > 0
                            and s.leading_coefficient > 0 for s in specs.values()),
              "detail": detail}
        prod = f.leading_exponent * g.leading_exponent
        bound = (p - 1.0) * (q - 1.0)
        h3 = {"passed": prod < bound, "exponent_product": prod, "bound": bound}
        h4 = {"passed": (h.leading_exponent < p - 1.0
                         and gamma.leading_exponent < q - 1.0),
              "h_exponent": h.leading_exponent, "h_bound": p - 1.0,
              "gamma_exponent": gamma.leading_exponent, "gamma_bound": q - 1.0}
        method_name = "exact-exponent"
    else:
        detail = {}
        for n, s in specs.items():
            tail = s._raw(_SAMPLE_S)
            grows = bool(np.all(np.diff(tail[-4:]) > 0)
                         and tail[-1] > 10.0 * max(1.0, abs(float(s._raw(np.array([1.0]))[0]))))
            detail[n] = {"monotone": _sampled_monotone(s), "grows": grows}
        h2 = {"passed": all(d["monotone"] and d["grows"] for d in detail.values()),
              "detail": detail}
        ratios = {str(M): _h3_ratios(f, g, p, q, M).tolist() for M in _SAMPLE_M}
        h3 = {"passed": all(_decays(r) for r in ratios.values()), "ratios": ratios}
        rh = (h._raw(_SAMPLE_S) / _SAMPLE_S ** (p - 1.0)).tolist()
        rg = (gamma._raw(_SAMPLE_S) / _SAMPLE_S ** (q - 1.0)).tolist()
        h4 = {"passed": _decays(rh) and _decays(rg), "h_ratios": rh, "gamma_ratios": rg}
        method_name = "sampled"

    report = HypothesisReport(h1, h2, h3, h4, method_name)
    report.flatness = check_flatness(NonlinearityQuad(f, g, h, gamma), p, q)
    return report


def flatness_threshold(r):
    """Smallest exponent must exceed this for the derivatives up to order
    [r-1] to vanish at zero: r-1 for integer r, [r] otherwise."""
    return r - 1.0 if float(r).is_integer() else float(np.floor(r))


def check_flatness(nl, p, q):
    """Zero value and flat derivatives at s = 0 (needed for multiplicity)."""
    out = {}
    for name, spec, r in (("f", nl.f, p), ("h", nl.h, p), ("g", nl.g, q), ("gamma", nl.gamma, q)):
        zero = abs(float(spec._raw(np.array([0.0]))[0])) == 0.0
        if spec.exact:
            e = spec.smallest_exponent
            ok = zero and e > flatness_threshold(r)
        else:
            # sampled: s^{-(threshold)} spec(s) -> 0 as s -> 0
            s = np.logspace(-6, -3, 4)
            ratio = np.abs(spec._raw(s)) / s ** max(flatness_threshold(r), 1e-12)
            e = None
            ok = zero and bool(np.all(np.diff(ratio) >= 0)) and ratio[0] < 1e-3
        out[name] = {"passed": bool(ok), "smallest_exponent": e,
                     "threshold": flatness_threshold(r), "vanishes_at_zero": zero}
    out["passed"] = all(v["passed"] for v in out.values())
    return out


def infimum(spec, upper=1e8):
    """Infimum of ``spec`` over [0, ∞), by a log-grid scan refined with a
    golden-section search."""
    grid = np.concatenate([[0.0], np.logspace(-8, np.log10(upper), 2001)])
    vals = spec._raw(grid)
    k = int(np.argmin(vals))
    if k == len(grid) - 1 and vals[-1] < vals[-2]:
        raise UnboundedNonlinearityError(
            f"{spec.kind} spec appears unbounded below", stage="nonlinearity")
    best = float(vals[k])
    if 0 < k < len(grid) - 1 and vals[k] < vals[k - 1] and vals[k] < vals[k + 1]:
        fun = lambda s: float(spec._raw(np.array([s]))[0])
        res = optimize.minimize_scalar(fun, bracket=(grid[k - 1], grid[k], grid[k + 1]),
                                       method="golden")
        best = min(best, float(res.fun))
    return best


def lower_bound_k0(f, g, h, gamma, weights, margin=1.5):
    """k0 = margin * max(1, -min_i weight_i * inf spec_i).

    Any k0 with weight_i * spec_i(t) > -k0 for all t works; the fixed margin
    keeps runs reproducible.
    """
    worst = min(float(w) * infimum(s) for s, w in zip((f, g, h, gamma), weights))
    return margin * max(1.0, -worst)
