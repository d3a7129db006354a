"""Problem data: exponents, parameters and weight fields of the coupled system

    -Δ_p u - |u|^{p-2} u = λ1 a(x) f(v) + μ1 α(x) h(u)
    -Δ_q v - |v|^{q-2} v = λ2 b(x) g(u) + μ2 β(x) γ(v)

with u = v = 0 on the boundary.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError

__all__ = ["ProblemParams"]

_WEIGHTS = ("a", "b", "alpha", "beta")


def _weight_array(w):
    return np.atleast_1d(np.asarray(w, dtype=float))


@dataclass(frozen=True)
class ProblemParams:
    """Exponents, coupling parameters and weights.

    Weights are either constants or nodal arrays on the working mesh.
    """

    p: float
    q: float
    lambda1: float = 0.0
    lambda2: float = 0.0
    mu1: float = 0.0
    mu2: float = 0.0
    a: object = 1.0
    b: object = 1.0
    alpha: object = 1.0
    beta: object = 1.0

    def __post_init__(self):
        for name in ("p", "q"):
            if not getattr(self, name) > 1.0:
                raise ConfigError(f"{name} must exceed 1", stage="params")
        for name in ("lambda1", "lambda2", "mu1", "mu2"):
            val = getattr(self, name)
            if not (val >= 0.0 and np.isfinite(val)):
                raise ConfigError(f"{name} must be finite and >= 0", stage="params")
        for name in _WEIGHTS:
            if not np.all(np.isfinite(_weight_array(getattr(self, name)))):
                raise ConfigError(f"weight {name} must be finite", stage="params")

    # lower bounds a1, b1, alpha1, beta1
    def lower_bounds(self):
        return tuple(float(np.min(_weight_array(getattr(self, n)))) for n in _WEIGHTS)

    def sup_norms(self):
        return tuple(float(np.max(np.abs(_weight_array(getattr(self, n)))))
                     for n in _WEIGHTS)

    @property
    def sums(self):
        return self.lambda1 + self.mu1, self.lambda2 + self.mu2

    def with_sums(self, s1, s2):
        """Rescale so that λ1+μ1 = s1 and λ2+μ2 = s2, keeping the λ/μ split
        (an even split when both entries of a pair are zero)."""
        t1 = self.lambda1 / self.sums[0] if self.sums[0] > 0 else 0.5
        t2 = self.lambda2 / self.sums[1] if self.sums[1] > 0 else 0.5
        return replace(self, lambda1=t1 * s1, mu1=(1.0 - t1) * s1,
                       lambda2=t2 * s2, mu2=(1.0 - t2) * s2)

    def scaled(self, factor):
        return self.with_sums(factor * self.sums[0], factor * self.sums[1])

    def exponent(self, component):
        return self.p if component == "u" else self.q

    def summary(self):
        out = {"p": self.p, "q": self.q, "lambda1": self.lambda1,
               "lambda2": self.lambda2, "mu1": self.mu1, "mu2": self.mu2}
        for name, lo, hi in zip(_WEIGHTS, self.lower_bounds(), self.sup_norms()):
            out[f"{name}_min"] = lo
            out[f"{name}_max"] = hi
        return out
