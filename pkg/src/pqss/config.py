"""Run configuration: TOML in, validated RunConfig out, canonical TOML back.

Unknown keys are rejected everywhere.  Weights are constants in the file;
nodal weight arrays are available through the Python API only.
"""

from dataclasses import asdict, dataclass, field, fields, replace

import tomli
import tomli_w

from .errors import ConfigError
from .fem import SolverOptions
from .iterate import IterateOptions, PipelineOptions
from .mesh import build_mesh
from .nonlinearity import NonlinearityQuad, NonlinearitySpec
from .problem import ProblemParams
from .spectral import EigenOptions

__all__ = ["RunConfig", "parse_config", "load_config", "dump_config"]


@dataclass(frozen=True)
class DomainConfig:
    kind: str = "interval"
    resolution: int = 64
    vertices: int = 64

    def validate(self):
        if self.kind not in ("interval", "square", "disk"):
            raise ConfigError(f"domain.kind must be interval, square or disk, got {self.kind!r}")
        if self.resolution < 2:
            raise ConfigError("domain.resolution must be >= 2")
        if self.vertices < 6:
            raise ConfigError("domain.vertices must be >= 6")


@dataclass(frozen=True)
class ParameterConfig:
    """``mode="auto"``: λ, μ give only the split, the sums come from the
    threshold search times ``threshold_factor`` (``multiplicity_factor`` for
    the multiplicity command).  ``mode="fixed"``: λ, μ are used as given."""

    mode: str = "auto"
    lambda1: float = 1.0
    lambda2: float = 1.0
    mu1: float = 1.0
    mu2: float = 1.0
    threshold_factor: float = 1.0
    multiplicity_factor: float = 4.0
    threshold_start: float = 1.0

    def validate(self):
        if self.mode not in ("auto", "fixed"):
            raise ConfigError("parameters.mode must be 'auto' or 'fixed'")
        for name in ("lambda1", "lambda2", "mu1", "mu2"):
            if getattr(self, name) < 0:
                raise ConfigError(f"parameters.{name} must be >= 0")
        for name in ("threshold_factor", "multiplicity_factor", "threshold_start"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"parameters.{name} must be positive")


@dataclass(frozen=True)
class WeightConfig:
    a: float = 1.0
    b: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0

    def validate(self):
        for name in ("a", "b", "alpha", "beta"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"weights.{name} must be positive")


@dataclass(frozen=True)
class EigenConfig:
    tolerance: float = 1e-10
    phi_tolerance: float = 1e-8
    max_iter: int = 500
    restarts: int = 2


@dataclass(frozen=True)
class StripConfig:
    rule: str = "balanced"
    deltas: list = None

    def validate(self):
        if self.rule not in ("balanced", "max-m"):
            raise ConfigError("strip.rule must be 'balanced' or 'max-m'")


@dataclass(frozen=True)
class IterationConfig:
    step_tol: float = 1e-10
    res_tol: float = None
    max_iter: int = 500
    order_tol: float = 1e-10
    distinct_tol: float = 1e-3


@dataclass(frozen=True)
class CheckConfig:
    tolerance: float = 1e-8
    hypothesis_method: str = "auto"

    def validate(self):
        if self.hypothesis_method not in ("auto", "exact", "sampled"):
            raise ConfigError("checks.hypothesis_method must be auto, exact or sampled")


@dataclass(frozen=True)
class SweepConfig:
    """Log-spaced grid over (λ1+μ1, λ2+μ2).  Empty ranges mean
    threshold * [1/4, 4] in auto mode."""

    grid: list = field(default_factory=lambda: [8, 8])
    s1: list = None
    s2: list = None
    command: str = "solve"

    def validate(self):
        if len(self.grid) != 2 or min(self.grid) < 1:
            raise ConfigError("sweep.grid must be two positive integers")
        for name in ("s1", "s2"):
            r = getattr(self, name)
            if r is not None and (len(r) != 2 or not 0 < r[0] <= r[1]):
                raise ConfigError(f"sweep.{name} must be [low, high] with 0 < low <= high")
        if self.command not in ("solve", "multiplicity"):
            raise ConfigError("sweep.command must be 'solve' or 'multiplicity'")


_SECTIONS = {
    "domain": DomainConfig, "parameters": ParameterConfig, "weights": WeightConfig,
    "solver": SolverOptions, "eigen": EigenConfig, "strip": StripConfig,
    "iteration": IterationConfig, "checks": CheckConfig, "sweep": SweepConfig,
}
_TOP = {"seed", "exponents", "nonlinearity", *_SECTIONS}


@dataclass(frozen=True)
class RunConfig:
    p: float
    q: float
    nonlinearity: NonlinearityQuad
    domain: DomainConfig = DomainConfig()
    parameters: ParameterConfig = ParameterConfig()
    weights: WeightConfig = WeightConfig()
    solver: SolverOptions = field(default_factory=SolverOptions)
    eigen: EigenConfig = EigenConfig()
    strip: StripConfig = StripConfig()
    iteration: IterationConfig = IterationConfig()
    checks: CheckConfig = CheckConfig()
    sweep: SweepConfig = SweepConfig()
    seed: int = 0

    # derived objects ---------------------------------------------------------

    def build_mesh(self):
        d = self.domain
        return build_mesh(d.kind, d.resolution, d.vertices)

    def params(self):
        pc, w = self.parameters, self.weights
        return ProblemParams(self.p, self.q, pc.lambda1, pc.lambda2, pc.mu1, pc.mu2,
                             w.a, w.b, w.alpha, w.beta)

    def pipeline_options(self):
        e, it = self.eigen, self.iteration
        eig = EigenOptions(e.tolerance, e.phi_tolerance, e.max_iter, e.restarts,
                           self.seed, self.solver)
        iopts = IterateOptions(it.step_tol, it.res_tol, it.max_iter, it.order_tol,
                               self.solver)
        return PipelineOptions(
            eigen=eig, iterate=iopts, check_tol=self.checks.tolerance,
            strip_rule=self.strip.rule,
            deltas=None if self.strip.deltas is None else tuple(self.strip.deltas),
            threshold_start=self.parameters.threshold_start,
            hypothesis_method=self.checks.hypothesis_method,
            distinct_tol=it.distinct_tol)

    def with_seed(self, seed):
        return replace(self, seed=int(seed))

    def with_grid(self, a, b):
        return replace(self, sweep=replace(self.sweep, grid=[int(a), int(b)]))

    # serialisation -----------------------------------------------------------

    def to_dict(self):
        out = {"seed": self.seed, "exponents": {"p": self.p, "q": self.q}}
        for name in _SECTIONS:
            sec = getattr(self, name)
            out[name] = {k: v for k, v in asdict(sec).items() if v is not None}
        out["nonlinearity"] = self.nonlinearity.to_dict()
        return out


def _section(cls, data, name):
    if not isinstance(data, dict):
        raise ConfigError(f"[{name}] must be a table")
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in [{name}]")
    kw = {}
    for key, val in data.items():
        default = known[key].default
        if isinstance(default, bool) or isinstance(val, bool):
            if not isinstance(val, bool) or (default is not None
                                             and not isinstance(default, bool)):
                raise ConfigError(f"{name}.{key} has the wrong type")
        elif isinstance(default, float) and isinstance(val, int):
            val = float(val)
        elif isinstance(default, int) and not isinstance(val, int):
            raise ConfigError(f"{name}.{key} must be an integer")
        elif isinstance(default, (int, float)) and not isinstance(val, (int, float)):
            raise ConfigError(f"{name}.{key} must be a number")
        elif isinstance(default, str) and not isinstance(val, str):
            raise ConfigError(f"{name}.{key} must be a string")
        kw[key] = val
    obj = cls(**kw)
    if hasattr(obj, "validate"):
        obj.validate()
    return obj


def _nonlinearity(data):
    if not isinstance(data, dict):
        raise ConfigError("[nonlinearity] must be a table")
    unknown = set(data) - {"f", "g", "h", "gamma"}
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r} in [nonlinearity]")
    missing = [n for n in ("f", "g", "h", "gamma") if n not in data]
    if missing:
        raise ConfigError(f"missing nonlinearity spec(s): {', '.join(missing)}")
    specs = []
    for name in ("f", "g", "h", "gamma"):
        try:
            specs.append(NonlinearitySpec.from_dict(data[name]))
        except ConfigError as exc:
            raise ConfigError(f"nonlinearity.{name}: {exc}") from None
        except TypeError as exc:
            raise ConfigError(f"nonlinearity.{name}: {exc}") from None
    return NonlinearityQuad(*specs)


def parse_config(text):
    """Parse and validate a TOML run configuration."""
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}", stage="config") from None
    try:
        return _from_dict(data)
    except ConfigError as exc:
        raise exc.with_stage("config")


def _from_dict(data):
    for key in data:
        if key not in _TOP:
            raise ConfigError(f"unknown key {key!r}")
    exps = data.get("exponents")
    if not isinstance(exps, dict) or set(exps) - {"p", "q"} or not {"p", "q"} <= set(exps):
        bad = sorted(set(exps or {}) - {"p", "q"})
        raise ConfigError(f"unknown key {bad[0]!r} in [exponents]" if bad
                          else "[exponents] needs p and q")
    p, q = exps["p"], exps["q"]
    for name, val in (("p", p), ("q", q)):
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(f"{name} must be a number")
        if not val > 1:
            raise ConfigError(f"{name} must exceed 1")
    if "nonlinearity" not in data:
        raise ConfigError("missing [nonlinearity] section")
    kw = {name: _section(cls, data[name], name)
          for name, cls in _SECTIONS.items() if name in data}
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    return RunConfig(float(p), float(q), _nonlinearity(data["nonlinearity"]),
                     seed=seed, **kw)


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}",
                          stage="config") from None
    return parse_config(text)


def dump_config(cfg):
    """Canonical TOML text; ``parse_config(dump_config(c))`` reproduces ``c``."""
    return tomli_w.dumps(cfg.to_dict())
