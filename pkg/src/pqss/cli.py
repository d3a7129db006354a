"""Command-line entry point.

    pqss <subcommand> --config PATH [--out DIR] [--seed N] [--grid AxB] [--dump-mesh]

Every run writes ``report.json`` (deterministic), ``timings.json``,
``fields/*.csv`` and a one-line ``status`` file into the output directory.
"""

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import load_config
from .errors import HypothesisError, NonconvergenceError, PqssError
from .iterate import _hypotheses, _k0, _spectral, solve_existence, solve_multiplicity
from .mesh import write_mesh
from .nonlinearity import check_hypotheses
from .spectral import first_eigenpair, strip_constants, torsion_function
from .subsuper import construct_pair, existence_threshold

__all__ = ["run", "main", "COMMANDS"]

COMMANDS = ("eigen", "torsion", "check-hypotheses", "construct", "solve",
            "multiplicity", "sweep")

# stages each command reports, in pipeline order
STAGES = {
    "eigen": ("eigen", "strip"),
    "torsion": ("torsion",),
    "check-hypotheses": ("hypotheses",),
    "construct": ("hypotheses", "spectral", "k0", "threshold", "parameters", "pair"),
    "solve": ("hypotheses", "spectral", "k0", "threshold", "parameters", "pair",
              "solution"),
    "multiplicity": ("spectral", "threshold_shifted", "parameters", "shifted_solution",
                     "supersolution", "strict_pair", "candidates", "positive",
                     "distances", "found", "diagnostics"),
    "sweep": ("spectral", "threshold", "grid", "summary"),
}

SWEEP_COLUMNS = ("i", "j", "s1", "s2", "status", "exit_code", "iterations",
                 "residual_u", "residual_v", "max_u", "max_v", "found")


class MultiplicityNotFound(NonconvergenceError):
    kind = "multiplicity-not-found"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if x is None or isinstance(x, str):
        return x
    if hasattr(x, "to_dict"):
        return _jsonable(x.to_dict())
    return str(x)


def _dump_json(path, obj):
    text = json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")


def write_field_csv(path, field):
    mesh = field.mesh
    axes = ("x", "y")[:mesh.dimension]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("node",) + axes + ("value",))
        for k, (xy, val) in enumerate(zip(mesh.nodes, field.values)):
            w.writerow([k] + [repr(float(c)) for c in xy] + [repr(float(val))])


class _Run:
    """Collects stage outputs, fields and timings for one invocation."""

    def __init__(self, command, cfg, out):
        self.command, self.cfg, self.out = command, cfg, Path(out)
        self.stages, self.fields, self.timings = {}, {}, {}

    def timed(self, name, fn, *args, **kw):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kw)
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t0

    def finish(self, error=None):
        self.out.mkdir(parents=True, exist_ok=True)
        stages = {}
        for name in STAGES[self.command]:
            if name in self.stages:
                stages[name] = self.stages[name]
            elif error is not None:
                stages[name] = {"skipped": f"aborted by {error.kind} error"
                                           f" in stage {error.stage or 'unknown'}"}
            else:
                stages[name] = {"skipped": "not produced by this command"}
        if error is None:
            status = {"ok": True, "kind": "OK", "exit_code": 0}
        else:
            status = {"ok": False, "kind": error.kind, "exit_code": error.exit_code,
                      "stage": error.stage, "condition": error.condition,
                      "message": str(error)}
        report = {"command": self.command, "config": self.cfg.to_dict(),
                  "stages": stages, "status": status}
        _dump_json(self.out / "report.json", report)
        _dump_json(self.out / "timings.json", self.timings)
        if self.fields:
            fdir = self.out / "fields"
            fdir.mkdir(exist_ok=True)
            for name, fld in self.fields.items():
                write_field_csv(fdir / f"{name}.csv", fld)
        (self.out / "status").write_text(status["kind"] + "\n", encoding="utf-8")
        return status["exit_code"]


# -- commands --------------------------------------------------------------------

def _cmd_eigen(run, mesh):
    cfg = run.cfg
    opts = cfg.pipeline_options()
    eig_p = run.timed("eigen", first_eigenpair, mesh, cfg.p, opts.eigen)
    eig_q = eig_p if cfg.q == cfg.p else run.timed("eigen", first_eigenpair, mesh,
                                                   cfg.q, opts.eigen)
    run.stages["eigen"] = {"p": eig_p.to_dict(), "q": eig_q.to_dict()}
    run.fields["phi_p"], run.fields["phi_q"] = eig_p.phi, eig_q.phi
    strip = run.timed("strip", strip_constants, (eig_p, eig_q), mesh,
                      deltas=opts.deltas, rule=opts.strip_rule)
    run.stages["strip"] = strip.to_dict()


def _cmd_torsion(run, mesh):
    cfg = run.cfg
    out = {}
    for name, r in (("p", cfg.p), ("q", cfg.q)):
        tor = run.timed("torsion", torsion_function, mesh, r, cfg.solver)
        out[name] = tor.to_dict()
        run.fields[f"omega_{name}"] = tor.omega
    run.stages["torsion"] = out


def _cmd_check(run, mesh):
    cfg = run.cfg
    params = cfg.params()
    rep = run.timed("hypotheses", check_hypotheses, *cfg.nonlinearity,
                    params.lower_bounds(), cfg.p, cfg.q,
                    method=cfg.checks.hypothesis_method)
    run.stages["hypotheses"] = rep.to_dict()
    if not rep.passed:
        raise HypothesisError("hypotheses failed: " + ", ".join(rep.failed()).upper(),
                              stage="hypotheses", condition="(H1)-(H4)")


def _pair_fields(run, pair):
    run.fields.update(sub_u=pair.sub_u, sub_v=pair.sub_v,
                      super_u=pair.super_u, super_v=pair.super_v)


def _cmd_construct(run, mesh):
    cfg = run.cfg
    params, nl, opts = cfg.params(), cfg.nonlinearity, cfg.pipeline_options()
    run.stages["hypotheses"] = run.timed("hypotheses", _hypotheses, params, nl, opts).to_dict()
    spec = run.timed("spectral", _spectral, mesh, params, opts)
    run.stages["spectral"] = spec.to_dict()
    k0 = _k0(params, nl)
    run.stages["k0"] = k0
    if cfg.parameters.mode == "auto":
        thr = run.timed("threshold", existence_threshold, params, nl, spec, k0,
                        start=opts.threshold_start, tol=opts.check_tol)
        run.stages["threshold"] = thr.to_dict()
        f = cfg.parameters.threshold_factor
        params = params.with_sums(f * thr.passing[0], f * thr.passing[1])
    else:
        run.stages["threshold"] = {"skipped": "parameters.mode is fixed"}
    run.stages["parameters"] = params.summary()
    pair, _, _ = run.timed("pair", construct_pair, params, nl, spec, k0,
                           tol=opts.check_tol)
    run.stages["pair"] = pair.to_dict()
    _pair_fields(run, pair)


def _cmd_solve(run, mesh):
    cfg = run.cfg
    res = run.timed("solve", solve_existence, mesh, cfg.params(), cfg.nonlinearity,
                    mode=cfg.parameters.mode,
                    threshold_factor=cfg.parameters.threshold_factor,
                    opts=cfg.pipeline_options())
    stages = res.stages()
    if res.threshold is None:
        stages["threshold"] = {"skipped": "parameters.mode is fixed"}
    run.stages.update(stages)
    _pair_fields(run, res.pair)
    run.fields["u"], run.fields["v"] = res.bundle.u, res.bundle.v


def _cmd_multiplicity(run, mesh):
    cfg = run.cfg
    res = run.timed("multiplicity", solve_multiplicity, mesh, cfg.params(),
                    cfg.nonlinearity, mode=cfg.parameters.mode,
                    threshold_factor=cfg.parameters.multiplicity_factor,
                    opts=cfg.pipeline_options())
    stages = res.stages()
    if res.threshold is None:
        stages["threshold_shifted"] = {"skipped": "parameters.mode is fixed"}
    run.stages.update(stages)
    run.fields["omega_u"], run.fields["omega_v"] = res.shifted.bundle.u, res.shifted.bundle.v
    for k, b in enumerate(res.positive):
        run.fields[f"solution{k}_u"], run.fields[f"solution{k}_v"] = b.u, b.v
    if not res.found:
        raise MultiplicityNotFound("fewer than two distinct positive solutions found",
                                   stage="multiplicity")


# -- sweep -----------------------------------------------------------------------

def _sweep_axes(cfg, params, thr):
    sw = cfg.sweep
    axes = []
    for k, (rng, n) in enumerate(zip((sw.s1, sw.s2), sw.grid)):
        if rng is None:
            base = thr.passing[k] if thr is not None else params.sums[k]
            if not base > 0:
                base = 1.0
            rng = (base / 4.0, base * 4.0)
        axes.append(np.logspace(np.log10(rng[0]), np.log10(rng[1]), n))
    return axes


def _sweep_point(cfg, mesh, params, spec, s1, s2):
    row = dict.fromkeys(SWEEP_COLUMNS, "")
    row.update(s1=repr(float(s1)), s2=repr(float(s2)))
    point = params.with_sums(float(s1), float(s2))
    opts = cfg.pipeline_options()
    try:
        if cfg.sweep.command == "solve":
            res = solve_existence(mesh, point, cfg.nonlinearity, mode="fixed",
                                  opts=opts, spectral=spec)
            b = res.bundle
        else:
            res = solve_multiplicity(mesh, point, cfg.nonlinearity, mode="fixed",
                                     opts=opts, spectral=spec)
            row["found"] = str(res.found)
            b = res.positive[-1] if res.positive else res.shifted.bundle
            if not res.found:
                raise MultiplicityNotFound("fewer than two distinct positive solutions")
        row.update(status="OK", exit_code=0, iterations=b.iterations,
                   residual_u=repr(float(b.residual_norms[0])),
                   residual_v=repr(float(b.residual_norms[1])),
                   max_u=repr(b.u.max()), max_v=repr(b.v.max()))
    except PqssError as exc:
        row.update(status=exc.kind, exit_code=exc.exit_code)
    return row


def _read_done(path):
    if not path.exists():
        return {}
    with open(path, newline="", encoding="utf-8") as fh:
        return {(int(r["i"]), int(r["j"])): r for r in csv.DictReader(fh)
                if r.get("status")}


def _cmd_sweep(run, mesh):
    cfg = run.cfg
    params, nl, opts = cfg.params(), cfg.nonlinearity, cfg.pipeline_options()
    _hypotheses(params, nl, opts)
    spec = run.timed("spectral", _spectral, mesh, params, opts)
    run.stages["spectral"] = spec.to_dict()
    thr = None
    if cfg.parameters.mode == "auto":
        snl = nl.shifted() if cfg.sweep.command == "multiplicity" else nl
        thr = run.timed("threshold", existence_threshold, params, snl, spec,
                        _k0(params, snl), start=opts.threshold_start, tol=opts.check_tol)
        run.stages["threshold"] = thr.to_dict()
    else:
        run.stages["threshold"] = {"skipped": "parameters.mode is fixed"}
    ax1, ax2 = _sweep_axes(cfg, params, thr)
    run.stages["grid"] = {"s1": ax1, "s2": ax2, "command": cfg.sweep.command}

    run.out.mkdir(parents=True, exist_ok=True)
    path = run.out / "sweep.csv"
    done = _read_done(path)
    todo = [(i, j) for i in range(len(ax1)) for j in range(len(ax2)) if (i, j) not in done]
    threads = max(1, int(os.environ.get("PQSS_THREADS", os.cpu_count() or 1)))

    def work(ij):
        i, j = ij
        row = _sweep_point(cfg, mesh, params, spec, ax1[i], ax2[j])
        row.update(i=i, j=j)
        return row

    fresh = not path.exists()
    t0 = time.perf_counter()
    # single writer: results arrive in submission order and are appended here
    with open(path, "a", newline="", encoding="utf-8") as fh, \
            ThreadPoolExecutor(max_workers=threads) as pool:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        if fresh:
            w.writeheader()
            fh.flush()
        for row in pool.map(work, todo):
            w.writerow(row)
            fh.flush()
            done[(row["i"], row["j"])] = row
    run.timings["sweep"] = time.perf_counter() - t0
    counts = {}
    for r in done.values():
        counts[r["status"]] = counts.get(r["status"], 0) + 1
    run.stages["summary"] = {"points": len(ax1) * len(ax2), "resumed": len(done) - len(todo),
                             "status_counts": dict(sorted(counts.items()))}


_DISPATCH = {"eigen": _cmd_eigen, "torsion": _cmd_torsion,
             "check-hypotheses": _cmd_check, "construct": _cmd_construct,
             "solve": _cmd_solve, "multiplicity": _cmd_multiplicity,
             "sweep": _cmd_sweep}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _grid(text):
    try:
        a, b = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected AxB, got {text!r}") from None
    if a < 1 or b < 1:
        raise argparse.ArgumentTypeError("grid sizes must be positive")
    return a, b


def build_parser():
    ap = _Parser(prog="pqss", description="(p,q)-Laplacian system sub/supersolution toolkit")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="TOML run configuration")
    ap.add_argument("--out", default="pqss-out", help="output directory")
    ap.add_argument("--seed", type=int, help="override the eigen-solver restart seed")
    ap.add_argument("--grid", type=_grid, help="sweep grid size, e.g. 8x8")
    ap.add_argument("--dump-mesh", action="store_true", help="write mesh.txt")
    return ap


def run(argv=None):
    """Execute one subcommand; returns the process exit status."""
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    out = Path(args.out)
    try:
        cfg = load_config(args.config)
    except PqssError as exc:
        print(f"pqss: {exc}", file=sys.stderr)
        out.mkdir(parents=True, exist_ok=True)
        (out / "status").write_text(exc.kind + "\n", encoding="utf-8")
        return exc.exit_code
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.grid is not None:
        cfg = cfg.with_grid(*args.grid)
    job = _Run(args.command, cfg, out)
    try:
        mesh = job.timed("mesh", cfg.build_mesh)
        if args.dump_mesh:
            out.mkdir(parents=True, exist_ok=True)
            write_mesh(mesh, out / "mesh.txt")
        _DISPATCH[args.command](job, mesh)
    except PqssError as exc:
        print(f"pqss: {exc}", file=sys.stderr)
        return job.finish(exc)
    return job.finish()


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
