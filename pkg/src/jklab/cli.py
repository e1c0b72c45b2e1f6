"""Command-line experiment runner.

    jklab list
    jklab run <config-or-name> [--seed N] [--workers K] [--out DIR]
    jklab envelope <config-or-name> [--out DIR]

Exit codes: 0 every checker passed, 1 a checker failed or errored,
2 invalid config, 3 resource cap exceeded.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import config as cfg
from . import verify
from .envelope import CalibrationError, EnvelopeConstants, envelope_csv, envelope_table
from .process import NumericError, ProcessError, _atomic_write, build_generator
from .scale import ScaleError, ScaleFunction, make_triple
from .space import ResourceCapError, SpaceError

log = logging.getLogger("jklab")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_CAP = 0, 1, 2, 3

# failures that turn a single checker into an "error" verdict
NUMERIC_ERRORS = (NumericError, ProcessError, ScaleError, CalibrationError, ArithmeticError,
                  np.linalg.LinAlgError, ValueError)


@dataclass
class RunContext:
    doc: dict
    seed: int
    space: object
    gen: object
    triple: object
    max_paths: int


@dataclass
class RunReport:
    verdicts: list
    provenance: dict
    timings: dict = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(v.passed and v.status == "ok" for _, v in self.verdicts)


# ---- checkers ------------------------------------------------------------------

def _run_vd(ctx, p):
    return verify.check_volume(ctx.space, p["radii"], p.get("points"))


def _run_tail(ctx, p):
    return verify.check_tail_integral(ctx.gen, p["radii"], ctx.triple.phi_j, p["threshold"])


def _run_exit(ctx, p):
    return verify.check_exit_scaling(ctx.gen, p.get("center", 0), p["radii"], ctx.triple.phi, p["threshold"],
                                     p.get("survival_fraction", 0.5), p.get("mc_radii", []),
                                     p.get("n_paths", 0), ctx.seed, ctx.max_paths)


def _run_fk(ctx, p):
    return verify.check_faber_krahn(ctx.gen, p.get("center", 0), p["radii"], ctx.triple.phi, p["threshold"])


def _run_pi(ctx, p):
    return verify.check_poincare(ctx.gen, p.get("center", 0), p["radii"], ctx.triple.phi,
                                 p.get("kappa", 1.0), p["threshold"])


def _run_csj(ctx, p):
    return verify.check_cutoff_energy(ctx.gen, p.get("center", 0), p["radii"], ctx.triple.phi,
                                      p.get("inner_factor", 1.0), p["threshold"])


def _run_cap(ctx, p):
    return verify.check_capacity(ctx.gen, p.get("center", 0), p["radii"], ctx.triple.phi, p["threshold"])


def _run_ujs(ctx, p):
    triples = verify.ujs_triples(ctx.space, p["radii"], p["sources"], p["targets"])
    return verify.check_ujs(ctx.gen, triples, p["threshold"])


def _run_phi(ctx, p):
    cyl = verify.Cylinder(tuple(p.get("early", (0.5, 1.0))), tuple(p.get("late", (1.5, 2.0))),
                          p.get("reach", 2.0), 0.0, p.get("n_times", 5))
    family = verify.caloric_family(ctx.space, p.get("n_points", 40), p.get("n_random", 4), ctx.seed)
    v = verify.check_phi_harnack(ctx.gen, p.get("center", 0), p["radii"], ctx.triple.phi, family, cyl,
                                 p["threshold"], ctx.seed)
    if "max_ratio" in p:
        v.constants["max_ratio"] = p["max_ratio"]
        if v.constants["worst"] > p["max_ratio"]:
            v.passed = False
            v.notes.append("worst Harnack ratio above max_ratio")
    return v


def _run_hk(ctx, p):
    triple = ctx.triple
    if "phi_c" in p:
        triple = make_triple(triple.phi_j, ScaleFunction.from_dict(p["phi_c"]))
    consts = EnvelopeConstants(time_cutoff=ctx.doc["scales"]["time_cutoff"])
    rep = verify.heat_kernel_corridor(ctx.gen, p.get("center", 0), p["times"], p["max_distance"],
                                      verify.envelope_shapes(triple, consts), p["threshold"])
    consts_out = {"c1": rep.c1, "c2": rep.c2, "c3": rep.c3, "c4": rep.c4}
    return verify.ConditionVerdict("HK", consts_out, rep.worst_ratio, rep.domain, rep.passed)


RUNNERS = {
    "vd_rvd": _run_vd, "tail_integral": _run_tail, "exit_scaling": _run_exit, "faber_krahn": _run_fk,
    "poincare": _run_pi, "cutoff_energy": _run_csj, "capacity": _run_cap, "ujs": _run_ujs,
    "phi_harnack": _run_phi, "hk_corridor": _run_hk,
}

DEFAULT_THRESHOLDS = {"hk_corridor": verify.CORRIDOR_THRESHOLD, "phi_harnack": 3.0}


def _run_one(ctx: RunContext, chk: dict):
    params = dict(chk)
    params.setdefault("threshold", DEFAULT_THRESHOLDS.get(chk["name"], verify.STABILITY_THRESHOLD))
    start = time.perf_counter()
    try:
        v = RUNNERS[chk["name"]](ctx, params)
    except ResourceCapError:
        raise
    except NUMERIC_ERRORS as exc:
        v = verify.ConditionVerdict(cfg.CONDITION_NAMES[chk["name"]], {}, math.inf, {}, False,
                                    status="error", notes=[f"{type(exc).__name__}: {exc}"])
    v.seed = ctx.seed
    return v, time.perf_counter() - start


# ---- outputs -------------------------------------------------------------------

def _csv_text(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(row.get(h, "")) for h in header])
    return buf.getvalue()


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(verify._clean(v), sort_keys=True)
    return v


def _sample_header(samples) -> list:
    header = []
    for s in samples:
        for k in s:
            if k not in header:
                header.append(k)
    return header


def write_outputs(out_dir: str, report: RunReport, doc: dict):
    os.makedirs(out_dir, exist_ok=True)
    records = []
    for name, v in report.verdicts:
        rec = v.record()
        rec["checker"] = name
        rec["status"] = v.status
        rec["notes"] = list(v.notes)
        records.append(rec)
    summary = {"experiment": doc["name"], "anchor": doc.get("anchor", ""), "provenance": report.provenance,
               "all_pass": report.all_passed, "verdicts": records}
    text = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    _atomic_write(os.path.join(out_dir, "summary.json"), text.encode())
    _atomic_write(os.path.join(out_dir, "config.json"),
                  (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode())
    rows = [{"checker": r["checker"], "condition": r["condition"], "worst_ratio": r["worst_ratio"],
             "pass": r["pass"], "status": r["status"], "seed": r["seed"]} for r in records]
    _atomic_write(os.path.join(out_dir, "summary.csv"),
                  _csv_text(rows, ["checker", "condition", "worst_ratio", "pass", "status", "seed"]).encode())
    for name, v in report.verdicts:
        samples = [verify._clean(s) for s in v.samples]
        header = _sample_header(samples) or ["value"]
        _atomic_write(os.path.join(out_dir, f"{name}.csv"), _csv_text(samples, header).encode())
    # wall-clock lives apart so summary.json stays reproducible
    _atomic_write(os.path.join(out_dir, "timings.json"),
                  (json.dumps(report.timings, indent=2, sort_keys=True) + "\n").encode())


# ---- run -----------------------------------------------------------------------

def run_experiment(doc: dict, seed: int, workers: int = 1) -> RunReport:
    """Build space, kernel, generator and scales, then run every checker."""
    timings = {}
    t0 = time.perf_counter()
    space = cfg.build_space_from(doc)
    cfg.check_against_space(doc, space)
    timings["space"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    gen = build_generator(space, cfg.build_kernel_matrix(doc, space))
    timings["generator"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    triple = cfg.build_scales(doc)
    timings["scales"] = time.perf_counter() - t0
    ctx = RunContext(doc, seed, space, gen, triple, doc["caps"]["max_paths"])
    checkers = sorted(doc["checkers"], key=lambda c: c["name"])
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(lambda c: _run_one(ctx, c), checkers))
    verdicts = []
    for chk, (v, dt) in zip(checkers, results):
        verdicts.append((chk["name"], v))
        timings[f"checker:{chk['name']}"] = dt
    prov = {"config_hash": cfg.config_hash(doc), "seed": seed, "tool_version": __version__}
    return RunReport(verdicts, prov, timings)


def _default_out(doc) -> str:
    return doc.get("output") or os.path.join("jklab_out", doc["name"])


def cmd_run(args) -> int:
    try:
        doc = cfg.load_config(args.config)
        seed = cfg.resolve_seed(doc, args.seed)
        doc["seed"] = seed
        workers = args.workers or doc["workers"]
        report = run_experiment(doc, seed, workers)
    except ResourceCapError as exc:
        print(f"resource cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (cfg.ConfigError, SpaceError, ScaleError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = args.out or _default_out(doc)
    write_outputs(out_dir, report, doc)
    for name, v in report.verdicts:
        flag = "PASS" if v.passed and v.status == "ok" else ("ERROR" if v.status == "error" else "FAIL")
        print(f"{flag:5s} {name:14s} {v.condition:11s} worst_ratio={v.worst_ratio:.4g}")
    print(f"wrote {out_dir}")
    return EXIT_OK if report.all_passed else EXIT_FAIL


def cmd_list(args) -> int:
    for name, anchor, desc in cfg.list_experiments():
        print(f"{name}\t{anchor}\t{desc}")
    return EXIT_OK


def envelope_rows(doc: dict):
    env = doc.get("envelope")
    if not env:
        raise cfg.ConfigError("config has no envelope section")
    space = cfg.build_space_from(doc)
    cfg.check_against_space(doc, space)
    triple = cfg.build_scales(doc)
    consts = EnvelopeConstants(time_cutoff=doc["scales"]["time_cutoff"], **env.get("constants", {}))
    center = env.get("center", 0)
    dist = env.get("distances")
    if dist is None:
        dist = np.unique(space.dist[center][space.dist[center] <= space.guard_radius + 1e-9])
    return envelope_table(env["times"], np.asarray(dist, dtype=float), space.volume_fn(center), triple, consts)


def cmd_envelope(args) -> int:
    try:
        doc = cfg.load_config(args.config)
        rows = envelope_rows(doc)
    except ResourceCapError as exc:
        print(f"resource cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (cfg.ConfigError, SpaceError, ScaleError, CalibrationError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = envelope_csv(rows)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "envelope.csv")
        _atomic_write(path, text.encode())
        print(f"wrote {path}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="jklab", description="Jump-process heat kernel experiment runner")
    ap.add_argument("--version", action="version", version=f"jklab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config or built-in name")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--workers", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.set_defaults(func=cmd_run)
    p_list = sub.add_parser("list", help="list built-in experiments")
    p_list.set_defaults(func=cmd_list)
    p_env = sub.add_parser("envelope", help="write the envelope table as CSV")
    p_env.add_argument("config")
    p_env.add_argument("--out", default=None)
    p_env.set_defaults(func=cmd_envelope)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if getattr(args, "workers", None) is not None and args.workers < 1:
        print("invalid config: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
