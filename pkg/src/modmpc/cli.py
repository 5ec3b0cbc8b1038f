"""``modmpc`` command line: calibrate, sweep, optimize, replay, simulate, metrics.

Every command reads a JSON config (validated against
``schemas/config.schema.json``) and writes CSV/JSON files into ``--out``.
Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from modmpc import plants as plants_mod
from modmpc.cloop import DesignEvaluator, SimConfig, simulate
from modmpc.ditri import Ditri, DitriConfig
from modmpc.moo import (Archive, Bounds, DesignPoint, ObjectiveVector, band_fit, front_metrics,
                        grid_oracle)
from modmpc.mpc import OcpSpec
from modmpc.nsga import Nsga, NsgaConfig
from modmpc.resource import REFERENCE_COEFFICIENTS, ResourceModel, calibrate, measure

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

MANIFEST_VERSION = 1

DITRI_KEYS = ("max_evals", "max_iters", "epsilon", "dbar_c", "dbar_base", "dbar_div", "selection")
NSGA_KEYS = ("max_evals", "population", "generations", "crossover_prob", "mutation_prob",
             "sbx_eta", "mut_eta")


class ConfigError(Exception):
    pass


# -- config ------------------------------------------------------------------

def _schema() -> dict:
    text = resources.files("modmpc").joinpath("schemas/config.schema.json").read_text()
    return json.loads(text)


def validate(cfg: dict) -> dict:
    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        msgs = []
        for e in errors:
            path = "/".join(str(p) for p in e.absolute_path) or "<root>"
            msgs.append(f"{path}: {e.message}")
        raise ConfigError("invalid config:\n  " + "\n  ".join(msgs))
    return cfg


def load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    validate(cfg)
    base = Path(path).resolve().parent
    res = cfg.get("resource", {})
    if "model_file" in res:
        mf = Path(res["model_file"])
        if not mf.is_absolute():
            mf = base / mf
        if not mf.exists():
            raise ConfigError(f"resource/model_file: file not found: {mf}")
        cfg = {**cfg, "resource": {**res, "model_file": str(mf)}}
    return cfg


def build_plant(cfg):
    try:
        return plants_mod.from_config(cfg["plant"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"plant: {exc}") from None


def build_spec(cfg, plant, h=0.1, N=1) -> OcpSpec:
    o = cfg.get("ocp", {})
    n_x, n_u = plant.n_x, plant.n_u
    term = o.get("terminal", "dare")
    try:
        return OcpSpec(
            plant.A, plant.B,
            np.asarray(o.get("Q", np.eye(n_x)), dtype=float),
            np.asarray(o.get("R", np.eye(n_u)), dtype=float),
            o.get("x_lb", plant.x_lb), o.get("x_ub", plant.x_ub),
            o.get("u_lb", plant.u_lb), o.get("u_ub", plant.u_ub),
            h, N,
            Qf=None if term == "dare" else np.asarray(term, dtype=float),
            cost_mode=o.get("cost_mode", "euler"),
        )
    except ValueError as exc:
        raise ConfigError(f"ocp: {exc}") from None


def build_sim(cfg) -> SimConfig:
    try:
        return SimConfig(**cfg.get("sim", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"sim: {exc}") from None


def build_scenarios(cfg, plant) -> plants_mod.ScenarioSet:
    sc = cfg.get("scenarios")
    if sc is None:
        raise ConfigError("scenarios: required for this command")
    try:
        s = plants_mod.ScenarioSet(sc["X0"], sc.get("weights"))
    except ValueError as exc:
        raise ConfigError(f"scenarios: {exc}") from None
    if any(x.shape != (plant.n_x,) for x in s.X0):
        raise ConfigError(f"scenarios/X0: every state needs {plant.n_x} entries")
    return s


def build_resource(cfg) -> ResourceModel:
    res = cfg.get("resource", {})
    try:
        if "model_file" in res:
            return ResourceModel.load(res["model_file"])
        return ResourceModel(res.get("coefficients", REFERENCE_COEFFICIENTS))
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"resource: {exc}") from None


def build_bounds(cfg) -> Bounds:
    s = cfg.get("search")
    if s is None:
        raise ConfigError("search: required for this command")
    try:
        b = Bounds((s["h"][0], s["N"][0]), (s["h"][1], s["N"][1]))
    except ValueError as exc:
        raise ConfigError(f"search: {exc}") from None
    if b.p_lower[0] <= 0 or b.p_lower[1] < 1:
        raise ConfigError("search: need h > 0 and N >= 1")
    return b


def build_evaluator(cfg) -> DesignEvaluator:
    plant = build_plant(cfg)
    return DesignEvaluator(plant, build_spec(cfg, plant), build_scenarios(cfg, plant),
                           build_resource(cfg), build_sim(cfg), cfg.get("v_digits", 10))


def workers_from_env() -> int:
    raw = os.environ.get("MODMPC_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"MODMPC_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("MODMPC_THREADS must be >= 1")
    return n


# -- output --------------------------------------------------------------------

def fmt(x) -> str:
    """Locale-free shortest round-trip representation."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path: Path, header, rows, footer=None) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in r])
    if footer:
        buf.write(footer + "\n")
    path.write_text(buf.getvalue())


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


ARCHIVE_HEADER = ("eval_index", "h", "N", "V", "eta", "rank")


def archive_rows(archive: Archive, subset=None):
    r = archive.ranks()
    idx = range(len(archive)) if subset is None else sorted(subset)
    for i in idx:
        rec = archive.records[i]
        yield (rec.eval_index, rec.p.h, rec.p.N, rec.l.V, rec.l.eta, r[i])


def write_archive(out: Path, archive: Archive) -> None:
    write_csv(out / "archive.csv", ARCHIVE_HEADER, archive_rows(archive))
    write_csv(out / "front.csv", ARCHIVE_HEADER, archive_rows(archive, archive.front))
    front = archive.front_records()
    write_json(out / "band.json", {"front_size": len(front), "fit": band_fit([r.p for r in front])})


def read_front_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(eval_index, objectives, on_front)`` from a CSV, in eval order.

    ``on_front`` marks rank-1 rows when the file has a ``rank`` column and
    every row otherwise.
    """
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.DictReader(fh) if r and not next(iter(r.values()), "").startswith("#")]
        if not rows:
            raise ValueError("no data rows")
        idx = np.array([int(r["eval_index"]) for r in rows])
        L = np.array([[float(r["V"]), float(r["eta"])] for r in rows])
        if "rank" in rows[0]:
            on_front = np.array([int(r["rank"]) == 1 for r in rows])
        else:
            on_front = np.ones(len(rows), dtype=bool)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed CSV {path}: {exc}") from None
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}") from None
    order = np.argsort(idx, kind="stable")
    return idx[order], L[order], on_front[order]


# -- optimizers and replay ------------------------------------------------------

def optimizer_settings(cfg, name, seed, max_evals) -> dict:
    o = dict(cfg.get("optimizer", {}))
    o.pop("name", None)
    if max_evals is not None:
        o["max_evals"] = max_evals
    o.setdefault("max_evals", 40)
    keys = DITRI_KEYS if name == "ditri" else NSGA_KEYS
    unknown = sorted(set(o) - set(keys))
    if unknown:
        raise ConfigError(f"optimizer: options {unknown} do not apply to {name}")
    o["seed"] = seed
    try:
        return (DitriConfig(**o) if name == "ditri" else NsgaConfig(**o)).to_json()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"optimizer: {exc}") from None


def run_optimizer(name, settings, evaluator, bounds, workers) -> Archive:
    if name == "ditri":
        return Ditri(evaluator, bounds, DitriConfig(**settings), workers=workers).run()
    return Nsga(evaluator, bounds, NsgaConfig(**settings), workers=workers).run()


class ReplayEvaluator:
    """Serves logged objective values; unknown designs go to *fallback*."""

    def __init__(self, log, fallback=None):
        self.table = {DesignPoint(e["h"], e["N"]): ObjectiveVector(e["V"], e["eta"]) for e in log}
        self.fallback = fallback
        self.misses = 0

    def __call__(self, p):
        hit = self.table.get(DesignPoint(p[0], p[1]))
        if hit is not None:
            return hit
        if self.fallback is None:
            raise RuntimeError(f"design {tuple(p)} is not in the evaluation log")
        self.misses += 1
        return self.fallback(p)


def make_manifest(cfg, name, settings, bounds, archive) -> dict:
    return {
        "version": MANIFEST_VERSION,
        "config": cfg,
        "optimizer": name,
        "settings": settings,
        "seed": settings["seed"],
        "bounds": {"p_lower": list(bounds.p_lower), "p_upper": list(bounds.p_upper),
                   "integer_mask": list(bounds.integer_mask)},
        "eval_log": [
            {"eval_index": r.eval_index, "h": r.p.h, "N": r.p.N, "V": r.l.V, "eta": r.l.eta}
            for r in archive.records
        ],
    }


# -- commands ------------------------------------------------------------------

def cmd_calibrate(args, cfg, out: Path) -> int:
    plant = build_plant(cfg)
    cal = cfg.get("calibrate", {})
    Ns = cal.get("N", list(range(3, 16)))
    h = cal.get("h", 0.1)
    reps = cal.get("reps", 5)
    degree = cal.get("degree", 1)
    x0s = cal.get("x0")
    if x0s is None:
        x0s = [0.5 * plant.x_ub * s for s in (1.0, -1.0)] if np.all(np.isfinite(plant.x_ub)) \
            else [np.ones(plant.n_x), -np.ones(plant.n_x)]
    base = build_spec(cfg, plant, h, 1)
    samples = measure(lambda N: base.with_design(h, N), Ns, reps, x0s)
    model = calibrate(samples, degree)
    model.save(out / "model.json", cal.get("host_note", ""))
    rows = [(s.N, k, s.h, t) for s in samples for k, t in enumerate(s.times)]
    write_csv(out / "timings.csv", ("N", "rep", "h", "time"), rows)
    return EXIT_OK


def cmd_sweep(args, cfg, out: Path) -> int:
    ev = build_evaluator(cfg)
    bounds = build_bounds(cfg)
    n_h = cfg.get("sweep", {}).get("n_h", 400)
    archive = grid_oracle(ev, bounds, n_h, workers=workers_from_env())
    write_archive(out, archive)
    return EXIT_OK


def cmd_optimize(args, cfg, out: Path) -> int:
    name = args.optimizer or cfg.get("optimizer", {}).get("name", "ditri")
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    settings = optimizer_settings(cfg, name, seed, args.max_evals)
    ev = build_evaluator(cfg)
    bounds = build_bounds(cfg)
    archive = run_optimizer(name, settings, ev, bounds, workers_from_env())
    write_archive(out, archive)
    write_json(out / "manifest.json", make_manifest(cfg, name, settings, bounds, archive))
    return EXIT_OK


def cmd_replay(args, cfg, out: Path) -> int:
    try:
        man = json.loads(Path(args.manifest).read_text())
        if man.get("version") != MANIFEST_VERSION:
            raise ConfigError(f"unsupported manifest version {man.get('version')!r}")
        cfg = validate(man["config"])
        name, settings, log = man["optimizer"], man["settings"], man["eval_log"]
        b = man["bounds"]
        bounds = Bounds(tuple(b["p_lower"]), tuple(b["p_upper"]), tuple(b["integer_mask"]))
    except (FileNotFoundError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad manifest: {exc}") from None
    fallback = build_evaluator(cfg) if args.resume else None
    ev = ReplayEvaluator(log, fallback)
    archive = run_optimizer(name, settings, ev, bounds, workers_from_env())
    write_archive(out, archive)
    write_json(out / "manifest.json", make_manifest(cfg, name, settings, bounds, archive))
    return EXIT_OK


def cmd_simulate(args, cfg, out: Path) -> int:
    plant = build_plant(cfg)
    if args.h is None or args.N is None:
        raise ConfigError("simulate needs --h and --N")
    if not args.h > 0 or args.N < 1:
        raise ConfigError("invalid design point: need h > 0 and N >= 1")
    spec = build_spec(cfg, plant, args.h, args.N)
    if args.x0 is not None:
        x0 = np.array([float(v) for v in args.x0.split(",")])
    else:
        x0 = build_scenarios(cfg, plant).X0[0]
    if x0.shape != (plant.n_x,):
        raise ConfigError(f"--x0 needs {plant.n_x} comma-separated values")
    traj = simulate(plant, spec, x0, build_sim(cfg))
    uh = traj.held_inputs()
    header = ["t"] + [f"x{i + 1}" for i in range(plant.n_x)] + [f"u{j + 1}" for j in range(plant.n_u)] + ["v"]
    rows = [[traj.t[k], *traj.x[k], *uh[k], traj.v[k]] for k in range(len(traj.t))]
    footer = f"# status={traj.status.value} U={fmt(traj.U)}"
    write_csv(out / "trajectory.csv", header, rows, footer)
    return EXIT_OK


def metrics_report(front_idx, front_L, front_mask, ref_L) -> dict:
    """Joint-normalized metrics of a front against a reference, plus prefix curve.

    The curve replays the rows of the first file in eval order and scores
    the non-dominated subset of every prefix.
    """
    m = front_metrics(front_L[front_mask], ref_L)
    curve = []
    arch = Archive()
    for k, (i, l) in enumerate(zip(front_idx, front_L)):
        arch.append(DesignPoint(float(k), 0), (0.0, 0.0), l)
        pm = front_metrics(arch.objectives()[arch.front], ref_L)
        curve.append({"n_evals": k + 1, "eval_index": int(i), "delta": pm["delta"], "psi": pm["psi"]})
    return {**m, "n_evals": int(len(front_L)), "curve": curve}


def cmd_metrics(args, cfg, out: Path) -> int:
    if not args.front or not args.ref:
        raise ConfigError("metrics needs --front and --ref")
    idx, L, mask = read_front_csv(args.front)
    _, R, ref_mask = read_front_csv(args.ref)
    write_json(out / "metrics.json", metrics_report(idx, L, mask, R[ref_mask]))
    return EXIT_OK


COMMANDS = {
    "calibrate": cmd_calibrate,
    "sweep": cmd_sweep,
    "optimize": cmd_optimize,
    "replay": cmd_replay,
    "simulate": cmd_simulate,
    "metrics": cmd_metrics,
}

NEEDS_CONFIG = ("calibrate", "sweep", "optimize", "simulate")


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="modmpc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON run configuration")
        s.add_argument("--out", help="output directory (default: config 'out' or '.')")
        s.add_argument("--seed", type=int)
        s.add_argument("--optimizer", choices=("ditri", "nsga"))
        s.add_argument("--max-evals", type=int, dest="max_evals")
        if name == "simulate":
            s.add_argument("--h", type=float)
            s.add_argument("--N", type=int)
            s.add_argument("--x0", help="comma-separated initial state")
        if name == "metrics":
            s.add_argument("--front", help="archive or front CSV")
            s.add_argument("--ref", help="reference (e.g. sweep) CSV")
        if name == "replay":
            s.add_argument("--manifest", required=True)
            s.add_argument("--resume", action="store_true",
                           help="evaluate designs missing from the log instead of failing")
    return p


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    try:
        if args.max_evals is not None and args.max_evals < 1:
            raise ConfigError("--max-evals must be >= 1")
        cfg = {}
        if args.command in NEEDS_CONFIG or args.config:
            if not args.config:
                raise ConfigError(f"{args.command} needs --config")
            cfg = load_config(args.config)
        out = Path(args.out or cfg.get("out", "."))
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, cfg, out)
    except ConfigError as exc:
        print(f"modmpc: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"modmpc: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
