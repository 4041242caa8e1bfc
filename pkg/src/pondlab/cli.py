"""Command-line front end.

Subcommands:

* ``run <config.json>``   execute one experiment described by a config file
* ``list``                print the machine-readable experiment registry
* ``oracle list|export``  enumerate or write the exact-probability fixtures
* ``replay <sidecar.json>``  re-run an experiment from its sidecar and
  compare the regenerated CSV byte-for-byte with the stored artifact

Exit codes: 0 on success, 1 when every result row is flagged
underpowered (or a replay mismatches), 2 on a config or usage error.
The default output directory comes from ``PONDLAB_OUTDIR`` when set.
"""
from __future__ import annotations

import argparse
import glob
import hashlib
import json
import os
import sys
from fractions import Fraction

from . import __version__
from . import experiments as X
from .estimators import EstimatorConfig
from .invasion import run_invasion
from .lattice import box, norm, rectangle
from .oracle import (TinyGraph, oc_connected, oracle_bernoulli_event,
                     oracle_invasion_event)
from .weights import WeightField


class ConfigError(Exception):
    """Any problem with a run config; maps to exit code 2."""


def _coerce_default(params: dict) -> dict:
    return dict(params)


def _coerce_kesten(params: dict) -> dict:
    out = dict(params)
    est = {}
    for key, dest in (("est_trials", "trials"), ("est_trial_cap", "trial_cap"),
                      ("est_epsilon", "epsilon")):
        if key in out:
            est[dest] = out.pop(key)
    if est:
        try:
            out["est_config"] = EstimatorConfig(**est)
        except ValueError as e:
            raise ConfigError(f"params: {e}") from None
    return out


REGISTRY = {
    "exp_kpoint": {
        "runner": X.exp_kpoint,
        "doc": "joint first-pond membership of chosen sites vs their "
               "joint membership in the origin's open cluster",
        "params": {
            "points": "list of [x, y] sites, each within horizon/4",
            "fullbox": "use every site of B(r) instead of points (r <= 3)",
            "trials": "number of invasion runs",
            "horizon": "invasion stop radius",
            "p_ref": "reference threshold (default 0.5)",
            "confirm_factor": "outlet confirmation headroom (default 4.0)",
            "confidence": "CI level (default 0.95)",
        },
        "required": ["trials", "horizon"],
        "coerce": _coerce_default,
        "smoke": {"points": [[1, 0]], "trials": 500, "horizon": 32},
    },
    "exp_pond_radii": {
        "runner": X.exp_pond_radii,
        "doc": "tail frequencies of pond growth radii and diameters "
               "against the one-arm benchmark",
        "params": {
            "k_max": "largest pond index",
            "n_grid": "list of scales, max <= horizon/8",
            "trials": "number of invasion runs",
            "horizon": "invasion stop radius",
            "p_ref": "reference threshold (default 0.5)",
            "confirm_factor": "outlet confirmation headroom (default 4.0)",
            "confidence": "CI level (default 0.95)",
        },
        "required": ["k_max", "n_grid", "trials", "horizon"],
        "coerce": _coerce_default,
        "smoke": {"k_max": 1, "n_grid": [8, 16], "trials": 1000,
                  "horizon": 128},
    },
    "exp_pond_clusters": {
        "runner": X.exp_pond_clusters,
        "doc": "frequency of a pond holding K open clusters of diameter N",
        "params": {
            "K": "cluster count threshold",
            "N": "diameter threshold, <= horizon/8",
            "trials": "number of invasion runs",
            "horizon": "invasion stop radius",
            "m_max": "deepest pond index reported (default 3)",
            "p_ref": "reference threshold (default 0.5)",
            "confirm_factor": "outlet confirmation headroom (default 4.0)",
            "confidence": "CI level (default 0.95)",
        },
        "required": ["K", "N", "trials", "horizon"],
        "coerce": _coerce_default,
        "smoke": {"K": 2, "N": 4, "trials": 500, "horizon": 64},
    },
    "exp_defect_scaling": {
        "runner": X.exp_defect_scaling,
        "doc": "boundary reach with a budget of closed bonds, "
               "normalized by the plain one-arm probability",
        "params": {
            "k_max": "largest defect budget",
            "n_grid": "list of box half-widths",
            "trials": "number of sampled configurations",
            "p_ref": "reference threshold (default 0.5)",
            "confidence": "CI level (default 0.95)",
        },
        "required": ["k_max", "n_grid", "trials"],
        "coerce": _coerce_default,
        "smoke": {"k_max": 1, "n_grid": [8, 16], "trials": 500},
    },
    "exp_kesten": {
        "runner": X.exp_kesten,
        "doc": "near-critical threshold excess times n^2 times the "
               "four-arm probability",
        "params": {
            "n_grid": "list of scales",
            "trials": "four-arm Monte Carlo trials per scale",
            "p_ref": "reference threshold (default 0.5)",
            "confidence": "CI level (default 0.95)",
            "est_trials": "threshold-estimator trials per decision",
            "est_trial_cap": "threshold-estimator escalation cap",
            "est_epsilon": "crossing-probability margin for the length scale",
        },
        "required": ["n_grid", "trials"],
        "coerce": _coerce_kesten,
        "smoke": {"n_grid": [4, 8], "trials": 400, "est_trials": 150,
                  "est_trial_cap": 600},
    },
    "exp_disconnect": {
        "runner": X.exp_disconnect,
        "doc": "absence of disconnecting bonds in an annulus on invasion "
               "clusters, conditioned critical configs, and arm counts",
        "params": {
            "m": "annulus inner radius",
            "n": "annulus outer radius, <= N/4",
            "N": "clip/conditioning radius",
            "trials": "invasion and arm trials",
            "iic_samples": "conditioned samples (default: trials)",
            "iic_attempt_cap": "rejection attempts per sample (default 400)",
            "p_ref": "reference threshold (default 0.5)",
            "confidence": "CI level (default 0.95)",
        },
        "required": ["m", "n", "N", "trials"],
        "coerce": _coerce_default,
        "smoke": {"m": 2, "n": 4, "N": 16, "trials": 300,
                  "iic_samples": 150},
    },
}

_RUN_KEYS = {"experiment", "params", "seed", "outdir", "workers",
             "chunk_size", "checkpoint_every", "checkpoint", "trace",
             "bands"}


def _load_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno}: "
                          f"{e.msg}") from None


def _validate_run_config(cfg: dict) -> dict:
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    for key in cfg:
        if key not in _RUN_KEYS:
            raise ConfigError(f"unknown key '{key}' in run config")
    for key in ("experiment", "params", "seed"):
        if key not in cfg:
            raise ConfigError(f"missing required key '{key}'")
    exp_id = cfg["experiment"]
    if exp_id not in REGISTRY:
        raise ConfigError(f"unknown experiment id '{exp_id}'")
    entry = REGISTRY[exp_id]
    params = cfg["params"]
    if not isinstance(params, dict):
        raise ConfigError("'params' must be a JSON object")
    for key in params:
        if key not in entry["params"]:
            raise ConfigError(
                f"unknown key 'params.{key}' for experiment {exp_id}")
    for key in entry["required"]:
        if key not in params:
            raise ConfigError(f"missing required key 'params.{key}'")
    if not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool):
        raise ConfigError("'seed' must be an integer")
    if not 0 <= cfg["seed"] < 2 ** 64:
        raise ConfigError("'seed' must fit in 64 bits")
    for key in ("workers", "chunk_size", "checkpoint_every"):
        if key in cfg and (not isinstance(cfg[key], int)
                           or isinstance(cfg[key], bool) or cfg[key] < 1):
            raise ConfigError(f"'{key}' must be a positive integer")
    if "trace" in cfg:
        tr = cfg["trace"]
        if (not isinstance(tr, dict)
                or set(tr) - {"trials", "horizon"}
                or "trials" not in tr or "horizon" not in tr):
            raise ConfigError(
                "'trace' must be an object with keys 'trials' and 'horizon'")
    return cfg


def _resolve_outdir(cfg: dict) -> str:
    outdir = cfg.get("outdir") or os.environ.get("PONDLAB_OUTDIR") or "."
    os.makedirs(outdir, exist_ok=True)
    return outdir


def _checkpoint_base(outdir: str, exp_id: str, params, seed: int,
                     chunk_size: int) -> str:
    ident = json.dumps({"experiment": exp_id, "params": params,
                        "seed": seed, "chunk_size": chunk_size},
                       sort_keys=True)
    h = hashlib.blake2b(ident.encode(), digest_size=6).hexdigest()
    return os.path.join(outdir, f".{exp_id}-{h}.ckpt")


def _write_trace_csv(path: str, trace) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("step,ax,ay,bx,by,tau,runmax\n")
        running = -1.0
        for i in range(trace.n_steps):
            tau = float(trace.tau[i])
            running = max(running, tau)
            fh.write(f"{i},{trace.edge_a[i, 0]},{trace.edge_a[i, 1]},"
                     f"{trace.edge_b[i, 0]},{trace.edge_b[i, 1]},"
                     f"{tau!r},{running!r}\n")


def _finish_code(result: X.ExperimentResult) -> int:
    flags = [row.get("underpowered") for row in result.rows
             if "underpowered" in row]
    if flags and all(flags):
        print("warning: every row is underpowered", file=sys.stderr)
        return 1
    return 0


def _cmd_run(args) -> int:
    cfg = _validate_run_config(_load_json(args.config))
    exp_id = cfg["experiment"]
    entry = REGISTRY[exp_id]
    kwargs = entry["coerce"](cfg["params"])
    seed = cfg["seed"]
    outdir = _resolve_outdir(cfg)
    chunk_size = cfg.get("chunk_size", 512)
    base = None
    options = None
    if cfg.get("checkpoint", True):
        base = _checkpoint_base(outdir, exp_id, cfg["params"], seed,
                                chunk_size)
    options = X.RunnerOptions(
        n_workers=cfg.get("workers", 1), chunk_size=chunk_size,
        checkpoint_path=base,
        checkpoint_every=cfg.get("checkpoint_every", 4))

    extra = {"run_config": cfg}
    if "bands" in cfg:
        extra["bands"] = _load_json(cfg["bands"])

    try:
        result = entry["runner"](**kwargs, seed=seed, options=options)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"{exp_id}: {e}") from None

    csv_path = os.path.join(outdir, f"{result.experiment}.csv")
    result.write(csv_path, extra=extra)
    if base:
        for stale in glob.glob(f"{base}*"):
            os.remove(stale)

    if "trace" in cfg:
        horizon = cfg["trace"]["horizon"]
        for t in cfg["trace"]["trials"]:
            trace = run_invasion(WeightField(seed, int(t)),
                                 exit_radius=int(horizon))
            _write_trace_csv(os.path.join(outdir, f"trace_{t}.csv"), trace)

    print(csv_path)
    return _finish_code(result)


def _cmd_list(_args) -> int:
    registry = {
        "version": __version__,
        "experiments": {
            exp_id: {"doc": entry["doc"], "params": entry["params"],
                     "required": entry["required"], "smoke": entry["smoke"]}
            for exp_id, entry in REGISTRY.items()
        },
        "oracle_commands": ["list", "export"],
    }
    print(json.dumps(registry, indent=2, sort_keys=True))
    return 0


def _oracle_fixtures() -> list[dict]:
    fixtures = []

    g1 = TinyGraph.from_region(box((0, 0), 1), name="box1")
    rim = [s for s in g1.vertices() if norm(s) == 1]
    prob = oracle_bernoulli_event(
        g1, Fraction(1, 2), lambda g, m: oc_connected(g, m, [(0, 0)], rim))
    fixtures.append({"name": "reach_rim_box1_half", "kind": "bernoulli",
                     "edges": g1.n_edges, "p": "1/2",
                     "probability": str(prob)})

    rect = TinyGraph.from_region(rectangle(0, 2, 0, 1), name="rect2x1")
    left = [s for s in rect.vertices() if s[0] == 0]
    right = [s for s in rect.vertices() if s[0] == 2]
    prob = oracle_bernoulli_event(
        rect, Fraction(1, 2), lambda g, m: oc_connected(g, m, left, right))
    fixtures.append({"name": "crossing_selfdual_rect_half",
                     "kind": "bernoulli", "edges": rect.n_edges, "p": "1/2",
                     "probability": str(prob)})

    single = TinyGraph(edge_list=(((0, 0), (1, 0)),), origin=(0, 0),
                       name="bond")
    prob = oracle_bernoulli_event(single, Fraction(1, 2),
                                  lambda g, m: bool(m & 1))
    fixtures.append({"name": "single_bond_open_half", "kind": "bernoulli",
                     "edges": 1, "p": "1/2", "probability": str(prob)})

    path = TinyGraph(edge_list=(((-1, 0), (0, 0)), ((0, 0), (1, 0)),
                                ((1, 0), (2, 0))), origin=(0, 0),
                     name="path3")

    def far_end_first(dec):
        sites = dec.trace.sites()
        return sites.index((2, 0)) < sites.index((-1, 0))

    prob = oracle_invasion_event(path, far_end_first)
    fixtures.append({"name": "path3_far_end_before_near", "kind": "ordering",
                     "edges": 3, "probability": str(prob)})
    return fixtures


def _cmd_oracle(args) -> int:
    if args.oracle_command == "list":
        print(json.dumps([f["name"] for f in _oracle_fixtures()], indent=2))
        return 0
    payload = {"version": __version__, "fixtures": _oracle_fixtures()}
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        tmp = f"{args.out}.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, args.out)
        print(args.out)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_replay(args) -> int:
    side = _load_json(args.sidecar)
    if not isinstance(side, dict) or "experiment" not in side:
        raise ConfigError(f"{args.sidecar} is not an experiment sidecar")
    exp_id = side["experiment"]
    if not exp_id.startswith("exp_"):
        exp_id = f"exp_{exp_id}"
    if exp_id not in REGISTRY:
        raise ConfigError(f"unknown experiment id '{side['experiment']}'")
    entry = REGISTRY[exp_id]
    for key in ("params", "seed"):
        if key not in side:
            raise ConfigError(f"sidecar is missing '{key}'")
    params = {k: v for k, v in side["params"].items()
              if k in entry["params"]}
    kwargs = entry["coerce"](params)
    try:
        result = entry["runner"](**kwargs, seed=side["seed"])
    except (ValueError, TypeError) as e:
        raise ConfigError(f"{exp_id}: {e}") from None

    csv_path = os.path.splitext(args.sidecar)[0] + ".csv"
    if os.path.exists(csv_path):
        stored = open(csv_path, "rb").read()
        if stored == result.csv_bytes():
            print(f"replay matches {csv_path}")
            return 0
        print(f"replay DIFFERS from {csv_path}", file=sys.stderr)
        return 1
    out = os.path.splitext(args.sidecar)[0] + ".replay.csv"
    with open(out, "wb") as fh:
        fh.write(result.csv_bytes())
    print(out)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pondlab",
        description="invasion percolation experiment runner")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config", help="path to a run config JSON file")
    p_run.set_defaults(func=_cmd_run)

    p_list = sub.add_parser("list", help="print the experiment registry")
    p_list.set_defaults(func=_cmd_list)

    p_oracle = sub.add_parser("oracle", help="exact-probability fixtures")
    osub = p_oracle.add_subparsers(dest="oracle_command", required=True)
    o_list = osub.add_parser("list", help="fixture names")
    o_list.set_defaults(func=_cmd_oracle)
    o_export = osub.add_parser("export", help="write fixtures as JSON")
    o_export.add_argument("--out", default=None, help="output path "
                          "(default: stdout)")
    o_export.set_defaults(func=_cmd_oracle)

    p_replay = sub.add_parser(
        "replay", help="re-run an experiment from its sidecar")
    p_replay.add_argument("sidecar", help="path to a result sidecar JSON")
    p_replay.set_defaults(func=_cmd_replay)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors already; keep its code
        return int(e.code or 0)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
