"""Command-line pipeline: synth -> ingest -> featurize -> label -> split -> train/tune -> evaluate.

Exit codes: 0 success, 1 I/O error, 2 validation error (including usage),
3 internal invariant breach.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__
from .errors import InvariantError, WFError

log = logging.getLogger("wfprint")

# Per-command defaults; values from --config and then explicit flags override them.
DEFAULTS = {
    "synth": {"kind": "capture", "sites": 10, "untargeted": 0, "visits": 3, "rows_per_class": 200,
              "separability": 1.0, "imbalance": None, "format": "pcapng", "byte_order": "little",
              "list": None, "truth": None},
    "ingest": {"idle_timeout": 120.0, "active_timeout": 3600.0, "tcp_close": True},
    "featurize": {"decimals": None},
    "label": {},
    "split": {"ratios": "0.7,0.15,0.15", "stratify": "BINARY"},
    "train": {"split": None, "task": "BINARY", "params": "{}", "missing": "IMPUTE_MEDIAN",
              "scaler": "ZSCORE", "dedup": True},
    "tune": {"split": None, "task": "BINARY", "grid": None, "folds": 5, "scoring": "accuracy",
             "results": None, "missing": "IMPUTE_MEDIAN", "scaler": "ZSCORE", "dedup": True},
    "evaluate": {"task": "BINARY", "kinds": "DT,RF,GBM,ADAB,SVM,NB,KNN", "grid": None, "no_tune": False,
                 "folds": 5, "scoring": "accuracy", "positive_class": "TARGETED", "averaging": None,
                 "csv": None, "missing": "IMPUTE_MEDIAN", "scaler": "ZSCORE", "dedup": True},
}
SEEDED = {"synth", "split", "train", "tune", "evaluate"}


def _policy_args(p):
    p.add_argument("--missing", choices=["DROP", "IMPUTE_MEDIAN"])
    p.add_argument("--scaler", choices=["ZSCORE", "MINMAX", "NONE"])
    p.add_argument("--no-dedup", dest="dedup", action="store_const", const=False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wfprint", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="JSON file of option values (top level or per-command sections)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic capture or dataset")
    p.add_argument("--kind", choices=["capture", "dataset"])
    p.add_argument("--sites", type=int)
    p.add_argument("--untargeted", type=int, help="how many of the sites are untargeted")
    p.add_argument("--visits", type=int)
    p.add_argument("--rows-per-class", type=int)
    p.add_argument("--separability", type=float)
    p.add_argument("--imbalance", type=float, help="targeted fraction of dataset rows")
    p.add_argument("--format", choices=["pcapng", "pcap", "pcap-ns"])
    p.add_argument("--byte-order", choices=["little", "big"])
    p.add_argument("--list", help="monitored-list output path (capture)")
    p.add_argument("--truth", help="ground-truth CSV output path (capture)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("ingest", help="capture file -> flow CSV")
    p.add_argument("capture")
    p.add_argument("--idle-timeout", type=float)
    p.add_argument("--active-timeout", type=float)
    p.add_argument("--no-tcp-close", dest="tcp_close", action="store_const", const=False)
    p.add_argument("--out", required=True)

    p = sub.add_parser("featurize", help="flow CSV -> unlabelled feature CSV")
    p.add_argument("--flows", required=True)
    p.add_argument("--decimals", type=int, help="round features for presentation")
    p.add_argument("--out", required=True)

    p = sub.add_parser("label", help="attach monitored-list labels to features")
    p.add_argument("--flows", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--list", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("split", help="stratified TRAIN/VALIDATION/TEST assignment")
    p.add_argument("--dataset", required=True)
    p.add_argument("--ratios")
    p.add_argument("--stratify", choices=["BINARY", "SITE"])
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="fit one classifier")
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", help="split CSV; TRAIN rows are used when given")
    p.add_argument("--kind", required=True)
    p.add_argument("--params", help="JSON object of hyperparameters")
    p.add_argument("--task", choices=["BINARY", "MULTICLASS"])
    _policy_args(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("tune", help="cross-validated grid search")
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", help="split CSV; TRAIN rows are used when given")
    p.add_argument("--kind", required=True)
    p.add_argument("--grid", help="JSON grid file {name: [values]} or {kind: {...}}; default grid otherwise")
    p.add_argument("--folds", type=int)
    p.add_argument("--scoring", choices=["accuracy", "f1"])
    p.add_argument("--task", choices=["BINARY", "MULTICLASS"])
    p.add_argument("--results", help="grid results CSV output path")
    _policy_args(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="tune on TRAIN, score on TEST, print the report table")
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--kinds", help="comma-separated classifier kinds")
    p.add_argument("--grid", help="JSON file {kind: {name: [values]}}; default grids otherwise")
    p.add_argument("--no-tune", action="store_const", const=True)
    p.add_argument("--folds", type=int)
    p.add_argument("--scoring", choices=["accuracy", "f1"])
    p.add_argument("--task", choices=["BINARY", "MULTICLASS"])
    p.add_argument("--positive-class")
    p.add_argument("--averaging", choices=["MACRO", "WEIGHTED", "BINARY_POSITIVE"])
    p.add_argument("--csv", help="also write the report as CSV")
    _policy_args(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    return parser


def resolve_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> dict:
    """Merge defaults < config file < flags."""
    cfg = dict(DEFAULTS.get(args.command, {}))
    if args.command in SEEDED:
        cfg["seed"] = None
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            filed = json.load(fh)
        if not isinstance(filed, dict):
            raise ValueError("config file must hold a JSON object")
        section = filed.get(args.command, {})
        flat = {k.replace("-", "_"): v for k, v in filed.items() if not isinstance(v, dict)}
        flat.update({k.replace("-", "_"): v for k, v in section.items()})
        cfg.update(flat)
    for key, value in vars(args).items():
        if key in ("config", "verbose", "command"):
            continue
        if value is not None or key not in cfg:
            cfg[key] = value
    if args.command in SEEDED and cfg.get("seed") is None:
        parser.error(f"{args.command} requires --seed (or 'seed' in --config)")
    return cfg


def _policy(cfg):
    from .dataset import PreprocessPolicy

    return PreprocessPolicy(cfg["dedup"], cfg["missing"], cfg["scaler"])


def _read_dataset(cfg, with_split: bool):
    from .dataset import read_dataset_csv, read_split_csv

    with open(cfg["dataset"], newline="", encoding="utf-8") as fh:
        ds = read_dataset_csv(fh)
    if with_split and cfg.get("split"):
        with open(cfg["split"], newline="", encoding="utf-8") as fh:
            ds = ds.with_split(read_split_csv(fh, len(ds)))
    return ds


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def cmd_synth(cfg):
    from . import synth
    from .capture.reader import ByteOrder, CaptureFormat
    from .dataset import write_dataset_csv

    profiles = synth.make_profiles(cfg["sites"], cfg["seed"], n_untargeted=cfg["untargeted"])
    if cfg["kind"] == "dataset":
        ds = synth.generate_dataset(profiles, cfg["rows_per_class"], cfg["separability"],
                                    cfg["imbalance"], cfg["seed"])
        with open(cfg["out"], "w", newline="", encoding="utf-8") as fh:
            write_dataset_csv(fh, ds)
        print(f"wrote {len(ds)} rows to {cfg['out']}")
        return 0
    fmt = {"pcapng": CaptureFormat.PCAPNG, "pcap": CaptureFormat.PCAP_US,
           "pcap-ns": CaptureFormat.PCAP_NS}[cfg["format"]]
    order = ByteOrder.LITTLE if cfg["byte_order"] == "little" else ByteOrder.BIG
    cap = synth.synthesize(profiles, cfg["visits"], cfg["seed"], cfg["separability"])
    with open(cfg["out"], "wb") as fh:
        fh.write(cap.to_bytes(fmt, order))
    list_path = cfg["list"] or os.path.splitext(cfg["out"])[0] + ".monitored.txt"
    truth_path = cfg["truth"] or os.path.splitext(cfg["out"])[0] + ".truth.csv"
    _write_text(list_path, cap.monitored.to_text())
    _write_text(truth_path, cap.truth_csv())
    print(f"wrote {len(cap.frames)} packets in {len(cap.flows)} flows to {cfg['out']}")
    return 0


def cmd_ingest(cfg):
    from .capture import decode_capture
    from .flows import FlowAssembler, flow_stats, format_flow_stats, write_flows_csv

    stats: dict = {}
    asm = FlowAssembler(cfg["idle_timeout"], cfg["active_timeout"], cfg["tcp_close"])
    for pkt in decode_capture(cfg["capture"], stats):
        asm.add(pkt)
    flows = asm.finish()
    with open(cfg["out"], "w", newline="", encoding="utf-8") as fh:
        write_flows_csv(fh, flows)
    print(format_flow_stats(flow_stats(flows)))
    print(f"packets read: {stats.get('packets', 0)}, skipped: {stats.get('skipped', 0)}, "
          f"non-TCP/UDP dropped: {asm.dropped}")
    return 0


def cmd_featurize(cfg):
    from .dataset import LabeledDataset, write_dataset_csv
    from .features import feature_matrix, featurize
    from .flows import read_flows_csv

    with open(cfg["flows"], newline="", encoding="utf-8") as fh:
        flows = read_flows_csv(fh)
    X = feature_matrix([featurize(f) for f in flows])
    ds = LabeledDataset(X, [None] * len(flows), [None] * len(flows))
    with open(cfg["out"], "w", newline="", encoding="utf-8") as fh:
        write_dataset_csv(fh, ds, cfg["decimals"])
    print(f"featurized {len(flows)} flows")
    return 0


def cmd_label(cfg):
    from .dataset import MonitoredList, label, read_dataset_csv, write_dataset_csv
    from .flows import read_flows_csv

    with open(cfg["flows"], newline="", encoding="utf-8") as fh:
        flows = read_flows_csv(fh)
    with open(cfg["features"], newline="", encoding="utf-8") as fh:
        feats = read_dataset_csv(fh)
    with open(cfg["list"], encoding="utf-8") as fh:
        mlist = MonitoredList.parse(fh.read())
    ds = label(flows, feats.X, mlist)
    with open(cfg["out"], "w", newline="", encoding="utf-8") as fh:
        write_dataset_csv(fh, ds)
    n_t = int((ds.binary == "TARGETED").sum())
    print(f"Targeted data    {n_t}\nUntargeted data  {len(ds) - n_t}\nTotal            {len(ds)}")
    return 0


def cmd_split(cfg):
    from .dataset import PARTITIONS, split, write_split_csv

    ds = _read_dataset(cfg, with_split=False)
    ratios = [float(r) for r in str(cfg["ratios"]).split(",")]
    ds = split(ds, ratios, cfg["stratify"].upper().replace("SITE", "MULTICLASS"), cfg["seed"])
    with open(cfg["out"], "w", newline="", encoding="utf-8") as fh:
        write_split_csv(fh, ds)
    for name in PARTITIONS:
        print(f"{name:<10} {int((ds.split == name).sum())}")
    return 0


def _training_rows(ds):
    from .dataset import TRAIN

    return ds.partition(TRAIN) if ds.split is not None else ds


def cmd_train(cfg):
    from .learners import ClassifierSpec, fit

    ds = _training_rows(_read_dataset(cfg, with_split=True))
    params = cfg["params"] if isinstance(cfg["params"], dict) else json.loads(cfg["params"])
    spec = ClassifierSpec(cfg["kind"], params, cfg["seed"])
    model = fit(spec, ds, cfg["task"], _policy(cfg))
    with open(cfg["out"], "wb") as fh:
        fh.write(model.save())
    print(f"trained {spec.display_name} on {len(ds)} rows; classes {model.classes}")
    return 0


def _load_grid(path):
    with open(path, encoding="utf-8") as fh:
        grid = json.load(fh)
    if not isinstance(grid, dict):
        raise ValueError(f"{path} must hold a JSON object")
    return grid


def cmd_tune(cfg):
    from .evaluation import grid_search
    from .learners import DEFAULT_GRIDS

    ds = _training_rows(_read_dataset(cfg, with_split=True))
    kind = cfg["kind"].upper()
    grid = _load_grid(cfg["grid"]) if cfg["grid"] else DEFAULT_GRIDS[kind]
    if kind in grid and isinstance(grid[kind], dict):
        grid = grid[kind]
    result = grid_search(kind, grid, ds, cfg["folds"], cfg["task"], cfg["seed"], policy=_policy(cfg),
                         scoring=cfg["scoring"])
    with open(cfg["out"], "wb") as fh:
        fh.write(result.model.save())
    if cfg["results"]:
        with open(cfg["results"], "w", newline="", encoding="utf-8") as fh:
            result.write_csv(fh)
    best = result.results[result.best_index][1]
    print(f"best {kind} {json.dumps(result.best_spec.hyperparameters, sort_keys=True)} "
          f"mean {cfg['scoring']} {best.mean:.4f}")
    return 0


def cmd_evaluate(cfg):
    from .evaluation import evaluate_suite
    from .learners import DEFAULT_GRIDS, ClassifierSpec

    ds = _read_dataset(cfg, with_split=True)
    kinds = [k.strip().upper() for k in str(cfg["kinds"]).split(",") if k.strip()]
    specs = [ClassifierSpec(k, {}, cfg["seed"]) for k in kinds]
    if cfg["no_tune"]:
        grids = {}
    else:
        grids = _load_grid(cfg["grid"]) if cfg["grid"] else DEFAULT_GRIDS
    report = evaluate_suite(specs, ds, cfg["task"], grids, cfg["folds"], _policy(cfg),
                            cfg["positive_class"], cfg["averaging"], cfg["scoring"])
    text = report.to_text()
    _write_text(cfg["out"], text)
    if cfg["csv"]:
        with open(cfg["csv"], "w", newline="", encoding="utf-8") as fh:
            report.write_csv(fh)
    sys.stdout.write(text)
    return 0


COMMANDS = {"synth": cmd_synth, "ingest": cmd_ingest, "featurize": cmd_featurize, "label": cmd_label,
            "split": cmd_split, "train": cmd_train, "tune": cmd_tune, "evaluate": cmd_evaluate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args, parser)
        log.info("resolved config for %s: %s", args.command, json.dumps(cfg, sort_keys=True, default=str))
        return COMMANDS[args.command](cfg)
    except OSError as exc:
        print(f"wfprint: I/O error: {exc}", file=sys.stderr)
        return 1
    except (InvariantError, AssertionError) as exc:
        print(f"wfprint: internal invariant breached: {exc}", file=sys.stderr)
        return 3
    except (WFError, ValueError, KeyError, TypeError) as exc:
        print(f"wfprint: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
