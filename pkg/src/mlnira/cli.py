"""Command-line workflow: synth, fit, compare, icc, nira.

Every command reads an optional YAML config whose keys match the long flag
names (dashes or underscores); flags given on the command line win.  Data goes
to files under ``--out``; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .data import BinaryDataset, compute_icc, dichotomize, read_csv, write_csv
from .errors import ConfigurationError, NiraError
from .network import (
    FIXED,
    IsingConfig,
    NetworkModel,
    ebic_report,
    fit_multilevel_ising,
    fit_single_ising,
)
from .nira import ADJUST_METHODS, DIRECTIONS, SD_AXES, SubnetworkPartition, run_nira
from .plot import chart_csv, render_svg
from .sampler import SamplerConfig
from .synth import GeneratorSpec, bundled_spec, synth_generate, write_truth

log = logging.getLogger("mlnira")

DEFAULTS = {
    "out": ".",
    "threads": 1,
    "seed": 0,
    "group_column": "group",
    "nodes": None,
    "cutoff": 1,
    "model": "multilevel",
    "rule": "AND",
    "gamma": 0.25,
    "lambda_count": 50,
    "lambda_min_ratio": 0.01,
    "center": True,
    "threshold_mode": "total",
    "beta": 1.0,
    "burn_in": None,
    "thin": None,
    "n_samples": 5000,
    "direction": "alleviate",
    "k": 2.0,
    "level": FIXED,
    "adjust": "holm",
    "alpha": 0.05,
    "sd_axis": "nodes",
    "intervention_nodes": None,
    "outcome_nodes": None,
    "spec": None,
    "input": None,
}


def _split(value):
    if value is None or isinstance(value, (list, tuple)):
        return value
    return [v.strip() for v in str(value).split(",") if v.strip()]


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        raw = yaml.safe_load(Path(path).read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config {path} must be a mapping")
    cfg = {str(k).replace("-", "_"): v for k, v in raw.items()}
    unknown = sorted(set(cfg) - set(DEFAULTS))
    if unknown:
        raise ConfigurationError(f"config {path}: unknown keys {unknown}")
    return cfg


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults < config file < explicit flags."""
    merged = dict(DEFAULTS)
    merged.update(_load_config(getattr(args, "config", None)))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    for key in ("nodes", "intervention_nodes", "outcome_nodes"):
        merged[key] = _split(merged[key])
    if merged["threads"] < 1:
        raise ConfigurationError("threads must be >= 1")
    return merged


def _outdir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_binary(cfg: dict) -> BinaryDataset:
    if not cfg["input"]:
        raise ConfigurationError("an input CSV is required (--input)")
    ordinal = read_csv(cfg["input"], group_column=cfg["group_column"], node_columns=cfg["nodes"])
    return dichotomize(ordinal, int(cfg["cutoff"]))


def _write(path: Path, text: str) -> None:
    path.write_text(text)
    log.info("wrote %s", path)


def edges_csv(model: NetworkModel) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node_a", "node_b", "weight"])
    m = model.n_nodes
    for i in range(m):
        for j in range(i + 1, m):
            if model.weights[i, j] != 0:
                w.writerow([model.node_names[i], model.node_names[j], repr(float(model.weights[i, j]))])
    return buf.getvalue()


# --- commands ------------------------------------------------------------------


def cmd_synth(cfg: dict) -> int:
    spec = GeneratorSpec.load(cfg["spec"]) if cfg["spec"] else bundled_spec()
    if cfg["_seed_given"]:
        spec = GeneratorSpec(
            spec.true_W, spec.true_tau, spec.n_groups, spec.rows_per_group,
            spec.group_intercept_sd, int(cfg["seed"]), spec.node_names, spec.beta,
        )
    data, b = synth_generate(spec)
    out = _outdir(cfg)
    write_csv(data, out / "data.csv", group_column=cfg["group_column"])
    write_truth(spec, b, out / "truth.json")
    log.info("synthesized %d rows x %d nodes in %d groups", data.n_rows, data.n_nodes, data.n_groups)
    return 0


def _ising_config(cfg: dict) -> IsingConfig:
    return IsingConfig(
        rule=cfg["rule"],
        gamma=float(cfg["gamma"]),
        lambda_count=int(cfg["lambda_count"]),
        lambda_min_ratio=float(cfg["lambda_min_ratio"]),
        center=bool(cfg["center"]),
        threshold_mode=cfg["threshold_mode"],
        beta_inverse_temperature=float(cfg["beta"]),
        threads=int(cfg["threads"]),
    )


def cmd_fit(cfg: dict) -> int:
    if cfg["model"] not in ("multilevel", "single"):
        raise ConfigurationError("model must be 'multilevel' or 'single'")
    data = _load_binary(cfg)
    icfg = _ising_config(cfg)
    fit = fit_multilevel_ising if cfg["model"] == "multilevel" else fit_single_ising
    model = fit(data, icfg)
    out = _outdir(cfg)
    model.save(out / "model.json")
    label = "M" if cfg["model"] == "multilevel" else "S"
    table = ebic_report([model], [label])
    _write(out / "ebic.csv", table.to_csv())
    _write(out / "ebic.txt", table.format())
    _write(out / "edges.csv", edges_csv(model))
    log.info("wrote %s (sha256 %s)", out / "model.json", model.sha256())
    return 0


def cmd_compare(cfg: dict, models: list[str]) -> int:
    if len(models) != 2:
        raise ConfigurationError("compare needs exactly two model artifacts")
    loaded = [NetworkModel.load(p) for p in models]
    if loaded[0].node_names != loaded[1].node_names:
        raise ConfigurationError("the two models have different node lists")
    labels = ["M" if m.multilevel else "S" for m in loaded]
    if labels[0] == labels[1]:
        labels = ["A", "B"]
    table = ebic_report(loaded, labels)
    out = _outdir(cfg)
    _write(out / "ebic_comparison.csv", table.to_csv())
    _write(out / "ebic_comparison.txt", table.format())
    a, b = table.column(labels[0]), table.column(labels[1])
    if labels == ["A", "B"]:
        verdict = f"{int(np.sum(a < b))} of {len(a)} nodes have lower EBIC in model A"
    else:
        ml, sl = (a, b) if labels[0] == "M" else (b, a)
        verdict = f"multilevel EBIC lower on {int(np.sum(ml < sl))} of {len(ml)} nodes"
    _write(out / "verdict.txt", verdict + "\n")
    print(verdict, file=sys.stderr)
    return 0


def cmd_icc(cfg: dict) -> int:
    data = _load_binary(cfg)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node", "icc"])
    for node in data.node_names:
        w.writerow([node, repr(compute_icc(data, node))])
    _write(_outdir(cfg) / "icc.csv", buf.getvalue())
    return 0


def cmd_nira(cfg: dict, model_path: str) -> int:
    model = NetworkModel.load(model_path)
    level = str(cfg["level"])
    if level != FIXED and not model.multilevel:
        raise ConfigurationError(f"level {level!r} requires a multilevel model")
    partition = None
    if cfg["intervention_nodes"] or cfg["outcome_nodes"]:
        if not (cfg["intervention_nodes"] and cfg["outcome_nodes"]):
            raise ConfigurationError("give both intervention and outcome node sets, or neither")
        partition = SubnetworkPartition(tuple(cfg["intervention_nodes"]), tuple(cfg["outcome_nodes"]))
    sampler = SamplerConfig(
        beta=float(cfg["beta"]),
        burn_in=cfg["burn_in"],
        thin=cfg["thin"],
        n_samples=int(cfg["n_samples"]),
        seed=int(cfg["seed"]),
    )
    _, report = run_nira(
        model,
        level=level,
        direction=cfg["direction"],
        config=sampler,
        partition=partition,
        magnitude_sd=float(cfg["k"]),
        adjust=cfg["adjust"],
        alpha=float(cfg["alpha"]),
        sd_axis=cfg["sd_axis"],
        threads=int(cfg["threads"]),
    )
    out = _outdir(cfg)
    report.save(out, "nira_report")
    ranking = "\n".join(f"{i + 1}. {t}" for i, t in enumerate(report.ranking))
    _write(out / "ranking.txt", ranking + "\n")
    _write(out / "chart.svg", render_svg(report))
    _write(out / "chart.csv", chart_csv(report))
    log.info("baseline mean total %.4f; top target %s", report.baseline_mean, report.ranking[0])
    return 0


# --- parser ----------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML file with defaults for any flag")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (created if missing)")
    p.add_argument("--threads", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def _data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", help="survey CSV with a group column")
    p.add_argument("--group-column", dest="group_column")
    p.add_argument("--nodes", help="comma-separated node columns (default: all but group)")
    p.add_argument("--cutoff", type=int, help="responses >= cutoff become 1")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mlnira", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a nested binary dataset with known parameters")
    _common(p)
    p.add_argument("--spec", help="generator YAML (default: bundled 7-node, 32-group preset)")
    p.add_argument("--group-column", dest="group_column")

    p = sub.add_parser("fit", help="estimate a single- or multilevel Ising network")
    _common(p)
    _data_flags(p)
    p.add_argument("--model", choices=("multilevel", "single"))
    p.add_argument("--rule", choices=("AND", "OR"))
    p.add_argument("--gamma", type=float)
    p.add_argument("--lambda-count", dest="lambda_count", type=int)
    p.add_argument("--lambda-min-ratio", dest="lambda_min_ratio", type=float)
    p.add_argument("--threshold-mode", dest="threshold_mode", choices=("total", "random_only"))
    p.add_argument("--no-center", dest="center", action="store_false", default=None)
    p.add_argument("--beta", type=float, help="inverse temperature stored in the model")

    p = sub.add_parser("compare", help="per-node EBIC table for two fitted models")
    _common(p)
    p.add_argument("models", nargs=2, metavar="MODEL")

    p = sub.add_parser("icc", help="per-node intraclass correlation")
    _common(p)
    _data_flags(p)

    p = sub.add_parser("nira", help="simulate threshold interventions on a fitted model")
    _common(p)
    p.add_argument("model", metavar="MODEL")
    p.add_argument("--level", help="'fixed' or a group name")
    p.add_argument("--direction", choices=DIRECTIONS)
    p.add_argument("--k", type=float, help="shift size in threshold SDs")
    p.add_argument("--adjust", choices=ADJUST_METHODS)
    p.add_argument("--alpha", type=float)
    p.add_argument("--sd-axis", dest="sd_axis", choices=SD_AXES)
    p.add_argument("--intervention-nodes", dest="intervention_nodes")
    p.add_argument("--outcome-nodes", dest="outcome_nodes")
    p.add_argument("--beta", type=float)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--n-samples", dest="n_samples", type=int)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = resolve(args)
        cfg["_seed_given"] = args.seed is not None or "seed" in _load_config(args.config)
        if args.command == "synth":
            return cmd_synth(cfg)
        if args.command == "fit":
            return cmd_fit(cfg)
        if args.command == "compare":
            return cmd_compare(cfg, args.models)
        if args.command == "icc":
            return cmd_icc(cfg)
        return cmd_nira(cfg, args.model)
    except NiraError as exc:
        print(f"mlnira {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"mlnira {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
