"""Command-line entry point: generate datasets, run experiments, compare runs.

Exit codes: 0 success, 2 invalid arguments or config schema violation,
3 dataset read failure, 4 training divergence.

Experiment configs are JSON documents with three sections (unknown keys are
rejected everywhere):

    {
      "dataset": {"path": "bench.clds"},
      "split":   {"mode": "cil", "num_tasks": 5, "test_fraction": 0.2, "seed": 1},
      "run":     {"method": "gdro", "epochs_per_task": 10,
                  "memory_capacity": 48, "seed": 7, ...},
      "output_dir": "out/run1"
    }

``split.mode`` may also be "dil" with a "domain_order" list.  ``run`` accepts
every RunConfig field.  The output directory is resolved from --out, then
``output_dir`` in the config, then the CCLEARN_OUTPUT_DIR environment
variable.  Each run directory receives accuracy.csv, log.jsonl, curve.svg and
run_meta.json; all bytes are a deterministic function of config and seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from .errors import DatasetFormatError, DivergenceError
from .report import (
    accuracy_csv_text,
    config_sha256,
    file_sha256,
    line_chart_svg,
    write_log_jsonl,
    write_svg,
)
from .runner import METHODS, RunConfig, run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATASET = 3
EXIT_DIVERGED = 4

OUTPUT_DIR_ENV = "CCLEARN_OUTPUT_DIR"


class ConfigError(Exception):
    pass


def _fail(code, message):
    print(f"error: {message}", file=sys.stderr)
    return code


# -------------------------------------------------------------------- schema

_RUN_KEYS = {f.name for f in dataclasses.fields(RunConfig)}
_SPLIT_KEYS_CIL = {"mode", "num_tasks", "test_fraction", "seed"}
_SPLIT_KEYS_DIL = {"mode", "domain_order", "test_fraction", "seed"}


def _check_keys(section, doc, allowed, required):
    if not isinstance(doc, dict):
        raise ConfigError(f"section {section!r} must be an object")
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")
    missing = required - set(doc)
    if missing:
        raise ConfigError(f"missing keys in {section!r}: {sorted(missing)}")


def validate_config(doc) -> dict:
    """Strict schema check; returns the document unchanged on success."""
    _check_keys("<root>", doc, {"dataset", "split", "run", "output_dir"}, {"dataset", "split", "run"})
    _check_keys("dataset", doc["dataset"], {"path"}, {"path"})
    split = doc["split"]
    mode = split.get("mode")
    if mode == "cil":
        _check_keys("split", split, _SPLIT_KEYS_CIL, {"mode", "num_tasks", "test_fraction", "seed"})
    elif mode == "dil":
        _check_keys("split", split, _SPLIT_KEYS_DIL, {"mode", "domain_order"})
    else:
        raise ConfigError(f"split.mode must be 'cil' or 'dil', got {mode!r}")
    _check_keys("run", doc["run"], _RUN_KEYS, {"method", "epochs_per_task", "memory_capacity", "seed"})
    if doc["run"]["method"] not in METHODS:
        raise ConfigError(f"run.method must be one of {METHODS}")
    if "output_dir" in doc and not isinstance(doc["output_dir"], str):
        raise ConfigError("output_dir must be a string")
    return doc


def _build_stream(ds, split):
    if split["mode"] == "cil":
        return data_mod.split_cil(ds, split["num_tasks"], split["test_fraction"], split["seed"])
    return data_mod.split_dil(
        ds,
        split["domain_order"],
        test_fraction=split.get("test_fraction", 0.2),
        seed=split.get("seed", 0),
    )


# ------------------------------------------------------------------ commands


def cmd_gen(args) -> int:
    try:
        ds = data_mod.gen_synthetic(
            args.classes, args.per_class, args.dim, args.separation, args.noise, args.seed
        )
        if args.domains:
            ds = data_mod.gen_domain_shift(ds, args.domains, args.shift, args.magnitude, args.seed)
        data_mod.save(ds, args.output)
    except (ValueError, OSError) as err:
        return _fail(EXIT_CONFIG, str(err))
    print(
        f"wrote {args.output}: {len(ds.samples)} samples, "
        f"{ds.num_classes} classes, dim {ds.input_dim}"
        + (f", {args.domains} domains" if args.domains else "")
    )
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        with open(args.config) as fh:
            doc = json.load(fh)
        validate_config(doc)
    except (OSError, json.JSONDecodeError, ConfigError) as err:
        return _fail(EXIT_CONFIG, f"config: {err}")

    data_path = args.data or doc["dataset"]["path"]
    out_dir = args.out or doc.get("output_dir") or os.environ.get(OUTPUT_DIR_ENV)
    if not out_dir:
        return _fail(
            EXIT_CONFIG,
            f"no output directory: use --out, config output_dir, or ${OUTPUT_DIR_ENV}",
        )

    try:
        ds = data_mod.load(data_path)
    except (OSError, DatasetFormatError) as err:
        return _fail(EXIT_DATASET, f"dataset: {err}")

    try:
        stream = _build_stream(ds, doc["split"])
        run_config = RunConfig(**doc["run"])
    except (ValueError, TypeError) as err:
        return _fail(EXIT_CONFIG, f"config: {err}")

    try:
        result = run(stream, run_config)
    except DivergenceError as err:
        return _fail(EXIT_DIVERGED, f"diverged: {err}")

    cfg_hash = config_sha256({"dataset": doc["dataset"], "split": doc["split"], "run": doc["run"]})
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_log_jsonl(
        [{"event": "run_meta", "config_sha256": cfg_hash}] + result.log, out / "log.jsonl"
    )
    with open(out / "accuracy.csv", "w", newline="\n") as fh:
        fh.write(accuracy_csv_text(result.accuracy, cfg_hash))
    stages = sorted(result.accuracy.aggregate)
    svg = line_chart_svg(
        [(run_config.method, [t + 1 for t in stages],
          [result.accuracy.aggregate[t] for t in stages])],
        title=f"Accuracy over stages ({run_config.method})",
        x_label="stage", y_label="accuracy",
    )
    write_svg(svg, out / "curve.svg")
    meta = {
        "config": {"dataset": doc["dataset"], "split": doc["split"], "run": doc["run"]},
        "config_sha256": cfg_hash,
        "stream_sha256": config_sha256(
            {"dataset_file": file_sha256(data_path), "split": doc["split"]}
        ),
        "method": run_config.method,
        "seed": run_config.seed,
        "memory_capacity": run_config.memory_capacity,
        "aggregate": {str(t): result.accuracy.aggregate[t] for t in stages},
        "final_aggregate": result.accuracy.final_aggregate(),
    }
    with open(out / "run_meta.json", "w", newline="\n") as fh:
        json.dump(meta, fh, sort_keys=True, indent=1)
        fh.write("\n")
    print(f"run complete: method={run_config.method} final={meta['final_aggregate']:.4f} -> {out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    if len(args.rundirs) < 2:
        return _fail(EXIT_CONFIG, "compare needs at least two run directories")
    metas = []
    for d in args.rundirs:
        meta_path = Path(d) / "run_meta.json"
        try:
            with open(meta_path) as fh:
                metas.append(json.load(fh))
        except (OSError, json.JSONDecodeError) as err:
            return _fail(EXIT_CONFIG, f"cannot read {meta_path}: {err}")
    stream_hashes = {m["stream_sha256"] for m in metas}
    if len(stream_hashes) != 1:
        return _fail(
            EXIT_CONFIG,
            "incompatible runs: they were executed on different datasets or splits",
        )

    groups: dict[tuple[str, int], list[dict]] = {}
    for m in metas:
        groups.setdefault((m["method"], m["memory_capacity"]), []).append(m)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = [
        f"# stream_sha256={next(iter(stream_hashes))}",
        "method,memory,n_runs,final_mean,final_std",
    ]
    series = []
    for (method, memory) in sorted(groups):
        runs = groups[(method, memory)]
        finals = np.array([m["final_aggregate"] for m in runs])
        lines.append(
            f"{method},{memory},{len(runs)},{float(finals.mean())!r},{float(finals.std())!r}"
        )
        stages = sorted(int(t) for t in runs[0]["aggregate"])
        curve = [float(np.mean([m["aggregate"][str(t)] for m in runs])) for t in stages]
        series.append((f"{method} (mem={memory})", [t + 1 for t in stages], curve))
    with open(out / "comparison.csv", "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    write_svg(
        line_chart_svg(series, title="Method comparison", x_label="stage", y_label="accuracy"),
        out / "comparison.svg",
    )
    print(f"compared {len(metas)} runs ({len(groups)} method/memory groups) -> {out}")
    return EXIT_OK


# --------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cclearn",
        description="Continual learning experiments for small bimodal contrastive models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic dataset file")
    gen.add_argument("--classes", type=int, required=True)
    gen.add_argument("--per-class", type=int, required=True, dest="per_class")
    gen.add_argument("--dim", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--separation", type=float, default=4.0)
    gen.add_argument("--noise", type=float, default=0.5)
    gen.add_argument("--domains", type=int, default=0, help="replicate across N shifted domains")
    gen.add_argument("--shift", choices=("rotation", "scaling", "mean-offset"), default="rotation")
    gen.add_argument("--magnitude", type=float, default=1.0)
    gen.add_argument("-o", "--output", required=True)
    gen.set_defaults(func=cmd_gen)

    runp = sub.add_parser("run", help="execute one experiment from a config file")
    runp.add_argument("--config", required=True)
    runp.add_argument("--data", help="override dataset.path from the config")
    runp.add_argument("-o", "--out", help="override the output directory")
    runp.set_defaults(func=cmd_run)

    comp = sub.add_parser("compare", help="aggregate finished run directories")
    comp.add_argument("rundirs", nargs="+")
    comp.add_argument("-o", "--out", required=True)
    comp.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
