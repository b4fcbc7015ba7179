"""Command line entry point.

Four subcommands, each reading a JSON config and writing JSON output:

* ``gen``            synthetic-graph spec -> graph file
* ``train``          one (architecture, task) over n trials -> report JSON
* ``bench``          architectures x {lpe on, off} -> delta table JSON + markdown
* ``spectral-dump``  graph file -> serialized spectral basis

Exit codes: 0 success, 1 usage or config error, 2 runtime or numerical
failure. Every command is deterministic: identical inputs reproduce output
files byte for byte.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, fields, replace

from .errors import ConfigError, FormatError, InvalidInput, NoConvergence, NumericalFailure
from .graph import SyntheticSpec, gen_synthetic, load_graph, save_graph, synthetic_spec_from_dict
from .spectral import compute_basis
from .tasks import ARCHITECTURES, ModelConfig, TrainReport, TrialResult, aggregate, run_trials

_MODEL_FIELDS = {f.name: f.type for f in fields(ModelConfig)}


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc


def _dump_json(doc, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def _require(doc, key, where="config"):
    if key not in doc:
        raise ConfigError(f"missing config key: {key} (in {where})")
    return doc[key]


def _model_config(doc, task, seed):
    cfg = ModelConfig(task=task, seed=seed)
    unknown = set(doc) - set(_MODEL_FIELDS)
    if unknown:
        raise ConfigError(f"unknown model config key(s): {sorted(unknown)}")
    cfg = replace(cfg, **doc)
    try:
        return cfg.validate()
    except InvalidInput as exc:
        raise ConfigError(str(exc)) from exc


def _resolve_dataset(doc, where="dataset"):
    if "path" in doc and "synthetic" in doc:
        raise ConfigError(f"{where}: give either path or synthetic, not both")
    if "path" in doc:
        return load_graph(doc["path"])
    if "synthetic" in doc:
        return gen_synthetic(synthetic_spec_from_dict(doc["synthetic"]))
    raise ConfigError(f"missing config key: path or synthetic (in {where})")


# ---------------------------------------------------------------------------
# commands


def cmd_gen(config_path, out_path, seed=None):
    doc = _load_json(config_path)
    spec = synthetic_spec_from_dict(doc)
    if seed is not None:
        spec = replace(spec, seed=seed)
    save_graph(gen_synthetic(spec), out_path)
    print(f"wrote graph: {out_path}")
    return 0


def cmd_train(config_path, out_path, seed=None, trials=None):
    doc = _load_json(config_path)
    task = str(_require(doc, "task"))
    g = _resolve_dataset(_require(doc, "dataset"))
    n_trials = int(trials if trials is not None else doc.get("trials", 5))
    base_seed = int(seed if seed is not None else doc.get("seed", 0))
    cfg = _model_config(doc.get("model", {}), task, base_seed)
    report = run_trials(g, cfg, n_trials)
    _dump_json(report.to_dict(), out_path)
    print(f"{cfg.architecture} / {task}: {report.metric} mean {report.mean:.4f} "
          f"variance {report.variance:.6f} over {n_trials} trial(s)")
    print(f"wrote report: {out_path}")
    return 0


def params_to_doc(params):
    """Model parameter bundle (any layer or encoder params object exposing
    ``state_dict``) as a JSON-ready dict."""
    return {name: arr.tolist() for name, arr in params.state_dict().items()}


def params_from_doc(params, doc):
    """Load a ``params_to_doc`` dump back into an identically shaped bundle."""
    import numpy as np

    params.load_state_dict({name: np.asarray(v, dtype=np.float64) for name, v in doc.items()})
    return params


def train_report_from_dict(doc):
    trials = [TrialResult(
        seed=t["seed"], test_f1_macro=t["test_f1_macro"], test_f1_micro=t["test_f1_micro"],
        val_f1=t.get("val_f1", 0.0), train_f1=t.get("train_f1", 0.0),
        epochs=t["epochs"], loss_curve=list(t["loss_curve"]),
        test_f1_binary=t.get("test_f1_binary"),
    ) for t in doc["trials"]]
    return TrainReport(config_hash=doc["config_hash"], metric=doc["metric"],
                       trials=trials, mean=doc["mean"], variance=doc["variance"])


def bench_report_from_dict(doc):
    """Validate and return a bench report dict written by ``cmd_bench``."""
    for key in ("cells", "architectures", "table_markdown"):
        if key not in doc:
            raise ConfigError(f"bench report missing key: {key}")
    for cell in doc["cells"]:
        for key in ("dataset", "task", "architecture", "lpe_on", "lpe_off", "delta_pp"):
            if key not in cell:
                raise ConfigError(f"bench cell missing key: {key}")
    return doc


def basis_from_dict(doc):
    """Rebuild a SpectralBasis from a ``spectral-dump`` JSON document."""
    import numpy as np

    from .spectral import SpectralBasis

    for key in ("m", "eigenvalues", "eigenvectors", "mask"):
        if key not in doc:
            raise ConfigError(f"basis file missing key: {key}")
    return SpectralBasis(
        m=int(doc["m"]),
        eigenvalues=np.asarray(doc["eigenvalues"], dtype=np.float64),
        vectors=np.asarray(doc["eigenvectors"], dtype=np.float64),
        pad_mask=np.asarray(doc["mask"], dtype=bool),
    )


def _delta(report_on, report_off, task):
    on = [t.headline(task) for t in report_on.trials]
    off = [t.headline(task) for t in report_off.trials]
    per_trial = [100.0 * (a - b) for a, b in zip(on, off)]
    mean_pp = 100.0 * (report_on.mean - report_off.mean)
    _, var_pp = aggregate(per_trial)
    return mean_pp, var_pp


def build_bench_cells(runs):
    """``runs`` maps (dataset, task, architecture) -> (report_on, report_off);
    returns the sorted cell list for the bench report."""
    cells = []
    for (dataset, task, arch) in sorted(runs):
        report_on, report_off = runs[(dataset, task, arch)]
        dm, dv = _delta(report_on, report_off, task)
        cells.append({
            "dataset": dataset,
            "task": task,
            "architecture": arch,
            "lpe_on": {"mean": report_on.mean, "variance": report_on.variance},
            "lpe_off": {"mean": report_off.mean, "variance": report_off.variance},
            "delta_pp": {"mean": dm, "variance": dv},
        })
    return cells


def bench_markdown(cells, architectures):
    """Pipe-delimited table, one row per dataset/task, one column per
    architecture, cells formatted "(+mean, variance)" in percentage points
    with the column maximum bolded."""
    rows = sorted({(c["dataset"], c["task"]) for c in cells})
    by_key = {(c["dataset"], c["task"], c["architecture"]): c for c in cells}
    best = {}
    for arch in architectures:
        col = [by_key[(d, t, arch)]["delta_pp"]["mean"]
               for (d, t) in rows if (d, t, arch) in by_key]
        best[arch] = max(col) if col else None
    lines = ["| Dataset / Task | " + " | ".join(a.upper() for a in architectures) + " |",
             "|---" * (len(architectures) + 1) + "|"]
    for (d, t) in rows:
        cols = []
        for arch in architectures:
            cell = by_key.get((d, t, arch))
            if cell is None:
                cols.append("-")
                continue
            dm = cell["delta_pp"]["mean"]
            dv = cell["delta_pp"]["variance"]
            text = f"({dm:+.1f}, {dv:.1f})"
            if best[arch] is not None and dm == best[arch]:
                text = f"**{text}**"
            cols.append(text)
        lines.append(f"| {d} / {t} | " + " | ".join(cols) + " |")
    return "\n".join(lines) + "\n"


def cmd_bench(config_path, out_path, seed=None, trials=None):
    doc = _load_json(config_path)
    datasets = _require(doc, "datasets")
    architectures = [str(a) for a in doc.get("architectures", list(ARCHITECTURES))]
    for a in architectures:
        if a not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {a!r}")
    n_trials = int(trials if trials is not None else doc.get("trials", 5))
    base_seed = int(seed if seed is not None else doc.get("seed", 0))
    model_doc = doc.get("model", {})

    runs = {}
    for ds in datasets:
        name = str(_require(ds, "name", "datasets[]"))
        task = str(ds.get("task", "node"))
        g = _resolve_dataset(ds, f"datasets[{name}]")
        for arch in architectures:
            per_arch = dict(model_doc)
            per_arch["architecture"] = arch
            reports = {}
            for lpe in (True, False):
                cfg = _model_config({**per_arch, "use_lpe": lpe}, task, base_seed)
                reports[lpe] = run_trials(g, cfg, n_trials)
            runs[(name, task, arch)] = (reports[True], reports[False])

    cells = build_bench_cells(runs)
    table = bench_markdown(cells, architectures)
    _dump_json({"cells": cells, "architectures": architectures, "trials": n_trials,
                "seed": base_seed, "table_markdown": table}, out_path)
    md_path = out_path + ".md"
    with open(md_path, "w", encoding="utf-8") as fh:
        fh.write(table)
    print(table)
    print(f"wrote report: {out_path} and {md_path}")
    return 0


def cmd_spectral_dump(config_path, out_path, graph=None, m=None):
    doc = _load_json(config_path) if config_path else {}
    graph_path = graph if graph is not None else _require(doc, "graph")
    m_val = int(m if m is not None else _require(doc, "m"))
    g = load_graph(graph_path)
    basis = compute_basis(g, m_val)
    _dump_json({
        "m": basis.m,
        "eigenvalues": [float(x) for x in basis.eigenvalues],
        "eigenvectors": [[float(x) for x in row] for row in basis.vectors],
        "mask": [bool(x) for x in basis.pad_mask],
    }, out_path)
    print(f"wrote basis: {out_path}")
    return 0


# ---------------------------------------------------------------------------
# argument plumbing


def _build_parser():
    parser = argparse.ArgumentParser(prog="hetattn",
                                     description="heterogeneous graph attention experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("gen", "train", "bench", "spectral-dump"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=(name != "spectral-dump"))
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--trials", type=int, default=None)
        if name == "spectral-dump":
            p.add_argument("--graph", default=None)
            p.add_argument("--m", type=int, default=None)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "gen":
            return cmd_gen(args.config, args.out, args.seed)
        if args.command == "train":
            return cmd_train(args.config, args.out, args.seed, args.trials)
        if args.command == "bench":
            return cmd_bench(args.config, args.out, args.seed, args.trials)
        return cmd_spectral_dump(args.config, args.out, args.graph, args.m)
    except (ConfigError, FormatError, InvalidInput) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalFailure, NoConvergence) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # keep the promised exit-code contract
        print(f"failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
