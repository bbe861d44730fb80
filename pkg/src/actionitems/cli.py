"""Command-line entry point: ingest -> stats/candidates -> context -> train ->
evaluate -> report, plus checkpoint surgery via ensemble-init.

Every command accepts ``--config FILE`` (YAML or JSON, keys = option names
with underscores); explicit flags override the file, the file overrides
defaults.  The fully resolved configuration is echoed to
``<run-dir>/config.resolved`` so any run can be reproduced bit-for-bit with
``--config config.resolved`` when seeds are fixed.

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import yaml

from . import corpus as corpus_mod
from . import context as context_mod
from . import evaluation as eval_mod
from . import training as train_mod
from .errors import (
    ActionItemsError,
    ConfigError,
    LayerCompatibilityError,
    SchemaValidationError,
    TranscriptParseError,
)
from .model import ParameterSet, TinyTextClassifier, ensemble_init, load_ensemble_manifest

DATA_DIR_ENV = "ACTIONITEMS_DATA_DIR"

COMMANDS = (
    "ingest",
    "stats",
    "split",
    "candidates",
    "context",
    "train",
    "evaluate",
    "ensemble-init",
    "report",
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); we want exit code 1
        raise ConfigError(message)


def _floats(value) -> tuple[float, ...]:
    if isinstance(value, (list, tuple)):
        return tuple(float(v) for v in value)
    return tuple(float(v) for v in str(value).split(","))


def _ints(value) -> tuple[int, ...]:
    if isinstance(value, (list, tuple)):
        return tuple(int(v) for v in value)
    return tuple(int(v) for v in str(value).split(","))


def _pair(value) -> tuple[int, int]:
    parts = _ints(value)
    if len(parts) != 2:
        raise ConfigError(f"expected two comma-separated integers, got {value!r}")
    return (parts[0], parts[1])


def resolve_data_path(value: str) -> Path:
    """Relative data paths fall back to $ACTIONITEMS_DATA_DIR when not found."""
    path = Path(value)
    if not path.exists() and not path.is_absolute():
        base = os.environ.get(DATA_DIR_ENV)
        if base and (Path(base) / path).exists():
            return Path(base) / path
    return path


def _load_meetings(resolved) -> list[corpus_mod.Meeting]:
    data = resolved.get("data")
    if not data:
        raise ConfigError("--data is required")
    return corpus_mod.ingest_transcripts(resolve_data_path(data))


def _run_dir(resolved, command: str) -> Path:
    run_dir = resolved.get("run_dir")
    if not run_dir:
        stamp = time.strftime("%Y%m%dT%H%M%S", time.gmtime())
        run_dir = str(Path("runs") / f"{command}-{stamp}")
        resolved["run_dir"] = run_dir
    path = Path(run_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_resolved(resolved: dict, run_dir: Path) -> None:
    (run_dir / "config.resolved").write_text(
        json.dumps(resolved, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _split_for(resolved, meetings) -> corpus_mod.CorpusSplit:
    if resolved.get("manifest"):
        return corpus_mod.split_from_manifest(
            meetings, resolve_data_path(resolved["manifest"])
        )
    return corpus_mod.split_corpus(
        meetings,
        ratio=tuple(_floats(resolved["ratio"])),
        seed=int(resolved["split_seed"]),
    )


# ---------------------------------------------------------------------------
# Option tables: one DEFAULTS mapping per command; None means "required or
# resolved later".  Defaults mirror the protocol's stated hyperparameters.
# ---------------------------------------------------------------------------

_COMMON = {"data": None, "run_dir": None, "config": None}

DEFAULTS: dict[str, dict] = {
    "ingest": {**_COMMON, "out": None},
    "stats": {**_COMMON, "manifest": None},
    "split": {**_COMMON, "ratio": "70,15,15", "split_seed": 0, "out": None},
    "candidates": {**_COMMON, "temporal_lexicon": None, "verb_lexicon": None, "out": None},
    "context": {
        **_COMMON,
        "mode": "local_and_global",
        "global_top_k": 2,
        "local_window": "1,1",
        "ngram_orders": "1,2",
        "out": None,
    },
    "train": {
        **_COMMON,
        "manifest": None,
        "ratio": "70,15,15",
        "split_seed": 0,
        "method": "context_drop_dynamic",
        "context": "local_and_global",
        "alpha": None,       # resolved: 4.0 for R-Drop, 1.0 for Context-Drop
        "keep_prob": None,   # resolved: 0.5 single context, 0.7 local & global
        "learning_rates": "1e-5,2e-5",
        "epochs": "2,3",
        "batch_size": 32,
        "dropout": 0.3,
        "num_seeds": 5,
        "base_seed": 0,
        "global_top_k": 2,
        "local_window": "1,1",
        "ngram_orders": "1,2",
        "feature_dim": 2048,
        "hidden_dim": 64,
        "init_seed": 0,
        "init_params": None,
        "jobs": 1,
    },
    "evaluate": {
        **_COMMON,
        "model": None,
        "manifest": None,
        "ratio": "70,15,15",
        "split_seed": 0,
        "eval_split": "test",
        "context": "local_and_global",
        "global_top_k": 2,
        "local_window": "1,1",
        "ngram_orders": "1,2",
    },
    "ensemble-init": {
        "run_dir": None,
        "config": None,
        "encoder_from": None,
        "pooler_from": None,
        "manifest": None,
        "out": None,
    },
    "report": {"run_dir": None, "config": None, "results": None, "layout": "table3", "scale": 100.0, "out": None},
}

_HELP = {
    "alpha": "KL loss weight (default: 4.0 for R-Drop methods, 1.0 for Context-Drop)",
    "keep_prob": "context keep probability (default: 0.5; 0.7 for local & global)",
    "learning_rates": "grid of learning rates (default: 1e-5,2e-5)",
    "epochs": "grid of epoch budgets (default: 2,3)",
    "batch_size": "mini-batch size (default: 32)",
    "dropout": "dropout rate (default: 0.3)",
    "num_seeds": "number of seeded runs to aggregate (default: 5)",
    "global_top_k": "global context size k (default: 2 most similar sentences)",
    "local_window": "preceding,following local window (default: 1,1)",
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="actionitems", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="|".join(COMMANDS))
    for command, defaults in DEFAULTS.items():
        p = sub.add_parser(command, add_help=True)
        for key in defaults:
            flag = "--" + key.replace("_", "-")
            p.add_argument(flag, default=None, help=_HELP.get(key, ""))
    return parser


def _resolve(command: str, args: argparse.Namespace) -> dict:
    resolved = dict(DEFAULTS[command])
    config_path = getattr(args, "config", None)
    if config_path:
        loaded = yaml.safe_load(Path(config_path).read_text(encoding="utf-8")) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file must be a mapping, got {type(loaded).__name__}")
        unknown = set(loaded) - set(resolved)
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {sorted(unknown)}")
        resolved.update(loaded)
    for key in DEFAULTS[command]:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    resolved["config"] = None  # never persist the bootstrap path
    return resolved


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_ingest(resolved) -> int:
    meetings = _load_meetings(resolved)
    sentences = sum(len(m) for m in meetings)
    positives = sum(m.num_positives() for m in meetings)
    if resolved.get("out"):
        corpus_mod.write_transcripts(meetings, resolved["out"])
    print(f"meetings={len(meetings)} sentences={sentences} positives={positives}")
    return 0


def cmd_stats(resolved) -> int:
    meetings = _load_meetings(resolved)
    split = None
    if resolved.get("manifest"):
        split = corpus_mod.split_from_manifest(
            meetings, resolve_data_path(resolved["manifest"])
        )
    print(corpus_mod.render_stats(corpus_mod.corpus_stats(meetings, split)))
    return 0


def cmd_split(resolved) -> int:
    meetings = _load_meetings(resolved)
    split = corpus_mod.split_corpus(
        meetings, ratio=tuple(_floats(resolved["ratio"])), seed=int(resolved["split_seed"])
    )
    run_dir = _run_dir(resolved, "split")
    out = Path(resolved["out"]) if resolved.get("out") else run_dir / "split.tsv"
    corpus_mod.write_split_manifest(split, out)
    _write_resolved(resolved, run_dir)
    sizes = split.sizes()
    print(f"train={sizes[0]} dev={sizes[1]} test={sizes[2]} -> {out}")
    return 0


def cmd_candidates(resolved) -> int:
    meetings = _load_meetings(resolved)
    if resolved.get("temporal_lexicon") or resolved.get("verb_lexicon"):
        if not (resolved.get("temporal_lexicon") and resolved.get("verb_lexicon")):
            raise ConfigError("provide both --temporal-lexicon and --verb-lexicon or neither")
        lexicons = corpus_mod.CandidateLexicons(
            corpus_mod.load_lexicon(resolve_data_path(resolved["temporal_lexicon"])),
            corpus_mod.load_lexicon(resolve_data_path(resolved["verb_lexicon"])),
        )
    else:
        lexicons = corpus_mod.default_lexicons()
    lines = []
    total = 0
    for meeting in meetings:
        ids = sorted(corpus_mod.select_candidates(meeting, lexicons))
        total += len(ids)
        lines.append(json.dumps({"meeting_id": meeting.meeting_id, "candidate_ids": ids}))
    text = "\n".join(lines) + ("\n" if lines else "")
    if resolved.get("out"):
        Path(resolved["out"]).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    print(f"candidates={total}", file=sys.stderr)
    return 0


def _context_cfg(resolved, mode_key: str = "mode", keep_prob: float | None = None):
    return context_mod.ContextConfig(
        local_window=_pair(resolved["local_window"]),
        global_top_k=int(resolved["global_top_k"]),
        ngram_orders=_ints(resolved["ngram_orders"]),
        keep_prob=0.5 if keep_prob is None else keep_prob,
        mode=resolved[mode_key],
    )


def cmd_context(resolved) -> int:
    meetings = _load_meetings(resolved)
    cfg = _context_cfg(resolved)
    plans = [
        context_mod.build_plan(m, s.sentence_id, cfg)
        for m in meetings
        for s in m.sentences
    ]
    run_dir = _run_dir(resolved, "context")
    out = Path(resolved["out"]) if resolved.get("out") else run_dir / "plans.jsonl"
    context_mod.write_plans(plans, out)
    _write_resolved(resolved, run_dir)
    print(f"plans={len(plans)} -> {out}")
    return 0


def cmd_train(resolved) -> int:
    meetings = _load_meetings(resolved)
    split = _split_for(resolved, meetings)
    by_id = {m.meeting_id: m for m in meetings}
    train_meetings = [by_id[mid] for mid in sorted(split.train)]
    dev_meetings = [by_id[mid] for mid in sorted(split.dev)]
    loss_cfg = train_mod.LossConfig.resolve(
        method=resolved["method"],
        context_mode=resolved["context"],
        alpha=None if resolved["alpha"] is None else float(resolved["alpha"]),
        keep_prob=None if resolved["keep_prob"] is None else float(resolved["keep_prob"]),
    )
    resolved["alpha"] = loss_cfg.alpha
    resolved["keep_prob"] = loss_cfg.keep_prob
    ctx_cfg = _context_cfg(resolved, mode_key="context", keep_prob=loss_cfg.keep_prob)
    run_cfg = train_mod.TrainRunConfig(
        learning_rates=_floats(resolved["learning_rates"]),
        epochs_options=_ints(resolved["epochs"]),
        batch_size=int(resolved["batch_size"]),
        dropout=float(resolved["dropout"]),
        num_seeds=int(resolved["num_seeds"]),
        base_seed=int(resolved["base_seed"]),
    )
    model = TinyTextClassifier(
        feature_dim=int(resolved["feature_dim"]),
        hidden_dim=int(resolved["hidden_dim"]),
        dropout_rate=run_cfg.dropout,
        init_seed=int(resolved["init_seed"]),
    )
    if resolved.get("init_params"):
        model.load_parameters(ParameterSet.load(resolve_data_path(resolved["init_params"])))
    result = train_mod.train(
        model,
        train_meetings,
        dev_meetings,
        run_cfg,
        loss_cfg,
        ctx_cfg,
        jobs=int(resolved["jobs"]),
    )
    run_dir = _run_dir(resolved, "train")
    train_mod.write_training_log(result, run_dir / "training_log.jsonl")
    result.model.save(run_dir / "model.npz")
    result.model.export_parameters().save(run_dir / "params.npz")
    results_key = f"{loss_cfg.context_mode}/{loss_cfg.method}"
    (run_dir / "results.json").write_text(
        json.dumps({results_key: result.seed_f1s}, indent=2) + "\n", encoding="utf-8"
    )
    _write_resolved(resolved, run_dir)
    best = result.best_run
    print(
        f"dev positive F1 {result.cross_seed.format(scale=100)} over "
        f"{run_cfg.num_seeds} seed(s); best cell: seed={best.seed} lr={best.lr} "
        f"epochs={best.num_epochs} (dev F1 {best.best_dev_f1:.4f}) -> {run_dir}"
    )
    return 0


def cmd_evaluate(resolved) -> int:
    if not resolved.get("model"):
        raise ConfigError("--model is required")
    meetings = _load_meetings(resolved)
    split = _split_for(resolved, meetings)
    name = resolved["eval_split"]
    if name not in corpus_mod.SPLIT_NAMES:
        raise ConfigError(f"--eval-split must be one of {corpus_mod.SPLIT_NAMES}")
    by_id = {m.meeting_id: m for m in meetings}
    subset = [by_id[mid] for mid in sorted(getattr(split, name))]
    if not subset:
        raise ConfigError(f"{name} split is empty")
    model = TinyTextClassifier.load(resolve_data_path(resolved["model"]))
    ctx_cfg = _context_cfg(resolved, mode_key="context")
    records = train_mod.predict(model, subset, ctx_cfg)
    report = eval_mod.positive_f1(records)
    run_dir = _run_dir(resolved, "evaluate")
    eval_mod.write_predictions(records, run_dir / "predictions.jsonl")
    _write_resolved(resolved, run_dir)
    print(
        f"{name}: positive_f1={report.positive_f1:.4f} precision={report.precision:.4f} "
        f"recall={report.recall:.4f} (tp={report.tp} fp={report.fp} fn={report.fn} "
        f"tn={report.tn}) -> {run_dir / 'predictions.jsonl'}"
    )
    return 0


def cmd_ensemble_init(resolved) -> int:
    if resolved.get("manifest"):
        hybrid = load_ensemble_manifest(resolve_data_path(resolved["manifest"]))
    else:
        if not (resolved.get("encoder_from") and resolved.get("pooler_from")):
            raise ConfigError("provide --manifest or both --encoder-from and --pooler-from")
        theta_a = ParameterSet.load(resolve_data_path(resolved["encoder_from"]))
        theta_b = ParameterSet.load(resolve_data_path(resolved["pooler_from"]))
        hybrid = ensemble_init(theta_a, theta_b)
    run_dir = _run_dir(resolved, "ensemble-init")
    out = Path(resolved["out"]) if resolved.get("out") else run_dir / "hybrid.npz"
    hybrid.save(out)
    _write_resolved(resolved, run_dir)
    print(
        f"hybrid parameter set: {hybrid.num_parameters()} parameters "
        f"({len(hybrid.encoder_layers)} encoder layers, "
        f"{len(hybrid.pooler_layer)} pooler layers) -> {out}"
    )
    return 0


def cmd_report(resolved) -> int:
    if not resolved.get("results"):
        raise ConfigError("--results is required")
    obj = json.loads(Path(resolve_data_path(resolved["results"])).read_text(encoding="utf-8"))
    results = {}
    for key, value in obj.items():
        if isinstance(value, dict):
            results[key] = eval_mod.AggregateReport(
                values=tuple(value.get("values", ())),
                mean=float(value["mean"]),
                std=float(value["std"]),
            )
        else:
            results[key] = eval_mod.aggregate(value)
    table = eval_mod.render_report(
        results, layout=resolved["layout"], scale=float(resolved["scale"])
    )
    if resolved.get("run_dir"):
        _write_resolved(resolved, _run_dir(resolved, "report"))
    if resolved.get("out"):
        out = Path(resolved["out"])
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(table + "\n", encoding="utf-8")
    print(table)
    return 0


_DISPATCH = {
    "ingest": cmd_ingest,
    "stats": cmd_stats,
    "split": cmd_split,
    "candidates": cmd_candidates,
    "context": cmd_context,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "ensemble-init": cmd_ensemble_init,
    "report": cmd_report,
}


def run(argv) -> int:
    """Parse and dispatch; returns the process exit code."""
    try:
        parser = _build_parser()
        args = parser.parse_args(list(argv))
        if not args.command:
            raise ConfigError(f"missing command (one of {', '.join(COMMANDS)})")
        resolved = _resolve(args.command, args)
        return _DISPATCH[args.command](resolved)
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    except (
        ConfigError,
        TranscriptParseError,
        SchemaValidationError,
        LayerCompatibilityError,
        FileNotFoundError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ActionItemsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
