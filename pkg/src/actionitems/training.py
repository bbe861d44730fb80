"""Consistency-regularized training: the contrastive objective and the four
training methods (R-Drop on sentence or context inputs, Context-Drop Fixed,
Context-Drop Dynamic).

Each training instance is a pair of rendered inputs (x, x') pushed through
two stochastic forward passes; the loss is the averaged cross-entropy of the
two passes plus alpha times their bidirectional KL divergence.  Dynamic
context sampling generalizes the other methods: keep probability 0 degrades
to sentence-only R-Drop, 1 to context R-Drop, and a 0/1 mix to the fixed
contrastive pair.
"""

from __future__ import annotations

import json
import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from multiprocessing import get_context
from pathlib import Path
from typing import Iterable, Sequence

import torch

from .context import (
    CONTEXT_MODES,
    ContextConfig,
    ContextPlan,
    build_plan,
    full_view,
    sample_view,
    sentence_view,
)
from .corpus import Meeting
from .errors import TrainingDivergedError
from .evaluation import (
    DECISION_THRESHOLD,
    AggregateReport,
    PredictionRecord,
    aggregate,
    positive_f1,
)
from .model import TextClassifier

EPS = 1e-12

METHODS = (
    "ce_only",
    "r_drop_sentence",
    "r_drop_context",
    "context_drop_fixed",
    "context_drop_dynamic",
)

# KL weights tuned on the dev sets: 4.0 for the R-Drop methods, 1.0 for
# Context-Drop; keep probability 0.5 for a single context kind, 0.7 when
# combining local and global context.
DEFAULT_ALPHA = {
    "ce_only": 0.0,
    "r_drop_sentence": 4.0,
    "r_drop_context": 4.0,
    "context_drop_fixed": 1.0,
    "context_drop_dynamic": 1.0,
}


def default_alpha(method: str) -> float:
    return DEFAULT_ALPHA[method]


def default_keep_prob(context_mode: str) -> float:
    return 0.7 if context_mode == "local_and_global" else 0.5


# ---------------------------------------------------------------------------
# Loss formulas
# ---------------------------------------------------------------------------

def _is_tensor(x) -> bool:
    return isinstance(x, torch.Tensor)


def _clamp_prob(p):
    if _is_tensor(p):
        return p.clamp(EPS, 1.0)
    return min(max(float(p), EPS), 1.0)


def _log(x):
    return torch.log(x) if _is_tensor(x) else math.log(x)


def ce_loss(p1, p2):
    """-1/2 * log(p1 * p2): averaged cross-entropy of the true-label
    probabilities from the two passes.  Accepts floats or 0-dim tensors;
    probabilities are clamped to [1e-12, 1]."""
    p1 = _clamp_prob(p1)
    p2 = _clamp_prob(p2)
    return -0.5 * _log(p1 * p2)


def bidirectional_kl(p_dist, q_dist):
    """1/2 * (KL(P||Q) + KL(Q||P)) in nats, for distributions over {0, 1}.

    Inputs must be normalized within 1e-6; components are clamped at 1e-12.
    Accepts 2-sequences of floats or tensors of shape (2,).
    """
    for name, dist in (("first", p_dist), ("second", q_dist)):
        a, b = dist[0], dist[1]
        if _is_tensor(a):
            a = a.detach().item()
        if _is_tensor(b):
            b = b.detach().item()
        total = float(a) + float(b)
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"{name} distribution sums to {total}, not 1")
    p0, p1 = _clamp_prob(p_dist[0]), _clamp_prob(p_dist[1])
    q0, q1 = _clamp_prob(q_dist[0]), _clamp_prob(q_dist[1])
    kl_pq = p0 * _log(p0 / q0) + p1 * _log(p1 / q1)
    kl_qp = q0 * _log(q0 / p0) + q1 * _log(q1 / p1)
    return 0.5 * (kl_pq + kl_qp)


# ---------------------------------------------------------------------------
# Training pairs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainingPair:
    """The two model inputs of one contrastive instance plus the dropout
    seeds of its two stochastic passes."""

    input_1: str
    input_2: str
    label: int
    seeds: tuple[int, int]

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        if not self.input_1 or not self.input_2:
            raise ValueError("pair inputs must be non-empty")


@dataclass(frozen=True)
class LossConfig:
    method: str = "context_drop_dynamic"
    alpha: float = 1.0
    context_mode: str = "local_and_global"
    keep_prob: float = 0.7

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.context_mode not in CONTEXT_MODES:
            raise ValueError(f"context_mode must be one of {CONTEXT_MODES}")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not 0.0 <= self.keep_prob <= 1.0:
            raise ValueError("keep_prob must be in [0, 1]")

    @classmethod
    def resolve(
        cls,
        method: str,
        context_mode: str = "local_and_global",
        alpha: float | None = None,
        keep_prob: float | None = None,
    ) -> "LossConfig":
        """Fill unset hyperparameters with the method/mode defaults."""
        if method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {method!r}")
        return cls(
            method=method,
            alpha=default_alpha(method) if alpha is None else alpha,
            context_mode=context_mode,
            keep_prob=default_keep_prob(context_mode) if keep_prob is None else keep_prob,
        )


@dataclass(frozen=True)
class LossBreakdown:
    """Per-instance loss values in nats: total = ce + alpha * kl."""

    ce: float
    kl: float
    total: float
    alpha: float


def build_dynamic_pair(
    meeting: Meeting,
    plan: ContextPlan,
    keep_prob_1: float,
    keep_prob_2: float,
    rng: random.Random | int,
    label: int | None = None,
    include_speaker: bool = True,
) -> TrainingPair:
    """Dynamic pair with per-view keep probabilities (the generalized form)."""
    if not isinstance(rng, random.Random):
        rng = random.Random(rng)
    seeds = (rng.getrandbits(32), rng.getrandbits(32))
    v1 = sample_view(meeting, plan, keep_prob_1, rng, include_speaker)
    v2 = sample_view(meeting, plan, keep_prob_2, rng, include_speaker)
    if label is None:
        label = meeting.sentence(plan.focus_id).label
    return TrainingPair(v1.rendered_text, v2.rendered_text, label, seeds)


def build_pair(
    meeting: Meeting,
    plan: ContextPlan,
    cfg: LossConfig,
    rng: random.Random | int,
    include_speaker: bool = True,
) -> TrainingPair:
    """Construct the two views of one training instance.

    ce_only duplicates the full-context rendering with a shared dropout seed
    (two identical passes collapse to the single-pass CE baseline); the other
    methods use independent seeds and the view combinations of their name.
    """
    if not isinstance(rng, random.Random):
        rng = random.Random(rng)
    label = meeting.sentence(plan.focus_id).label
    seeds = (rng.getrandbits(32), rng.getrandbits(32))
    sent = sentence_view(meeting, plan, include_speaker).rendered_text
    if cfg.method == "ce_only":
        ctx = full_view(meeting, plan, include_speaker).rendered_text
        return TrainingPair(ctx, ctx, label, (seeds[0], seeds[0]))
    if cfg.method == "r_drop_sentence":
        return TrainingPair(sent, sent, label, seeds)
    if cfg.method == "r_drop_context":
        ctx = full_view(meeting, plan, include_speaker).rendered_text
        return TrainingPair(ctx, ctx, label, seeds)
    if cfg.method == "context_drop_fixed":
        ctx = full_view(meeting, plan, include_speaker).rendered_text
        return TrainingPair(sent, ctx, label, seeds)
    # context_drop_dynamic: both views sampled independently
    v1 = sample_view(meeting, plan, cfg.keep_prob, rng, include_speaker)
    v2 = sample_view(meeting, plan, cfg.keep_prob, rng, include_speaker)
    return TrainingPair(v1.rendered_text, v2.rendered_text, label, seeds)


def pair_loss_graph(
    model: TextClassifier, pair: TrainingPair, cfg: LossConfig
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Differentiable (ce, kl, total) for one pair; both passes in train mode."""
    d1 = model.forward_dist(pair.input_1, rng_seed=pair.seeds[0], train_mode=True)
    d2 = model.forward_dist(pair.input_2, rng_seed=pair.seeds[1], train_mode=True)
    ce = ce_loss(d1[pair.label], d2[pair.label])
    kl = bidirectional_kl(d1, d2)
    return ce, kl, ce + cfg.alpha * kl


def pair_loss(model: TextClassifier, pair: TrainingPair, cfg: LossConfig) -> LossBreakdown:
    ce, kl, total = pair_loss_graph(model, pair, cfg)
    return LossBreakdown(ce=ce.item(), kl=kl.item(), total=total.item(), alpha=cfg.alpha)


# ---------------------------------------------------------------------------
# Datasets and prediction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainingExample:
    meeting: Meeting
    plan: ContextPlan

    @property
    def label(self) -> int:
        return self.meeting.sentence(self.plan.focus_id).label


def build_examples(
    meetings: Sequence[Meeting], ctx_cfg: ContextConfig
) -> list[TrainingExample]:
    """One example per sentence, with its context plan precomputed."""
    out = []
    for meeting in meetings:
        for sent in meeting.sentences:
            out.append(
                TrainingExample(meeting, build_plan(meeting, sent.sentence_id, ctx_cfg))
            )
    return out


def predict_examples(
    model: TextClassifier, examples: Sequence[TrainingExample], include_speaker: bool = True
) -> list[PredictionRecord]:
    """Deterministic inference: all context kept, dropout off, threshold 0.5."""
    records = []
    for ex in examples:
        text = full_view(ex.meeting, ex.plan, include_speaker).rendered_text
        with torch.no_grad():
            dist = model.forward_dist(text, train_mode=False)
        p_pos = float(dist[1])
        records.append(
            PredictionRecord(
                meeting_id=ex.meeting.meeting_id,
                sentence_id=ex.plan.focus_id,
                gold=ex.label,
                predicted=int(p_pos >= DECISION_THRESHOLD),
                positive_probability=p_pos,
            )
        )
    return records


def predict(
    model: TextClassifier, meetings: Sequence[Meeting], ctx_cfg: ContextConfig
) -> list[PredictionRecord]:
    return predict_examples(model, build_examples(meetings, ctx_cfg), ctx_cfg.include_speaker)


# ---------------------------------------------------------------------------
# Training loop and grid search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainRunConfig:
    """Run-level hyperparameters; defaults mirror the experimental protocol
    (grid over {1e-5, 2e-5} x {2, 3}, batch 32, dropout 0.3, 5 seeds)."""

    learning_rates: tuple[float, ...] = (1e-5, 2e-5)
    epochs_options: tuple[int, ...] = (2, 3)
    batch_size: int = 32
    dropout: float = 0.3
    num_seeds: int = 5
    base_seed: int = 0
    warmup_fraction: float = 0.1
    weight_decay: float = 0.01

    def __post_init__(self):
        if not self.learning_rates or not self.epochs_options:
            raise ValueError("learning_rates and epochs_options must be non-empty")
        if self.batch_size < 1 or self.num_seeds < 1:
            raise ValueError("batch_size and num_seeds must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    mean_ce: float
    mean_kl: float
    mean_total: float
    dev_positive_f1: float


@dataclass(frozen=True)
class TrainingRun:
    """One grid cell (seed, lr, epoch budget) with its per-epoch log."""

    seed: int
    lr: float
    num_epochs: int
    epochs: tuple[EpochLog, ...]
    best_epoch: int
    best_dev_f1: float


@dataclass
class TrainResult:
    runs: list[TrainingRun]
    best_per_seed: list[TrainingRun]
    seed_f1s: list[float]
    cross_seed: AggregateReport
    model: TextClassifier
    best_run: TrainingRun


def _cell_rng(seed: int, lr: float, num_epochs: int) -> random.Random:
    return random.Random(f"{seed}|{lr!r}|{num_epochs}")


def _run_cell(
    template: TextClassifier,
    train_examples: Sequence[TrainingExample],
    dev_examples: Sequence[TrainingExample],
    run_cfg: TrainRunConfig,
    loss_cfg: LossConfig,
    include_speaker: bool,
    seed: int,
    lr: float,
    num_epochs: int,
) -> tuple[TrainingRun, dict]:
    rng = _cell_rng(seed, lr, num_epochs)
    net = template.clone()
    net.dropout_rate = run_cfg.dropout
    opt = torch.optim.AdamW(net.parameters(), lr=lr, weight_decay=run_cfg.weight_decay)
    n = len(train_examples)
    steps_per_epoch = math.ceil(n / run_cfg.batch_size)
    warmup_steps = max(1, round(run_cfg.warmup_fraction * steps_per_epoch * num_epochs))
    step = 0
    logs: list[EpochLog] = []
    best_f1, best_epoch, best_state = -1.0, -1, None
    for epoch in range(1, num_epochs + 1):
        order = list(range(n))
        rng.shuffle(order)
        sum_ce = sum_kl = sum_total = 0.0
        for b in range(0, n, run_cfg.batch_size):
            batch = order[b : b + run_cfg.batch_size]
            totals = []
            for idx in batch:
                ex = train_examples[idx]
                pair = build_pair(ex.meeting, ex.plan, loss_cfg, rng, include_speaker)
                ce_t, kl_t, total_t = pair_loss_graph(net, pair, loss_cfg)
                total_val = total_t.detach().item()
                if not math.isfinite(total_val):
                    raise TrainingDivergedError(
                        f"non-finite loss (seed={seed}, lr={lr}, epoch={epoch}, "
                        f"meeting={ex.meeting.meeting_id}, sentence={ex.plan.focus_id})"
                    )
                totals.append(total_t)
                sum_ce += ce_t.detach().item()
                sum_kl += kl_t.detach().item()
                sum_total += total_val
            scale = min(1.0, (step + 1) / warmup_steps)
            for group in opt.param_groups:
                group["lr"] = lr * scale
            opt.zero_grad()
            torch.stack(totals).mean().backward()
            opt.step()
            step += 1
        preds = predict_examples(net, dev_examples, include_speaker)
        dev_f1 = positive_f1(preds).positive_f1
        logs.append(
            EpochLog(
                epoch=epoch,
                mean_ce=sum_ce / n,
                mean_kl=sum_kl / n,
                mean_total=sum_total / n,
                dev_positive_f1=dev_f1,
            )
        )
        if dev_f1 > best_f1:
            best_f1, best_epoch = dev_f1, epoch
            best_state = {k: v.detach().clone() for k, v in net.state_dict().items()}
    run = TrainingRun(
        seed=seed,
        lr=lr,
        num_epochs=num_epochs,
        epochs=tuple(logs),
        best_epoch=best_epoch,
        best_dev_f1=best_f1,
    )
    return run, best_state


def _run_cell_task(args) -> tuple[TrainingRun, dict]:
    return _run_cell(*args)


def train(
    model: TextClassifier,
    train_meetings: Sequence[Meeting],
    dev_meetings: Sequence[Meeting],
    run_cfg: TrainRunConfig,
    loss_cfg: LossConfig,
    ctx_cfg: ContextConfig | None = None,
    jobs: int = 1,
) -> TrainResult:
    """Mini-batch training with per-seed grid search.

    For every seed, each (lr, epochs) cell trains a fresh copy of ``model``
    (AdamW, linear warmup over 10% of steps) on the mean pair loss; the dev
    positive F1 is evaluated after every epoch and the best epoch's weights
    are kept.  The grid cell maximizing dev F1 wins per seed; the returned
    model is the best checkpoint overall.  Deterministic given the seeds.
    No class resampling is applied.
    """
    if ctx_cfg is None:
        ctx_cfg = ContextConfig(mode=loss_cfg.context_mode, keep_prob=loss_cfg.keep_prob)
    if ctx_cfg.mode != loss_cfg.context_mode:
        ctx_cfg = replace(ctx_cfg, mode=loss_cfg.context_mode)
    train_examples = build_examples(train_meetings, ctx_cfg)
    dev_examples = build_examples(dev_meetings, ctx_cfg)
    if not train_examples or not dev_examples:
        raise ValueError("train and dev sets must be non-empty")
    cells = [
        (seed, lr, num_epochs)
        for seed in range(run_cfg.base_seed, run_cfg.base_seed + run_cfg.num_seeds)
        for lr in sorted(run_cfg.learning_rates)
        for num_epochs in sorted(run_cfg.epochs_options)
    ]
    args = [
        (
            model,
            train_examples,
            dev_examples,
            run_cfg,
            loss_cfg,
            ctx_cfg.include_speaker,
            seed,
            lr,
            num_epochs,
        )
        for seed, lr, num_epochs in cells
    ]
    if jobs > 1:
        with ProcessPoolExecutor(
            max_workers=jobs, mp_context=get_context("spawn")
        ) as pool:
            outcomes = list(pool.map(_run_cell_task, args))
    else:
        outcomes = [_run_cell(*a) for a in args]
    runs = [run for run, _ in outcomes]
    states = {id(run): state for run, state in zip(runs, (s for _, s in outcomes))}
    best_per_seed: list[TrainingRun] = []
    for seed in range(run_cfg.base_seed, run_cfg.base_seed + run_cfg.num_seeds):
        seed_runs = [r for r in runs if r.seed == seed]
        best_per_seed.append(max(seed_runs, key=lambda r: r.best_dev_f1))
    seed_f1s = [r.best_dev_f1 for r in best_per_seed]
    best_run = max(best_per_seed, key=lambda r: r.best_dev_f1)
    fitted = model.clone()
    fitted.dropout_rate = run_cfg.dropout
    fitted.load_state_dict(states[id(best_run)])
    return TrainResult(
        runs=runs,
        best_per_seed=best_per_seed,
        seed_f1s=seed_f1s,
        cross_seed=aggregate(seed_f1s),
        model=fitted,
        best_run=best_run,
    )


# ---------------------------------------------------------------------------
# Training log (JSONL)
# ---------------------------------------------------------------------------

def training_log_records(result: TrainResult) -> list[dict]:
    records = []
    for run in result.runs:
        for e in run.epochs:
            records.append(
                {
                    "seed": run.seed,
                    "lr": run.lr,
                    "epochs_option": run.num_epochs,
                    "epoch": e.epoch,
                    "mean_ce": e.mean_ce,
                    "mean_kl": e.mean_kl,
                    "mean_total": e.mean_total,
                    "dev_positive_f1": e.dev_positive_f1,
                }
            )
    return records


def write_training_log(result: TrainResult, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in training_log_records(result):
            fh.write(json.dumps(rec) + "\n")
