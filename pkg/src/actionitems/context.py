"""Local/global context selection and dynamic keep/drop context views.

A focus sentence gets a ContextPlan: its local window (adjacent sentences)
plus the top-k most n-gram-cosine-similar sentences from the same meeting
(global context).  A ContextView is one sampled keep/drop realization of a
plan, rendered to the model input string.

Rendering scheme: kept sentences in document order, joined by ``SEPARATOR``,
the focus sentence wrapped in ``FOCUS_OPEN``/``FOCUS_CLOSE``, each sentence
prefixed with its speaker id.
"""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Meeting, has_cjk

CONTEXT_MODES = ("sentence", "local", "global", "local_and_global")

SEPARATOR = " ⟂ "   # ⟂ between sentences
FOCUS_OPEN = "⟦"    # ⟦
FOCUS_CLOSE = "⟧"   # ⟧


@dataclass(frozen=True)
class ContextConfig:
    """Knobs for context selection and sampling.

    Defaults follow the experimental setup: one preceding and one following
    sentence as local context, top-2 most similar sentences as global
    context, keep probability 0.5 (0.7 is the usual choice when combining
    local and global context).
    """

    local_window: tuple[int, int] = (1, 1)
    global_top_k: int = 2
    ngram_orders: tuple[int, ...] = (1, 2)
    keep_prob: float = 0.5
    mode: str = "local_and_global"
    include_speaker: bool = True

    def __post_init__(self):
        if self.mode not in CONTEXT_MODES:
            raise ValueError(f"mode must be one of {CONTEXT_MODES}, got {self.mode!r}")
        if not 0.0 <= self.keep_prob <= 1.0:
            raise ValueError(f"keep_prob must be in [0, 1], got {self.keep_prob}")
        if self.global_top_k < 0:
            raise ValueError("global_top_k must be >= 0")
        if self.local_window[0] < 0 or self.local_window[1] < 0:
            raise ValueError("local window counts must be >= 0")
        if not self.ngram_orders or any(n < 1 for n in self.ngram_orders):
            raise ValueError("ngram_orders must be a non-empty set of integers >= 1")


@dataclass(frozen=True)
class ContextPlan:
    """Per-sentence context references: local ids plus scored global ids.

    ``local_ids`` and ``global_ids`` are disjoint and never contain the focus;
    global ids are ordered by descending similarity (ties: closer to focus,
    then smaller id).
    """

    meeting_id: str
    focus_id: int
    local_ids: tuple[int, ...]
    global_ids: tuple[int, ...]
    global_scores: tuple[float, ...]

    def __post_init__(self):
        context = set(self.local_ids) | set(self.global_ids)
        if self.focus_id in context:
            raise ValueError("focus sentence must not appear in its own context")
        if set(self.local_ids) & set(self.global_ids):
            raise ValueError("local and global context ids must be disjoint")
        if len(self.global_ids) != len(self.global_scores):
            raise ValueError("global_ids and global_scores must align")

    def context_ids(self) -> tuple[int, ...]:
        """All context sentence ids in document order."""
        return tuple(sorted(set(self.local_ids) | set(self.global_ids)))


@dataclass(frozen=True)
class ContextView:
    """One keep/drop realization of a plan plus its rendered model input."""

    plan: ContextPlan
    kept_ids: tuple[int, ...]
    rendered_text: str


# ---------------------------------------------------------------------------
# n-gram cosine similarity
# ---------------------------------------------------------------------------

def text_units(text: str, unit: str = "auto") -> list[str]:
    """Tokenize for n-gram features: characters for unsegmented scripts
    (whitespace skipped), lowercased whitespace tokens otherwise."""
    if unit == "auto":
        unit = "char" if has_cjk(text) else "word"
    if unit == "char":
        return [ch for ch in text if not ch.isspace()]
    if unit == "word":
        return text.lower().split()
    raise ValueError(f"unknown unit {unit!r}")


def ngram_counts(units: Sequence[str], orders: Iterable[int]) -> Counter:
    counts: Counter = Counter()
    for n in orders:
        for i in range(len(units) - n + 1):
            counts[tuple(units[i : i + n])] += 1
    return counts


def ngram_cosine(
    a: str, b: str, orders: Iterable[int] = (1, 2), unit: str = "auto"
) -> float:
    """Cosine similarity of n-gram count vectors pooled over ``orders``.

    Returns 0 when either text yields no n-grams.
    """
    orders = tuple(orders)
    if not orders:
        raise ValueError("orders must be non-empty")
    ca = ngram_counts(text_units(a, unit), orders)
    cb = ngram_counts(text_units(b, unit), orders)
    if not ca or not cb:
        return 0.0
    if ca == cb:
        return 1.0
    dot = sum(v * cb[k] for k, v in ca.items())
    norm2 = sum(v * v for v in ca.values()) * sum(v * v for v in cb.values())
    sim = dot / norm2**0.5
    return min(max(sim, 0.0), 1.0)


# ---------------------------------------------------------------------------
# Context selection
# ---------------------------------------------------------------------------

def select_local_context(
    meeting: Meeting, focus_id: int, cfg: ContextConfig
) -> tuple[int, ...]:
    """Up to ``num_preceding`` prior and ``num_following`` subsequent ids,
    clipped at meeting boundaries."""
    meeting.sentence(focus_id)  # validates the id
    before, after = cfg.local_window
    lo = max(0, focus_id - before)
    hi = min(len(meeting) - 1, focus_id + after)
    return tuple(i for i in range(lo, hi + 1) if i != focus_id)


def select_global_context(
    meeting: Meeting,
    focus_id: int,
    cfg: ContextConfig,
    exclude: frozenset[int] = frozenset(),
) -> tuple[int, ...]:
    """Top-k sentence ids by n-gram cosine similarity to the focus sentence.

    The focus itself (and any ``exclude`` ids) never appear; fewer than k
    are returned when the meeting is short.  Ties break toward the sentence
    closer to the focus, then toward the smaller id.
    """
    focus = meeting.sentence(focus_id)
    if cfg.global_top_k == 0:
        return ()
    scored = []
    for sent in meeting.sentences:
        sid = sent.sentence_id
        if sid == focus_id or sid in exclude:
            continue
        score = ngram_cosine(focus.text, sent.text, cfg.ngram_orders)
        scored.append((-score, abs(sid - focus_id), sid))
    scored.sort()
    return tuple(sid for _, _, sid in scored[: cfg.global_top_k])


def global_scores(
    meeting: Meeting, focus_id: int, ids: Sequence[int], cfg: ContextConfig
) -> tuple[float, ...]:
    focus = meeting.sentence(focus_id)
    return tuple(
        ngram_cosine(focus.text, meeting.sentence(i).text, cfg.ngram_orders) for i in ids
    )


def build_plan(meeting: Meeting, focus_id: int, cfg: ContextConfig) -> ContextPlan:
    """Assemble the context plan for one focus sentence under ``cfg.mode``.

    When both local and global context are requested, global selection skips
    sentences already covered by the local window, so each context sentence
    appears in the plan exactly once.
    """
    local: tuple[int, ...] = ()
    global_: tuple[int, ...] = ()
    if cfg.mode in ("local", "local_and_global"):
        local = select_local_context(meeting, focus_id, cfg)
    if cfg.mode in ("global", "local_and_global"):
        global_ = select_global_context(meeting, focus_id, cfg, exclude=frozenset(local))
    return ContextPlan(
        meeting_id=meeting.meeting_id,
        focus_id=focus_id,
        local_ids=local,
        global_ids=global_,
        global_scores=global_scores(meeting, focus_id, global_, cfg),
    )


# ---------------------------------------------------------------------------
# Sampling and rendering
# ---------------------------------------------------------------------------

def render_input(
    meeting: Meeting,
    focus_id: int,
    kept_ids: Iterable[int],
    include_speaker: bool = True,
) -> str:
    """Render kept context + focus to the model input string.

    Sentences appear in document order joined by ``SEPARATOR``; the focus
    sentence is wrapped in the focus markers.  Deterministic in
    (focus, kept set).
    """
    kept = sorted(set(kept_ids) | {focus_id})
    parts = []
    for sid in kept:
        sent = meeting.sentence(sid)
        unit = f"{sent.speaker}: {sent.text}" if include_speaker else sent.text
        if sid == focus_id:
            unit = f"{FOCUS_OPEN}{unit}{FOCUS_CLOSE}"
        parts.append(unit)
    return SEPARATOR.join(parts)


def sample_view(
    meeting: Meeting,
    plan: ContextPlan,
    keep_prob: float,
    rng: random.Random | int,
    include_speaker: bool = True,
) -> ContextView:
    """Sample one keep/drop realization of the plan.

    Each context sentence is kept independently with probability
    ``keep_prob``: one uniform draw per context id in ascending id order,
    kept iff draw < keep_prob.  Passing an int seeds a fresh generator, so
    the exact subset is reproducible by replaying the seeded generator.
    """
    if not 0.0 <= keep_prob <= 1.0:
        raise ValueError(f"keep_prob must be in [0, 1], got {keep_prob}")
    if isinstance(rng, int):
        rng = random.Random(rng)
    kept = tuple(i for i in plan.context_ids() if rng.random() < keep_prob)
    return ContextView(
        plan=plan,
        kept_ids=kept,
        rendered_text=render_input(meeting, plan.focus_id, kept, include_speaker),
    )


def full_view(meeting: Meeting, plan: ContextPlan, include_speaker: bool = True) -> ContextView:
    """Deterministic all-kept view (keep_prob treated as 1)."""
    kept = plan.context_ids()
    return ContextView(
        plan=plan,
        kept_ids=kept,
        rendered_text=render_input(meeting, plan.focus_id, kept, include_speaker),
    )


def sentence_view(meeting: Meeting, plan: ContextPlan, include_speaker: bool = True) -> ContextView:
    """Deterministic all-dropped view (focus sentence only)."""
    return ContextView(
        plan=plan,
        kept_ids=(),
        rendered_text=render_input(meeting, plan.focus_id, (), include_speaker),
    )


# ---------------------------------------------------------------------------
# Plan caching (JSONL)
# ---------------------------------------------------------------------------

def write_plans(plans: Iterable[ContextPlan], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for p in plans:
            obj = {
                "focus": {"meeting_id": p.meeting_id, "sentence_id": p.focus_id},
                "local_ids": list(p.local_ids),
                "global_ids": [
                    {"id": i, "score": s} for i, s in zip(p.global_ids, p.global_scores)
                ],
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def read_plans(path: str | Path) -> list[ContextPlan]:
    plans = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            plans.append(
                ContextPlan(
                    meeting_id=obj["focus"]["meeting_id"],
                    focus_id=obj["focus"]["sentence_id"],
                    local_ids=tuple(obj["local_ids"]),
                    global_ids=tuple(g["id"] for g in obj["global_ids"]),
                    global_scores=tuple(g["score"] for g in obj["global_ids"]),
                )
            )
    return plans
