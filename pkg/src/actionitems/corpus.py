"""Transcript data model, ingestion, splitting, candidate pre-selection, agreement and corpus statistics.

Transcript JSONL schema (one meeting per line):

    {"meeting_id": str,
     "sentences": [{"id": int, "speaker": str, "text": str, "label": 0|1,
                    "annotator_labels": [0|1, ...]  (optional)}]}

Split manifest: plain text, one ``meeting_id<TAB>train|dev|test`` per line.
Lexicon files: one entry per line, UTF-8, ``#`` comments allowed.
"""

from __future__ import annotations

import json
import math
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from itertools import combinations
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import SchemaValidationError, TranscriptParseError

SPLIT_NAMES = ("train", "dev", "test")

_CJK_RE = re.compile(r"[぀-ヿ㐀-䶿一-鿿豈-﫿]")


def has_cjk(text: str) -> bool:
    return bool(_CJK_RE.search(text))


@dataclass(frozen=True)
class SentenceRecord:
    """One speaker-attributed sentence of a meeting, binary-labeled for action items.

    ``sentence_id`` is the 0-based position within the meeting; ``label`` is 1
    when the sentence contains action item information.  ``annotator_labels``
    optionally carries the raw per-annotator judgements behind ``label``.
    """

    meeting_id: str
    sentence_id: int
    speaker: str
    text: str
    label: int
    annotator_labels: tuple[int, ...] | None = None

    def __post_init__(self):
        if not self.text.strip():
            raise SchemaValidationError(
                "text is empty after trimming", self.meeting_id, "text"
            )
        if self.label not in (0, 1):
            raise SchemaValidationError(
                f"label must be 0 or 1, got {self.label!r}", self.meeting_id, "label"
            )
        if self.annotator_labels is not None:
            for value in self.annotator_labels:
                if value not in (0, 1):
                    raise SchemaValidationError(
                        f"annotator label must be 0 or 1, got {value!r}",
                        self.meeting_id,
                        "annotator_labels",
                    )


@dataclass(frozen=True)
class Meeting:
    """An ordered sequence of sentences sharing one meeting_id."""

    meeting_id: str
    sentences: tuple[SentenceRecord, ...]

    def __post_init__(self):
        for pos, sent in enumerate(self.sentences):
            if sent.meeting_id != self.meeting_id:
                raise SchemaValidationError(
                    f"sentence {sent.sentence_id} carries meeting_id {sent.meeting_id!r}",
                    self.meeting_id,
                    "meeting_id",
                )
            if sent.sentence_id != pos:
                raise SchemaValidationError(
                    f"sentence_id {sent.sentence_id} at position {pos}; ids must be consecutive from 0",
                    self.meeting_id,
                    "sentence_id",
                )

    def __len__(self) -> int:
        return len(self.sentences)

    def sentence(self, sentence_id: int) -> SentenceRecord:
        if not 0 <= sentence_id < len(self.sentences):
            raise SchemaValidationError(
                f"sentence_id {sentence_id} out of range", self.meeting_id, "sentence_id"
            )
        return self.sentences[sentence_id]

    def num_positives(self) -> int:
        return sum(s.label for s in self.sentences)


@dataclass(frozen=True)
class CorpusSplit:
    """Meeting-granularity partition into train/dev/test."""

    train: frozenset[str]
    dev: frozenset[str]
    test: frozenset[str]
    ratio: tuple[float, float, float] = (70, 15, 15)

    def __post_init__(self):
        for a, b in combinations((self.train, self.dev, self.test), 2):
            overlap = a & b
            if overlap:
                raise SchemaValidationError(
                    f"splits overlap on meeting ids {sorted(overlap)}"
                )

    def all_ids(self) -> frozenset[str]:
        return self.train | self.dev | self.test

    def assignment(self) -> dict[str, str]:
        out: dict[str, str] = {}
        for name in SPLIT_NAMES:
            for mid in getattr(self, name):
                out[mid] = name
        return out

    def sizes(self) -> tuple[int, int, int]:
        return (len(self.train), len(self.dev), len(self.test))


@dataclass(frozen=True)
class CandidateLexicons:
    """Temporal-expression and action-verb surface forms for candidate pre-selection."""

    temporal_expressions: frozenset[str]
    action_verbs: frozenset[str]

    def __post_init__(self):
        if not self.temporal_expressions or not self.action_verbs:
            raise SchemaValidationError("lexicons must be non-empty")
        object.__setattr__(
            self, "temporal_expressions", frozenset(t.lower() for t in self.temporal_expressions)
        )
        object.__setattr__(
            self, "action_verbs", frozenset(t.lower() for t in self.action_verbs)
        )


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------

def _sentence_from_obj(obj: Mapping, meeting_id: str) -> SentenceRecord:
    for key in ("id", "speaker", "text", "label"):
        if key not in obj:
            raise SchemaValidationError(f"sentence missing key {key!r}", meeting_id, key)
    ann = obj.get("annotator_labels")
    return SentenceRecord(
        meeting_id=meeting_id,
        sentence_id=int(obj["id"]),
        speaker=str(obj["speaker"]),
        text=str(obj["text"]),
        label=obj["label"],
        annotator_labels=tuple(ann) if ann is not None else None,
    )


def meeting_from_obj(obj: Mapping) -> Meeting:
    """Build a validated Meeting from one decoded JSONL object."""
    if "meeting_id" not in obj:
        raise SchemaValidationError("meeting object missing 'meeting_id'")
    meeting_id = str(obj["meeting_id"])
    sentences = tuple(
        _sentence_from_obj(s, meeting_id) for s in obj.get("sentences", [])
    )
    return Meeting(meeting_id=meeting_id, sentences=sentences)


def iter_transcripts(path: str | Path) -> Iterator[Meeting]:
    """Stream meetings from a transcript JSONL file in file order."""
    path = Path(path)
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TranscriptParseError(str(exc), line_no=line_no) from exc
            meeting = meeting_from_obj(obj)
            if meeting.meeting_id in seen:
                raise SchemaValidationError(
                    "duplicate meeting_id", meeting.meeting_id, "meeting_id"
                )
            seen.add(meeting.meeting_id)
            yield meeting


def ingest_transcripts(path: str | Path, format: str = "jsonl") -> list[Meeting]:
    """Read and validate a transcript file; returns meetings in file order."""
    if format != "jsonl":
        raise ValueError(f"unsupported transcript format: {format!r}")
    return list(iter_transcripts(path))


def write_transcripts(meetings: Iterable[Meeting], path: str | Path) -> None:
    """Write meetings back to the normalized JSONL schema."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for m in meetings:
            obj = {
                "meeting_id": m.meeting_id,
                "sentences": [
                    {
                        "id": s.sentence_id,
                        "speaker": s.speaker,
                        "text": s.text,
                        "label": s.label,
                        **(
                            {"annotator_labels": list(s.annotator_labels)}
                            if s.annotator_labels is not None
                            else {}
                        ),
                    }
                    for s in m.sentences
                ],
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

def split_corpus(
    meetings: Sequence[Meeting],
    ratio: tuple[float, float, float] = (70, 15, 15),
    seed: int = 0,
) -> CorpusSplit:
    """Seeded meeting-level split.

    Meeting ids are shuffled by ``seed`` and partitioned with floor rounding
    for train and dev; the remainder goes to test.  The same seed always
    yields the same split.
    """
    if len(ratio) != 3 or any(r < 0 for r in ratio):
        raise ValueError(f"ratio must be three non-negative numbers, got {ratio}")
    if not math.isclose(sum(ratio), 100.0):
        raise ValueError(f"ratio components must sum to 100, got {ratio}")
    ids = [m.meeting_id for m in meetings]
    if len(ids) < 3:
        raise ValueError(f"need at least 3 meetings to split, got {len(ids)}")
    rng = random.Random(seed)
    rng.shuffle(ids)
    n = len(ids)
    n_train = math.floor(n * ratio[0] / 100.0)
    n_dev = math.floor(n * ratio[1] / 100.0)
    return CorpusSplit(
        train=frozenset(ids[:n_train]),
        dev=frozenset(ids[n_train : n_train + n_dev]),
        test=frozenset(ids[n_train + n_dev :]),
        ratio=tuple(ratio),
    )


def load_split_manifest(path: str | Path) -> dict[str, str]:
    """Read a ``meeting_id<TAB>split`` manifest into a mapping."""
    mapping: dict[str, str] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise TranscriptParseError(
                    f"expected 'meeting_id<TAB>split', got {line!r}", line_no=line_no
                )
            mid, split = parts
            if split not in SPLIT_NAMES:
                raise TranscriptParseError(
                    f"unknown split {split!r} (expected one of {SPLIT_NAMES})",
                    line_no=line_no,
                )
            if mid in mapping:
                raise TranscriptParseError(f"duplicate meeting_id {mid!r}", line_no=line_no)
            mapping[mid] = split
    return mapping


def split_from_manifest(
    meetings: Sequence[Meeting], manifest: Mapping[str, str] | str | Path
) -> CorpusSplit:
    """Apply an explicit manifest; every meeting must be assigned exactly once."""
    if not isinstance(manifest, Mapping):
        manifest = load_split_manifest(manifest)
    ids = {m.meeting_id for m in meetings}
    missing = ids - manifest.keys()
    if missing:
        raise SchemaValidationError(f"manifest missing meeting ids {sorted(missing)}")
    unknown = set(manifest.keys()) - ids
    if unknown:
        raise SchemaValidationError(f"manifest names unknown meeting ids {sorted(unknown)}")
    by_split: dict[str, set[str]] = {name: set() for name in SPLIT_NAMES}
    for mid, split in manifest.items():
        by_split[split].add(mid)
    return CorpusSplit(
        train=frozenset(by_split["train"]),
        dev=frozenset(by_split["dev"]),
        test=frozenset(by_split["test"]),
    )


def write_split_manifest(split: CorpusSplit, path: str | Path) -> None:
    assignment = split.assignment()
    with Path(path).open("w", encoding="utf-8") as fh:
        for mid in sorted(assignment):
            fh.write(f"{mid}\t{assignment[mid]}\n")


# ---------------------------------------------------------------------------
# Candidate pre-selection
# ---------------------------------------------------------------------------

def load_lexicon(path: str | Path) -> frozenset[str]:
    """One-entry-per-line lexicon file; blank lines and # comments skipped."""
    entries = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            entries.add(line.lower())
    return frozenset(entries)


def default_lexicons() -> CandidateLexicons:
    """Illustrative English+Chinese lexicons shipped with the package."""
    data = resources.files("actionitems.data")
    temporal = set()
    verbs = set()
    for name in ("temporal_en.txt", "temporal_zh.txt"):
        for line in (data / name).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                temporal.add(line.lower())
    for name in ("action_verbs_en.txt", "action_verbs_zh.txt"):
        for line in (data / name).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                verbs.add(line.lower())
    return CandidateLexicons(frozenset(temporal), frozenset(verbs))


def _contains_term(text_lower: str, term: str) -> bool:
    # Substring match for unsegmented scripts, word-boundary match otherwise.
    if has_cjk(term) or has_cjk(text_lower):
        return term in text_lower
    return re.search(rf"\b{re.escape(term)}\b", text_lower) is not None


def select_candidates(meeting: Meeting, lexicons: CandidateLexicons) -> set[int]:
    """Sentences containing at least one temporal expression AND one action verb."""
    out: set[int] = set()
    for sent in meeting.sentences:
        text = sent.text.lower()
        if any(_contains_term(text, t) for t in lexicons.temporal_expressions) and any(
            _contains_term(text, v) for v in lexicons.action_verbs
        ):
            out.add(sent.sentence_id)
    return out


# ---------------------------------------------------------------------------
# Inter-annotator agreement
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KappaReport:
    """Pairwise Cohen's kappa values; ``None`` marks undefined (chance agreement 1)."""

    per_pair: dict[tuple[int, int], float | None]
    mean: float | None


def cohen_kappa(labels_a: Sequence[int], labels_b: Sequence[int]) -> float | None:
    """Cohen's kappa for two binary label vectors; None when p_e = 1."""
    if len(labels_a) != len(labels_b):
        raise ValueError("label vectors differ in length")
    n = len(labels_a)
    if n == 0:
        raise ValueError("empty label vectors")
    p_o = sum(1 for a, b in zip(labels_a, labels_b) if a == b) / n
    marg_a = Counter(labels_a)
    marg_b = Counter(labels_b)
    # integer product first keeps kappa exactly symmetric in its arguments
    p_e = sum(marg_a[c] * marg_b[c] for c in (0, 1)) / (n * n)
    if p_e >= 1.0:
        return None
    return (p_o - p_e) / (1.0 - p_e)


def pairwise_kappa(records: Sequence[SentenceRecord]) -> KappaReport:
    """Cohen's kappa for every unordered annotator pair, plus the unweighted mean.

    Every record must carry the same number (>= 2) of annotator labels.
    Pairs with degenerate chance agreement (p_e = 1) are marked ``None`` and
    excluded from the mean.
    """
    if not records:
        raise ValueError("no records")
    counts = {len(r.annotator_labels or ()) for r in records}
    if len(counts) != 1:
        raise ValueError(f"records carry mismatched annotator counts: {sorted(counts)}")
    num_annotators = counts.pop()
    if num_annotators < 2:
        raise ValueError(f"need >= 2 annotators, got {num_annotators}")
    columns = [
        [r.annotator_labels[a] for r in records] for a in range(num_annotators)
    ]
    per_pair: dict[tuple[int, int], float | None] = {}
    for i, j in combinations(range(num_annotators), 2):
        per_pair[(i, j)] = cohen_kappa(columns[i], columns[j])
    defined = [v for v in per_pair.values() if v is not None]
    mean = sum(defined) / len(defined) if defined else None
    return KappaReport(per_pair=per_pair, mean=mean)


# ---------------------------------------------------------------------------
# Corpus statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitStats:
    num_meetings: int
    num_utterances: int
    num_actions: int
    avg_actions_per_meeting: float
    std_actions_per_meeting: float  # population std


@dataclass(frozen=True)
class CorpusStats:
    overall: SplitStats
    per_split: dict[str, SplitStats] = field(default_factory=dict)


def _stats_for(meetings: Sequence[Meeting]) -> SplitStats:
    positives = [m.num_positives() for m in meetings]
    n = len(meetings)
    total_actions = sum(positives)
    if n == 0:
        return SplitStats(0, 0, 0, 0.0, 0.0)
    mean = total_actions / n
    var = sum((p - mean) ** 2 for p in positives) / n
    return SplitStats(
        num_meetings=n,
        num_utterances=sum(len(m) for m in meetings),
        num_actions=total_actions,
        avg_actions_per_meeting=mean,
        std_actions_per_meeting=math.sqrt(var),
    )


def corpus_stats(
    meetings: Sequence[Meeting], split: CorpusSplit | None = None
) -> CorpusStats:
    """Meeting/utterance/action counts plus positives-per-meeting mean and population std."""
    per_split: dict[str, SplitStats] = {}
    if split is not None:
        by_id = {m.meeting_id: m for m in meetings}
        for name in SPLIT_NAMES:
            members = [by_id[mid] for mid in sorted(getattr(split, name)) if mid in by_id]
            per_split[name] = _stats_for(members)
    return CorpusStats(overall=_stats_for(meetings), per_split=per_split)


def render_stats(stats: CorpusStats) -> str:
    """Plain-text statistics table (std is population std)."""
    names = ["all"] + [n for n in SPLIT_NAMES if n in stats.per_split]
    columns = {"all": stats.overall, **stats.per_split}
    rows = [
        ("Total # Meetings", lambda s: str(s.num_meetings)),
        ("Total # Utterances", lambda s: str(s.num_utterances)),
        ("Total # Action", lambda s: str(s.num_actions)),
        ("Avg. # Action per Meeting", lambda s: f"{s.avg_actions_per_meeting:.2f}"),
        ("Std. # Action per Meeting", lambda s: f"{s.std_actions_per_meeting:.2f}"),
    ]
    width = max(len(r[0]) for r in rows)
    col_width = max(12, *(len(n) for n in names))
    lines = ["# std is population std over meetings"]
    lines.append(" " * width + "  " + "  ".join(n.rjust(col_width) for n in names))
    for label, fn in rows:
        lines.append(
            label.ljust(width)
            + "  "
            + "  ".join(fn(columns[n]).rjust(col_width) for n in names)
        )
    return "\n".join(lines)
