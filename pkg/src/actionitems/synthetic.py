"""Desk-scale synthetic meeting corpora with a planted lexical signal.

Positive sentences embed an action verb plus a temporal expression (both
drawn from the shipped illustrative lexicons); negative sentences are filler
chatter guaranteed free of signal tokens.  Useful for smoke-testing the
whole pipeline without real data:

    python -c "from actionitems.synthetic import write_demo_corpus; write_demo_corpus('demo.jsonl')"
"""

from __future__ import annotations

import random
from pathlib import Path

from .corpus import Meeting, SentenceRecord, write_transcripts

SIGNAL_VERBS = ("finish", "send", "prepare", "schedule", "draft")
SIGNAL_TEMPORAL = ("tomorrow", "today", "next week", "by monday", "on friday")
OPENERS = ("we will", "i will", "you should", "please", "let us")
OBJECTS = ("report", "slides", "budget", "proposal", "summary", "agenda")

FILLER = (
    "the", "a", "that", "this", "point", "discussion", "idea", "question",
    "team", "meeting", "agrees", "thinks", "about", "sounds", "interesting",
    "maybe", "right", "sure", "yes", "well", "okay", "topic", "detail",
    "everyone", "nobody", "something", "nothing", "good", "fine", "clear",
)

SPEAKERS = ("spk1", "spk2", "spk3", "spk4")


def _positive_text(rng: random.Random) -> str:
    return (
        f"{rng.choice(OPENERS)} {rng.choice(SIGNAL_VERBS)} the "
        f"{rng.choice(OBJECTS)} {rng.choice(SIGNAL_TEMPORAL)}."
    )


def _negative_text(rng: random.Random) -> str:
    words = [rng.choice(FILLER) for _ in range(rng.randint(4, 10))]
    return " ".join(words) + "."


def _noisy_labels(label: int, rng: random.Random, annotators: int, flip_prob: float) -> tuple[int, ...]:
    return tuple(
        1 - label if rng.random() < flip_prob else label for _ in range(annotators)
    )


def make_meeting(
    meeting_id: str,
    num_sentences: int = 20,
    num_positives: int = 5,
    seed: int = 0,
    annotators: int = 0,
    flip_prob: float = 0.1,
) -> Meeting:
    if num_positives > num_sentences:
        raise ValueError("more positives requested than sentences")
    rng = random.Random(f"{meeting_id}|{seed}")
    positive_ids = set(rng.sample(range(num_sentences), num_positives))
    sentences = []
    for sid in range(num_sentences):
        label = int(sid in positive_ids)
        text = _positive_text(rng) if label else _negative_text(rng)
        sentences.append(
            SentenceRecord(
                meeting_id=meeting_id,
                sentence_id=sid,
                speaker=rng.choice(SPEAKERS),
                text=text,
                label=label,
                annotator_labels=(
                    _noisy_labels(label, rng, annotators, flip_prob) if annotators else None
                ),
            )
        )
    return Meeting(meeting_id=meeting_id, sentences=tuple(sentences))


def make_corpus(
    num_meetings: int = 10,
    sentences_per_meeting: int = 20,
    positive_rate: float = 0.25,
    seed: int = 0,
    annotators: int = 0,
) -> list[Meeting]:
    num_positives = max(1, round(positive_rate * sentences_per_meeting))
    return [
        make_meeting(
            f"synth-{i:03d}",
            num_sentences=sentences_per_meeting,
            num_positives=num_positives,
            seed=seed,
            annotators=annotators,
        )
        for i in range(num_meetings)
    ]


def write_demo_corpus(
    path: str | Path,
    num_meetings: int = 10,
    sentences_per_meeting: int = 20,
    seed: int = 0,
    annotators: int = 0,
) -> Path:
    path = Path(path)
    write_transcripts(
        make_corpus(
            num_meetings=num_meetings,
            sentences_per_meeting=sentences_per_meeting,
            seed=seed,
            annotators=annotators,
        ),
        path,
    )
    return path
