import random

import pytest

from actionitems.corpus import Meeting, SentenceRecord

TOPICS = [
    "we should review the budget numbers",
    "the deployment pipeline is still broken",
    "marketing wants the slides by friday",
    "let us move on to the next item",
    "the api latency regressed last week",
    "customer feedback has been positive",
    "ok",
    "sounds good",
    "i will send the summary tomorrow",
    "please schedule a follow up meeting next week",
]

SPEAKERS = ["alice", "bob", "carol", "dave"]


def build_meeting(meeting_id: str, num_sentences: int, seed: int = 0) -> Meeting:
    """Deterministic meeting with repeated short utterances (tie fodder)."""
    rng = random.Random(f"{meeting_id}|{seed}")
    sentences = []
    for sid in range(num_sentences):
        base = rng.choice(TOPICS)
        # vary roughly half the sentences so duplicates survive
        if rng.random() < 0.5:
            base = f"{base} {rng.choice(['really', 'then', 'now', 'though'])}"
        sentences.append(
            SentenceRecord(
                meeting_id=meeting_id,
                sentence_id=sid,
                speaker=rng.choice(SPEAKERS),
                text=base,
                label=rng.randint(0, 1),
            )
        )
    return Meeting(meeting_id=meeting_id, sentences=tuple(sentences))


@pytest.fixture(scope="session")
def meeting_fifty() -> Meeting:
    return build_meeting("fixture-50", 50, seed=7)


@pytest.fixture
def small_meeting() -> Meeting:
    records = [
        ("alice", "good morning everyone", 0),
        ("bob", "we need to finish the report", 1),
        ("alice", "the report deadline is tomorrow", 0),
        ("carol", "lunch was great", 0),
        ("bob", "i will send the report tomorrow", 1),
    ]
    return Meeting(
        meeting_id="m-small",
        sentences=tuple(
            SentenceRecord("m-small", i, spk, text, label)
            for i, (spk, text, label) in enumerate(records)
        ),
    )
