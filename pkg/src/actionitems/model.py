"""Classifier models, parameter-set surgery, and sliding-window chunking.

Two classifier implementations share one interface:

  * ``TinyTextClassifier``: a deterministic toy encoder (hashed n-gram
    features -> feed-forward net with dropout) in float64, so every
    training-path test runs on CPU without downloads.
  * ``PretrainedClassifier`` (see ``pretrained``): an adapter over
    transformer checkpoints with the same encoder/pooler/head split.

Parameter sets are named tensor collections partitioned into
``encoder_layers`` and ``pooler_layer`` groups; ``ensemble_init`` builds a
hybrid from the encoder of one set and the pooler of another without
changing the parameter count.
"""

from __future__ import annotations

import io
import json
import math
import zipfile
import zlib
from copy import deepcopy
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np
import torch
from torch import nn

from .corpus import Meeting
from .errors import LayerCompatibilityError
from .context import FOCUS_CLOSE, FOCUS_OPEN, text_units


# ---------------------------------------------------------------------------
# Parameter sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParameterSet:
    """Named arrays partitioned into encoder and pooler groups.

    Every layer name belongs to exactly one group; the classification head is
    never part of a ParameterSet (it is always freshly initialized).
    """

    layers: dict[str, np.ndarray]
    encoder_layers: tuple[str, ...]
    pooler_layer: tuple[str, ...]

    def __post_init__(self):
        grouped = list(self.encoder_layers) + list(self.pooler_layer)
        if len(set(grouped)) != len(grouped):
            raise ValueError("layer groups overlap")
        if set(grouped) != set(self.layers):
            raise ValueError("groups must partition the layer names exactly")

    def num_parameters(self) -> int:
        return int(sum(v.size for v in self.layers.values()))

    def save(self, path: str | Path) -> None:
        meta = {
            "kind": "parameter_set",
            "encoder_layers": list(self.encoder_layers),
            "pooler_layer": list(self.pooler_layer),
        }
        write_npz(path, self.layers, meta)

    @classmethod
    def load(cls, path: str | Path) -> "ParameterSet":
        arrays, meta = read_npz(path)
        return cls(
            layers=arrays,
            encoder_layers=tuple(meta["encoder_layers"]),
            pooler_layer=tuple(meta["pooler_layer"]),
        )


def write_npz(path: str | Path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    """Byte-deterministic .npz writer (fixed member timestamps, sorted names)."""
    with zipfile.ZipFile(Path(path), "w", zipfile.ZIP_STORED) as zf:
        members = dict(arrays)
        members["__meta__"] = np.frombuffer(
            json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8
        )
        for name in sorted(members):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(members[name]))
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, buf.getvalue())


def read_npz(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    with np.load(Path(path)) as npz:
        arrays = {k: npz[k] for k in npz.files if k != "__meta__"}
        meta = json.loads(npz["__meta__"].tobytes().decode("utf-8"))
    return arrays, meta


def ensemble_init(theta_a: ParameterSet, theta_b: ParameterSet) -> ParameterSet:
    """Hybrid parameter set: encoder layers from ``theta_a``, pooler from ``theta_b``.

    Sources must be architecture-compatible (identical layer names, groups,
    and shapes).  The result has exactly theta_a's parameter count.
    """
    offending = []
    for name in sorted(set(theta_a.layers) ^ set(theta_b.layers)):
        offending.append(name)
    if offending:
        raise LayerCompatibilityError("layer names differ", tuple(offending))
    if (
        set(theta_a.encoder_layers) != set(theta_b.encoder_layers)
        or set(theta_a.pooler_layer) != set(theta_b.pooler_layer)
    ):
        raise LayerCompatibilityError("layer group assignments differ")
    for name in sorted(theta_a.layers):
        if theta_a.layers[name].shape != theta_b.layers[name].shape:
            offending.append(name)
    if offending:
        raise LayerCompatibilityError("layer shapes differ", tuple(offending))
    layers = {name: theta_a.layers[name].copy() for name in theta_a.encoder_layers}
    layers.update({name: theta_b.layers[name].copy() for name in theta_a.pooler_layer})
    return ParameterSet(
        layers=layers,
        encoder_layers=theta_a.encoder_layers,
        pooler_layer=theta_a.pooler_layer,
    )


def load_ensemble_manifest(path: str | Path) -> ParameterSet:
    """Checkpoint manifest: JSON mapping group -> ParameterSet file.

        {"encoder_layers": "struct.npz", "pooler_layer": "roberta.npz"}
    """
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    for key in ("encoder_layers", "pooler_layer"):
        if key not in obj:
            raise ValueError(f"ensemble manifest missing key {key!r}")
    base = Path(path).parent
    def _resolve(p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else base / q
    theta_a = ParameterSet.load(_resolve(obj["encoder_layers"]))
    theta_b = ParameterSet.load(_resolve(obj["pooler_layer"]))
    return ensemble_init(theta_a, theta_b)


# ---------------------------------------------------------------------------
# Classifier interface
# ---------------------------------------------------------------------------

class TextClassifier(Protocol):
    """Text -> probability distribution over {0, 1}."""

    dropout_rate: float
    max_input_units: int

    def forward_dist(
        self, text: str, rng_seed: int = 0, train_mode: bool = False
    ) -> torch.Tensor: ...

    def clone(self) -> "TextClassifier": ...

    def export_parameters(self) -> ParameterSet: ...

    def load_parameters(self, params: ParameterSet) -> None: ...


def forward(
    model: TextClassifier, input_text: str, rng_seed: int = 0, train_mode: bool = False
) -> np.ndarray:
    """Probability distribution over {0, 1} as a numpy array.

    ``train_mode=True`` applies dropout driven by ``rng_seed``;
    ``train_mode=False`` is dropout-free and deterministic.
    """
    dist = model.forward_dist(input_text, rng_seed=rng_seed, train_mode=train_mode)
    return dist.detach().cpu().numpy()


# ---------------------------------------------------------------------------
# Toy encoder
# ---------------------------------------------------------------------------

class HashedNgramFeaturizer:
    """Region-aware hashed n-gram bag features over rendered inputs.

    The rendered input distinguishes the focus sentence with markers; n-grams
    inside the focus span hash into different buckets than context n-grams,
    mirroring how a segment-aware encoder separates focus from context.
    Uses crc32 hashing, so features are stable across processes.
    """

    def __init__(self, dim: int = 2048, orders: tuple[int, ...] = (1, 2)):
        if dim <= 0 or not orders:
            raise ValueError("dim must be positive and orders non-empty")
        self.dim = dim
        self.orders = tuple(orders)

    def _segments(self, text: str) -> list[tuple[str, str]]:
        i = text.find(FOCUS_OPEN)
        j = text.find(FOCUS_CLOSE)
        if 0 <= i < j:
            return [
                ("ctx", text[:i]),
                ("focus", text[i + len(FOCUS_OPEN) : j]),
                ("ctx", text[j + len(FOCUS_CLOSE) :]),
            ]
        return [("focus", text)]

    def features(self, text: str, max_units: int | None = None) -> np.ndarray:
        tagged: list[tuple[str, str]] = []
        for region, segment in self._segments(text):
            tagged.extend((region, u) for u in text_units(segment))
        if max_units is not None:
            tagged = tagged[:max_units]
        vec = np.zeros(self.dim, dtype=np.float64)
        # n-grams never straddle a region boundary
        runs: list[tuple[str, list[str]]] = []
        for region, unit in tagged:
            if runs and runs[-1][0] == region:
                runs[-1][1].append(unit)
            else:
                runs.append((region, [unit]))
        for region, units in runs:
            for n in self.orders:
                for k in range(len(units) - n + 1):
                    key = region + "\x1f" + "\x1f".join(units[k : k + n])
                    vec[zlib.crc32(key.encode("utf-8")) % self.dim] += 1.0
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return vec


def _init_linear(layer: nn.Linear, gen: torch.Generator) -> None:
    bound = 1.0 / math.sqrt(layer.weight.shape[1])
    with torch.no_grad():
        layer.weight.uniform_(-bound, bound, generator=gen)
        layer.bias.uniform_(-bound, bound, generator=gen)


def _dropout(x: torch.Tensor, p: float, gen: torch.Generator) -> torch.Tensor:
    keep = (torch.rand(x.shape, generator=gen, dtype=x.dtype) >= p).to(x.dtype)
    return x * keep / (1.0 - p)


class TinyTextClassifier(nn.Module):
    """Deterministic toy classifier: hashed n-grams -> encoder -> pooler -> head.

    Runs in float64 so finite-difference gradient checks are meaningful.
    (input, rng_seed, train_mode) fully determines the output distribution.
    """

    def __init__(
        self,
        feature_dim: int = 2048,
        hidden_dim: int = 64,
        dropout_rate: float = 0.3,
        max_input_units: int = 128,
        init_seed: int = 0,
        ngram_orders: tuple[int, ...] = (1, 2),
    ):
        super().__init__()
        if not 0.0 <= dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {dropout_rate}")
        self.feature_dim = feature_dim
        self.hidden_dim = hidden_dim
        self.dropout_rate = dropout_rate
        self.max_input_units = max_input_units
        self.init_seed = init_seed
        self.featurizer = HashedNgramFeaturizer(feature_dim, ngram_orders)
        self.encoder = nn.Linear(feature_dim, hidden_dim, dtype=torch.float64)
        self.pooler = nn.Linear(hidden_dim, hidden_dim, dtype=torch.float64)
        self.head = nn.Linear(hidden_dim, 2, dtype=torch.float64)
        gen = torch.Generator().manual_seed(init_seed)
        for layer in (self.encoder, self.pooler, self.head):
            _init_linear(layer, gen)

    def forward_dist(
        self, text: str, rng_seed: int = 0, train_mode: bool = False
    ) -> torch.Tensor:
        if not text or not text.strip():
            raise ValueError("empty input text")
        feats = self.featurizer.features(text, max_units=self.max_input_units)
        x = torch.from_numpy(feats)
        h = torch.tanh(self.encoder(x))
        if train_mode and self.dropout_rate > 0.0:
            gen = torch.Generator().manual_seed(rng_seed)
            h = _dropout(h, self.dropout_rate, gen)
            pooled = torch.tanh(self.pooler(h))
            pooled = _dropout(pooled, self.dropout_rate, gen)
        else:
            pooled = torch.tanh(self.pooler(h))
        return torch.softmax(self.head(pooled), dim=-1)

    def clone(self) -> "TinyTextClassifier":
        return deepcopy(self)

    # -- parameter-set surgery ------------------------------------------------

    _ENCODER_NAMES = ("encoder.weight", "encoder.bias")
    _POOLER_NAMES = ("pooler.weight", "pooler.bias")

    def export_parameters(self) -> ParameterSet:
        state = {k: v.detach().cpu().numpy().copy() for k, v in self.state_dict().items()}
        layers = {n: state[n] for n in self._ENCODER_NAMES + self._POOLER_NAMES}
        return ParameterSet(
            layers=layers,
            encoder_layers=self._ENCODER_NAMES,
            pooler_layer=self._POOLER_NAMES,
        )

    def load_parameters(self, params: ParameterSet) -> None:
        """Install encoder+pooler weights; the head keeps its fresh initialization."""
        expected = set(self._ENCODER_NAMES + self._POOLER_NAMES)
        if set(params.layers) != expected:
            raise LayerCompatibilityError(
                "parameter set does not match this architecture",
                tuple(sorted(set(params.layers) ^ expected)),
            )
        with torch.no_grad():
            for name, array in params.layers.items():
                module_name, attr = name.split(".")
                target = getattr(getattr(self, module_name), attr)
                if tuple(target.shape) != array.shape:
                    raise LayerCompatibilityError("layer shapes differ", (name,))
                target.copy_(torch.from_numpy(array))

    # -- checkpoint io ---------------------------------------------------------

    def save(self, path: str | Path) -> None:
        arrays = {k: v.detach().cpu().numpy() for k, v in self.state_dict().items()}
        meta = {
            "kind": "tiny_text_classifier",
            "config": {
                "feature_dim": self.feature_dim,
                "hidden_dim": self.hidden_dim,
                "dropout_rate": self.dropout_rate,
                "max_input_units": self.max_input_units,
                "init_seed": self.init_seed,
                "ngram_orders": list(self.featurizer.orders),
            },
        }
        write_npz(path, arrays, meta)

    @classmethod
    def load(cls, path: str | Path) -> "TinyTextClassifier":
        arrays, meta = read_npz(path)
        cfg = meta["config"]
        cfg["ngram_orders"] = tuple(cfg["ngram_orders"])
        model = cls(**cfg)
        state = {k: torch.from_numpy(v) for k, v in arrays.items()}
        model.load_state_dict(state)
        return model


# ---------------------------------------------------------------------------
# Sliding windows for the sequence-labeling formulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WindowSpec:
    """Greedy sliding-window parameters: capacity in input units, overlap in sentences."""

    capacity: int
    overlap_sentences: int = 1

    def __post_init__(self):
        if self.capacity <= 0:
            raise ValueError("capacity must be positive")
        if self.overlap_sentences < 0:
            raise ValueError("overlap must be >= 0")


def make_windows(
    meeting: Meeting, spec: WindowSpec, unit_lengths: Sequence[int]
) -> list[list[int]]:
    """Greedy fill to capacity; consecutive windows share exactly
    ``overlap_sentences`` sentences; the union covers every sentence.

    Each boundary must admit at least one new sentence beyond the overlap;
    otherwise capacity is too small for the requested overlap.
    """
    n = len(meeting)
    if len(unit_lengths) != n:
        raise ValueError("unit_lengths must align with meeting sentences")
    for sid, length in enumerate(unit_lengths):
        if length > spec.capacity:
            raise ValueError(
                f"sentence {sid} ({length} units) exceeds window capacity {spec.capacity}"
            )
    if n == 0:
        return []
    windows: list[list[int]] = []
    start = 0
    while True:
        end = start
        total = 0
        while end < n and total + unit_lengths[end] <= spec.capacity:
            total += unit_lengths[end]
            end += 1
        window = list(range(start, end))
        windows.append(window)
        if end >= n:
            return windows
        if spec.overlap_sentences >= len(window):
            raise ValueError(
                f"window starting at sentence {start} holds {len(window)} sentences; "
                f"cannot overlap {spec.overlap_sentences} and still advance"
            )
        start = end - spec.overlap_sentences


def sentence_unit_lengths(meeting: Meeting, unit: str = "auto") -> list[int]:
    return [len(text_units(s.text, unit)) for s in meeting.sentences]
