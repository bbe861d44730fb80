"""Adapter for BERT-style pre-trained checkpoints.

Wraps a transformer backbone with a pooler (first-position pooling + dense +
tanh) and a freshly initialized 2-way classification head.  Inputs are
truncated to 128 tokens.  The backbone's encoder and pooler parameters are
exposed as a ParameterSet so the hybrid-initialization surgery works on real
checkpoints exactly as on the toy model.

``transformers`` is imported lazily; install the ``hf`` extra to load
checkpoints by name.
"""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

from .errors import LayerCompatibilityError
from .model import ParameterSet

POOLER_PREFIX = "pooler."


class PretrainedClassifier(nn.Module):
    """Transformer backbone + pooler + fresh 2-way head."""

    def __init__(
        self,
        backbone,
        tokenizer,
        dropout_rate: float = 0.3,
        max_input_units: int = 128,
        init_seed: int = 0,
    ):
        super().__init__()
        if getattr(backbone, "pooler", None) is None:
            raise ValueError("backbone must expose a pooler (BERT-style models do)")
        self.backbone = backbone
        self.tokenizer = tokenizer
        self.max_input_units = max_input_units
        self._dropout_rate = dropout_rate
        self.head_dropout = nn.Dropout(dropout_rate)
        hidden = backbone.config.hidden_size
        self.head = nn.Linear(hidden, 2)
        gen = torch.Generator().manual_seed(init_seed)
        bound = 1.0 / math.sqrt(hidden)
        with torch.no_grad():
            self.head.weight.uniform_(-bound, bound, generator=gen)
            self.head.bias.uniform_(-bound, bound, generator=gen)
        self._apply_dropout_rate()

    @classmethod
    def from_checkpoint(cls, name_or_path: str, **kwargs) -> "PretrainedClassifier":
        from transformers import AutoModel, AutoTokenizer

        backbone = AutoModel.from_pretrained(name_or_path)
        tokenizer = AutoTokenizer.from_pretrained(name_or_path)
        return cls(backbone, tokenizer, **kwargs)

    # dropout rate is propagated to every dropout module in the stack so the
    # run-level setting overrides the checkpoint's own configuration
    @property
    def dropout_rate(self) -> float:
        return self._dropout_rate

    @dropout_rate.setter
    def dropout_rate(self, value: float) -> None:
        self._dropout_rate = value
        self._apply_dropout_rate()

    def _apply_dropout_rate(self) -> None:
        for module in self.modules():
            if isinstance(module, nn.Dropout):
                module.p = self._dropout_rate

    def forward_dist(
        self, text: str, rng_seed: int = 0, train_mode: bool = False
    ) -> torch.Tensor:
        if not text or not text.strip():
            raise ValueError("empty input text")
        encoded = self.tokenizer(
            text, truncation=True, max_length=self.max_input_units, return_tensors="pt"
        )
        self.train(train_mode)
        if train_mode:
            with torch.random.fork_rng(devices=[]):
                torch.manual_seed(rng_seed)
                pooled = self.backbone(**encoded).pooler_output[0]
                pooled = self.head_dropout(pooled)
        else:
            pooled = self.backbone(**encoded).pooler_output[0]
        return torch.softmax(self.head(pooled), dim=-1)

    def clone(self) -> "PretrainedClassifier":
        import copy

        return copy.deepcopy(self)

    # -- parameter-set surgery ------------------------------------------------

    def export_parameters(self) -> ParameterSet:
        layers = {}
        encoder_names = []
        pooler_names = []
        for name, param in self.backbone.named_parameters():
            layers[name] = param.detach().cpu().numpy().copy()
            if name.startswith(POOLER_PREFIX):
                pooler_names.append(name)
            else:
                encoder_names.append(name)
        return ParameterSet(
            layers=layers,
            encoder_layers=tuple(encoder_names),
            pooler_layer=tuple(pooler_names),
        )

    def load_parameters(self, params: ParameterSet) -> None:
        """Install encoder+pooler weights; the head keeps its fresh initialization."""
        own = dict(self.backbone.named_parameters())
        mismatched = tuple(sorted(set(params.layers) ^ set(own)))
        if mismatched:
            raise LayerCompatibilityError(
                "parameter set does not match this backbone", mismatched
            )
        with torch.no_grad():
            for name, array in params.layers.items():
                if tuple(own[name].shape) != array.shape:
                    raise LayerCompatibilityError("layer shapes differ", (name,))
                own[name].copy_(torch.from_numpy(np.asarray(array)))
