"""Assembly of encoder, both propagation streams and the classifier head."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from . import encoder, frequency, head, hypergraph
from .encoder import FEATURE_TYPES
from .numerics import Tape, Var

ABLATIONS = (
    "none",
    "no_multivariate",
    "no_multifrequency",
    "no_attention",
    "drop_emotional",
    "drop_attentional",
    "drop_upper_body",
    "no_propagation",
)


@dataclass
class ModelConfig:
    n_students: int
    n_classes: int
    dims: dict = field(default_factory=lambda: {"emotional": 512, "attentional": 49, "upper_body": 34})
    hidden: int = 64
    hyper_layers: int = 3
    freq_layers: int = 3
    n_max: int = 16
    attention: bool = True
    attention_per_layer: bool = True
    ablation: str = "none"

    def __post_init__(self):
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}; choose from {', '.join(ABLATIONS)}")
        if self.hyper_layers < 1 or self.freq_layers < 1:
            raise ValueError("layer counts must be >= 1")
        if self.n_students > self.n_max:
            raise ValueError(f"{self.n_students} students exceed embedding table size {self.n_max}")

    @property
    def use_hypergraph(self) -> bool:
        return self.ablation not in ("no_multivariate", "no_propagation")

    @property
    def use_frequency(self) -> bool:
        return self.ablation not in ("no_multifrequency", "no_propagation")

    @property
    def use_attention(self) -> bool:
        return self.attention and self.use_hypergraph and self.ablation != "no_attention"

    @property
    def dropped_types(self) -> tuple:
        if self.ablation.startswith("drop_"):
            return (self.ablation[len("drop_"):],)
        return ()

    @property
    def fused_width(self) -> int:
        streams = int(self.use_hypergraph) + int(self.use_frequency)
        return 3 * self.hidden * max(streams, 1)

    def to_dict(self) -> dict:
        return asdict(self)


@lru_cache(maxsize=64)
def _topologies(n_students: int, copies: int):
    return (hypergraph.build_topology(n_students).tile(copies),
            frequency.build_pair_graph(n_students).tile(copies))


def init_params(config: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    params = encoder.init_params(rng, config.dims, config.hidden, config.n_max)
    for t in config.dropped_types:
        del params[f"encoder.{t}.weight"], params[f"encoder.{t}.bias"]
    if config.use_hypergraph:
        hg = hypergraph.init_params(rng, config.n_students, config.hidden, config.hyper_layers)
        if not config.use_attention:
            del hg["hypergraph.attention"]
        params.update(hg)
    if config.use_frequency:
        params.update(frequency.init_params(rng, config.hidden, config.freq_layers))
    params.update(head.init_params(rng, config.fused_width, config.n_classes))
    return params


def param_count(params: dict[str, np.ndarray]) -> int:
    return int(sum(p.size for p in params.values()))


class Dropout:
    """Inverted dropout drawing a fresh mask from ``rng`` on every call."""

    def __init__(self, tape: Tape, rate: float, rng: np.random.Generator):
        self.tape = tape
        self.keep = 1.0 - rate
        self.rng = rng

    def __call__(self, x: Var) -> Var:
        mask = (self.rng.random(x.shape) < self.keep) / self.keep
        return self.tape.mask(x, mask)


def forward(config: ModelConfig, params: dict[str, np.ndarray], batch: dict, *,
            tape: Optional[Tape] = None, dropout: float = 0.0,
            rng: Optional[np.random.Generator] = None):
    """Run the network on a batch of snapshots.

    ``batch`` holds stacked per-student arrays ``emotional``, ``attentional``,
    ``upper_body`` and ``student_index`` for ``batch["copies"]`` classrooms of
    ``config.n_students`` students each.  Returns ``(tape, probs, weights)``
    where ``weights`` maps parameter names to their tape leaves.
    """
    tape = tape or Tape()
    weights = {name: tape.param(name, value) for name, value in params.items()}
    copies = int(batch["copies"])
    hyper_topo, pair_topo = _topologies(config.n_students, copies)
    drop = Dropout(tape, dropout, rng) if dropout > 0 else None

    raw = {t: tape.const(batch[t]) for t in FEATURE_TYPES if t not in config.dropped_types}
    nodes = encoder.encode(tape, raw, batch["student_index"], weights, config.dropped_types)

    streams = []
    if config.use_hypergraph:
        streams.append(hypergraph.multivariate_forward(
            tape, nodes, hyper_topo, weights, config.hyper_layers,
            attention=config.use_attention, attention_per_layer=config.attention_per_layer, dropout=drop))
    if config.use_frequency:
        streams.append(frequency.multifrequency_forward(
            tape, nodes, pair_topo, weights, config.freq_layers, dropout=drop))
    if not streams:
        streams.append(nodes)
    mu = head.fuse(tape, streams)
    probs = head.classify(tape, mu, weights["head.weight"], weights["head.bias"])
    return tape, probs, weights
