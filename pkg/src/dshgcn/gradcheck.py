"""Central finite-difference check of every parameter gradient of the full model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import head
from .data import SyntheticConfig, class_weights, generate_synthetic
from .model import ModelConfig, forward, init_params

GROUPS = (
    ("encoder", ("encoder.emotional", "encoder.attentional", "encoder.upper_body")),
    ("student_embedding", ("encoder.student_embedding",)),
    ("edge_weight", ("hypergraph.edge_weight",)),
    ("attention", ("hypergraph.attention",)),
    ("hyperconv", ("hypergraph.P",)),
    ("frequency", ("frequency.",)),
    ("classifier", ("head.",)),
)


def group_of(name: str) -> str:
    for group, prefixes in GROUPS:
        if any(name.startswith(p) for p in prefixes):
            return group
    raise KeyError(name)


@dataclass
class GroupResult:
    group: str
    n_coords: int
    max_rel_error: float
    passed: bool

    @property
    def applicable(self) -> bool:
        return self.n_coords > 0


def gradient_check(seed: int = 0, n_students: int = 3, hidden: int = 8, hyper_layers: int = 2,
                   freq_layers: int = 2, attention: bool = True, snapshots: int = 2,
                   eps: float = 1e-4, tol: float = 1e-4, l2: float = 1e-3,
                   dims: dict | None = None) -> list[GroupResult]:
    """Compare tape gradients with central differences, coordinate by coordinate.

    Error per coordinate is ``|analytic - numeric| / max(1, |numeric|)``.
    Edge weights are perturbed away from their all-ones start so the check
    is generic.
    """
    dims = dims or {"emotional": 6, "attentional": 5, "upper_body": 4}
    data = generate_synthetic(SyntheticConfig(n_students=n_students, snapshots=snapshots, n_classes=2,
                                              rho=0.5, noise=0.5, seed=seed, dims=dims, distractors=1))
    mcfg = ModelConfig(n_students=n_students, n_classes=2, dims=dims, hidden=hidden,
                       hyper_layers=hyper_layers, freq_layers=freq_layers,
                       n_max=max(n_students, 4), attention=attention)
    rng = np.random.default_rng(seed)
    params = init_params(mcfg, rng)
    params["hypergraph.edge_weight"] = rng.uniform(0.5, 1.5, size=params["hypergraph.edge_weight"].shape)
    params["encoder.student_embedding"] = rng.normal(0.0, 0.5, size=params["encoder.student_embedding"].shape)
    for name in params:
        if name.endswith(".bias"):
            params[name] = rng.normal(0.0, 0.1, size=params[name].shape)
    batch = data.batch()
    labels = batch["labels"]
    counts = np.bincount(labels, minlength=2)
    weights = class_weights(labels, 2) if counts.min() > 0 else np.array([0.7, 1.3])

    def objective(p):
        tape, probs, leaves = forward(mcfg, p, batch)
        return tape, head.loss(tape, probs, labels, weights, leaves.values(), l2)

    tape, loss = objective(params)
    analytic = tape.backward(loss)

    worst: dict[str, list] = {g: [0, 0.0] for g, _ in GROUPS}
    for name, value in params.items():
        g = group_of(name)
        flat = value.reshape(-1)
        grad = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = objective(params)[1].value[0, 0]
            flat[i] = orig - eps
            down = objective(params)[1].value[0, 0]
            flat[i] = orig
            numeric = (up - down) / (2 * eps)
            err = abs(grad[i] - numeric) / max(1.0, abs(numeric))
            worst[g][0] += 1
            worst[g][1] = max(worst[g][1], err)
    return [GroupResult(g, n, err, n == 0 or err <= tol) for g, (n, err) in worst.items()]
