"""Adam, the end-to-end training loop, evaluation and the two sweeps."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional, Sequence

import numpy as np

from . import head
from .data import Dataset, class_weights, split
from .metrics import MetricsReport, evaluate_predictions
from .model import ABLATIONS, ModelConfig, forward, init_params, param_count

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    epochs: int = 200
    batch_size: int = 8
    dropout: float = 0.5
    l2: float = 1e-4
    hyper_layers: int = 3
    freq_layers: int = 3
    hidden: int = 64
    n_max: int = 16
    seed: int = 0
    attention: bool = True
    attention_per_layer: bool = True
    ablation: str = "none"
    train_fraction: float = 0.8
    subsample_fraction: float = 1.0
    eval_batch: int = 64

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.hyper_layers < 1 or self.freq_layers < 1:
            raise ValueError("layer counts L and K must be >= 1")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}; choose from {', '.join(ABLATIONS)}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**d)

    @classmethod
    def from_file(cls, path: str) -> "TrainConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def model_config(config: TrainConfig, dataset: Dataset) -> ModelConfig:
    m = dataset.manifest
    return ModelConfig(n_students=m.students_per_snapshot, n_classes=m.n_classes, dims=m.dims,
                       hidden=config.hidden, hyper_layers=config.hyper_layers, freq_layers=config.freq_layers,
                       n_max=config.n_max, attention=config.attention,
                       attention_per_layer=config.attention_per_layer, ablation=config.ablation)


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """In-place bias-corrected update of every entry of ``params``."""
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k, p in params.items():
            g = grads[k]
            if g.shape != p.shape:
                raise ValueError(f"adam: gradient for {k} has shape {g.shape}, parameter {p.shape}")
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * (g * g)
            p -= self.lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)


def loss_and_grads(mcfg: ModelConfig, params: dict, batch: dict, weights: np.ndarray, l2: float,
                   dropout: float = 0.0, rng: Optional[np.random.Generator] = None):
    tape, probs, leaves = forward(mcfg, params, batch, dropout=dropout, rng=rng)
    loss = head.loss(tape, probs, batch["labels"], weights, leaves.values(), l2)
    return float(loss.value[0, 0]), tape.backward(loss), probs.value


def predict_proba(mcfg: ModelConfig, params: dict, dataset: Dataset, chunk: int = 64) -> np.ndarray:
    out = []
    for start in range(0, len(dataset), chunk):
        batch = dataset.batch(range(start, min(start + chunk, len(dataset))))
        out.append(forward(mcfg, params, batch)[1].value)
    return np.concatenate(out) if out else np.zeros((0, mcfg.n_classes))


def evaluate(mcfg: ModelConfig, params: dict, dataset: Dataset, chunk: int = 64) -> MetricsReport:
    """Metrics with dropout off; deterministic."""
    if len(dataset) == 0:
        raise ValueError("evaluate: no snapshots")
    return evaluate_predictions(dataset.labels(), predict_proba(mcfg, params, dataset, chunk))


def train(config: TrainConfig, train_set: Dataset, test_set: Optional[Dataset] = None):
    """Optimise a fresh model; returns ``(model_config, params, epoch_log)``.

    Each log row is ``(epoch, train_loss, train_acc, test_acc)``; the loss and
    accuracy are running averages over the epoch's training batches.
    """
    if len(train_set) == 0:
        raise ValueError("train: empty training split")
    mcfg = model_config(config, train_set)
    init_rng, shuffle_rng, drop_rng = (np.random.default_rng(s)
                                       for s in np.random.SeedSequence(config.seed).spawn(3))
    params = init_params(mcfg, init_rng)
    weights = class_weights(train_set.labels(), mcfg.n_classes)
    opt = Adam(params, config.learning_rate)
    history = []
    n = len(train_set)
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        total_loss, correct, seen = 0.0, 0, 0
        for start in range(0, n, config.batch_size):
            batch = train_set.batch(order[start:start + config.batch_size])
            loss, grads, probs = loss_and_grads(mcfg, params, batch, weights, config.l2,
                                                config.dropout, drop_rng)
            opt.step(params, grads)
            k = len(batch["labels"])
            total_loss += loss * k
            correct += int((head.predict(probs) == batch["labels"]).sum())
            seen += k
        test_acc = (evaluate(mcfg, params, test_set, config.eval_batch).accuracy
                    if test_set is not None and len(test_set) else float("nan"))
        history.append((epoch, total_loss / seen, correct / seen, test_acc))
        log.debug("epoch %d loss %.6f train %.4f test %.4f", *history[-1])
    return mcfg, params, history


def split_dataset(config: TrainConfig, dataset: Dataset) -> tuple[Dataset, Dataset]:
    tr, te = split(len(dataset), config.train_fraction, config.seed, config.subsample_fraction)
    return dataset.subset(tr), dataset.subset(te)


@dataclass
class RunResult:
    model: ModelConfig
    params: dict
    history: list
    metrics: Optional[MetricsReport]
    n_params: int
    seconds: float


def run(config: TrainConfig, dataset: Dataset, log_test: bool = True) -> RunResult:
    """Split, train and evaluate on the held-out snapshots."""
    t0 = time.perf_counter()
    train_set, test_set = split_dataset(config, dataset)
    mcfg, params, history = train(config, train_set, test_set if log_test else None)
    metrics = evaluate(mcfg, params, test_set, config.eval_batch) if len(test_set) else None
    return RunResult(mcfg, params, history, metrics, param_count(params), time.perf_counter() - t0)


def sweep_layers(config: TrainConfig, dataset: Dataset, L_range: Sequence[int] = range(1, 7),
                 K_range: Sequence[int] = range(1, 7)) -> np.ndarray:
    """Test accuracy for every (L, K) pair, each from its own seeded run."""
    grid = np.zeros((len(L_range), len(K_range)))
    for i, L in enumerate(L_range):
        for j, K in enumerate(K_range):
            res = run(replace(config, hyper_layers=L, freq_layers=K), dataset, log_test=False)
            grid[i, j] = res.metrics.accuracy
            log.info("sweep L=%d K=%d acc=%.4f", L, K, grid[i, j])
    return grid


def sweep_data_scale(config: TrainConfig, dataset: Dataset,
                     fractions: Sequence[float] = (0.2, 0.4, 0.6, 0.8), trials: int = 5) -> list[dict]:
    """Mean and (population) std of test accuracy per training-data fraction.

    Trial ``t`` uses seed ``config.seed + t`` for split, init and shuffling.
    """
    rows = []
    for frac in fractions:
        accs = []
        for t in range(trials):
            cfg = replace(config, seed=config.seed + t, subsample_fraction=float(frac))
            accs.append(run(cfg, dataset, log_test=False).metrics.accuracy)
        rows.append({"fraction": float(frac), "mean": float(np.mean(accs)), "std": float(np.std(accs)),
                     "trials": trials, "accuracies": accs})
        log.info("datascale %.2f mean %.4f std %.4f", frac, rows[-1]["mean"], rows[-1]["std"])
    return rows


# -- checkpoints --------------------------------------------------------------

def save_checkpoint(path: str, mcfg: ModelConfig, params: dict) -> None:
    body = {"model": mcfg.to_dict(),
            "params": {k: {"shape": list(v.shape), "values": v.ravel().tolist()} for k, v in params.items()}}
    with open(path, "w") as fh:
        json.dump(body, fh, indent=1)
        fh.write("\n")


def load_checkpoint(path: str) -> tuple[ModelConfig, dict]:
    with open(path) as fh:
        body = json.load(fh)
    mcfg = ModelConfig(**body["model"])
    params = {}
    for k, rec in body["params"].items():
        arr = np.array(rec["values"], dtype=np.float64)
        params[k] = arr.reshape(rec["shape"])
    expected = init_params(mcfg, np.random.default_rng(0))
    for k, v in expected.items():
        if k not in params:
            raise ValueError(f"checkpoint missing parameter {k}")
        if params[k].shape != v.shape:
            raise ValueError(f"checkpoint parameter {k} has shape {params[k].shape}, model expects {v.shape}")
    return mcfg, params
