"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s`` or as a script.
The two ablation studies train 35 models on 1,000-snapshot sets and take a
few minutes; they carry the ``slow`` marker.
"""

import os
import time

import numpy as np
import pytest

from dshgcn import cli, encoder, frequency, hypergraph
from dshgcn.data import SyntheticConfig, generate_synthetic
from dshgcn.frequency import build_pair_graph
from dshgcn.hypergraph import build_topology
from dshgcn.metrics import evaluate_predictions
from dshgcn.numerics import Tape
from dshgcn.training import TrainConfig, evaluate, run, train
from oracles import aggregate_loop, hyperedge_members

# Fixed before any ablation run: lr 1e-3 with the default batch size, dropout,
# L2 and depth, stopped at 5 epochs where single runs stop improving.
ABLATION_RECIPE = dict(learning_rate=1e-3, epochs=5)
SEEDS = range(5)


# conftest prints these in the terminal summary so they survive output capture
REPORT_LINES = []


def report(number, ok, detail):
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    REPORT_LINES.append(line)
    print(line, flush=True)
    return ok


def test_criterion_01_gradient_check(tmp_path):
    t0 = time.perf_counter()
    out = str(tmp_path / "g.json")
    code = cli.main(["gradcheck", "--students", "3", "--dh", "8", "--L", "2", "--K", "2", "--out", out])
    secs = time.perf_counter() - t0
    ok = report(1, code == 0 and secs < 60, f"gradcheck exit {code} in {secs:.1f} s (limit 60 s)")
    assert ok


def test_criterion_02_operator_oracle():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 9))
        d = int(rng.integers(2, 7))
        topo = build_topology(n)
        Q, P = rng.normal(size=(3 * n, d)), rng.normal(size=(d, d))
        We = rng.uniform(0.2, 3.0, size=(n + 3, 1))
        t = Tape()
        gamma = hypergraph.attention_weights(t, t.const(Q @ P), topo, t.const(rng.normal(size=(2 * d, 1)))).value
        got = hypergraph.hyperconv_layer(t, t.const(Q), t.const(gamma), t.const(P), t.const(We)).value
        want = aggregate_loop(Q @ P, gamma, We[:, 0], hyperedge_members(n))
        live = want != 0
        worst = max(worst, float(np.max(np.abs(got - want)[live] / np.abs(want[live]), initial=0.0)))
        # entries the ReLU zeroes in the oracle must be zero (or rounding-level) here too
        worst = max(worst, float(np.max(np.abs(got[~live]), initial=0.0)) / 1e3)
    ok = report(2, worst <= 1e-10, f"max relative error {worst:.2e} over 100 instances (limit 1e-10)")
    assert ok


def test_criterion_03_topology_invariants():
    failures = []
    for n in range(1, 33):
        topo = build_topology(n)
        H = topo.incidence
        if H.shape != (3 * n, n + 3) or not np.all(H.sum(axis=1) == 2):
            failures.append(f"hypergraph N={n}")
        g = build_pair_graph(n)
        if n >= 2 and not np.all(g.degree == n + 1):
            failures.append(f"pair degree N={n}")
        if not np.array_equal(g.filter_low + g.filter_high, 2 * np.eye(3 * n)):
            failures.append(f"filter sum N={n}")
        if np.max(np.abs(g.filter_high @ np.sqrt(g.degree))) > 1e-10:
            failures.append(f"high-pass null vector N={n}")
    ok = report(3, not failures, "N = 1..32 " + ("all invariants hold" if not failures else ", ".join(failures)))
    assert ok


def test_criterion_04_attention_normalization():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(100):
        n, d = int(rng.integers(1, 9)), int(rng.integers(2, 9))
        topo = build_topology(n)
        scale = rng.choice([0.1, 1.0, 10.0])
        t = Tape()
        gamma = hypergraph.attention_weights(t, t.const(rng.normal(size=(3 * n, d))), topo,
                                             t.const(scale * rng.normal(size=(2 * d, 1)))).value
        assert not gamma[topo.incidence == 0].any()
        worst = max(worst, float(np.max(np.abs(gamma.sum(axis=1) - 1.0))))
    ok = report(4, worst <= 1e-9, f"max |row sum - 1| = {worst:.1e} over 100 draws (limit 1e-9)")
    assert ok


def _stream_outputs(params, raw, n):
    t = Tape()
    w = {k: t.param(k, v) for k, v in params.items()}
    nodes = encoder.encode(t, {k: t.const(v) for k, v in raw.items()}, np.arange(n), w)
    hyper = hypergraph.multivariate_forward(t, nodes, build_topology(n), w, 3)
    freq = frequency.multifrequency_forward(t, nodes, build_pair_graph(n), w, 3)
    return hyper.value, freq.value


def test_criterion_05_permutation_equivariance():
    rng = np.random.default_rng(5)
    n, d = 6, 8
    dims = {"emotional": 9, "attentional": 7, "upper_body": 5}
    params = encoder.init_params(rng, dims, d, n)
    params.update(hypergraph.init_params(rng, n, d, 3))
    params.update(frequency.init_params(rng, d, 3))
    params["hypergraph.edge_weight"] = rng.uniform(0.5, 1.5, size=(n + 3, 1))
    raw = {k: rng.normal(size=(n, v)) for k, v in dims.items()}
    base = _stream_outputs(params, raw, n)
    worst = 0.0
    for _ in range(20):
        pi = rng.permutation(n)
        p2 = dict(params)
        p2["encoder.student_embedding"] = params["encoder.student_embedding"][pi]
        we = params["hypergraph.edge_weight"].copy()
        we[:n] = we[pi]
        p2["hypergraph.edge_weight"] = we
        node_perm = (3 * pi[:, None] + np.arange(3)).ravel()
        for out, ref in zip(_stream_outputs(p2, {k: v[pi] for k, v in raw.items()}, n), base):
            worst = max(worst, float(np.max(np.abs(out - ref[node_perm]))))
    ok = report(5, worst <= 1e-9, f"max deviation {worst:.1e} over 20 permutations at N=6 (limit 1e-9)")
    assert ok


def test_criterion_06_tiny_overfit():
    t0 = time.perf_counter()
    ds = generate_synthetic(SyntheticConfig(n_students=4, snapshots=2, n_classes=2, seed=0))
    cfg = TrainConfig(learning_rate=1e-3, epochs=500, batch_size=2, dropout=0.0, l2=0.0, seed=0)
    mcfg, params, history = train(cfg, ds)
    acc = evaluate(mcfg, params, ds).accuracy
    ratio = history[-1][1] / history[0][1]
    secs = time.perf_counter() - t0
    ok = report(6, acc == 1.0 and ratio < 0.01 and secs < 120,
                f"train accuracy {acc:.3f}, final/initial loss {ratio:.4f}, {secs:.1f} s")
    assert ok


def _mean_accuracy(dataset, ablation):
    accs = [run(TrainConfig(**ABLATION_RECIPE, ablation=ablation, seed=s), dataset, log_test=False).metrics.accuracy
            for s in SEEDS]
    return float(np.mean(accs)), accs


@pytest.mark.slow
def test_criterion_07_contagion_ablation():
    t0 = time.perf_counter()
    ds = generate_synthetic(SyntheticConfig(snapshots=1000, n_students=6, n_classes=2, rho=0.7, noise=0.3, seed=0))
    full, _ = _mean_accuracy(ds, "none")
    no_mv, _ = _mean_accuracy(ds, "no_multivariate")
    no_graph, _ = _mean_accuracy(ds, "no_propagation")
    secs = time.perf_counter() - t0
    gap_mv, gap_graph = 100 * (full - no_mv), 100 * (full - no_graph)
    ok = report(7, gap_mv >= 3 and gap_graph >= 5 and secs < 1800,
                f"full {full:.4f}, no_multivariate {no_mv:.4f} (gap {gap_mv:+.1f} pt, need 3), "
                f"no-graph {no_graph:.4f} (gap {gap_graph:+.1f} pt, need 5), {secs:.0f} s")
    assert ok


@pytest.mark.slow
def test_criterion_08_attention_direction():
    ds = generate_synthetic(SyntheticConfig(snapshots=1000, n_students=6, n_classes=2, rho_choices=[0.3, 0.9],
                                            noise=0.3, seed=0))
    full, _ = _mean_accuracy(ds, "none")
    flat, _ = _mean_accuracy(ds, "no_attention")
    ok = report(8, full >= flat - 0.005, f"full {full:.4f} vs no_attention {flat:.4f} (tie band 0.5 pt)")
    assert ok


def _files(directory):
    return {f: open(os.path.join(directory, f), "rb").read() for f in sorted(os.listdir(directory))}


def test_criterion_09_determinism(tmp_path):
    small = ["--students", "4", "--snapshots", "12", "--d-e", "8", "--d-a", "6", "--d-u", "5", "--seed", "3"]
    train_flags = ["--epochs", "2", "--lr", "1e-3", "--hidden", "8", "--L", "2", "--K", "2", "--seed", "7"]
    runs = []
    for rep in ("a", "b"):
        root = tmp_path / rep
        root.mkdir()
        data = str(root / "data.jsonl")
        codes = [
            cli.main(["synth", *small, "--out", data]),
            cli.main(["train", "--data", data, "--out", str(root / "run"), *train_flags]),
            cli.main(["eval", "--checkpoint", str(root / "run" / "checkpoint.json"), "--data", data,
                      "--out", str(root / "eval.json")]),
            cli.main(["gradcheck", "--dh", "4", "--L", "1", "--K", "1", "--out", str(root / "grad.json")]),
            cli.main(["sweep", "--mode", "datascale", "--data", data, "--out", str(root / "sweep"),
                      "--fractions", "0.5,1.0", "--trials", "2", *train_flags]),
        ]
        assert codes == [0] * 5
        arts = {f"run/{k}": v for k, v in _files(root / "run").items()}
        arts.update({f"sweep/{k}": v for k, v in _files(root / "sweep").items()})
        arts.update({k: (root / k).read_bytes() for k in ("data.jsonl", "eval.json", "grad.json")})
        runs.append(arts)
    same = runs[0] == runs[1]
    ok = report(9, same, f"{len(runs[0])} artifacts from synth/train/eval/gradcheck/sweep "
                         f"{'bit-identical' if same else 'differ'} across reruns")
    assert ok


def test_criterion_10_metric_fixtures():
    y = np.array([0, 1, 1, 0, 1, 0, 0, 1, 1, 0])

    def probs(pred):
        P = np.full((10, 2), 0.2)
        P[np.arange(10), pred] = 0.8
        return P

    # hand-computed: perfect (1, 1, 1); inverted (0, 0, 0);
    # all class 0: accuracy 5/10, F1 mean(2/3, 0) = 1/3, constant scores give AUC 1/2
    cases = {"perfect": (probs(y), (1.0, 1.0, 1.0)),
             "inverted": (probs(1 - y), (0.0, 0.0, 0.0)),
             "all-one-class": (probs(np.zeros(10, dtype=int)), (0.5, 1 / 3, 0.5))}
    bad = []
    for name, (P, want) in cases.items():
        r = evaluate_predictions(y, P)
        if (r.accuracy, r.f1, r.auc) != want:
            bad.append(f"{name} got {(r.accuracy, r.f1, r.auc)}")
    ok = report(10, not bad, "perfect, inverted, all-one-class exact" if not bad else "; ".join(bad))
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
