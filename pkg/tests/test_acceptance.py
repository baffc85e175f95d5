"""Acceptance suite: one test per required property, at its stated
tolerance and runtime budget.

Run with ``pytest tests/test_acceptance.py -v`` to get one pass/fail
line per criterion.  Each test also prints its measured numbers.
"""

import json
import time

import numpy as np
import pytest

from oracles import (
    brute_force_k,
    fd_directional,
    jacobi_singular_values,
    naive_conv2d,
    walk_conv_macs,
    walk_decomposed_macs,
)
from rankprune import (
    TrpConfig,
    check_low_rank_residual,
    check_mirsky,
    decompose_export,
    evaluate,
    flops_report,
    generate_synthetic,
    low_rank_project,
    nuclear_norm,
    nuclear_subgradient,
    numerical_rank,
    singular_values,
    svd,
    theorem2_monitor,
    tiny_conv_net,
    train,
    tsvd,
)
from rankprune.cli import main
from rankprune.net import Conv2D, NetworkModel, backward, forward


def elapsed_line(name: str, start: float, budget: float, detail: str) -> None:
    took = time.monotonic() - start
    assert took < budget, f"{name} exceeded its {budget:.0f}s budget: {took:.1f}s"
    print(f"PASS {name}: {detail} ({took:.1f}s < {budget:.0f}s)")


def test_tsvd_selection_matches_brute_force_oracle():
    start = time.monotonic()
    rng = np.random.default_rng(0)
    checked = 0
    for _ in range(500):
        m, n = rng.integers(1, 33, size=2)
        a = rng.normal(size=(m, n)) * rng.choice([0.1, 1.0, 10.0])
        sigma = singular_values(a)
        total = float(np.sum(sigma**2))
        for e in (0.005, 0.02, 0.05, 0.5):
            result = tsvd(a, e)
            k = result.k
            tail = float(np.sum(sigma[k:] ** 2))
            assert tail <= e * total + 1e-12 * total
            if k > 1:
                tail_prev = float(np.sum(sigma[k - 1 :] ** 2))
                assert tail_prev > e * total
            assert k == brute_force_k(sigma, e)
            checked += 1
    elapsed_line(
        "tsvd-selection", start, 10.0,
        f"{checked} (matrix, threshold) cases, oracle agreement 100%",
    )


def test_svd_matches_eigen_oracle():
    start = time.monotonic()
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(200):
        m, n = rng.integers(1, 13, size=2)
        a = rng.normal(size=(m, n)) * rng.choice([1e-3, 1.0, 1e3])
        mine = singular_values(a)
        # the oracle eigensolves A^T A, so hand it the thin orientation;
        # singular values are transpose-invariant
        oracle = jacobi_singular_values(a if n <= m else a.T)
        scale = max(oracle[0], 1e-300)
        worst = max(worst, float(np.max(np.abs(mine - oracle)) / scale))
        assert np.all(np.abs(mine - oracle) <= 1e-8 * scale)
    elapsed_line(
        "svd-oracle", start, 10.0, f"200 matrices, worst relative gap {worst:.2e}"
    )


def test_nuclear_subgradient_matches_finite_differences():
    start = time.monotonic()
    rng = np.random.default_rng(2)
    for _ in range(100):
        m, n = rng.integers(2, 13, size=2)
        a = rng.normal(size=(m, n))
        assert numerical_rank(a) == min(m, n)  # full rank, so differentiable
        d = rng.normal(size=(m, n))
        fd = fd_directional(lambda w: nuclear_norm(w), a, d)
        analytic = float(np.sum(nuclear_subgradient(a) * d))
        assert abs(fd - analytic) <= 1e-4 * max(1.0, abs(fd))
    elapsed_line("nuclear-subgradient", start, 10.0, "100 full-rank matrices, 1e-4 relative")


def test_perturbation_bounds_hold_on_fuzz():
    start = time.monotonic()
    rng = np.random.default_rng(3)
    for _ in range(1000):
        m, n = rng.integers(1, 17, size=2)
        a = rng.normal(size=(m, n)) * rng.choice([0.01, 1.0, 100.0])
        e = rng.normal(size=(m, n)) * rng.choice([1e-6, 1.0, 10.0])
        assert check_mirsky(a, e).holds
    for _ in range(1000):
        m, n = rng.integers(1, 17, size=2)
        a = rng.normal(size=(m, n))
        k = int(rng.integers(0, min(m, n) + 1))
        if k == 0:
            b = np.zeros((m, n))
        else:
            b = svd(rng.normal(size=(m, n))).truncate(k).reconstruct()
        assert check_low_rank_residual(a, b, k).holds
    elapsed_line("perturbation-bounds", start, 30.0, "1000 + 1000 seeded cases, zero violations")


def test_cascade_matches_projected_convolution():
    start = time.monotonic()
    rng = np.random.default_rng(4)
    worst = 0.0
    for scheme in ("channel", "spatial"):
        for _ in range(50):
            n, c = rng.integers(1, 9, size=2)
            kh, kw = rng.integers(1, 6, size=2)
            h = int(rng.integers(max(kh, kw), 11))
            w = h
            tensor = rng.normal(size=(n, c, kh, kw))
            e = float(rng.choice([0.02, 0.1, 0.4]))
            x = rng.normal(size=(int(rng.integers(1, 4)), c, h, w))
            bias = rng.normal(size=n)

            projected, _ = low_rank_project(tensor, scheme, e)
            want = Conv2D(projected, bias).forward(x)
            pair = decompose_export(tensor, scheme, e)
            got = Conv2D(pair.second, bias).forward(Conv2D(pair.first, np.zeros(pair.rank)).forward(x))
            gap = float(np.max(np.abs(want - got)))
            worst = max(worst, gap)
            assert gap <= 1e-8
    elapsed_line(
        "cascade-equivalence", start, 30.0,
        f"50 pairs per scheme, worst max-abs gap {worst:.2e}",
    )


def test_network_gradients_match_finite_differences():
    start = time.monotonic()
    rng = np.random.default_rng(5)
    model = tiny_conv_net(1, 4, (8, 8), seed=6)
    assert model.param_count() <= 5000
    x = rng.normal(size=(4, 1, 8, 8))
    y = rng.integers(0, 4, size=4)
    grads = backward(model, x, y)
    h = 1e-5
    checked = 0
    for li, layer in enumerate(model.layers):
        for pi, p in enumerate(layer.params()):
            g = grads.by_layer[li][pi]
            flat = p.ravel()
            for idx in range(flat.size):
                keep = flat[idx]
                flat[idx] = keep + h
                up = forward(model, x, y)[0]
                flat[idx] = keep - h
                down = forward(model, x, y)[0]
                flat[idx] = keep
                fd = (up - down) / (2 * h)
                gi = g.ravel()[idx]
                assert abs(fd - gi) <= 1e-4 * max(abs(fd), abs(gi)) + 1e-7
                checked += 1
    elapsed_line(
        "network-gradients", start, 60.0,
        f"{checked} parameters checked at 1e-4 relative",
    )


def test_rank_monotonicity_reproduction():
    start = time.monotonic()
    # 39 epochs x 20 batches = 780 iterations; events every 20 plus the
    # final boundary projection = 40 per layer
    total_pairs = 0
    total_satisfied = 0
    for seed in range(5):
        ds = generate_synthetic(seed=seed)
        cfg = TrpConfig(period_m=20, energy_e=0.05, epochs=39, seed=seed)
        result = train(tiny_conv_net(1, 4, (8, 8), seed=seed), ds, cfg)
        for layer, events in result.trajectory.per_layer().items():
            assert len(events) == 40, f"seed {seed} layer {layer}: {len(events)} events"
        report = theorem2_monitor(result.trajectory, cfg)
        assert report.violations == 0, f"seed {seed}: {report.violations} violations"
        total_pairs += report.pairs_checked
        total_satisfied += report.hypothesis_satisfied
    assert total_satisfied > 0
    elapsed_line(
        "rank-monotonicity", start, 300.0,
        f"5 seeds, 40 events/layer, {total_satisfied}/{total_pairs} pairs under the bound, zero violations",
    )


def decomposed_copy(model: NetworkModel, scheme: str, e: float) -> NetworkModel:
    layers = []
    for layer in model.layers:
        if isinstance(layer, Conv2D):
            pair = decompose_export(layer.w, scheme, e)
            layers.append(Conv2D(pair.first, np.zeros(pair.rank)))
            layers.append(Conv2D(pair.second, layer.b.copy()))
        else:
            layers.append(layer)
    return NetworkModel(layers=layers, rng_seed=model.rng_seed)


def test_ablation_direction_across_seeds():
    start = time.monotonic()
    e = 0.3
    cells = {
        "baseline": dict(nuclear_lambda=0.0, period_m=None),
        "trp": dict(nuclear_lambda=0.0, period_m=20),
        "trp_nu": dict(nuclear_lambda=0.0003, period_m=20),
    }
    lines = []
    for seed in (0, 1, 2):
        ds = generate_synthetic(seed=seed)
        xte, yte = ds.images[ds.test_idx], ds.labels[ds.test_idx]
        drops = {}
        for name, kw in cells.items():
            cfg = TrpConfig(seed=seed, energy_e=e, **kw)
            result = train(tiny_conv_net(1, 4, (8, 8), seed=seed), ds, cfg)
            before = evaluate(result.model, xte, yte)[0]
            after = evaluate(decomposed_copy(result.model, "channel", e), xte, yte)[0]
            drops[name] = before - after
        assert drops["trp"] < drops["baseline"], f"seed {seed}: {drops}"
        assert drops["trp_nu"] <= drops["trp"], f"seed {seed}: {drops}"
        lines.append(
            f"seed {seed} drops: baseline {drops['baseline']*100:+.2f}pp,"
            f" trp {drops['trp']*100:+.2f}pp, trp_nu {drops['trp_nu']*100:+.2f}pp"
        )
    elapsed_line("ablation-direction", start, 600.0, f"matched e={e}; " + "; ".join(lines))


def test_flops_report_matches_loop_nest_counter():
    start = time.monotonic()
    rng = np.random.default_rng(7)
    for i in range(100):
        n, c = (int(v) for v in rng.integers(1, 20, size=2))
        kh, kw = (int(v) for v in rng.integers(1, 6, size=2))
        h, w = (int(v) for v in rng.integers(1, 15, size=2))
        k = int(rng.integers(1, min(n, c * kh * kw) + 1))
        scheme = ("channel", "spatial")[i % 2]
        report = flops_report((n, c, kh, kw), (h, w), scheme, k)
        assert report.original == walk_conv_macs(n, c, kh, kw, h, w)
        assert report.decomposed == walk_decomposed_macs((n, c, kh, kw), (h, w), scheme, k)
        assert report.speedup == report.original / report.decomposed
    elapsed_line("flops-counter", start, 5.0, "100 shape/rank combos, exact agreement")


def test_cli_train_runs_are_byte_deterministic(tmp_path, capsys):
    start = time.monotonic()
    cfg = tmp_path / "cfg.json"
    cfg.write_text(
        json.dumps(
            {
                "epochs": 3,
                "batch_size": 16,
                "lr_schedule": [[0, 0.05]],
                "seed": 0,
                "synthetic": {"per_class": 30},
            }
        )
    )
    files = ("metrics.csv", "trajectory.csv", "trajectory_er.jsonl", "checkpoint.trpk")
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["train", "--config", str(cfg), "--preset", "trp", "--out", str(out)]) == 0
        outs.append(out)
    capsys.readouterr()
    for name in files:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name
    elapsed_line(
        "determinism", start, 120.0,
        "two identical-input training runs, byte-identical artifacts",
    )
