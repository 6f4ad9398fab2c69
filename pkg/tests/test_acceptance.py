"""Acceptance gate: one PASS/FAIL line per criterion, also echoed in the run summary."""

import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oracles import auc_pairs, random_integer_augmented, rescore_batch, signed_graph

from coin import cli
from coin.augment import AugmentConfig, AugmentedDataset, expand_dataset
from coin.dataset import fit_standardizer, generate_entangled_manifolds, split, standardize
from coin.estimator import COINClassifier
from coin.graph import build_signed_graph
from coin.metrics import auc, margin_stats
from coin.model import EmbeddingNetwork, objective

TESTS = Path(__file__).parent
SEEDS = range(10)
# margin chosen on dev seeds 100-109, disjoint from SEEDS
BENCH_MARGIN = 0.05


def report(number, title, ok, detail):
    line = f"[{number}] {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    if not ok:
        pytest.fail(line, pytrace=False)


def test_1_gradient_matches_finite_differences():
    start = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        net = EmbeddingNetwork(2, (8, 4), 2, seed=seed)
        X = rng.normal(size=(12, 2))
        labels = rng.integers(0, 2, size=12)
        kind = rng.choice(np.array(["orig", "pos", "neg"], dtype=object), size=12, p=[0.6, 0.2, 0.2])
        pairs = [(i, j) for i in range(12) for j in range(12) if i != j]
        chosen = rng.choice(len(pairs), size=20, replace=False)
        edges = np.array([(*pairs[k], rng.choice([-1, 1])) for k in chosen])
        batch = np.arange(12)
        analytic = objective(net, batch, X, labels, kind, edges, 1.0, 1.0)[3]
        theta = net.theta.copy()
        numeric = np.empty_like(theta)
        for k in range(len(theta)):
            J = []
            for step in (1e-5, -1e-5):
                net.theta[:] = theta
                net.theta[k] += step
                J.append(objective(net, batch, X, labels, kind, edges, 1.0, 1.0, with_grad=False)[2])
            numeric[k] = (J[0] - J[1]) / 2e-5
        net.theta[:] = theta
        rel = np.abs(analytic - numeric) / np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
        worst = max(worst, float(rel.max()))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-5 and elapsed < 60
    report(1, "gradient vs central differences", ok, f"max rel err {worst:.2e} over 20 nets, {elapsed:.1f}s")


def test_2_graph_matches_brute_force():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(100):
        aug = random_integer_augmented(rng, n_max=60, d_max=8)
        n_pos, n_neg = int(rng.integers(0, 4)), int(rng.integers(0, 6))
        got = build_signed_graph(aug, n_pos, n_neg).edge_set()
        mismatches += got != signed_graph(aug.X, aug.labels, aug.kind, n_pos, n_neg)
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 60
    report(2, "signed graph vs brute force", ok, f"{mismatches}/100 mismatches, {elapsed:.1f}s")


def test_3_auc_matches_pair_counting():
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 51))
        labels = rng.integers(0, 2, size=n)
        labels[:2] = (0, 1)
        scores = rng.integers(0, max(2, n // 4), size=n) / 7.0  # few distinct values, many ties
        worst = max(worst, abs(auc(scores, labels) - auc_pairs(scores.tolist(), labels.tolist())))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 30
    report(3, "AUC vs pair counting", ok, f"max abs diff {worst:.1e} over 1000 vectors, {elapsed:.1f}s")


def test_4_accepted_candidates_are_batch_extrema():
    start = time.perf_counter()
    train, _ = split(generate_entangled_manifolds(150, 0.25, seed=0), 1 / 3, seed=0)
    train = standardize(train, *fit_standardizer(train.samples))
    config = AugmentConfig(n_pos_total=5, n_neg_total=20, seed=0)
    records = []
    aug = expand_dataset(train, config, records=records)
    bad, worst = 0, 0.0
    for rec in records:
        X_c = train.samples[train.labels == rec.label]
        rescored = np.array(
            rescore_batch(
                rec.candidates, rec.kind, rec.svm.coef_, rec.svm.intercept_,
                rec.existing, X_c, aug.radii[rec.label], config.gamma,
            )
        )
        worst = max(worst, float(np.max(np.abs(rescored - rec.scores))))
        extreme = rescored.max() if rec.kind == "pos" else rescored.min()
        stored_extreme = rec.scores.max() if rec.kind == "pos" else rec.scores.min()
        bad += rec.scores[rec.accepted] != stored_extreme or abs(rescored[rec.accepted] - extreme) > 1e-12
    elapsed = time.perf_counter() - start
    ok = len(records) == 50 and bad == 0 and worst <= 1e-12 and elapsed < 120
    detail = f"{bad}/{len(records)} batches off-extremum, rescoring diff {worst:.1e}, {elapsed:.1f}s"
    report(4, "selection optimality", ok, detail)


@pytest.fixture(scope="module")
def benchmark():
    """Baseline MLP vs full pipeline on two moons, 10 seeds."""
    start = time.perf_counter()
    rows = []
    for seed in SEEDS:
        train, test = split(generate_entangled_manifolds(150, 0.25, seed=seed), 1 / 3, seed=seed)
        models = {
            "base": COINClassifier(
                n_pos_generated=0, n_neg_generated=0, n_pos_edges=0, n_neg_edges=0, reg_lambda=0.0, random_state=seed
            ),
            "coin": COINClassifier(margin=BENCH_MARGIN, random_state=seed),
        }
        row = {"seed": seed}
        for name, est in models.items():
            est.fit(train.samples, train.labels)
            proba = est.predict_proba(test.samples)
            row[name] = {
                "accuracy": float(np.mean(est.predict(test.samples) == test.labels)),
                "auc": auc(proba[:, 1], test.labels),
                "margin_ratio": margin_stats(est.transform(test.samples), test.labels).margin_ratio,
            }
        rows.append(row)
    return rows, time.perf_counter() - start


def test_5_accuracy_and_auc_gain(benchmark):
    rows, elapsed = benchmark
    mean = {
        (name, key): np.mean([r[name][key] for r in rows]) for name in ("base", "coin") for key in ("accuracy", "auc")
    }
    d_acc = mean["coin", "accuracy"] - mean["base", "accuracy"]
    d_auc = mean["coin", "auc"] - mean["base", "auc"]
    ok = d_acc >= 0.05 and d_auc >= 0.03 and elapsed <= 600
    detail = (
        f"acc {mean['base', 'accuracy']:.4f} -> {mean['coin', 'accuracy']:.4f} (delta {d_acc:+.4f}, need +0.05), "
        f"AUC {mean['base', 'auc']:.4f} -> {mean['coin', 'auc']:.4f} (delta {d_auc:+.4f}, need +0.03), {elapsed:.0f}s"
    )
    report(5, "accuracy/AUC gain over baseline", ok, detail)


def test_6_margin_ratio_wins(benchmark):
    rows, _ = benchmark
    wins = sum(r["coin"]["margin_ratio"] > r["base"]["margin_ratio"] for r in rows)
    ratios = ", ".join(f"{r['coin']['margin_ratio']:.2f}/{r['base']['margin_ratio']:.2f}" for r in rows)
    report(6, "latent margin ratio", wins >= 8, f"{wins}/10 seeds beat baseline (coin/base: {ratios})")


def test_7_run_all_is_deterministic(tmp_path):
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps({"dataset": {"n_per_class": 60}, "train": {"epochs": 30}}))
    for run in ("a", "b"):
        assert cli.main(["run-all", "--config", str(cfg_path), "--out", str(tmp_path / run)]) == 0
    same = [(tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in ("metrics.json", "history.csv")]
    report(7, "run-all determinism", all(same), f"metrics.json identical={same[0]}, history.csv identical={same[1]}")


def test_8_unit_examples_conform():
    files = sorted(str(p) for p in TESTS.glob("test_*.py") if p.name != "test_acceptance.py")
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "--runxfail", "-p", "no:cacheprovider", *files],
        capture_output=True,
        text=True,
        cwd=TESTS.parent,
    )
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()[-200:]
    failed = [line.split(" - ")[0] for line in proc.stdout.splitlines() if line.startswith("FAILED")]
    detail = summary.strip("= ") + ("; " + ", ".join(f.split("::")[-1] for f in failed) if failed else "")
    report(8, "unit examples (xfails enforced)", proc.returncode == 0, detail)
