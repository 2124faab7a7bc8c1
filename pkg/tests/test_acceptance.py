"""Exit criteria for the package, one test per criterion.

Each test appends a PASS/FAIL line to the "acceptance criteria" section of
the pytest terminal summary.
"""

import csv
import json
import math
import os
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, make_toy_set
from oracles import central_diff, rel_error
from rawbci.cli import cmd_gen, cmd_train, load_epoch_set, load_runspec
from rawbci.data import (
    EpochProvenance,
    EpochSet,
    SessionSchedule,
    concat_epoch_sets,
    extract_epochs,
    flatten_epochs,
    fuse_modalities,
    load_recording,
)
from rawbci.exceptions import FusionError
from rawbci.model import ModelConfig, build_model
from rawbci.synth import SynthConfig, generate_session, write_dataset
from rawbci.training import TrainConfig, train


def report(number, title, passed, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {number}. {title}: {detail}")
    return passed


@pytest.fixture(scope="module")
def default_runs(tmp_path_factory):
    """Default dataset plus two full `train` runs from one RunSpec."""
    root = tmp_path_factory.mktemp("default")
    spec = root / "run.json"
    spec.write_text(json.dumps({"data": {"dataset_dir": "data"}}))
    cmd_gen(str(spec))
    timings = []
    for out in ("run_a", "run_b"):
        start = time.perf_counter()
        cmd_train(str(spec), str(root / out))
        timings.append(time.perf_counter() - start)
    return root, str(spec), timings


def test_c1_whole_model_gradient_check():
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    model = build_model(ModelConfig(6, (5, 4), 3, init_scale=1.0, seed=1))
    x = rng.standard_normal((4, 6))
    y = np.array([0, 1, 2, 1])

    def loss():
        saved = [(bn.running_mean, bn.running_var) for bn in (model.bn1, model.bn2)]
        value, _ = model.forward(x, y, training=True)
        for bn, (rm, rv) in zip((model.bn1, model.bn2), saved):
            bn.running_mean, bn.running_var = rm, rv
        return value

    model.forward(x, y, training=True)
    # leaky-ReLU kinks would make finite differences meaningless
    pre1 = model.bn1.forward(x @ model.dense1.W + model.dense1.b, training=True)
    h1 = np.where(pre1 >= 0, pre1, 0.01 * pre1)
    pre2 = model.bn2.forward(h1 @ model.dense2.W + model.dense2.b, training=True)
    assert np.abs(pre1).min() > 1e-3 and np.abs(pre2).min() > 1e-3
    model.forward(x, y, training=True)
    model.backward()
    analytic = [g.copy() for g in model.grads()]
    worst = max(
        rel_error(g, central_diff(loss, p, h=1e-5)) for p, g in zip(model.params(), analytic)
    )
    elapsed = time.perf_counter() - start
    ok = worst < 1e-4 and elapsed < 10
    report(1, "whole-model gradient check", ok, f"max rel err {worst:.2e} (< 1e-4), {elapsed:.2f}s (< 10s)")
    assert ok


def test_c2_analytic_loss_anchor():
    model = build_model(ModelConfig(3120, (128, 64), 5, init_scale=0.0))
    x = np.random.default_rng(2).standard_normal((8, 3120)) * 50
    y = np.arange(8) % 5
    loss, _ = model.forward(x, y, training=False)
    err = abs(loss - math.log(5))
    ok = err < 1e-9 and abs(math.log(5) - 1.6094379) < 1e-7
    report(2, "initial loss = ln 5", ok, f"loss {loss:.10f}, |loss - ln5| = {err:.1e} (< 1e-9)")
    assert ok


def test_c3_overfit_capability():
    start = time.perf_counter()
    toy = make_toy_set(n=40, n_features=4, seed=0)
    model = build_model(ModelConfig(4, n_classes=2))
    history = train(model, toy, None, TrainConfig(epochs=500))
    elapsed = time.perf_counter() - start
    acc = history.train_acc[-1]
    ok = acc == 1.0 and elapsed < 30
    report(3, "overfit 40-sample toy set", ok, f"train acc {acc} after 500 epochs, {elapsed:.1f}s (< 30s)")
    assert ok


def test_c4_desk_scale_accuracy(default_runs):
    root, _, timings = default_runs
    doc = json.loads((root / "run_a" / "run_metrics.json").read_text())
    acc = doc["metrics"]["accuracy"]
    cfg = doc["config"]["synth"]
    geometry = (
        cfg["n_subjects"] == 10
        and len(cfg["class_names"]) == 5
        and cfg["modalities"]["FNIRS"] == {"enabled": True, "sampling_rate_hz": 7.8125, "n_channels": 40}
        and cfg["snr"] == 5.0
    )
    ok = geometry and acc >= 0.90 and timings[0] < 300
    report(
        4, "synthetic default test accuracy", ok,
        f"{acc:.4f} on {doc['metrics']['n_samples']} test epochs (>= 0.90), train run {timings[0]:.1f}s (< 300s)",
    )
    assert ok


def test_c5_epoching_arithmetic():
    sched = SessionSchedule()
    window = sched.window_length(7.8125)
    (rec,) = generate_session(SynthConfig(n_subjects=1), 0)
    epochs = extract_epochs(rec)
    features = flatten_epochs(epochs).n_features
    ok = window == 78 and len(epochs) == 25 and features == 3120
    report(5, "epoching arithmetic", ok, f"{window} samples/epoch, {len(epochs)} epochs/session, {features} features")
    assert ok


def _read_raw(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return np.array([[float(v) for v in r] for r in rows])


def test_c6_raw_data_contract(default_runs, tmp_path):
    root, spec_path, _ = default_runs
    spec = load_runspec(spec_path)
    fused, _ = load_epoch_set(spec)
    data_dir = root / "data"

    # add a second modality so fused rows are audited too
    cfg = SynthConfig(n_subjects=2, modalities={"EEG": {"enabled": True, "sampling_rate_hz": 25.0}})
    write_dataset(cfg, tmp_path)
    multi = []
    for mod in ("FNIRS", "EEG"):
        sets = [
            flatten_epochs(extract_epochs(load_recording(tmp_path / f"S0{i}_{mod.lower()}.csv",
                                                         tmp_path / f"S0{i}_{mod.lower()}.json")))
            for i in (1, 2)
        ]
        multi.append(concat_epoch_sets(sets))
    fused_multi = fuse_modalities(multi)

    checked = 0
    mismatches = 0
    for epoch_set, directory in ((fused, data_dir), (fused_multi, tmp_path)):
        raw_cache = {}
        for row, prov in zip(epoch_set.features, epoch_set.provenance):
            offset = 0
            for mod, start, shape in zip(prov.modalities, prov.starts, prov.window_shapes):
                key = (prov.subject_id, mod)
                if key not in raw_cache:
                    raw_cache[key] = _read_raw(directory / f"{prov.subject_id}_{mod.lower()}.csv")
                raw = raw_cache[key][start:start + shape[0]].reshape(-1)
                part = row[offset:offset + raw.size]
                mismatches += int(np.count_nonzero(part.view(np.uint64) != raw.view(np.uint64)))
                checked += raw.size
                offset += raw.size
            assert offset == row.size
    ok = mismatches == 0 and checked == fused.features.size + fused_multi.features.size
    report(6, "raw-data provenance audit", ok, f"{checked} feature values compared bit-for-bit, {mismatches} mismatches")
    assert ok


def test_c7_determinism(default_runs):
    root, _, _ = default_runs
    names = ("run_history.csv", "run_metrics.json", "model.ckpt", "test_epochs.csv")
    same = {n: (root / "run_a" / n).read_bytes() == (root / "run_b" / n).read_bytes() for n in names}
    ok = all(same.values())
    report(7, "bitwise-identical reruns", ok, ", ".join(f"{n} {'identical' if v else 'DIFFERS'}" for n, v in same.items()))
    assert ok


def test_c8_fusion_correctness():
    cfg = SynthConfig(n_subjects=2, modalities={"EEG": {"enabled": True}, "MOCAP": {"enabled": True}})
    per_mod = {}
    for i in range(cfg.n_subjects):
        for rec in generate_session(cfg, i):
            per_mod.setdefault(rec.modality, []).append(flatten_epochs(extract_epochs(rec)))
    sets = {m: concat_epoch_sets(s) for m, s in per_mod.items()}
    fused = fuse_modalities([sets["MOCAP"], sets["EEG"], sets["FNIRS"]])
    dims = {m: s.n_features for m, s in sets.items()}
    dims_ok = fused.n_features == sum(dims.values()) and dims["FNIRS"] == 3120 and dims["EEG"] == 20000
    order_ok = (
        np.array_equal(fused.labels, sets["FNIRS"].labels)
        and [(p.subject_id, p.trial) for p in fused.provenance]
        == [(p.subject_id, p.trial) for p in sets["FNIRS"].provenance]
        and np.array_equal(fused.features[:, :3120], sets["FNIRS"].features)
        and np.array_equal(fused.features[:, 3120:23120], sets["EEG"].features)
        and np.array_equal(fused.features[:, 23120:], sets["MOCAP"].features)
    )

    rejected = 0
    bad_labels = EpochSet(sets["EEG"].features, sets["EEG"].labels.copy(), list(sets["EEG"].provenance))
    bad_labels.labels[3] = (bad_labels.labels[3] + 1) % 5
    short = sets["EEG"].subset(np.arange(len(sets["EEG"]) - 1))
    swapped = list(sets["EEG"].provenance)
    swapped[0], swapped[1] = swapped[1], swapped[0]
    bad_trials = EpochSet(sets["EEG"].features, sets["EEG"].labels, swapped)
    for fixture in (bad_labels, short, bad_trials):
        try:
            fuse_modalities([sets["FNIRS"], fixture])
        except FusionError:
            rejected += 1
    ok = dims_ok and order_ok and rejected == 3
    report(
        8, "fusion correctness", ok,
        f"fused dim {fused.n_features} = {' + '.join(str(dims[m]) for m in ('FNIRS', 'EEG', 'MOCAP'))}, "
        f"order preserved: {order_ok}, mismatch fixtures rejected {rejected}/3",
    )
    assert ok
