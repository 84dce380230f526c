"""Acceptance suite: one PASS/FAIL line per criterion.

Run under pytest (``pytest tests/test_acceptance.py -v``) or directly
(``python tests/test_acceptance.py``); either way each criterion prints a
single status line with the measured value and runtime.
"""
from __future__ import annotations

import shutil
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest
import yaml

from mcl import autograd as ag
from mcl import complexity as cx
from mcl.cli import main as cli_main
from mcl.data import synthetic_multilinear
from mcl.model import ClassifierSpec, MclModel, VectorModel, init_hosvd
from mcl.optim import AdamState, adam_step
from mcl.selftest import gradient_suite, kronecker_suite
from mcl.study import (
    DIRECTIONAL_VARIANTS,
    SYNTHETIC_DEFAULTS,
    desk_splits,
    run_directional_study,
    write_study,
)
from mcl.tensor import count_macs
from mcl.training import TrainConfig

CIFAR_DIR = Path(__file__).resolve().parents[1] / "data" / "cifar-10-batches-bin"


def kronecker_equivalence():
    """1: separable products equal the Kronecker map, over 120 random instances."""
    (check,) = kronecker_suite(instances=120, seed=0, tol=1e-10)
    return check.passed, f"max relative deviation {check.value:.2e} over 120 instances", 10.0


def cost_goldens():
    """2: printed parameter and FLOP figures, single-resolution and resolution grid."""
    rows = cx.compare_reference()
    single = [r for r in rows if r["table"] == "single"]
    params = [r["value"] for r in single if r["quantity"] == "params"]
    flops = [r["value"] for r in single if r["quantity"] == "paper_flops"]
    exact = params == [786432, 2508, 3526, 313344, 1612, 2246, 55296, 966, 966]
    doubled = flops == [2 * p for p in params]
    consistent = all(r["match"] != r["flagged"] for r in rows)
    grid = [r for r in rows if r["table"] == "resolution"]
    flagged = [f"{r['configuration']}@{r['extents'][0]}px {r['quantity']}" for r in grid if r["flagged"]]
    ok = exact and doubled and consistent and len(grid) == 48
    return ok, (f"9 exact parameter counts, doubled FLOPs, {len(grid)} grid cells consistent; "
                f"flagged misprints: {', '.join(flagged)}"), 1.0


def mri_example():
    """3: worked 3-D MRI example."""
    i, m = (256, 256, 64), (214, 214, 64)
    mem = cx.table1_memory(i, m, "mcl")
    vec_mem = cx.table1_memory(i, m, "vector")
    macs = sum(cx.table1_macs(i, m))
    vec_macs = cx.vector_table1_macs(i, m)
    ok = (mem == 113_664 and round(vec_mem / 1e13, 2) == 1.23 and 1e9 <= macs < 1e10
          and 1e13 <= vec_macs < 1e14)
    return ok, (f"MCL memory {mem}, vector memory {vec_mem:.3e}, MCL MACs {macs:.3e}, "
                f"vector MACs {vec_macs:.3e}"), 1.0


def mac_counter():
    """4: closed-form MACs equal the instrumented count of sensing and synthesis."""
    rng = np.random.default_rng(0)
    mismatches = 0
    configs = 40
    for _ in range(configs):
        order = int(rng.integers(2, 5))
        extents = tuple(int(v) for v in rng.integers(1, 9, size=order))
        meas = tuple(int(rng.integers(1, e + 1)) for e in extents)
        model = MclModel(extents, meas, classifier=ClassifierSpec("linear", 2), seed=1)
        y = rng.standard_normal(extents)
        with count_macs() as cs:
            z = model.cs_forward(y)
        with count_macs() as fs:
            model.fs_forward(z)
        mismatches += cx.table1_macs(extents, meas) != (cs.total, fs.total)
    return mismatches == 0, f"{configs} random configurations, {mismatches} mismatches", 10.0


def gradient_checks():
    """5: every op and the full model graphs against central differences."""
    rows = gradient_suite(seed=0, tol=1e-4)
    worst = max(rows, key=lambda r: r.value)
    failed = [r.name for r in rows if not r.passed]
    detail = f"{len(rows)} checks, worst {worst.value:.2e} ({worst.name})"
    if failed:
        detail += f"; failing: {', '.join(failed)}"
    return not failed, detail, 60.0


def measurement_parity():
    """6: measurement counts of the compared configurations."""
    img = np.zeros((32, 32, 3))
    spec = ClassifierSpec("linear", 10)
    mcl = {m: MclModel((32, 32, 3), m, classifier=spec).cs_forward(img).size
           for m in ((20, 19, 2), (28, 27, 1), (14, 11, 2), (18, 17, 1), (9, 6, 1), (6, 9, 1))}
    vec = {m: VectorModel((32, 32, 3), m, spec).cs_forward(img).size for m in (256, 102, 18)}
    got = list(mcl.values()) + list(vec.values())
    ok = got == [760, 756, 308, 306, 54, 54, 768, 306, 54]
    return ok, "counts " + ", ".join(map(str, got)), 1.0


def directional_study(out_dir=None):
    """7: directional trends over three seeds on the desk subset."""
    splits = desk_splits(CIFAR_DIR, 10_000, 1_000, 2_000, seed=0)
    seeds = (0, 1, 2)
    result = run_directional_study(splits, seeds, TrainConfig.profile("desk"),
                                   ClassifierSpec("mlp", 10, (512,)), DIRECTIONAL_VARIANTS)
    if out_dir is not None:
        write_study(result, out_dir)
    claims = result.claims()
    parts = [f"{c['claim']}: {c['left']} {c['left_mean']:.4f} >= {c['right']} {c['right_mean']:.4f} "
             f"{'ok' if c['holds'] else 'VIOLATED'}" for c in claims]
    means = ", ".join(f"{k} {result.mean(k):.4f}+-{result.std(k):.4f}" for k in result.accuracies)
    source = splits.source
    if source == "synthetic":
        source += f" {SYNTHETIC_DEFAULTS}"
    ok = all(c["holds"] for c in claims) and len(claims) == 8
    return ok, f"[{source}] means: {means}; " + "; ".join(parts), 45 * 60.0


def init_identities():
    """8: full-rank HOSVD reconstruction and the shared-weight tie."""
    data = synthetic_multilinear(count=2000, seed=0, **SYNTHETIC_DEFAULTS)
    x = data.samples
    full = init_hosvd(MclModel((32, 32, 3), (32, 32, 3), classifier=ClassifierSpec("linear", 10)), x)
    t = full.fs_forward(full.cs_forward(x))
    rel = float(np.linalg.norm(t - x) / np.linalg.norm(x))

    shared = MclModel((32, 32, 3), (20, 19, 2), shared_weights=True,
                      classifier=ClassifierSpec("linear", 10), seed=0)
    init_hosvd(shared, x)
    state = AdamState()
    rng = np.random.default_rng(0)
    for _ in range(100):
        idx = rng.choice(len(x), 32, replace=False)
        nodes = shared.nodes()
        loss = ag.softmax_cross_entropy(shared.graph(nodes, ag.constant(x[idx])), data.labels[idx])
        ag.backward(loss)
        adam_step(shared.params, {k: n.grad for k, n in nodes.items()}, state, 1e-3, 1e-4)
    tie = max(float(np.max(np.abs(th - ph.T))) for th, ph in zip(shared.synthesis, shared.sensing))
    ok = rel < 1e-8 and tie == 0.0 and state.t == 100
    return ok, f"full-rank reconstruction error {rel:.2e}; shared tie max|Theta-Phi^T| = {tie} after 100 steps", 60.0


def determinism():
    """9: two identical training runs give identical metrics and checkpoints."""
    config = {
        "dataset": {"kind": "synthetic", "train_count": 600, "val_count": 100, "test_count": 200},
        "framework": "mcl", "measurements": [20, 19, 2],
        "model": {"classifier": "mlp", "hidden": [32]},
        "init": {"cs_fs": "hosvd", "classifier": "pretrain"},
        "train": {"profile": "desk", "epochs": 3, "boundaries": [1, 2], "seeds": [0, 1]},
    }
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        cfg = tmp / "exp.yaml"
        cfg.write_text(yaml.safe_dump(config))
        out = tmp / "run"
        snapshots, codes = [], []
        for _ in range(2):
            # same output directory both times: it is part of the recorded config
            codes.append(cli_main(["train", "--config", str(cfg), "--out", str(out)]))
            snapshots.append({str(p.relative_to(out)): p.read_bytes() for p in sorted(out.rglob("*"))
                              if p.is_file() and p.name != "timing.csv"})
            shutil.rmtree(out)
    first, second = snapshots
    files = sorted(first)
    differ = [f for f in files if first[f] != second.get(f)] + sorted(set(second) - set(first))
    checkpoints = sum(1 for f in files if f.endswith(".f32"))
    ok = codes == [0, 0] and not differ and checkpoints > 0
    detail = f"{len(files)} files compared ({checkpoints} tensor files), {len(differ)} differ"
    if differ:
        detail += ": " + ", ".join(differ[:5])
    return ok, detail, 120.0


CRITERIA = [
    ("1", "Kronecker equivalence", kronecker_equivalence),
    ("2", "Table goldens", cost_goldens),
    ("3", "MRI example", mri_example),
    ("4", "MAC-count oracle", mac_counter),
    ("5", "Gradient suite", gradient_checks),
    ("6", "Measurement parity", measurement_parity),
    ("7", "Directional learning", directional_study),
    ("8", "Initialization identities", init_identities),
    ("9", "Determinism", determinism),
]


def evaluate(number, title, fn):
    start = time.perf_counter()
    ok, detail, budget = fn()
    seconds = time.perf_counter() - start
    within = seconds < budget
    status = "PASS" if ok and within else "FAIL"
    line = f"{status} criterion {number} ({title}): {detail} [{seconds:.1f} s, budget {budget:.0f} s]"
    return ok and within, line


@pytest.mark.parametrize("number, title, fn", CRITERIA, ids=[f"criterion_{n}" for n, _, _ in CRITERIA])
def test_criterion(number, title, fn, capsys):
    passed, line = evaluate(number, title, fn)
    with capsys.disabled():
        print("\n" + line, flush=True)
    assert passed, line


if __name__ == "__main__":
    results = [evaluate(*c) for c in CRITERIA]
    for _, line in results:
        print(line)
    sys.exit(0 if all(p for p, _ in results) else 1)
