import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcl import complexity as cx
from mcl.model import ClassifierSpec, MclModel
from mcl.tensor import ShapeError, count_macs

C32 = (32, 32, 3)


@pytest.mark.parametrize("extents, m, expected", [
    (C32, (20, 19, 2), 2508), (C32, (28, 27, 1), 3526), (C32, (9, 6, 1), 966),
    (C32, (14, 11, 2), 1612), (C32, (18, 17, 1), 2246), (C32, (6, 9, 1), 966),
    ((48, 48, 3), (20, 19, 2), 3756),
])
def test_mcl_params(extents, m, expected):
    assert cx.mcl_params(extents, m) == expected
    assert cx.mcl_params(extents, m, shared=True) == expected // 2


@pytest.mark.parametrize("m, expected", [(256, 786432), (102, 313344), (18, 55296)])
def test_vector_params(m, expected):
    assert cx.vector_params(1024, m, 3) == expected
    assert cx.vector_params(1024, m, 3, shared=False) == 2 * expected


def test_vector_params_without_compression():
    assert cx.vector_params(1024, 1024, 1) == 1024 ** 2


@pytest.mark.parametrize("params, flops", [(786432, 1572864), (2508, 5016), (3756, 7512)])
def test_paper_flops(params, flops):
    assert cx.paper_flops(params) == flops


def test_single_resolution_goldens_round_to_printed():
    rows = [r for r in cx.compare_reference() if r["table"] == "single"]
    assert len(rows) == 18
    assert all(r["match"] for r in rows)
    params = [r["value"] for r in rows if r["quantity"] == "params"]
    assert params == [786432, 2508, 3526, 313344, 1612, 2246, 55296, 966, 966]
    flops = [r["value"] for r in rows if r["quantity"] == "paper_flops"]
    assert flops == [2 * p for p in params]


def test_resolution_grid_only_flagged_cells_disagree():
    rows = [r for r in cx.compare_reference() if r["table"] == "resolution"]
    assert len(rows) == 6 * 4 * 2
    flagged = [r for r in rows if r["flagged"]]
    assert len(flagged) == len(cx.KNOWN_MISPRINTS)
    assert all(not r["match"] for r in flagged)
    assert all(r["match"] for r in rows if not r["flagged"])
    typo = [r for r in flagged if r["printed"] == "50"][0]
    assert typo["value"] == 5016


def test_cs_macs_formula_example():
    cs, fs = cx.table1_macs(C32, (20, 19, 2))
    assert cs == 20 * 32 * 32 * 3 + 20 * 19 * 32 * 3 + 20 * 19 * 2 * 3 == 100_200
    assert fs == 32 * 20 * 19 * 2 + 32 * 32 * 19 * 2 + 32 * 32 * 3 * 2


def test_mri_example():
    i, m = (256, 256, 64), (214, 214, 64)
    assert cx.table1_memory(i, m, "mcl") == 256 * 214 + 256 * 214 + 64 * 64 == 113_664
    vec = cx.table1_memory(i, m, "vector")
    assert vec == math.prod(i) * math.prod(m)
    assert 1.225e13 < vec < 1.235e13
    total = sum(cx.table1_macs(i, m))
    assert 1e9 <= total < 1e10
    assert 1e13 <= cx.vector_table1_macs(i, m) < 1e14


def test_degenerate_memory():
    assert cx.table1_memory((1, 1), (1, 1), "mcl") == 2
    assert cx.table1_memory((1, 1), (1, 1), "vector") == 1


def counted(extents, m):
    model = MclModel(extents, m, classifier=ClassifierSpec("linear", 2))
    y = np.zeros(extents)
    with count_macs() as c_cs:
        z = model.cs_forward(y)
    with count_macs() as c_fs:
        model.fs_forward(z)
    return c_cs.total, c_fs.total


@pytest.mark.parametrize("extents, m", [(C32, (20, 19, 2)), (C32, C32), ((5, 4, 3, 2), (5, 4, 3, 2))])
def test_macs_match_counter(extents, m):
    assert cx.table1_macs(extents, m) == counted(extents, m)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 7), st.integers(1, 7)), min_size=1, max_size=4))
def test_macs_match_counter_random(pairs):
    extents = tuple(max(a, b) for a, b in pairs)
    m = tuple(min(a, b) for a, b in pairs)
    assert cx.table1_macs(extents, m) == counted(extents, m)


def test_counts_strictly_monotone_in_each_mode():
    extents = (8, 7, 3)
    for m in itertools.product(range(1, 8), range(1, 7), range(1, 3)):
        base = cx.analyze_mcl(extents, m)
        for n in range(3):
            bigger = list(m)
            bigger[n] += 1
            r = cx.analyze_mcl(extents, bigger)
            assert r.param_count > base.param_count
            assert r.paper_flops > base.paper_flops
            assert r.table1_cs_macs > base.table1_cs_macs
            assert r.table1_fs_macs > base.table1_fs_macs
            assert r.table1_memory > base.table1_memory
    for m in range(1, 100):
        a, b = cx.analyze_vector(C32, m), cx.analyze_vector(C32, m + 1)
        assert b.param_count > a.param_count and b.table1_memory > a.table1_memory
    for m in range(1, 32):
        assert cx.table1_memory((32, 32), (m, 3), "vector") < cx.table1_memory((32, 32), (m + 1, 3), "vector")


def test_report_rows():
    r = cx.analyze_mcl(C32, (20, 19, 2))
    assert r.measurement_count == 760
    assert r.paper_flops == 2 * r.param_count
    assert r.param_count == 2 * sum(i * m for i, m in zip(C32, (20, 19, 2)))
    text = cx.reports_csv([r, cx.analyze_vector(C32, 256)])
    lines = text.splitlines()
    assert lines[0] == "configuration,params,paper_flops,cs_macs,fs_macs,memory"
    assert lines[1].startswith("mcl 20x19x2,2508,5016,100200,")
    assert lines[2].startswith("vector 256x3,786432,1572864,")


def test_invalid_measurements_name_mode():
    with pytest.raises(ShapeError, match="mode 1"):
        cx.mcl_params(C32, (20, 33, 2))
    with pytest.raises(ValueError):
        cx.vector_params(1024, 0, 3)
