import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gridmtd.grid import (
    CaseFormatError,
    LoadTrace,
    bundled_trace,
    disaggregate_load,
    format_case,
    incidence_matrix,
    is_connected,
    load_case,
    parse_case,
    parse_load_trace,
    read_case,
    susceptance_matrices,
)


def brute_incidence(grid):
    A = np.zeros((grid.n_bus, grid.n_branch))
    ids = [b.id for b in grid.buses]
    for l, br in enumerate(grid.branches):
        for i, bid in enumerate(ids):
            if bid == br.from_bus:
                A[i, l] = 1
            elif bid == br.to_bus:
                A[i, l] = -1
    return A


def brute_laplacian(grid, x):
    ids = [b.id for b in grid.buses]
    B = np.zeros((grid.n_bus, grid.n_bus))
    for br, xl in zip(grid.branches, x):
        i, j = ids.index(br.from_bus), ids.index(br.to_bus)
        e = np.zeros(grid.n_bus)
        e[i], e[j] = 1, -1
        B += np.outer(e, e) / xl
    return B


@pytest.mark.parametrize("name, n_bus, n_branch, n_gen", [
    ("case4", 4, 4, 2), ("case14", 14, 20, 5), ("case30", 30, 41, 6)])
def test_bundled_case_sizes(name, n_bus, n_branch, n_gen):
    g = load_case(name)
    assert (g.n_bus, g.n_branch, g.n_gen) == (n_bus, n_branch, n_gen)
    assert is_connected(g)


def test_case14_settings(case14):
    assert list(np.flatnonzero(case14.dfacts_mask) + 1) == [1, 5, 9, 11, 17, 19]
    assert case14.dfacts_eta == 0.5
    assert [g.gmax for g in case14.generators] == [300, 50, 30, 50, 20]
    assert [g.cost for g in case14.generators] == [20, 30, 40, 50, 35]
    assert case14.fmax[0] == 160 and np.all(case14.fmax[1:] == 60)
    assert case14.loads.sum() == pytest.approx(259.0)


@pytest.mark.parametrize("name", ["case4", "case14", "case30"])
def test_incidence_and_laplacian_match_brute_force(name):
    g = load_case(name)
    A = incidence_matrix(g)
    np.testing.assert_array_equal(A, brute_incidence(g))
    D, B = susceptance_matrices(g)
    np.testing.assert_allclose(B, brute_laplacian(g, g.x), rtol=1e-12)
    np.testing.assert_allclose(B.sum(axis=1), 0, atol=1e-9)
    assert np.linalg.matrix_rank(B) == g.n_bus - 1


def test_format_parse_roundtrip(case14):
    again = parse_case(format_case(case14), name="case14")
    assert again == case14


def test_read_case_from_path(tmp_path, two_bus_text):
    p = tmp_path / "two.case"
    p.write_text(two_bus_text)
    g = read_case(p)
    assert g.name == "two" and g.n_bus == 2 and g.base_mva == 1


@pytest.mark.parametrize("text, lineno", [
    ("bus 1 0\nbus 2 1\nbranch 1 2 0.1 10\ngen 1 0 5 1\n", 3),
    ("bus 1 0\nfoo 2\n", 2),
    ("bus 1 0\nbus 2 x\n", 2),
    ("bus 1 0\nbus 2 1\nbranch 1 2 0.1 10 2\ngen 1 0 5 1\n", 3),
    ("ref 1\nref 2\n", 2),
])
def test_parse_errors_carry_line_numbers(text, lineno):
    with pytest.raises(CaseFormatError) as exc:
        parse_case(text)
    assert exc.value.line == lineno
    assert f"line {lineno}" in str(exc.value)


@pytest.mark.parametrize("text, fragment", [
    ("bus 1 0\nbus 1 1\nbranch 1 1 0.1 1 0\ngen 1 0 5 1\n", "duplicate bus"),
    ("bus 1 0\nbus 2 1\nbranch 1 3 0.1 1 0\ngen 1 0 5 1\n", "unknown bus"),
    ("bus 1 0\nbus 2 1\nbranch 1 2 -0.1 1 0\ngen 1 0 5 1\n", "nonpositive reactance"),
    ("bus 1 0\nbus 2 1\nbranch 1 2 0.1 1 0\ngen 1 0 0.5 1\n", "capacity"),
    ("bus 1 0\nbus 2 1\nbranch 1 2 0.1 1 0\ngen 1 0 5 1\nref 7\n", "reference bus"),
    ("bus 1 0\nbus 2 1\nbranch 1 2 0.1 1 0\ngen 1 0 5 1\ndfacts_eta 1.5\n", "dfacts_eta"),
])
def test_invalid_cases_rejected(text, fragment):
    with pytest.raises(CaseFormatError, match=fragment):
        parse_case(text)


def test_unknown_bundled_case():
    with pytest.raises(KeyError):
        load_case("case9999")


def test_disconnected_grid_detected():
    g = parse_case("bus 1 0\nbus 2 1\nbus 3 1\nbus 4 0\nbranch 1 2 0.1 10 0\nbranch 3 4 0.1 10 0\ngen 1 0 5 1\n")
    assert not is_connected(g)


def test_dfacts_limits(case14):
    idx = case14.dfacts_index
    np.testing.assert_allclose(case14.x_min[idx], 0.5 * case14.x[idx])
    np.testing.assert_allclose(case14.x_max[idx], 1.5 * case14.x[idx])
    others = np.setdiff1d(np.arange(case14.n_branch), idx)
    np.testing.assert_array_equal(case14.x_min[others], case14.x[others])
    with pytest.raises(ValueError):
        case14.check_reactances(case14.x * 2)


@given(st.floats(min_value=1.0, max_value=1000.0))
def test_disaggregate_preserves_shape(total):
    g = load_case("case14")
    loads = disaggregate_load(g, total)
    assert loads.sum() == pytest.approx(total)
    nz = g.loads > 0
    ratios = loads[nz] / g.loads[nz]
    np.testing.assert_allclose(ratios, ratios[0])


def test_trace_parsing_and_errors():
    tr = parse_load_trace("timestamp,load\n00:00,10\n01:00,12.5\n")
    assert tr.loads == (10.0, 12.5) and len(tr) == 2
    with pytest.raises(CaseFormatError, match="line 3"):
        parse_load_trace("t,l\n00:00,10\n01:00,abc\n")
    with pytest.raises(CaseFormatError, match="line 2"):
        parse_load_trace("00:00,10\n01:00,-1\n")
    with pytest.raises(CaseFormatError, match="increasing"):
        parse_load_trace("01:00,10\n00:00,11\n")
    with pytest.raises(CaseFormatError):
        parse_load_trace("t,l\n")


def test_bundled_trace_is_peaked_day():
    tr = bundled_trace()
    assert len(tr) == 24
    loads = np.array(tr.loads)
    assert 14 <= int(np.argmax(loads)) <= 20
    assert loads.max() / loads.min() > 1.2


def test_trace_helpers():
    tr = LoadTrace(("a", "b"), (1.0, 2.0))
    assert tr.scaled(10).loads == (5.0, 10.0)
    flat = LoadTrace.constant(250.0, hours=5)
    assert len(flat) == 5 and set(flat.loads) == {250.0}
    with pytest.raises(ValueError):
        LoadTrace(("b", "a"), (1.0, 1.0))
