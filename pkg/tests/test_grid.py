import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from pmscrit import distribution as dist
from pmscrit.distribution import ModelParams
from pmscrit.errors import DomainError, RangeError
from pmscrit.grid import (
    GridCache, QuantileGrid, SparseTable, build_quantile_grid, interval_sup, load_grid, save_grid,
)

PARAMS = ModelParams(0.7, 1.96)


@pytest.fixture(scope="module")
def grid05():
    return build_quantile_grid(PARAMS, 0.05, -15.0, 15.0)


@given(arrays(float, st.integers(1, 70), elements=st.integers(-5, 5).map(float)), st.data())
def test_sparse_table_matches_brute_force(values, data):
    table = SparseTable(values)
    i = data.draw(st.integers(0, values.size - 1))
    j = data.draw(st.integers(i, values.size - 1))
    k = table.argmax(i, j)
    window = values[i : j + 1]
    assert values[k] == window.max()
    assert k == i + int(np.argmax(window))  # leftmost tie


def test_sparse_table_vectorised_queries():
    rng = np.random.default_rng(1)
    values = rng.normal(size=257)
    table = SparseTable(values)
    lo = rng.integers(0, 257, size=500)
    hi = np.minimum(lo + rng.integers(0, 257, size=500), 256)
    got = table.max(lo, hi)
    want = [values[a : b + 1].max() for a, b in zip(lo, hi)]
    assert np.array_equal(got, want)
    with pytest.raises(RangeError):
        table.argmax(5, 4)
    with pytest.raises(DomainError):
        SparseTable([])


def test_grid_nodes_are_exact_quantiles(grid05):
    idx = [0, 777, 1234, grid05.values.size - 1]
    exact = dist.quantiles(PARAMS, grid05.gammas[idx], 0.05)
    assert np.allclose(grid05.values[idx], exact, atol=1e-12, rtol=0)
    assert not grid05.values.flags.writeable


def test_spline_interpolation_accuracy(grid05):
    g = np.linspace(-14.9, 14.9, 997)
    assert np.max(np.abs(grid05.value_at(g) - dist.quantiles(PARAMS, g, 0.05))) < 1e-8


def test_value_at_off_grid_raises(grid05):
    with pytest.raises(RangeError):
        grid05.value_at(15.5)
    with pytest.raises(RangeError):
        interval_sup(grid05, -16.0, 0.0)
    with pytest.raises(DomainError):
        interval_sup(grid05, 1.0, 0.0)


@given(st.floats(-12.0, 12.0), st.floats(0.0, 3.0))
@settings(max_examples=60, deadline=None)
def test_interval_sup_matches_dense_scan(grid05, lo, width):
    hi = lo + width
    dense = dist.quantiles(PARAMS, np.linspace(lo, hi, 2001), 0.05).max()
    assert interval_sup(grid05, lo, hi) == pytest.approx(dense, abs=1e-6)
    assert interval_sup(grid05, lo, hi) >= dense - 1e-9


def test_interval_sup_vectorised(grid05):
    lo = np.array([-3.0, 0.2, 5.0])
    got = interval_sup(grid05, lo, lo + 1.5)
    assert np.allclose(got, [interval_sup(grid05, a, a + 1.5) for a in lo], atol=0, rtol=0)


def test_save_load_round_trip_is_bit_exact(grid05, tmp_path):
    path = tmp_path / "g.npz"
    save_grid(grid05, path)
    back = load_grid(path, expected_key=grid05.cache_key())
    assert back is not None
    assert back.values.tobytes() == grid05.values.tobytes()
    assert back.cache_key() == grid05.cache_key()


def test_load_rejects_corrupt_or_stale_files(grid05, tmp_path):
    path = tmp_path / "g.npz"
    save_grid(grid05, path)
    other = build_quantile_grid(PARAMS, 0.05, -15.0, 15.0, tol=1e-12)
    assert load_grid(path, expected_key=other.cache_key()) is None
    path.write_bytes(path.read_bytes()[:-40])
    assert load_grid(path) is None
    path.write_text("not a grid")
    assert load_grid(path) is None


def test_cache_hit_miss_and_rebuild(tmp_path):
    cache = GridCache(tmp_path)
    first = cache.get(PARAMS, 0.1, -5.0, 5.0)
    assert [s for _, s in cache.events] == ["miss"]
    assert cache.get(PARAMS, 0.1, -5.0, 5.0) is first

    fresh = GridCache(tmp_path)
    again = fresh.get(PARAMS, 0.1, -5.0, 5.0)
    assert [s for _, s in fresh.events] == ["hit"]
    assert again.values.tobytes() == first.values.tobytes()

    fresh.get(PARAMS, 0.1, -5.0, 5.0, tol=1e-11)
    assert fresh.events[-1][1] == "miss"

    for f in tmp_path.glob("*.npz"):
        f.write_bytes(b"garbage")
    third = GridCache(tmp_path)
    rebuilt = third.get(PARAMS, 0.1, -5.0, 5.0)
    assert third.events[-1][1] == "corrupt"
    assert rebuilt.values.tobytes() == first.values.tobytes()


def test_cache_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("PMSCRIT_CACHE_DIR", str(tmp_path))
    assert GridCache().directory == tmp_path
    monkeypatch.delenv("PMSCRIT_CACHE_DIR")
    assert GridCache().directory is None


def test_grid_validation():
    with pytest.raises(DomainError):
        build_quantile_grid(PARAMS, 0.05, 1.0, 0.0)
    with pytest.raises(DomainError):
        build_quantile_grid(PARAMS, 0.05, 0.0, 1.0, step=0.0)
    with pytest.raises(DomainError):
        QuantileGrid(PARAMS, 0.05, 0.0, 0.1, np.zeros(3))
