import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distdrift.besov import (GridFunction, SpectralGrid, besov_norm, block_sups, check_bernstein, check_schauder,
                             chi, heat_semigroup, holder_norm, lp_block, partition, resample, write_block_table)
from distdrift.drift import DriftSpec, build_drift

GRID = SpectralGrid(num_points=1024)  # L = 5 pi: max_block 5, Nyquist 102.4
BIG = SpectralGrid()


def single(grid, freq, amp=1.0, phase=0.0):
    return GridFunction.from_callable(grid, lambda x: amp * np.sin(freq * x + phase))


def random_bandlimited(grid, rng, top=None):
    top = top or grid.resolved_limit
    k = np.arange(grid.num_points // 2 + 1)
    c = np.where(grid.xi <= top, rng.normal(size=k.size) + 1j * rng.normal(size=k.size), 0)
    c[0] = c[0].real
    return GridFunction(grid, coefficients=c / k.size)


def test_grid_geometry():
    assert BIG.max_block == 9
    assert SpectralGrid(num_points=256).max_block == 3
    assert SpectralGrid(num_points=64).max_block == 1
    for g in (GRID, BIG):
        assert g.nyquist > 2.0 ** (g.max_block + 1)
    assert GRID.frequency_index(2.0) == 10
    with pytest.raises(ValueError):
        GRID.frequency_index(1.1)
    with pytest.raises(ValueError):
        SpectralGrid(num_points=100)
    with pytest.raises(ValueError):
        SpectralGrid(num_points=32)


def test_values_coefficients_roundtrip():
    f = random_bandlimited(GRID, np.random.default_rng(1))
    g = GridFunction(GRID, values=f.values.copy())
    assert np.max(np.abs(g.coefficients - f.coefficients)) <= 1e-10 * np.max(np.abs(f.coefficients))


def test_partition_of_unity_and_support():
    part = partition(BIG)
    xi = BIG.xi
    total = part.blocks.sum(axis=0)
    mask = part.resolved_mask()
    assert np.max(np.abs(total[mask] - 1)) <= 1e-12
    assert np.all(part.weight(-1)[xi > 1] == 0)
    for j in range(BIG.max_block + 1):
        w = part.weight(j)
        outside = (xi < 2.0 ** (j - 1)) | (xi > 2.0 ** (j + 1))
        assert np.all(w[outside] == 0)
        assert np.all(w[(xi >= 2.0**j) & (xi <= 1.5 * 2.0**j)] == 1)
    assert np.all(part.blocks >= -1e-15)


def test_chi_profile():
    assert chi(0.0) == 1 and chi(0.75) == 1 and chi(1.0) == 0 and chi(3.0) == 0
    r = np.linspace(0.75, 1, 101)
    assert np.all(np.diff(chi(r)) <= 0)


@pytest.mark.parametrize("j", range(0, 6))
def test_single_frequency_lands_in_its_block(j):
    f = single(GRID, 2.0**j, amp=0.7, phase=0.3)
    for i in range(-1, GRID.max_block + 1):
        b = lp_block(f, i)
        target = f.values if i == j else 0.0
        assert np.max(np.abs(b.values - target)) <= 1e-10
    gamma = -0.4
    # the block sup is a max over samples, so the oracle is the sampled amplitude
    assert besov_norm(f, gamma) == pytest.approx(f.sup() * 2.0 ** (j * gamma), abs=1e-10)
    # sampling misses the crest by at most half a grid step
    assert 0.7 * math.cos(2.0**j * GRID.dx / 2) <= f.sup() <= 0.7


def test_block_index_range():
    f = GridFunction.zeros(GRID)
    with pytest.raises(IndexError):
        lp_block(f, GRID.max_block + 1)
    with pytest.raises(IndexError):
        lp_block(f, -2)


def test_reconstruction():
    f = random_bandlimited(BIG, np.random.default_rng(2))
    total = sum(lp_block(f, j).values for j in range(-1, BIG.max_block + 1))
    assert np.max(np.abs(total - f.values)) <= 1e-9


def test_besov_norm_basics():
    z = GridFunction.zeros(GRID)
    assert besov_norm(z, 0.3) == 0
    assert lp_block(z, 2).sup() == 0
    f = random_bandlimited(GRID, np.random.default_rng(3))
    assert besov_norm(f, 0.2) > 0
    assert besov_norm(-3.0 * f, 0.2) == pytest.approx(3 * besov_norm(f, 0.2), rel=1e-13)
    with pytest.raises(ValueError):
        besov_norm(f, 3.5)
    with pytest.raises(ValueError):
        besov_norm(f, -2.5)


def test_disjoint_blocks_linearity():
    f1, f2 = single(GRID, 2.0), single(GRID, 16.0, 0.5)
    s = f1 + f2
    assert np.max(np.abs(lp_block(s, 1).values - f1.values)) <= 1e-10
    assert np.max(np.abs(lp_block(s, 4).values - f2.values)) <= 1e-10


def test_holder_norm():
    c = GridFunction(GRID, values=np.full(GRID.num_points, -2.5))
    assert holder_norm(c, 0.5) == pytest.approx(2.5)
    s = single(GRID, 1.0)
    hn = holder_norm(s, 0.5)
    h = GRID.dx
    assert 1 <= hn <= 1 + math.sqrt(2)
    assert hn >= abs(math.sin(math.pi / 2) - math.sin(math.pi / 2 - h)) / h**0.5
    # a denser sample of the same function can only raise the pair-scan value
    dense = resample(s, SpectralGrid(num_points=8192))
    assert holder_norm(dense, 0.5) >= hn - 1e-12
    assert holder_norm(dense, 0.5) - hn < 1e-2
    assert holder_norm(s, 1.5) > hn
    for bad in (0.0, 1.0, 2.0):
        with pytest.raises(ValueError):
            holder_norm(s, bad)


def test_holder_besov_equivalence_constants_stable():
    rng = np.random.default_rng(4)
    ratios = []
    for _ in range(20):
        f = random_bandlimited(GRID, rng, top=20.0)
        ratios.append(besov_norm(f, 0.5) / holder_norm(f, 0.5))
    ratios = np.array(ratios)
    assert np.all(ratios > 0)
    assert ratios.max() / ratios.min() < 4


def test_heat_semigroup_examples():
    f = single(GRID, 3.0, phase=0.2)
    t = 0.37
    assert heat_semigroup(f, 0.0) is f
    expected = math.exp(-9 * t / 2) * f.values
    assert np.max(np.abs(heat_semigroup(f, t).values - expected)) <= 1e-13
    c = GridFunction(GRID, values=np.full(GRID.num_points, 1.7))
    assert np.allclose(heat_semigroup(c, 5.0).values, 1.7, atol=1e-14)
    with pytest.raises(ValueError):
        heat_semigroup(f, -1e-3)


@settings(max_examples=25, deadline=None)
@given(s=st.floats(0, 2), t=st.floats(0, 2), seed=st.integers(0, 2**16))
def test_semigroup_law(s, t, seed):
    f = random_bandlimited(GRID, np.random.default_rng(seed))
    a = heat_semigroup(heat_semigroup(f, s), t).values
    b = heat_semigroup(f, s + t).values
    assert np.max(np.abs(a - b)) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(t=st.floats(0, 5), gamma=st.floats(-1.5, 2.5), seed=st.integers(0, 2**16))
def test_semigroup_contracts_every_block(t, gamma, seed):
    f = random_bandlimited(GRID, np.random.default_rng(seed))
    assert besov_norm(heat_semigroup(f, t), gamma) <= besov_norm(f, gamma) * (1 + 1e-9)


def test_bernstein():
    assert check_bernstein(GridFunction.zeros(GRID), 0.1) == 0
    for j in range(0, 6):
        for freq in (2.0**j, 1.2 * 2.0**j, 1.4 * 2.0**j):
            try:
                GRID.frequency_index(freq)
            except ValueError:
                continue
            r = check_bernstein(single(GRID, freq), -0.5)
            assert r == pytest.approx(freq / 2.0**j, rel=1e-9)
            assert 0.5 <= r <= 2
    rng = np.random.default_rng(5)
    ratios = [check_bernstein(random_bandlimited(GRID, rng), g) for g in rng.uniform(-1.5, 1.5, 50)]
    assert max(ratios) <= 4


def test_schauder_single_frequency():
    f = single(BIG, 1.0)
    rep = check_schauder(f, 0.5, 0.25, t_values=2.0 ** -np.arange(14, 3, -1))
    assert rep.continuity_slope >= min(0.25, 1) - 0.1
    assert rep.continuity_slope == pytest.approx(1.0, abs=0.05)


@pytest.mark.parametrize("gap", [0.1, 0.2, 0.3])
def test_schauder_lacunary_blowup(gap):
    f = build_drift(DriftSpec(kind="holder_function", holder_exponent=0.6, seed=1), BIG)
    rep = check_schauder(f, 0.6, gap, t_values=2.0 ** -np.arange(14, 3, -1))
    assert -gap - 0.15 <= rep.smoothing_slope <= -gap + 0.15
    assert rep.continuity_slope == pytest.approx(gap, abs=0.15)


def test_schauder_errors():
    f = single(GRID, 1.0)
    with pytest.raises(ValueError):
        check_schauder(f, 0.0, 0.2, t_values=[0.1, 0.2])
    with pytest.raises(ValueError):
        check_schauder(GridFunction.zeros(GRID), 0.0, 0.2)


def test_resample_roundtrip():
    f = random_bandlimited(GRID, np.random.default_rng(6), top=30.0)
    up = resample(f, SpectralGrid(num_points=4096))
    back = resample(up, GRID)
    assert np.max(np.abs(back.values - f.values)) <= 1e-12
    assert np.max(np.abs(up.values[::4] - f.values)) <= 1e-12


def test_block_table_csv(tmp_path):
    f = single(GRID, 4.0, 2.0)
    write_block_table(tmp_path / "b.csv", f, 1.0)
    rows = (tmp_path / "b.csv").read_text().splitlines()
    assert rows[0] == "j,block_sup,weighted"
    assert len(rows) == GRID.max_block + 3
    j, sup, w = rows[1 + 3].split(",")
    assert int(j) == 2 and float(sup) == pytest.approx(2.0) and float(w) == pytest.approx(8.0)
    assert np.allclose(block_sups(f)[3], 2.0)
