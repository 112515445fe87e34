import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from oracles import block_circulant_loop, complex_gaussian
from quantsel.channel import (AntennaSubset, ChannelSet, LargeScaleParams, block_circulant,
                              dft_matrix, dl_channel, freq_channel, freq_channels,
                              large_scale_gain, load_channel, pathloss_db, sample_channel,
                              sample_positions, save_channel, thermal_noise_dbw, ul_submatrix)

PARAMS = LargeScaleParams()


# -- large-scale model ------------------------------------------------------------

def test_positions_area_uniform():
    r = sample_positions(1000, PARAMS, seed=3)
    assert r.min() >= 100.0 and r.max() <= 1000.0
    lo, hi = 100.0**2, 1000.0**2
    assert stats.kstest(r**2, stats.uniform(lo, hi - lo).cdf).pvalue > 0.01
    np.testing.assert_array_equal(r, sample_positions(1000, PARAMS, seed=3))


def test_positions_reject_empty():
    with pytest.raises(ValueError):
        sample_positions(0, PARAMS)


def test_reference_distance_gain():
    p = LargeScaleParams(shadowing_std_db=0.0)
    pl_d0 = 20 * math.log10(4 * math.pi * 100.0 * 2.4e9 / 299_792_458.0)
    expected = -(pl_d0 + 12.0) - (-204.0 + 70.0)  # noise-normalised
    assert large_scale_gain(100.0, p, seed=0, db=True) == pytest.approx(expected, abs=1e-9)
    assert pathloss_db(100.0, p) == pytest.approx(pl_d0, abs=1e-9)
    assert thermal_noise_dbw(p) == pytest.approx(-134.0)


def test_distance_doubling():
    p = LargeScaleParams(shadowing_std_db=0.0)
    drop = large_scale_gain(200.0, p, db=True) - large_scale_gain(400.0, p, db=True)
    assert drop == pytest.approx(10 * 3.5 * math.log10(2), abs=1e-9)
    assert drop == pytest.approx(10.54, abs=0.01)


def test_shadowing_median():
    base = large_scale_gain(500.0, LargeScaleParams(shadowing_std_db=0.0), db=True)
    g = large_scale_gain(np.full(100_000, 500.0), PARAMS, seed=9, db=True)
    assert abs(g.mean() - base) < 0.1
    assert g.std() == pytest.approx(8.7, rel=0.02)
    lin = large_scale_gain(np.full(3, 500.0), PARAMS, seed=9)
    np.testing.assert_allclose(10 * np.log10(lin), g[:3])


def test_gain_rejects_short_distance():
    with pytest.raises(ValueError):
        large_scale_gain(50.0, PARAMS)


@pytest.mark.parametrize("kwargs", [dict(min_distance_m=1000.0), dict(carrier_hz=0.0),
                                    dict(shadowing_std_db=-1.0)])
def test_params_validation(kwargs):
    with pytest.raises(ValueError):
        LargeScaleParams(**kwargs)


# -- small-scale fading -------------------------------------------------------------

def test_unit_variance_entries():
    ch = sample_channel(100, 1000, 1, np.ones(1000), seed=1)
    assert np.mean(np.abs(ch.taps) ** 2) == pytest.approx(1.0, rel=0.02)
    assert abs(np.mean(ch.taps)) < 0.02


def test_uniform_power_delay_profile():
    gains = np.array([1.0, 4.0])
    ch = sample_channel(20_000, 2, 4, gains, seed=2)
    per_tap = np.mean(np.abs(ch.taps) ** 2, axis=1)  # (taps, users)
    np.testing.assert_allclose(per_tap, np.broadcast_to(gains / 4, (4, 2)), rtol=0.03)
    np.testing.assert_allclose(per_tap.sum(axis=0), gains, rtol=0.02)


def test_sampling_deterministic():
    a = sample_channel(4, 3, 2, np.ones(3), seed=5)
    b = sample_channel(4, 3, 2, np.ones(3), seed=5)
    np.testing.assert_array_equal(a.taps, b.taps)
    assert a.seed == 5


def test_sample_channel_validation():
    with pytest.raises(ValueError):
        sample_channel(4, 3, 1, np.ones(2))
    with pytest.raises(ValueError):
        sample_channel(0, 3, 1, np.ones(3))


def test_channelset_readonly_and_restrict():
    ch = sample_channel(6, 3, 2, np.array([1.0, 2.0, 3.0]), seed=0)
    with pytest.raises(ValueError):
        ch.taps[0, 0, 0] = 0
    sub = ch.restrict(4, 2)
    assert (sub.n_taps, sub.n_bs, sub.n_ms) == (2, 4, 2)
    np.testing.assert_array_equal(sub.taps, ch.taps[:, :4, :2])
    np.testing.assert_array_equal(sub.large_scale_gain, [1.0, 2.0])
    with pytest.raises(ValueError):
        ch.narrowband


def test_channelset_shape_checks():
    with pytest.raises(ValueError):
        ChannelSet(np.zeros((2, 3)), np.ones(2))
    assert ChannelSet(np.zeros((2, 3)), np.ones(3)).n_taps == 1


# -- subsets ------------------------------------------------------------------------

def test_antenna_subset_rules():
    assert AntennaSubset.of([3, 1, 2]).indices == (1, 2, 3)
    for bad in ([], [2, 1], [1, 1], [-1, 2]):
        with pytest.raises(ValueError):
            AntennaSubset(tuple(bad))
    with pytest.raises(ValueError):
        AntennaSubset.of([1, 1])
    assert len(AntennaSubset((0, 4))) == 2
    np.testing.assert_array_equal(np.asarray(AntennaSubset((0, 4))), [0, 4])


def test_submatrix_examples(rng):
    ch = sample_channel(5, 2, 2, np.ones(2), seed=rng)
    np.testing.assert_array_equal(ul_submatrix(ch, range(5)), ch.taps)
    small = sample_channel(2, 1, 1, np.ones(1), seed=0)
    np.testing.assert_array_equal(ul_submatrix(small, AntennaSubset((0,)))[0], small.taps[0, :1])
    with pytest.raises(IndexError):
        ul_submatrix(ch, [5])


@given(st.integers(2, 10), st.data())
def test_submatrix_composition(n_bs, data):
    ch = sample_channel(n_bs, 2, 2, np.ones(2), seed=n_bs)
    outer = data.draw(st.lists(st.integers(0, n_bs - 1), min_size=1, unique=True))
    inner = data.draw(st.lists(st.integers(0, len(outer) - 1), min_size=1, unique=True))
    composed = [outer[i] for i in inner]
    np.testing.assert_array_equal(ul_submatrix(ul_submatrix(ch, outer), inner),
                                  ul_submatrix(ch, composed))


def test_dl_channel(rng):
    ch = sample_channel(6, 3, 2, np.ones(3), seed=rng)
    dl = dl_channel(ch)
    assert dl.shape == (2, 3, 6)
    np.testing.assert_array_equal(dl_channel(dl), ch.taps)
    np.testing.assert_allclose(np.sum(np.abs(dl[0]) ** 2, axis=0),
                               np.sum(np.abs(ch.taps[0]) ** 2, axis=1))


# -- frequency domain ------------------------------------------------------------------

def test_freq_flat_channel(rng):
    H = complex_gaussian(rng, (1, 4, 3))
    for n in range(1, 9):
        np.testing.assert_allclose(freq_channel(H, n, 8), H[0])


def test_freq_first_bin_sums_taps(rng):
    taps = complex_gaussian(rng, (3, 4, 2))
    np.testing.assert_allclose(freq_channel(taps, 1, 8), taps.sum(axis=0), atol=1e-14)


def test_freq_batch_matches_single(rng):
    taps = complex_gaussian(rng, (3, 4, 2))
    G = freq_channels(taps, 8)
    for n in range(1, 9):
        np.testing.assert_allclose(G[n - 1], freq_channel(taps, n, 8), atol=1e-12)


@given(st.integers(1, 4), st.integers(4, 16), st.integers(0, 2**32 - 1))
def test_parseval(n_taps, n_sc, seed):
    taps = complex_gaussian(np.random.default_rng(seed), (n_taps, 3, 2))
    G = freq_channels(taps, n_sc)
    assert np.sum(np.abs(G) ** 2) == pytest.approx(n_sc * np.sum(np.abs(taps) ** 2), rel=1e-9)


def test_freq_validation(rng):
    taps = complex_gaussian(rng, (5, 2, 2))
    with pytest.raises(ValueError):
        freq_channel(taps, 1, 4)
    with pytest.raises(ValueError):
        freq_channel(taps[:2], 0, 4)
    with pytest.raises(ValueError):
        freq_channels(taps, 4)


def test_dft_unitary():
    W = dft_matrix(8)
    np.testing.assert_allclose(W @ W.conj().T, np.eye(8), atol=1e-14)


def test_block_circulant_layout(rng):
    taps = complex_gaussian(rng, (3, 2, 4))
    np.testing.assert_array_equal(block_circulant(taps, 8), block_circulant_loop(taps, 8))
    # first block row: H_0, 0, ..., 0, H_2, H_1
    Hb = block_circulant(taps, 8)
    np.testing.assert_array_equal(Hb[:2, :4], taps[0])
    np.testing.assert_array_equal(Hb[:2, 4 * 6:4 * 7], taps[2])
    np.testing.assert_array_equal(Hb[:2, 4 * 7:], taps[1])


def test_block_circulant_diagonalisation(rng):
    # N_sc = 8, L = 3, N_BS = 4, N_MS = 2, downlink orientation
    n_sc, n_ms, n_bs = 8, 2, 4
    taps = complex_gaussian(rng, (3, n_ms, n_bs))
    Hb = block_circulant(taps, n_sc)
    W = dft_matrix(n_sc)
    D = np.kron(W, np.eye(n_ms)) @ Hb @ np.kron(W, np.eye(n_bs)).conj().T
    for n in range(1, n_sc + 1):
        blk = D[(n - 1) * n_ms:n * n_ms, (n - 1) * n_bs:n * n_bs]
        np.testing.assert_allclose(blk, freq_channel(taps, n, n_sc), atol=1e-9)
        D[(n - 1) * n_ms:n * n_ms, (n - 1) * n_bs:n * n_bs] = 0
    assert np.max(np.abs(D)) < 1e-9


def test_trace_identity(rng):
    n_sc = 8
    taps = complex_gaussian(rng, (3, 2, 4))
    Hb = block_circulant(taps, n_sc)
    lhs = np.trace(np.linalg.inv(Hb @ Hb.conj().T)).real
    rhs = sum(np.trace(np.linalg.inv(G @ G.conj().T)).real for G in freq_channels(taps, n_sc))
    assert lhs == pytest.approx(rhs, rel=1e-9)


def test_block_circulant_too_many_taps(rng):
    with pytest.raises(ValueError):
        block_circulant(complex_gaussian(rng, (5, 2, 2)), 4)


# -- serialisation ---------------------------------------------------------------------

def test_save_load_roundtrip(tmp_path, rng):
    ch = sample_channel(5, 3, 2, np.array([0.5, 1e-7, 3e4]), seed=42)
    save_channel(ch, tmp_path / "ch.txt")
    back = load_channel(tmp_path / "ch.txt")
    np.testing.assert_array_equal(back.taps, ch.taps)
    np.testing.assert_array_equal(back.large_scale_gain, ch.large_scale_gain)
    assert back.seed == 42
    header = (tmp_path / "ch.txt").read_text().splitlines()[:2]
    assert header == ["# quantsel-channel v1", "dims 5 3 2"]


def test_load_rejects_foreign_file(tmp_path):
    (tmp_path / "x.txt").write_text("hello\n")
    with pytest.raises(ValueError):
        load_channel(tmp_path / "x.txt")
