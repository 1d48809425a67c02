import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gfscma.airlink import (ConfigError, DimensionError, MissingBitsError, PreambleSet, ScenarioConfig,
                            association_map, frame_streams, sample_activity, sample_batch, sample_bits,
                            sample_channel, snr_to_noise_std, superpose_data, superpose_preamble)
from gfscma.models import gen_independent_preambles
from gfscma.scma_core import build_codebook_set, build_mapping_matrix, encode_block


@pytest.fixture(scope="module")
def cbs():
    return build_codebook_set(build_mapping_matrix(4, 6, 2), 4)


@pytest.fixture
def desk():
    return ScenarioConfig(N=12, J=6, L=2, K_p=8, K_d=4, N_d=4, activity_prob=0.25)


def brute_preamble(ps, delta, h):
    y = np.zeros(ps.K_p, dtype=complex)
    for n in range(ps.N):
        if delta[n]:
            for k in range(ps.K_p):
                y[k] += h[n] * ps.p[n, k]
    return y


class TestScenarioConfig:
    def test_reference_configs(self):
        for N, L, p in [(48, 8, 0.0625), (60, 10, 0.05), (72, 12, 0.04166)]:
            sc = ScenarioConfig(N=N, J=6, L=L, K_p=16, N_d=16, activity_prob=p)
            assert sc.N_R == N
            assert sc.activity_prob.sum() == pytest.approx(3.0, abs=1e-3)

    def test_n_ne_jl_rejected(self):
        with pytest.raises(ConfigError, match="J\\*L"):
            ScenarioConfig(N=13, J=6, L=2, K_p=8)

    def test_lists_all_problems(self):
        with pytest.raises(ConfigError) as err:
            ScenarioConfig(N=12, J=6, L=2, K_p=0, N_d=-1, activity_prob=1.5)
        assert len(err.value.problems) == 3

    def test_associations(self):
        np.testing.assert_array_equal(association_map(12, 6), [0, 1, 2, 3, 4, 5] * 2)
        np.testing.assert_array_equal(association_map(12, 6, "block"), np.repeat(np.arange(6), 2))

    def test_json_round_trip(self, desk):
        back = ScenarioConfig.from_json(desk.to_json())
        assert back.to_json() == desk.to_json()


class TestActivity:
    def test_all_zero(self, desk):
        desk.activity_prob = np.zeros(12)
        assert sample_activity(desk, np.random.default_rng(0)).sum() == 0

    def test_all_one(self, desk):
        desk.activity_prob = np.ones(12)
        assert (sample_activity(desk, np.random.default_rng(0), size=5) == 1).all()

    def test_bernoulli_mean_large_config(self):
        sc = ScenarioConfig(N=48, J=6, L=8, K_p=16, N_d=16, activity_prob=0.0625)
        draws = 100_000
        totals = sample_activity(sc, np.random.default_rng(7), size=draws).sum(axis=1)
        se = np.sqrt(48 * 0.0625 * 0.9375 / draws)
        assert abs(totals.mean() - 3.0) < 3 * se


class TestChannel:
    def test_moments(self, desk):
        h = sample_channel(desk, np.random.default_rng(3), size=100_000 // 12 + 1).ravel()[:100_000]
        assert np.mean(np.abs(h) ** 2) == pytest.approx(1.0, abs=0.02)
        assert abs(h.real.mean()) < 0.02 and abs(h.imag.mean()) < 0.02
        assert np.var(h.real) == pytest.approx(0.5, abs=0.01)
        assert np.var(h.imag) == pytest.approx(0.5, abs=0.01)

    def test_same_seed(self, desk):
        a = sample_channel(desk, np.random.default_rng(11))
        b = sample_channel(desk, np.random.default_rng(11))
        np.testing.assert_array_equal(a, b)


class TestNoise:
    @pytest.mark.parametrize("snr,sigma", [(0, 1.0), (20, 0.1), (-20, 10.0)])
    def test_snr_to_std(self, snr, sigma):
        assert snr_to_noise_std(snr) == pytest.approx(sigma, rel=1e-15)

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            snr_to_noise_std(float("nan"))

    def test_noise_calibration(self, desk):
        ps = gen_independent_preambles(12, 8, "gaussian", 0)
        sigma = snr_to_noise_std(3.0)
        delta = np.zeros((100_000 // 8, 12), dtype=np.int8)
        y = superpose_preamble(ps, delta, np.ones_like(delta, dtype=complex), sigma, np.random.default_rng(5))
        assert y.size == 100_000
        assert np.mean(np.abs(y) ** 2) == pytest.approx(sigma ** 2, rel=0.03)


@pytest.fixture(scope="module")
def ps():
    return gen_independent_preambles(12, 8, "gaussian", 1)


class TestSuperposePreamble:
    def test_silent(self, ps):
        y = superpose_preamble(ps, np.zeros(12), np.ones(12, complex), 0.0)
        np.testing.assert_array_equal(y, 0)

    def test_single_user(self, ps):
        delta = np.zeros(12)
        delta[3] = 1
        h = sample_channel(ScenarioConfig(N=12, J=6, L=2, K_p=8), np.random.default_rng(0))
        np.testing.assert_allclose(superpose_preamble(ps, delta, h, 0.0), h[3] * ps.p[3], atol=1e-15)

    def test_matches_brute_force(self, ps):
        rng = np.random.default_rng(2)
        for _ in range(20):
            delta = rng.integers(0, 2, 12)
            h = rng.standard_normal(12) + 1j * rng.standard_normal(12)
            np.testing.assert_allclose(superpose_preamble(ps, delta, h, 0.0), brute_preamble(ps, delta, h),
                                       atol=1e-12)

    def test_dimension_mismatch(self, ps):
        with pytest.raises(DimensionError):
            superpose_preamble(ps, np.zeros(11), np.zeros(11, complex), 0.0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**12 - 1), st.integers(0, 2**12 - 1), st.integers(0, 10_000))
    def test_linearity_disjoint(self, ps, mask_a, mask_b, seed):
        a = np.array([(mask_a >> i) & 1 for i in range(12)])
        b = np.array([(mask_b >> i) & 1 for i in range(12)]) * (1 - a)
        z = np.random.default_rng(seed).standard_normal((2, 12))
        h = z[0] + 1j * z[1]
        total = superpose_preamble(ps, a + b, h, 0.0)
        parts = superpose_preamble(ps, a, h, 0.0) + superpose_preamble(ps, b, h, 0.0)
        np.testing.assert_allclose(total, parts, atol=1e-12)


class TestSuperposeData:
    def test_silent(self, cbs):
        bits = np.zeros((12, 4, 2), dtype=np.int8)
        y = superpose_data(cbs, association_map(12, 6), np.zeros(12), np.ones(12, complex), bits, 0.0)
        assert y.shape == (4, 4)
        np.testing.assert_array_equal(y, 0)

    def test_single_active_user(self, cbs):
        rng = np.random.default_rng(4)
        bits = rng.integers(0, 2, (12, 4, 2))
        delta = np.zeros(12)
        delta[7] = 1
        h = rng.standard_normal(12) + 1j * rng.standard_normal(12)
        y = superpose_data(cbs, association_map(12, 6), delta, h, bits, 0.0)
        expected = np.array([h[7] * encode_block(cbs, 7 % 6, bits[7, i]) for i in range(4)])
        np.testing.assert_allclose(y, expected, atol=1e-15)

    def test_shared_codebook_linearity(self, cbs):
        rng = np.random.default_rng(5)
        bits = rng.integers(0, 2, (12, 4, 2))
        bits[8] = bits[2]  # users 2 and 8 share codebook 2 under round-robin
        delta = np.zeros(12)
        delta[[2, 8]] = 1
        h = rng.standard_normal(12) + 1j * rng.standard_normal(12)
        y = superpose_data(cbs, association_map(12, 6), delta, h, bits, 0.0)
        seq = np.array([encode_block(cbs, 2, bits[2, i]) for i in range(4)])
        np.testing.assert_allclose(y, (h[2] + h[8]) * seq, atol=1e-14)

    def test_missing_bits(self, cbs):
        delta = np.zeros(12)
        delta[1] = 1
        bits = [None] * 12
        bits[0] = np.zeros((4, 2), dtype=int)
        with pytest.raises(MissingBitsError):
            superpose_data(cbs, association_map(12, 6), delta, np.ones(12, complex), bits, 0.0)

    def test_inactive_may_omit_bits(self, cbs):
        delta = np.zeros(12)
        delta[1] = 1
        bits = [None] * 12
        bits[1] = np.ones((4, 2), dtype=int)
        y = superpose_data(cbs, association_map(12, 6), delta, np.ones(12, complex), bits, 0.0)
        np.testing.assert_allclose(y, np.tile(cbs.codewords[1, 3], (4, 1)))


class TestBatches:
    def test_determinism(self, desk, cbs):
        a = sample_batch(desk, cbs, 8.0, 64, frame_streams(3, 1))
        b = sample_batch(desk, cbs, 8.0, 64, frame_streams(3, 1))
        ps = gen_independent_preambles(12, 8, "qpsk", 0)
        np.testing.assert_array_equal(a.frame(ps).y_p, b.frame(ps).y_p)
        np.testing.assert_array_equal(a.y_d, b.y_d)

    def test_paired_noise_across_preamble_sets(self, desk, cbs):
        batch = sample_batch(desk, cbs, 8.0, 32, frame_streams(3, 2))
        ps1 = gen_independent_preambles(12, 8, "gaussian", 0)
        ps2 = gen_independent_preambles(12, 8, "gaussian", 1)
        n1 = batch.frame(ps1).y_p - superpose_preamble(ps1, batch.delta, batch.h, 0.0)
        n2 = batch.frame(ps2).y_p - superpose_preamble(ps2, batch.delta, batch.h, 0.0)
        np.testing.assert_allclose(n1, n2, atol=1e-14)

    def test_different_streams_differ(self, desk, cbs):
        a = sample_batch(desk, cbs, 8.0, 64, frame_streams(3, 1))
        b = sample_batch(desk, cbs, 8.0, 64, frame_streams(3, 2))
        assert not np.array_equal(a.h, b.h)

    def test_bits_shape(self, desk):
        assert sample_bits(desk, np.random.default_rng(0), 5).shape == (5, 12, 4, 2)


class TestPreambleSetFile:
    def test_round_trip_bit_exact(self, tmp_path):
        ps = gen_independent_preambles(12, 8, "gaussian", 9)
        ps.save(tmp_path / "p.json")
        back = PreambleSet.load(tmp_path / "p.json")
        np.testing.assert_array_equal(back.p, ps.p)
        np.testing.assert_array_equal(back.assoc, ps.assoc)
        assert back.J == 6

    def test_header_mismatch(self):
        doc = gen_independent_preambles(12, 8, "gaussian", 9).to_json()
        doc["N"] = 13
        with pytest.raises(DimensionError):
            PreambleSet.from_json(doc)
