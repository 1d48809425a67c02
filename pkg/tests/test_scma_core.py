import itertools
import json

import numpy as np
import pytest

from gfscma.scma_core import (CapacityError, ScmaCodebookSet, bits_to_index, build_codebook_set,
                              build_mapping_matrix, encode_block, index_to_bits)


@pytest.fixture(scope="module")
def cbs():
    return build_codebook_set(build_mapping_matrix(4, 6, 2), 4)


class TestMappingMatrix:
    def test_full_enumeration_4_6_2(self):
        m = build_mapping_matrix(4, 6, 2)
        assert m.entries.shape == (4, 6)
        cols = {tuple(np.flatnonzero(m.entries[:, j])) for j in range(6)}
        assert cols == set(itertools.combinations(range(4), 2))
        assert (m.entries.sum(axis=1) == 3).all()
        assert (m.entries.sum(axis=0) == 2).all()
        assert m.overloading == pytest.approx(1.5)

    def test_lexicographic_order(self):
        m = build_mapping_matrix(4, 6, 2)
        supports = [tuple(m.support(j)) for j in range(6)]
        assert supports == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]

    def test_capacity_error(self):
        with pytest.raises(CapacityError):
            build_mapping_matrix(4, 7, 2)

    def test_rejects_nm_ge_kd(self):
        with pytest.raises(ValueError):
            build_mapping_matrix(4, 1, 4)

    def test_unit_columns(self):
        m = build_mapping_matrix(3, 3, 1)
        np.testing.assert_array_equal(m.entries, np.eye(3))

    @pytest.mark.parametrize("K_d,J,N_m", [(4, 6, 2), (5, 10, 2), (6, 4, 3), (3, 2, 1)])
    def test_row_weight_total(self, K_d, J, N_m):
        m = build_mapping_matrix(K_d, J, N_m)
        assert m.entries.sum() == J * N_m
        assert set(np.unique(m.entries)) <= {0, 1}

    def test_deterministic(self):
        np.testing.assert_array_equal(build_mapping_matrix(5, 7, 2).entries, build_mapping_matrix(5, 7, 2).entries)


class TestCodebookSet:
    def test_shape_and_sparsity(self, cbs):
        assert cbs.codewords.shape == (6, 4, 4)
        # independent sparsity oracle: zero pattern must follow the mapping column
        for j in range(6):
            col = cbs.mapping.entries[:, j]
            for m in range(4):
                nz = (np.abs(cbs.codewords[j, m]) > 0).astype(int)
                assert list(nz) == list(col)
                assert nz.sum() == 2

    def test_unit_energy(self, cbs):
        energy = np.sum(np.abs(cbs.codewords) ** 2, axis=-1)
        np.testing.assert_allclose(energy, 1.0, atol=1e-12)

    def test_codewords_distinct_per_layer(self, cbs):
        for j in range(cbs.J):
            for a, b in itertools.combinations(range(cbs.M), 2):
                assert np.linalg.norm(cbs.codewords[j, a] - cbs.codewords[j, b]) > 1e-6

    def test_layers_rotated(self, cbs):
        # same mother constellation rotated by j*pi/(2J) on each layer's support
        base = cbs.codewords[0][:, cbs.mapping.support(0)]
        for j in range(1, cbs.J):
            layer = cbs.codewords[j][:, cbs.mapping.support(j)]
            np.testing.assert_allclose(layer, base * np.exp(1j * j * np.pi / 12), atol=1e-15)

    @pytest.mark.parametrize("M", [3, 6, 0])
    def test_rejects_non_power_of_two(self, M):
        with pytest.raises(ValueError):
            build_codebook_set(build_mapping_matrix(4, 6, 2), M)

    def test_m8(self):
        c = build_codebook_set(build_mapping_matrix(4, 6, 2), 8)
        assert c.codewords.shape == (6, 8, 4)
        np.testing.assert_allclose(np.sum(np.abs(c.codewords) ** 2, axis=-1), 1.0, atol=1e-12)

    def test_json_round_trip(self, cbs, tmp_path):
        cbs.save(tmp_path / "cb.json")
        back = ScmaCodebookSet.load(tmp_path / "cb.json")
        np.testing.assert_array_equal(back.codewords, cbs.codewords)
        np.testing.assert_array_equal(back.mapping.entries, cbs.mapping.entries)
        doc = json.loads((tmp_path / "cb.json").read_text())
        assert set(doc) == {"K_d", "J", "N_m", "M", "codewords"}
        assert np.asarray(doc["codewords"]).shape == (6, 4, 4, 2)


class TestEncodeBlock:
    def test_index_mapping(self, cbs):
        np.testing.assert_array_equal(encode_block(cbs, 0, [0, 0]), cbs.codewords[0, 0])
        np.testing.assert_array_equal(encode_block(cbs, 5, [1, 1]), cbs.codewords[5, 3])
        np.testing.assert_array_equal(encode_block(cbs, 2, [1, 0]), cbs.codewords[2, 2])

    def test_exhaustive_round_trip(self, cbs):
        for j in range(cbs.J):
            for m in range(cbs.M):
                bits = [(m >> 1) & 1, m & 1]
                cw = encode_block(cbs, j, bits)
                np.testing.assert_array_equal(cw, cbs.codewords[j, m])
                np.testing.assert_array_equal(np.flatnonzero(cw), cbs.mapping.support(j))

    def test_out_of_range_layer(self, cbs):
        with pytest.raises(IndexError):
            encode_block(cbs, 6, [0, 1])
        with pytest.raises(IndexError):
            encode_block(cbs, -1, [0, 1])

    @pytest.mark.parametrize("bits", [[0], [0, 1, 1], [2, 0]])
    def test_bad_block(self, cbs, bits):
        with pytest.raises(ValueError):
            encode_block(cbs, 0, bits)

    def test_bit_helpers_inverse(self):
        idx = np.arange(16)
        np.testing.assert_array_equal(bits_to_index(index_to_bits(idx, 4)), idx)
        np.testing.assert_array_equal(index_to_bits(6, 3), [1, 1, 0])
