import numpy as np
import pytest

from harq_scma import codebook as cbmod
from harq_scma.codebook import (
    CodebookError,
    ScmaCodebook,
    bits_to_index,
    default_codebook,
    dump_codebook,
    index_to_bits,
    load_codebook,
    map_bit_stream,
    map_bits,
    parse_codebook,
)


def test_default_asset_dimensions_and_degrees(cb6):
    assert (cb6.J, cb6.K, cb6.M) == (6, 4, 4)
    assert cb6.bits_per_symbol == 2
    assert cb6.d_v == 2
    assert cb6.d_f == 3


def test_default_asset_energy_normalization(cb6):
    energy = np.mean(np.sum(np.abs(cb6.codewords) ** 2, axis=2), axis=1)
    assert np.max(np.abs(energy - 1.0)) <= 1e-9


def test_indicator_weights_and_round_trip(cb6):
    ind = cb6.indicator
    occ = ind.occupancy
    assert occ.shape == (4, 6)
    assert (occ.sum(axis=1) == 3).all()   # d_f per resource
    assert (occ.sum(axis=0) == 2).all()   # d_v per user
    for k, users in enumerate(ind.neighbors_of_resource):
        assert list(users) == list(np.flatnonzero(occ[k]))
    for j, res in enumerate(ind.neighbors_of_user):
        assert list(res) == list(np.flatnonzero(occ[:, j]))
    # occupancy derived from codewords reproduces the codeword supports
    assert (occ.T == (cb6.codewords[:, 0, :] != 0)).all()


def test_bit_partition_halves(cb6):
    # every bit position splits each user codebook into two halves of M/2
    idx = np.arange(cb6.M)
    for l in range(cb6.bits_per_symbol):
        ones = ((idx >> (cb6.bits_per_symbol - 1 - l)) & 1) == 1
        assert ones.sum() == cb6.M // 2


def test_map_bits_labeling(cb6):
    assert np.allclose(map_bits(cb6, 0, (0, 0)), cb6.codewords[0, 0])
    assert np.allclose(map_bits(cb6, 0, (1, 0)), cb6.codewords[0, 2])
    assert np.allclose(map_bits(cb6, 3, (0, 1)), cb6.codewords[3, 1])
    for j in range(cb6.J):
        for idx in range(cb6.M):
            bits = index_to_bits(idx, cb6.bits_per_symbol)
            assert bits_to_index(bits) == idx
            assert np.array_equal(map_bits(cb6, j, bits), cb6.codewords[j, idx])


def test_map_bits_rejects_bad_input(cb6):
    with pytest.raises(ValueError):
        map_bits(cb6, 0, (0, 1, 1))
    with pytest.raises(IndexError):
        map_bits(cb6, 6, (0, 1))


def test_map_bit_stream(cb6):
    bits = np.array([0, 0, 1, 0, 1, 1, 0, 1])
    assert map_bit_stream(cb6, 0, bits).tolist() == [0, 2, 3, 1]


def test_document_round_trip(cb6, tmp_path):
    path = tmp_path / "cb.cb"
    cbmod.save_codebook(cb6, path)
    again = load_codebook(path)
    assert np.array_equal(again.codewords, cb6.codewords)


def test_parse_is_whitespace_tolerant(cb_tree):
    text = dump_codebook(cb_tree)
    messy = "\n\n" + text.replace(" ", "   ").replace("\n", "\n\n")
    again = parse_codebook(messy)
    assert np.array_equal(again.codewords, cb_tree.codewords)


def test_tree_codebook_is_valid(cb_tree):
    assert (cb_tree.J, cb_tree.K, cb_tree.M) == (2, 2, 2)
    assert cb_tree.d_v == 1 and cb_tree.d_f == 1


def _doc(J, K, M, rows):
    return "scma-codebook v1\n" + f"{J} {K} {M}\n" + "\n".join(rows) + "\n"


def test_parse_rejects_bad_header():
    with pytest.raises(CodebookError, match="header"):
        parse_codebook("scma-codebook v2\n1 2 2\n")


def test_parse_rejects_wrong_line_count():
    doc = _doc(2, 2, 2, ["1:0 0:0"] * 3)
    with pytest.raises(CodebookError, match="lines"):
        parse_codebook(doc)


def test_parse_rejects_wrong_entry_count():
    doc = _doc(1, 2, 2, ["1:0", "0:0 1:0"])
    with pytest.raises(CodebookError, match="entries"):
        parse_codebook(doc)


def test_support_inconsistency_detected():
    # second codeword of the user moved to the other resource
    doc = _doc(1, 2, 2, ["1:0 0:0", "0:0 1:0"])
    with pytest.raises(CodebookError, match="support"):
        parse_codebook(doc)


def test_non_power_of_two_m_rejected():
    rows = ["1:0 0:0", "-1:0 0:0", "0.5:0.5 0:0"]
    doc = _doc(1, 2, 3, rows)
    with pytest.raises(CodebookError, match="power of two"):
        parse_codebook(doc)


def test_energy_violation_rejected():
    doc = _doc(2, 2, 2, ["2:0 0:0", "-2:0 0:0", "0:0 2:0", "0:0 -2:0"])
    with pytest.raises(CodebookError, match="energy"):
        parse_codebook(doc)


def test_dense_codeword_rejected():
    # d_v must stay below K
    doc = _doc(1, 2, 2, ["0.7071067811865476:0 0.7071067811865476:0",
                         "-0.7071067811865476:0 -0.7071067811865476:0"])
    with pytest.raises(CodebookError, match="d_v"):
        parse_codebook(doc)


def test_irregular_row_weight_rejected():
    # two users piled on resource 0, none on resource 1 beyond user 1's slot
    cw = np.zeros((2, 2, 3), dtype=complex)
    cw[0, 0, 0], cw[0, 1, 0] = 1, -1
    cw[1, 0, 0], cw[1, 1, 0] = 1, -1
    with pytest.raises(CodebookError, match="per-resource"):
        ScmaCodebook(cw)


def test_mean_resource_energy(cb6):
    energy = cb6.mean_resource_energy()
    occ = cb6.indicator.occupancy
    assert energy.shape == (4, 6)
    assert np.allclose(energy[occ], 0.5)   # 1/d_v under the unit-energy asset
    assert np.all(energy[~occ] == 0)


def test_assets_env_override(tmp_path, monkeypatch, cb_tree):
    cbmod.save_codebook(cb_tree, tmp_path / cbmod.DEFAULT_CODEBOOK_FILE)
    monkeypatch.setenv("HARQ_SCMA_ASSETS", str(tmp_path))
    got = default_codebook()
    assert got.J == 2
