import numpy as np
import pytest

from instmine import encoder, membank, synthdata
from instmine.errors import UnknownId
from instmine.numerics import normalize_rows


def setup_banks(seed=0):
    ds = synthdata.generate_dataset(synthdata.DatasetConfig(
        num_classes=2, instances_per_class=4, input_dim=8, seed=seed))
    state = encoder.init_encoder(encoder.EncoderConfig(8, 4, 0.5, seed))
    clean, aug = membank.init_banks(state, ds, seed=seed)
    return ds, state, clean, aug


class TestInit:
    def test_clean_bank_is_encoded_clean_views(self):
        ds, state, clean, _ = setup_banks()
        for rec in ds.records:
            np.testing.assert_allclose(
                clean.features[rec.id], encoder.encode(state, rec.base),
                atol=1e-12)

    def test_all_unit_norm(self):
        _, _, clean, aug = setup_banks()
        for bank in (clean, aug):
            norms = np.linalg.norm(bank.features, axis=1)
            np.testing.assert_allclose(norms, 1.0, atol=1e-5)

    def test_seeded_aug_bank_reproducible(self):
        _, _, _, aug1 = setup_banks(seed=3)
        _, _, _, aug2 = setup_banks(seed=3)
        np.testing.assert_array_equal(aug1.features, aug2.features)

    def test_kinds(self):
        _, _, clean, aug = setup_banks()
        assert clean.kind == "clean" and aug.kind == "augmented"


class TestUpdateFetch:
    def test_read_your_write(self):
        _, _, clean, _ = setup_banks()
        rng = np.random.default_rng(1)
        new = normalize_rows(rng.normal(size=(2, 4)))
        membank.update_entries(clean, [3, 5], new, step=7)
        got = membank.fetch(clean, [3, 5])
        np.testing.assert_array_equal(got, new)
        assert clean.last_update_step[3] == 7
        assert clean.last_update_step[5] == 7

    def test_isolation(self):
        _, _, clean, _ = setup_banks()
        before = clean.features.copy()
        new = normalize_rows(np.random.default_rng(2).normal(size=(1, 4)))
        membank.update_entries(clean, [0], new, step=1)
        np.testing.assert_array_equal(clean.features[1:], before[1:])

    def test_last_writer_wins(self):
        _, _, clean, _ = setup_banks()
        rng = np.random.default_rng(3)
        two = normalize_rows(rng.normal(size=(2, 4)))
        membank.update_entries(clean, [4, 4], two, step=1)
        np.testing.assert_array_equal(clean.features[4], two[1])

    def test_fetch_returns_snapshots(self):
        _, _, clean, _ = setup_banks()
        snap = membank.fetch(clean, [0])
        orig = snap.copy()
        new = normalize_rows(np.random.default_rng(4).normal(size=(1, 4)))
        membank.update_entries(clean, [0], new, step=2)
        np.testing.assert_array_equal(snap, orig)

    def test_fetch_empty(self):
        _, _, clean, _ = setup_banks()
        out = membank.fetch(clean, [])
        assert out.shape == (0, 4)

    def test_unknown_ids(self):
        _, _, clean, _ = setup_banks()
        with pytest.raises(UnknownId):
            membank.fetch(clean, [99])
        with pytest.raises(UnknownId):
            membank.update_entries(clean, [-1], np.ones((1, 4)), step=0)
