import numpy as np
import pytest

from instmine import kernels
from instmine.kernels import numba_impl, numpy_impl
from instmine.numerics import normalize_rows

BACKENDS = [numpy_impl, numba_impl]


def random_unit(rng, n, d):
    return normalize_rows(rng.normal(size=(n, d)))


class TestTopkSelect:
    @pytest.mark.parametrize("impl", BACKENDS)
    def test_matches_argsort_oracle(self, impl):
        rng = np.random.default_rng(0)
        feats = random_unit(rng, 30, 8)
        sims = feats @ feats.T
        np.fill_diagonal(sims, -np.inf)
        ids, top = impl.topk_select(sims, 7)
        for i in range(30):
            ranked = sorted(range(30), key=lambda j: (-sims[i, j], j))[:7]
            assert list(ids[i]) == ranked
            np.testing.assert_array_equal(top[i], sims[i, ranked])

    @pytest.mark.parametrize("impl", BACKENDS)
    def test_tie_break_ascending_column(self, impl):
        # Dyadic-rational ties: exact equality, so ordering is purely the rule.
        sims = np.array([[0.5, 0.75, 0.5, 0.75, 0.25]])
        ids, top = impl.topk_select(sims, 4)
        assert list(ids[0]) == [1, 3, 0, 2]
        np.testing.assert_array_equal(top[0], [0.75, 0.75, 0.5, 0.5])

    def test_backends_identical(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            n = int(rng.integers(2, 40))
            sims = rng.normal(size=(n, n))
            np.fill_diagonal(sims, -np.inf)
            p = int(rng.integers(1, n))
            a_ids, a_top = numpy_impl.topk_select(sims, p)
            b_ids, b_top = numba_impl.topk_select(sims, p)
            np.testing.assert_array_equal(a_ids, b_ids)
            np.testing.assert_array_equal(a_top, b_top)


def run_both(sims_q0, gram, ids, **kw):
    args = (kw["iterations"], kw["aggregation"], kw["selection"],
            kw["k"], kw["t_m"], kw["phi"], kw["anchor_only"])
    a = numpy_impl.mine_pool(sims_q0, gram, ids, *args)
    b = numba_impl.mine_pool(sims_q0, gram, ids, *args)
    return a, b


class TestMinePoolBackends:
    def test_randomized_equivalence(self):
        rng = np.random.default_rng(2)
        for trial in range(60):
            m = int(rng.integers(1, 25))
            q0 = int(rng.integers(1, 5))
            feats = random_unit(rng, m + q0, 6)
            cand, query = feats[:m], feats[m:]
            ids = rng.permutation(1000)[:m].astype(np.int64)
            kw = dict(
                iterations=int(rng.integers(0, 5)),
                aggregation=int(rng.integers(0, 2)),
                selection=int(rng.integers(0, 2)),
                k=int(rng.integers(1, 6)),
                t_m=float(rng.uniform(-0.2, 0.8)),
                phi=float(rng.uniform(0.0, 0.7)) if rng.random() < 0.5 else float("nan"),
                anchor_only=bool(rng.random() < 0.3),
            )
            (am, ao, an), (bm, bo, bn) = run_both(
                cand @ query.T, cand @ cand.T, ids, **kw)
            assert an == bn, (trial, kw)
            np.testing.assert_array_equal(am, bm)
            np.testing.assert_array_equal(ao[:an], bo[:bn])

    def test_tie_break_by_candidate_id(self):
        # Two candidates with the exact same score; the smaller id wins.
        sims_q0 = np.array([[0.5], [0.5], [0.25]])
        gram = np.eye(3)
        ids = np.array([40, 17, 99], dtype=np.int64)
        for impl in BACKENDS:
            mask, order, n = impl.mine_pool(
                sims_q0, gram, ids, 1, kernels.AGG_AVG, kernels.SEL_TOPK,
                1, 0.0, float("nan"), False)
            assert n == 1
            assert order[0] == 1  # index of id 17


class TestMinePoolSemantics:
    """Behavioral checks through the dispatching layer."""

    def test_zero_iterations_mines_nothing(self):
        rng = np.random.default_rng(3)
        feats = random_unit(rng, 10, 4)
        mask, order, n = kernels.mine_pool(
            feats[:1], feats[1:], np.arange(9), 0,
            kernels.AGG_AVG, kernels.SEL_TOPK, 3, 0.0, float("nan"), False)
        assert n == 0 and not mask.any()

    def test_topk_takes_k_per_iteration(self):
        rng = np.random.default_rng(4)
        feats = random_unit(rng, 21, 4)
        for iters in (1, 2, 3):
            mask, order, n = kernels.mine_pool(
                feats[:1], feats[1:], np.arange(20), iters,
                kernels.AGG_AVG, kernels.SEL_TOPK, 4, 0.0, float("nan"), False)
            assert n == 4 * iters
            assert mask.sum() == n

    def test_topk_exhausts_small_pool(self):
        rng = np.random.default_rng(5)
        feats = random_unit(rng, 4, 4)
        mask, order, n = kernels.mine_pool(
            feats[:1], feats[1:], np.arange(3), 2,
            kernels.AGG_AVG, kernels.SEL_TOPK, 10, 0.0, float("nan"), False)
        assert n == 3 and mask.all()

    def test_threshold_strictness(self):
        # Score exactly at t_m must not be selected.
        q = np.array([[1.0, 0.0]])
        cand = np.array([[0.6, 0.8], [0.8, 0.6]])
        mask, order, n = kernels.mine_pool(
            q, cand, np.array([0, 1]), 1,
            kernels.AGG_AVG, kernels.SEL_THRESHOLD, 1, 0.6, float("nan"), True)
        assert n == 1
        assert order[0] == 1

    def test_full_mode_grows_query(self):
        # Chain: anchor close to c0, c0 close to c1, anchor far from c1.
        # avg aggregation with topk k=1: c1 is reachable only via c0.
        s_aq = np.array([[0.9], [0.3]])
        gram = np.array([[1.0, 0.9], [0.9, 1.0]])
        ids = np.array([0, 1], dtype=np.int64)
        mask, order, n = numpy_impl.mine_pool(
            s_aq, gram, ids, 2, kernels.AGG_AVG, kernels.SEL_THRESHOLD,
            1, 0.55, float("nan"), False)
        assert n == 2
        assert list(order[:2]) == [0, 1]
        # anchor_only never reaches c1: its anchor similarity stays 0.3.
        mask, order, n = numpy_impl.mine_pool(
            s_aq, gram, ids, 2, kernels.AGG_AVG, kernels.SEL_THRESHOLD,
            1, 0.55, float("nan"), True)
        assert n == 1 and order[0] == 0

    def test_sparsify_zeroes_low_entries(self):
        # Candidate sims to the two query members: {0.3, 0.9}.
        sims_q0 = np.array([[0.3, 0.9]])
        gram = np.eye(1)
        # phi at 0.6 -> avg (0 + 0.9) / 2 = 0.45, below t_m 0.5: not mined.
        mask, _, n = numpy_impl.mine_pool(
            sims_q0, gram, np.array([5]), 1, kernels.AGG_AVG,
            kernels.SEL_THRESHOLD, 1, 0.5, 0.6, False)
        assert n == 0
        # Without phi the average is 0.6: mined.
        mask, _, n = numpy_impl.mine_pool(
            sims_q0, gram, np.array([5]), 1, kernels.AGG_AVG,
            kernels.SEL_THRESHOLD, 1, 0.5, float("nan"), False)
        assert n == 1

    def test_backend_env_override(self, monkeypatch):
        monkeypatch.setenv("INSTMINE_BACKEND", "numpy")
        assert kernels.resolve_backend() is numpy_impl
        monkeypatch.setenv("INSTMINE_BACKEND", "numba")
        assert kernels.resolve_backend() is numba_impl
        monkeypatch.setenv("INSTMINE_BACKEND", "cuda")
        with pytest.raises(ValueError):
            kernels.resolve_backend()

    def test_backend_name_known(self):
        assert kernels.backend_name() in ("numpy", "numba")
