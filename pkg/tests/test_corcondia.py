from __future__ import annotations

import numpy as np
import pytest

from courtfactors.corcondia import corcondia_fast, corcondia_reference
from courtfactors.decompose import CpModel, FitConfig, fit_cp_kl, normalize_model, rescaled
from courtfactors.errors import UsageError
from courtfactors.tensor import SparseCountTensor

from _oracles import dense_from_factors
from conftest import make_tensor, random_factors


def model_tensor(rng, dims, rank):
    factors = random_factors(rng, dims, rank)
    weights = rng.uniform(1.0, 4.0, size=rank)
    dense = dense_from_factors(*factors, weights)
    subs = np.argwhere(dense > 0)
    vals = dense[subs[:, 0], subs[:, 1], subs[:, 2]]
    tensor = SparseCountTensor.from_arrays(dims, subs, vals)
    return tensor, normalize_model(CpModel(rank, factors, weights))


class TestReference:
    def test_exact_model_scores_100(self, rng):
        tensor, model = model_tensor(rng, (5, 4, 3), 2)
        result = corcondia_reference(tensor, model)
        assert result.score == pytest.approx(100.0, abs=1e-6)
        assert result.rank_used == 2

    def test_unrelated_model_scores_low(self, rng):
        tensor = make_tensor(rng, (6, 5, 4), density=0.5)
        model = normalize_model(CpModel(2, random_factors(rng, (6, 5, 4), 2), np.ones(2)))
        assert corcondia_reference(tensor, model).score < 50.0

    def test_size_guard(self, rng):
        tensor = make_tensor(rng, (30, 30, 30), density=0.01)
        model = normalize_model(CpModel(8, random_factors(rng, (30, 30, 30), 8), np.ones(8)))
        with pytest.raises(UsageError, match="corcondia_fast"):
            corcondia_reference(tensor, model)


class TestFast:
    def test_agrees_with_reference(self, rng):
        for trial in range(25):
            gen = np.random.default_rng(3000 + trial)
            dims = tuple(gen.integers(2, 9, size=3))
            rank = int(gen.integers(1, 5))
            tensor = make_tensor(gen, dims, density=0.5)
            model = normalize_model(CpModel(rank, random_factors(gen, dims, rank), gen.uniform(0.5, 2, rank)))
            ref = corcondia_reference(tensor, model)
            fast = corcondia_fast(tensor, model)
            assert abs(ref.score - fast.score) <= 1e-6

    def test_exact_model_scores_100(self, rng):
        tensor, model = model_tensor(rng, (6, 5, 4), 3)
        assert corcondia_fast(tensor, model).score == pytest.approx(100.0, abs=1e-6)

    def test_rank_degeneracy_guard(self, rng):
        tensor = make_tensor(rng, (2, 2, 2), density=0.9)
        model = normalize_model(CpModel(5, random_factors(rng, (2, 2, 2), 5), np.ones(5)))
        with pytest.raises(UsageError):
            corcondia_fast(tensor, model)


class TestProperties:
    def test_rank_one_scores_exactly_100(self, rng):
        # least-squares rescaling makes the 1x1x1 core solve exactly one
        for trial in range(5):
            gen = np.random.default_rng(400 + trial)
            tensor = make_tensor(gen, (5, 4, 3), density=0.6)
            model = normalize_model(CpModel(1, random_factors(gen, (5, 4, 3), 1), np.array([2.0])))
            assert corcondia_reference(tensor, model).score == pytest.approx(100.0, abs=1e-9)
            assert corcondia_fast(tensor, model).score == pytest.approx(100.0, abs=1e-9)

    def test_component_permutation_invariance(self, rng):
        tensor = make_tensor(rng, (5, 5, 4), density=0.5)
        model = normalize_model(CpModel(3, random_factors(rng, (5, 5, 4), 3), rng.uniform(1, 3, 3)))
        base = corcondia_fast(tensor, model)
        perm = [2, 0, 1]
        permuted = corcondia_fast(tensor, model.permuted(perm))
        assert base.score == pytest.approx(permuted.score, abs=1e-10)
        np.testing.assert_allclose(
            permuted.core.array,
            base.core.array[np.ix_(perm, perm, perm)],
            atol=1e-8,
        )

    def test_data_and_weight_rescale_invariance(self, rng):
        tensor = make_tensor(rng, (5, 4, 3), density=0.5)
        model = normalize_model(CpModel(2, random_factors(rng, (5, 4, 3), 2), np.ones(2)))
        scaled_tensor = SparseCountTensor(tensor.dims, tensor.subs, tensor.vals * 3.0)
        scaled_model = rescaled(model, 3.0)
        s1 = corcondia_fast(tensor, model).score
        s2 = corcondia_fast(scaled_tensor, scaled_model).score
        assert s1 == pytest.approx(s2, abs=1e-9)

    def test_fitted_rank_sweep_drops_past_true_rank(self):
        # block-planted rank 4: quality holds through F=4, collapses at F=6
        from conftest import block_factors

        rng = np.random.default_rng(9)
        dims = (12, 10, 8)
        factors = block_factors(rng, dims, 4)
        weights = rng.uniform(5, 10, size=4)
        dense = dense_from_factors(*factors, weights)
        subs = np.argwhere(dense > 1e-9)
        tensor = SparseCountTensor.from_arrays(dims, subs, dense[subs[:, 0], subs[:, 1], subs[:, 2]])
        scores = {}
        for rank in (2, 3, 4, 6):
            model = fit_cp_kl(tensor, rank, FitConfig(max_outer_iters=300, rel_tol=1e-10, seed=2))
            scores[rank] = corcondia_fast(tensor, model).score
        assert all(scores[r] >= 90.0 for r in (2, 3, 4))
        assert scores[6] < 50.0
