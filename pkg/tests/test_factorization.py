import numpy as np
import pytest
from pydantic import ValidationError

from errors import ContractViolation
from factorization import FactorModel, RatingsDataset, RegularizationFramework, penalty, predict, total_loss
from models import Framework, LossBreakdown
from tests.helpers import brute_force_loss, make_dataset, make_model, random_instance


class TestPredict:
    def test_orthogonal_vectors(self):
        model = make_model([[1.0, 0.0]], [[0.0, 1.0]])
        assert predict(model, 0, 0) == 0.0

    def test_hand_arithmetic(self):
        model = make_model([[1.0, 2.0]], [[3.0, 4.0]])
        assert predict(model, 0, 0) == 11.0

    def test_matches_multiply_accumulate(self):
        rng = np.random.default_rng(5)
        model = make_model(rng.normal(size=(4, 5)), rng.normal(size=(3, 5)))
        for i in range(4):
            for j in range(3):
                expected = 0.0
                for f in range(5):
                    expected += model.U[i, f] * model.V[j, f]
                assert predict(model, i, j) == pytest.approx(expected, rel=1e-12)

    def test_out_of_range(self):
        model = make_model([[1.0]], [[1.0]])
        with pytest.raises(ContractViolation):
            predict(model, 1, 0)
        with pytest.raises(ContractViolation):
            predict(model, 0, -1)


class TestPenalty:
    def test_vector_dot_orthogonal(self):
        model = FactorModel(
            U=np.array([[1.0, -1.0]]),
            V=np.zeros((0, 2)),
            framework=RegularizationFramework.vector_dot(),
            B=np.array([[1.0, 1.0]]),
            G=np.zeros((0, 2)),
        )
        assert penalty(model) == 0.0

    def test_zero_beta(self):
        rng = np.random.default_rng(0)
        model = make_model(rng.normal(size=(3, 2)), rng.normal(size=(4, 2)),
                           RegularizationFramework.global_scalar(0.0))
        assert penalty(model) == 0.0

    def test_vector_dot_matches_row_accumulation(self):
        rng = np.random.default_rng(11)
        U, V = rng.normal(size=(3, 4)), rng.normal(size=(2, 4))
        B, G = rng.normal(size=(3, 4)), rng.normal(size=(2, 4))
        model = FactorModel(U=U, V=V, framework=RegularizationFramework.vector_dot(), B=B, G=G)
        expected = sum(abs(sum(B[i] * U[i])) for i in range(3))
        expected += sum(abs(sum(G[j] * V[j])) for j in range(2))
        assert penalty(model) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("tag", list(Framework))
    def test_nonnegative(self, tag):
        for seed in range(20):
            model, _ = random_instance(seed, tag)
            assert penalty(model) >= 0.0

    def test_negating_beta_row_keeps_penalty(self):
        model, _ = random_instance(3, Framework.VECTOR_DOT)
        before = penalty(model)
        model.B[0] *= -1.0
        assert penalty(model) == pytest.approx(before, rel=1e-15)

    def test_global_scalar_is_homogeneous(self):
        rng = np.random.default_rng(2)
        U, V = rng.normal(size=(4, 3)), rng.normal(size=(5, 3))
        single = penalty(make_model(U, V, RegularizationFramework.global_scalar(0.3)))
        double = penalty(make_model(U, V, RegularizationFramework.global_scalar(0.6)))
        assert double == pytest.approx(2.0 * single, rel=1e-12)

    def test_item_side_constant(self):
        model = make_model([[3.0, 4.0]], [[0.0, 2.0]], RegularizationFramework.global_scalar(1.0, beta_v=0.5))
        assert penalty(model) == pytest.approx(5.0 + 1.0)


class TestTotalLoss:
    def test_perfect_fit(self):
        U = np.array([[1.0, 2.0], [0.5, 1.0]])
        V = np.array([[1.0, 1.0], [2.0, 0.0]])
        R = U @ V.T
        data = make_dataset(2, 2, [(i, j, R[i, j]) for i in range(2) for j in range(2)])
        loss = total_loss(make_model(U, V), data)
        assert (loss.fit, loss.penalty, loss.total) == (0.0, 0.0, 0.0)

    def test_single_observation(self):
        data = make_dataset(1, 1, [(0, 0, 2.0)])
        loss = total_loss(make_model([[1.0, 0.0]], [[1.0, 0.0]]), data)
        assert loss.fit == 1.0
        assert loss.total == 1.0

    @pytest.mark.parametrize("tag", list(Framework))
    def test_matches_double_loop(self, tag):
        for seed in range(10):
            model, data = random_instance(seed, tag)
            loss = total_loss(model, data)
            assert loss.total == pytest.approx(brute_force_loss(model, data), rel=1e-10)
            assert loss.total == loss.fit + loss.penalty

    def test_dimension_mismatch(self):
        data = make_dataset(2, 1, [(1, 0, 3.0)])
        with pytest.raises(ContractViolation):
            total_loss(make_model([[1.0]], [[1.0]]), data)


class TestRatingsDataset:
    def test_adjacency(self):
        data = make_dataset(2, 3, [(1, 2, 4.0), (0, 0, 1.0), (1, 0, 2.0)])
        assert list(data.user_observations(1)) == [0, 2]
        assert list(data.item_observations(0)) == [1, 2]
        assert list(data.user_counts) == [1, 2]
        assert list(data.item_counts) == [2, 0, 1]

    def test_rejects_duplicates(self):
        with pytest.raises(ContractViolation):
            make_dataset(1, 1, [(0, 0, 1.0), (0, 0, 2.0)])

    def test_rejects_out_of_bounds_rating(self):
        with pytest.raises(ContractViolation):
            make_dataset(1, 1, [(0, 0, 6.0)])

    def test_rejects_index_out_of_range(self):
        with pytest.raises(ContractViolation):
            make_dataset(1, 1, [(1, 0, 3.0)])

    def test_subset_keeps_dimensions(self):
        data = make_dataset(3, 3, [(0, 0, 1.0), (1, 1, 2.0), (2, 2, 3.0)])
        part = data.subset(np.array([2]))
        assert (part.num_users, part.num_items, part.num_observations) == (3, 3, 1)
        assert part.user_ids == data.user_ids


class TestModelValidation:
    def test_vector_dot_needs_vectors(self):
        with pytest.raises(ContractViolation):
            FactorModel(U=np.ones((1, 2)), V=np.ones((1, 2)), framework=RegularizationFramework.vector_dot())

    def test_vectors_only_for_vector_dot(self):
        with pytest.raises(ContractViolation):
            FactorModel(U=np.ones((1, 2)), V=np.ones((1, 2)), B=np.ones((1, 2)), G=np.ones((1, 2)))

    def test_per_vector_lengths(self):
        fw = RegularizationFramework.per_vector_scalar([0.1, 0.2], [0.1])
        with pytest.raises(ContractViolation):
            FactorModel(U=np.ones((1, 2)), V=np.ones((1, 2)), framework=fw)

    def test_negative_coefficient(self):
        with pytest.raises(ContractViolation):
            RegularizationFramework.global_scalar(-0.1)

    def test_loss_breakdown_decomposition(self):
        with pytest.raises(ValidationError):
            LossBreakdown(fit=1.0, penalty=1.0, total=3.0)
        assert LossBreakdown.from_terms(1.5, 0.25).total == 1.75
