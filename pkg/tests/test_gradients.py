import numpy as np
import pytest

from errors import ContractViolation
from factorization import FactorModel, RegularizationFramework, total_loss
from gradients import (
    full_gradient,
    grad_beta,
    grad_gamma,
    grad_u_penalty,
    grad_v_penalty,
    sign,
)
from models import Framework
from tests.helpers import make_dataset, make_model, random_instance

STEP = 1e-6
KINK = 1e-3


def _dot_model(U, V, B, G):
    return FactorModel(U=np.asarray(U, float), V=np.asarray(V, float),
                       framework=RegularizationFramework.vector_dot(),
                       B=np.asarray(B, float), G=np.asarray(G, float))


def _away_from_kinks(model):
    if np.any(np.linalg.norm(model.U, axis=1) <= KINK) or np.any(np.linalg.norm(model.V, axis=1) <= KINK):
        return False
    if model.B is not None:
        if np.any(np.abs(np.einsum("ik,ik->i", model.U, model.B)) <= KINK):
            return False
        if np.any(np.abs(np.einsum("ik,ik->i", model.V, model.G)) <= KINK):
            return False
    return True


def _central_difference(model, data, array, index):
    original = array[index]
    array[index] = original + STEP
    upper = total_loss(model, data).total
    array[index] = original - STEP
    lower = total_loss(model, data).total
    array[index] = original
    return (upper - lower) / (2 * STEP)


class TestSign:
    @pytest.mark.parametrize("value,expected", [(0.0, 0), (-3.7, -1), (1e-300, 1), (2.0, 1)])
    def test_values(self, value, expected):
        assert sign(value) == expected


class TestPenaltyGradients:
    def test_vector_dot_orthogonal_user(self):
        model = _dot_model([[1, -1]], [[1, 0]], [[1, 1]], [[1, 1]])
        np.testing.assert_array_equal(grad_u_penalty(model, 0), [0.0, 0.0])

    def test_global_scalar_hand_value(self):
        model = make_model([[3.0, 4.0]], [[1.0, 0.0]], RegularizationFramework.global_scalar(2.0))
        np.testing.assert_allclose(grad_u_penalty(model, 0), [1.2, 1.6])

    def test_zero_norm_gives_zero_vector(self):
        model = make_model([[0.0, 0.0]], [[0.0, 0.0]], RegularizationFramework.global_scalar(2.0))
        np.testing.assert_array_equal(grad_u_penalty(model, 0), [0.0, 0.0])
        np.testing.assert_array_equal(grad_v_penalty(model, 0), [0.0, 0.0])

    def test_none_framework_item(self):
        model = make_model([[1.0, 2.0]], [[3.0, 4.0], [5.0, 6.0]])
        np.testing.assert_array_equal(grad_v_penalty(model, 1), [0.0, 0.0])

    def test_vector_dot_item_hand_value(self):
        model = _dot_model([[1, 0]], [[2, 0]], [[1, 0]], [[1, 1]])
        np.testing.assert_array_equal(grad_v_penalty(model, 0), [1.0, 1.0])

    def test_sign_flip_antisymmetry(self):
        model, _ = random_instance(8, Framework.VECTOR_DOT)
        before = grad_u_penalty(model, 0)
        model.B[0] *= -1.0
        np.testing.assert_array_equal(grad_u_penalty(model, 0), -before)


class TestRegularizationVectorGradients:
    def test_grad_beta_orthogonal(self):
        model = _dot_model([[1, -1]], [[1, 0]], [[1, 1]], [[1, 1]])
        np.testing.assert_array_equal(grad_beta(model, 0), [0.0, 0.0])

    def test_grad_beta_hand_value(self):
        model = _dot_model([[1, 2]], [[1, 0]], [[1, 0]], [[1, 1]])
        np.testing.assert_array_equal(grad_beta(model, 0), [1.0, 2.0])

    def test_grad_gamma_zero_vector(self):
        model = _dot_model([[1, 2]], [[0, 0]], [[1, 0]], [[1, 1]])
        np.testing.assert_array_equal(grad_gamma(model, 0), [0.0, 0.0])

    def test_grad_gamma_hand_value(self):
        model = _dot_model([[1, 2]], [[3, 1]], [[1, 0]], [[-1, 0]])
        np.testing.assert_array_equal(grad_gamma(model, 0), [-3.0, -1.0])

    @pytest.mark.parametrize("tag", [Framework.NONE, Framework.GLOBAL_SCALAR, Framework.PER_VECTOR_SCALAR])
    def test_wrong_framework(self, tag):
        model, _ = random_instance(1, tag)
        with pytest.raises(ContractViolation):
            grad_beta(model, 0)
        with pytest.raises(ContractViolation):
            grad_gamma(model, 0)

    def test_grad_beta_magnitude(self):
        for seed in range(20):
            model, _ = random_instance(seed, Framework.VECTOR_DOT)
            for i in range(model.num_users):
                g = grad_beta(model, i)
                if model.U[i] @ model.B[i] == 0:
                    np.testing.assert_array_equal(g, 0.0)
                else:
                    assert np.linalg.norm(g) == pytest.approx(np.linalg.norm(model.U[i]))


class TestFullGradient:
    def test_perfect_fit_is_stationary(self):
        U = np.array([[1.0, 0.5], [0.0, 1.0]])
        V = np.array([[2.0, 1.0], [1.0, 3.0]])
        R = U @ V.T
        data = make_dataset(2, 2, [(i, j, R[i, j]) for i in range(2) for j in range(2)], r_min=0.0, r_max=10.0)
        grads = full_gradient(make_model(U, V), data)
        np.testing.assert_array_equal(grads.dU, 0.0)
        np.testing.assert_array_equal(grads.dV, 0.0)
        assert grads.dB is None and grads.dG is None

    def test_single_observation(self):
        data = make_dataset(1, 1, [(0, 0, 2.0)])
        grads = full_gradient(make_model([[1.0, 0.0]], [[1.0, 0.0]]), data)
        np.testing.assert_array_equal(grads.dU, [[-2.0, 0.0]])
        np.testing.assert_array_equal(grads.dV, [[-2.0, 0.0]])

    def test_dimension_mismatch(self):
        data = make_dataset(2, 1, [(0, 0, 2.0)])
        with pytest.raises(ContractViolation):
            full_gradient(make_model([[1.0]], [[1.0]]), data)

    @pytest.mark.parametrize("tag", list(Framework))
    def test_matches_finite_differences(self, tag):
        checked = 0
        seed = 0
        while checked < 100:
            model, data = random_instance(10_000 + seed, tag)
            seed += 1
            if not _away_from_kinks(model):
                continue
            grads = full_gradient(model, data)
            pairs = [(model.U, grads.dU), (model.V, grads.dV)]
            if tag == Framework.VECTOR_DOT:
                pairs += [(model.B, grads.dB), (model.G, grads.dG)]
            for array, analytic in pairs:
                for index in np.ndindex(array.shape):
                    numeric = _central_difference(model, data, array, index)
                    tolerance = max(1e-4 * abs(numeric), 1e-7)
                    assert abs(analytic[index] - numeric) <= tolerance, (tag, seed, index)
            checked += 1
