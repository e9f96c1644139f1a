"""
Analytic gradients of the factorization objective.

Two places deliberately differ from the formulas as commonly printed:

* the fit term of dL/du_i is 2(u_i.v_j - R_ij)v_j (the printed classic form
  2(R_ij - u_i.v_j)v_j points uphill);
* dL/dgamma_j is sign(v_j.gamma_j)v_j, mirroring dL/dbeta_i. The printed
  form sign(u_i.v_j)v_j does not agree with finite differences of the loss.

At kinks the subgradient convention is sign(0) = 0 and grad ||x|| = 0 at x = 0.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from errors import ContractViolation
from factorization import FactorModel, RatingsDataset, check_compatible, row_dots
from models import Framework

Rows = Union[slice, Sequence[int], np.ndarray]


@dataclass(eq=False)
class GradientSet:
    dU: np.ndarray
    dV: np.ndarray
    dB: Optional[np.ndarray] = None
    dG: Optional[np.ndarray] = None


def sign(x: float) -> int:
    return int(x > 0) - int(x < 0)


def _norm_gradient(X: np.ndarray, coef: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(X, axis=1)
    scale = np.divide(coef, norms, out=np.zeros_like(norms), where=norms > 0)
    return scale[:, None] * X


def _signed(X: np.ndarray, R: np.ndarray, direction: np.ndarray) -> np.ndarray:
    # sign(x_r . r_r) * direction_r, row by row
    return np.sign(row_dots(X, R))[:, None] * direction


def user_penalty_gradient(model: FactorModel, rows: Rows = slice(None)) -> np.ndarray:
    """Penalty part of dL/du_i for the selected user rows"""
    fw = model.framework
    U = model.U[rows]
    if fw.tag == Framework.NONE:
        return np.zeros_like(U)
    if fw.tag == Framework.GLOBAL_SCALAR:
        return _norm_gradient(U, np.full(U.shape[0], fw.beta))
    if fw.tag == Framework.PER_VECTOR_SCALAR:
        return _norm_gradient(U, fw.beta_i[rows])
    B = model.B[rows]
    return _signed(U, B, B)


def item_penalty_gradient(model: FactorModel, rows: Rows = slice(None)) -> np.ndarray:
    fw = model.framework
    V = model.V[rows]
    if fw.tag == Framework.NONE:
        return np.zeros_like(V)
    if fw.tag == Framework.GLOBAL_SCALAR:
        return _norm_gradient(V, np.full(V.shape[0], fw.item_beta))
    if fw.tag == Framework.PER_VECTOR_SCALAR:
        return _norm_gradient(V, fw.gamma_j[rows])
    G = model.G[rows]
    return _signed(V, G, G)


def _require_vector_dot(model: FactorModel, what: str) -> None:
    if model.framework.tag != Framework.VECTOR_DOT:
        raise ContractViolation(
            f"{what} is only defined for VECTOR_DOT, not {model.framework.tag.value}"
        )


def _check_user(model: FactorModel, i: int) -> None:
    if not 0 <= i < model.num_users:
        raise ContractViolation(f"user index {i} out of range [0, {model.num_users})")


def _check_item(model: FactorModel, j: int) -> None:
    if not 0 <= j < model.num_items:
        raise ContractViolation(f"item index {j} out of range [0, {model.num_items})")


def grad_u_penalty(model: FactorModel, i: int) -> np.ndarray:
    _check_user(model, i)
    return user_penalty_gradient(model, [i])[0]


def grad_v_penalty(model: FactorModel, j: int) -> np.ndarray:
    _check_item(model, j)
    return item_penalty_gradient(model, [j])[0]


def grad_beta(model: FactorModel, i: int) -> np.ndarray:
    """dL/dbeta_i = sign(u_i . beta_i) u_i"""
    _require_vector_dot(model, "grad_beta")
    _check_user(model, i)
    return sign(model.U[i] @ model.B[i]) * model.U[i]


def grad_gamma(model: FactorModel, j: int) -> np.ndarray:
    """dL/dgamma_j = sign(v_j . gamma_j) v_j"""
    _require_vector_dot(model, "grad_gamma")
    _check_item(model, j)
    return sign(model.V[j] @ model.G[j]) * model.V[j]


def reg_vector_gradients(model: FactorModel):
    """(dB, dG) for every row at once; VECTOR_DOT only"""
    _require_vector_dot(model, "reg_vector_gradients")
    return _signed(model.U, model.B, model.U), _signed(model.V, model.G, model.V)


def full_gradient(model: FactorModel, data: RatingsDataset) -> GradientSet:
    """Gradient of total_loss with respect to every parameter block"""
    check_compatible(model, data)
    U, V = model.U, model.V
    err2 = 2.0 * (row_dots(U[data.users], V[data.items]) - data.ratings)

    dU = np.zeros_like(U)
    dV = np.zeros_like(V)
    # np.add.at accumulates in observation order, so results do not depend on batching
    np.add.at(dU, data.users, err2[:, None] * V[data.items])
    np.add.at(dV, data.items, err2[:, None] * U[data.users])
    dU += user_penalty_gradient(model)
    dV += item_penalty_gradient(model)

    if model.framework.tag != Framework.VECTOR_DOT:
        return GradientSet(dU=dU, dV=dV)
    dB, dG = reg_vector_gradients(model)
    return GradientSet(dU=dU, dV=dV, dB=dB, dG=dG)
