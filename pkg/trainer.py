"""
Model initialization and gradient-descent training for every framework.

Two modes are supported: per-rating stochastic gradient descent (compiled
with numba, one pass over a seeded permutation per epoch) and full-batch
gradient descent on the exact objective gradient.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from numba import njit

from errors import ContractViolation, DivergenceError
from factorization import (
    FactorModel,
    RatingsDataset,
    RegularizationFramework,
    penalty,
    residuals,
    total_loss,
)
from gradients import full_gradient
from models import Framework, Hyperparams, LossBreakdown, TrainMode

logger = logging.getLogger(__name__)

_MODE_NONE = 0
_MODE_NORM = 1
_MODE_DOT = 2

# stream id mixed into the seed for the SGD visiting order
_SHUFFLE_STREAM = 0x5D1

EpochCallback = Callable[[int, FactorModel, LossBreakdown], None]


@dataclass(eq=False)
class TrainResult:
    model: FactorModel
    trace: List[LossBreakdown]
    epochs_run: int
    converged: bool
    reg_norm_trace: List[float] = field(default_factory=list)
    visit_counts: Optional[np.ndarray] = None  # SGD only: times each observation was visited


@njit(nogil=True)
def _sign(x):
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0


@njit(nogil=True)
def _sgd_epoch(order, users, items, ratings, U, V, B, G, user_coef, item_coef,
               inv_user_counts, inv_item_counts, mode, eta_feat, eta_reg, visits):
    k = U.shape[1]
    gu = np.empty(k)
    gv = np.empty(k)
    updates = 0
    for t in range(order.shape[0]):
        idx = order[t]
        i = users[idx]
        j = items[idx]
        pred = 0.0
        for f in range(k):
            pred += U[i, f] * V[j, f]
        err2 = 2.0 * (pred - ratings[idx])
        wu = inv_user_counts[i]
        wv = inv_item_counts[j]
        for f in range(k):
            gu[f] = err2 * V[j, f]
            gv[f] = err2 * U[i, f]

        if mode == _MODE_NORM:
            nu = 0.0
            nv = 0.0
            for f in range(k):
                nu += U[i, f] * U[i, f]
                nv += V[j, f] * V[j, f]
            nu = math.sqrt(nu)
            nv = math.sqrt(nv)
            if nu > 0.0:
                cu = user_coef[i] / nu * wu
                for f in range(k):
                    gu[f] += cu * U[i, f]
            if nv > 0.0:
                cv = item_coef[j] / nv * wv
                for f in range(k):
                    gv[f] += cv * V[j, f]
        elif mode == _MODE_DOT:
            su = 0.0
            sv = 0.0
            for f in range(k):
                su += U[i, f] * B[i, f]
                sv += V[j, f] * G[j, f]
            su = _sign(su)
            sv = _sign(sv)
            for f in range(k):
                gu[f] += su * B[i, f] * wu
                gv[f] += sv * G[j, f] * wv
            # regularization vectors step on the pre-update features
            for f in range(k):
                B[i, f] -= eta_reg * su * U[i, f] * wu
                G[j, f] -= eta_reg * sv * V[j, f] * wv

        for f in range(k):
            U[i, f] -= eta_feat * gu[f]
            V[j, f] -= eta_feat * gv[f]
        visits[idx] += 1
        updates += 1
    return updates


def init_model(h: Hyperparams, num_users: int, num_items: int,
               framework: RegularizationFramework) -> FactorModel:
    """Seeded uniform feature init; VECTOR_DOT vectors start at init_reg_value"""
    rng = np.random.default_rng(h.seed)
    scale = h.feature_init_scale
    U = rng.uniform(-scale, scale, size=(num_users, h.k))
    V = rng.uniform(-scale, scale, size=(num_items, h.k))
    B = G = None
    if framework.tag == Framework.VECTOR_DOT:
        B = np.full((num_users, h.k), h.init_reg_value)
        G = np.full((num_items, h.k), h.init_reg_value)
    return FactorModel(U=U, V=V, framework=framework, B=B, G=G)


def _sgd_coefficients(model: FactorModel):
    fw = model.framework
    M, N = model.num_users, model.num_items
    if fw.tag == Framework.GLOBAL_SCALAR:
        return _MODE_NORM, np.full(M, fw.beta), np.full(N, fw.item_beta)
    if fw.tag == Framework.PER_VECTOR_SCALAR:
        return _MODE_NORM, fw.beta_i, fw.gamma_j
    mode = _MODE_DOT if fw.tag == Framework.VECTOR_DOT else _MODE_NONE
    return mode, np.zeros(M), np.zeros(N)


def _inverse_counts(counts: np.ndarray) -> np.ndarray:
    counts = counts.astype(np.float64)
    return np.divide(1.0, counts, out=np.zeros_like(counts), where=counts > 0)


def _batch_step(model: FactorModel, data: RatingsDataset, eta_feat: float, eta_reg: float) -> None:
    grads = full_gradient(model, data)
    model.U -= eta_feat * grads.dU
    model.V -= eta_feat * grads.dV
    if grads.dB is not None:
        model.B -= eta_reg * grads.dB
        model.G -= eta_reg * grads.dG


def _reg_norm(model: FactorModel) -> float:
    return float(math.sqrt(np.sum(model.B ** 2) + np.sum(model.G ** 2)))


def train(data: RatingsDataset, h: Hyperparams, framework: RegularizationFramework,
          on_epoch: Optional[EpochCallback] = None) -> TrainResult:
    """Train a fresh model on data under the given framework.

    Args:
        data: Training ratings (must be non-empty)
        h: Hyperparameters; seed drives both initialization and SGD order
        framework: Regularization framework and its coefficients
        on_epoch: Optional hook called as on_epoch(epoch, model, breakdown)

    Returns:
        TrainResult with the final model and the per-epoch loss trace

    Raises:
        ContractViolation: empty dataset
        DivergenceError: any parameter or the loss became non-finite
    """
    if data.num_observations == 0:
        raise ContractViolation("cannot train on an empty dataset")

    model = init_model(h, data.num_users, data.num_items, framework)
    eta_feat = h.eta_feat
    eta_reg = h.reg_learning_rate
    vector_dot = framework.tag == Framework.VECTOR_DOT

    rng = np.random.default_rng([h.seed, _SHUFFLE_STREAM])
    visits = None
    mode, user_coef, item_coef = _MODE_NONE, None, None
    inv_user = inv_item = B = G = None
    if h.train_mode == TrainMode.SGD:
        mode, user_coef, item_coef = _sgd_coefficients(model)
        inv_user = _inverse_counts(data.user_counts)
        inv_item = _inverse_counts(data.item_counts)
        visits = np.zeros(data.num_observations, dtype=np.int64)
        B = model.B if vector_dot else np.zeros((0, h.k))
        G = model.G if vector_dot else np.zeros((0, h.k))

    previous = total_loss(model, data).total
    trace: List[LossBreakdown] = []
    reg_norms: List[float] = []
    converged = False

    for epoch in range(1, h.epochs + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            if h.train_mode == TrainMode.SGD:
                order = rng.permutation(data.num_observations)
                _sgd_epoch(order, data.users, data.items, data.ratings,
                           model.U, model.V, B, G, user_coef, item_coef,
                           inv_user, inv_item, mode, eta_feat, eta_reg, visits)
            else:
                _batch_step(model, data, eta_feat, eta_reg)

            if not model.all_finite():
                raise DivergenceError(epoch, "non-finite model parameters")
            fit_and_penalty = _finite_loss(model, data, epoch)

        trace.append(fit_and_penalty)
        if vector_dot:
            reg_norms.append(_reg_norm(model))
        logger.debug(
            "epoch %d: fit=%.6g penalty=%.6g total=%.6g",
            epoch, fit_and_penalty.fit, fit_and_penalty.penalty, fit_and_penalty.total,
        )
        if on_epoch is not None:
            on_epoch(epoch, model, fit_and_penalty)

        change = abs(fit_and_penalty.total - previous)
        if change < h.early_stop_tol * max(1.0, previous):
            converged = True
            break
        previous = fit_and_penalty.total

    logger.info(
        f"Trained {framework.tag.value} model for {len(trace)} epochs "
        f"(converged={converged}, total={trace[-1].total:.6g})"
    )
    return TrainResult(
        model=model,
        trace=trace,
        epochs_run=len(trace),
        converged=converged,
        reg_norm_trace=reg_norms,
        visit_counts=visits,
    )


def _finite_loss(model: FactorModel, data: RatingsDataset, epoch: int) -> LossBreakdown:
    r = residuals(model, data)
    fit = float(r @ r)
    pen = penalty(model)
    if not (math.isfinite(fit) and math.isfinite(pen)):
        raise DivergenceError(epoch, "non-finite loss")
    return LossBreakdown.from_terms(fit, pen)
