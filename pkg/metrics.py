"""
Accuracy and popularity-bias metrics: MAE/RMSE and the Degree of Matthew Effect.

The Degree of Matthew Effect is computed as the difference between two
log-log rank/frequency slopes: one over how often each item is recommended
(top-k of unrated items per user), one over how often each item is rated in
the training data. Near 0 means recommendations mirror the data's popularity
skew; more negative means they concentrate exposure further.
"""

import logging
from typing import Optional

import numpy as np
from scipy import stats

from errors import ContractViolation, InsufficientDataError
from factorization import FactorModel, RatingsDataset, check_compatible, row_dots
from models import DME_DEFINITION, EvalReport

logger = logging.getLogger(__name__)

DEFAULT_K_TOP = 10
_SCORE_BLOCK = 1024


def predict_observations(model: FactorModel, data: RatingsDataset, clamp: bool = True,
                         train: Optional[RatingsDataset] = None) -> np.ndarray:
    """Predictions for every observation of data, with cold-start fallback.

    Pairs whose user or item lies outside the model, or never appears in
    train (when given), are predicted as the training mean rating. Without
    train, every pair must lie inside the model.
    """
    users, items = data.users, data.items
    known = (users < model.num_users) & (items < model.num_items)
    if train is not None:
        seen_users = np.zeros(model.num_users, dtype=bool)
        seen_items = np.zeros(model.num_items, dtype=bool)
        seen_users[: train.num_users] = train.user_counts[: model.num_users] > 0
        seen_items[: train.num_items] = train.item_counts[: model.num_items] > 0
        known &= seen_users[np.minimum(users, model.num_users - 1)]
        known &= seen_items[np.minimum(items, model.num_items - 1)]
        fallback = train.mean_rating
    elif not known.all():
        raise ContractViolation("pairs outside the model need the training ratings for the mean fallback")
    else:
        fallback = 0.0

    predictions = np.full(data.num_observations, fallback, dtype=np.float64)
    predictions[known] = row_dots(model.U[users[known]], model.V[items[known]])
    cold = int(np.count_nonzero(~known))
    if cold:
        logger.debug(f"{cold} cold-start pairs predicted as {fallback:.4f}")
    if clamp:
        np.clip(predictions, data.r_min, data.r_max, out=predictions)
    return predictions


def mae(model: FactorModel, test: RatingsDataset, clamp: bool = True,
        train: Optional[RatingsDataset] = None) -> float:
    """Mean absolute error over the test observations"""
    if test.num_observations == 0:
        raise ContractViolation("MAE needs at least one test rating")
    predictions = predict_observations(model, test, clamp=clamp, train=train)
    return float(np.mean(np.abs(predictions - test.ratings)))


def rmse(model: FactorModel, test: RatingsDataset, clamp: bool = True,
         train: Optional[RatingsDataset] = None) -> float:
    if test.num_observations == 0:
        raise ContractViolation("RMSE needs at least one test rating")
    predictions = predict_observations(model, test, clamp=clamp, train=train)
    return float(np.sqrt(np.mean((predictions - test.ratings) ** 2)))


def zipf_slope(counts) -> float:
    """Least-squares slope of ln(count) against ln(rank), counts sorted descending.

    Zero counts are dropped before fitting.
    """
    values = np.asarray(counts, dtype=np.float64).reshape(-1)
    values = values[values > 0]
    if values.shape[0] < 2:
        raise InsufficientDataError("need at least two positive counts for a Zipf slope")
    values = np.sort(values)[::-1]
    ranks = np.arange(1, values.shape[0] + 1, dtype=np.float64)
    return float(stats.linregress(np.log(ranks), np.log(values)).slope)


def top_k_items(model: FactorModel, train: RatingsDataset, k_top: int) -> np.ndarray:
    """Per-user top-k unrated items, flattened.

    Ties are broken towards the lower item index. Users with fewer than
    k_top unrated items contribute only the items they have.
    """
    check_compatible(model, train)
    chosen = []
    for start in range(0, model.num_users, _SCORE_BLOCK):
        stop = min(start + _SCORE_BLOCK, model.num_users)
        scores = model.U[start:stop] @ model.V.T
        in_block = (train.users >= start) & (train.users < stop)
        scores[train.users[in_block] - start, train.items[in_block]] = -np.inf
        order = np.argsort(-scores, axis=1, kind="stable")[:, :k_top]
        picked = np.take_along_axis(scores, order, axis=1)
        chosen.append(order[np.isfinite(picked)])
    if not chosen:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate(chosen)


def degree_matthew_effect(model: FactorModel, train: RatingsDataset,
                          k_top: int = DEFAULT_K_TOP) -> float:
    if k_top < 1:
        raise ContractViolation("k_top must be at least 1")
    exposure = np.bincount(top_k_items(model, train, k_top), minlength=model.num_items)
    if exposure.sum() == 0:
        raise InsufficientDataError("no unrated items left to recommend")
    return zipf_slope(exposure) - zipf_slope(train.item_counts)


def evaluate(model: FactorModel, train: RatingsDataset, test: RatingsDataset,
             k_top: int = DEFAULT_K_TOP, clamp: bool = True) -> EvalReport:
    """MAE, RMSE and DME of a trained model on a train/test split"""
    dme = None
    try:
        dme = degree_matthew_effect(model, train, k_top)
    except InsufficientDataError as exc:
        logger.warning(f"Degree of Matthew Effect unavailable: {exc}")
    report = EvalReport(
        mae=mae(model, test, clamp=clamp, train=train),
        rmse=rmse(model, test, clamp=clamp, train=train),
        dme=dme,
        num_test_ratings=test.num_observations,
        clamped=clamp,
        k_top=k_top,
    )
    logger.info(f"MAE={report.mae:.4f} RMSE={report.rmse:.4f} DME={report.dme} ({DME_DEFINITION})")
    return report
