"""
Closed-form implied-coefficient diagnostics.

Setting dL/du_i = 0 under a scalar penalty and solving for the coefficient
gives one value per user. A single constant coefficient is only consistent
if all of those values agree, so their spread measures how far a fitted
model is from admitting one.
"""

import logging
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from errors import ContractViolation, InsufficientDataError, SingularityError
from factorization import FactorModel, RatingsDataset, RegularizationFramework, check_compatible
from gradients import sign
from models import Framework, NormSqCheck, SpreadReport

logger = logging.getLogger(__name__)

ZERO_NORM = 1e-12


def _user_terms(model: FactorModel, data: RatingsDataset, i: int):
    check_compatible(model, data)
    rows = data.user_observations(i)
    if rows.shape[0] == 0:
        raise ContractViolation(f"user {i} has no observed ratings")
    V = model.V[data.items[rows]]
    return rows, V, V @ model.U[i]


def implied_beta(model: FactorModel, data: RatingsDataset, i: int,
                 printed_sign: bool = False) -> float:
    """
    Coefficient beta that would make user i's stationarity equation hold.

    Args:
        model: Fitted factor model (framework is ignored)
        data: Ratings the model was fitted to
        i: User index
        printed_sign: Return the positively signed printed form instead of
            the value derived from the descent-consistent gradient

    Returns:
        -(1/||u_i||) * sum_j 2 (R_ij - u_i.v_j) u_i.v_j, or its negation when
        printed_sign is set

    Raises:
        SingularityError: ||u_i|| is zero
        ContractViolation: user i has no observations
    """
    rows, _, preds = _user_terms(model, data, i)
    norm = float(np.linalg.norm(model.U[i]))
    if norm <= ZERO_NORM:
        raise SingularityError(f"user {i} has a zero feature vector")
    weighted = float(np.sum(2.0 * (data.ratings[rows] - preds) * preds))
    value = weighted / norm
    return value if printed_sign else -value


def implied_beta_spread(model: FactorModel, data: RatingsDataset,
                        printed_sign: bool = False) -> SpreadReport:
    """Implied coefficients of every eligible user and their dispersion"""
    check_compatible(model, data)
    norms = np.linalg.norm(model.U, axis=1)
    counts = data.user_counts
    indices: List[int] = []
    values: List[float] = []
    for i in range(model.num_users):
        if counts[i] == 0 or norms[i] <= ZERO_NORM:
            continue
        indices.append(i)
        values.append(implied_beta(model, data, i, printed_sign=printed_sign))

    excluded = model.num_users - len(values)
    if len(values) < 2:
        raise InsufficientDataError(
            f"need at least 2 eligible users, found {len(values)} ({excluded} excluded)"
        )
    arr = np.asarray(values)
    lo, hi = float(arr.min()), float(arr.max())
    if lo == hi:
        mean, std = lo, 0.0
    else:
        mean = float(np.clip(arr.mean(), lo, hi))
        std = float(arr.std())
    cv_defined = mean != 0.0
    if excluded:
        logger.info(f"Excluded {excluded} users with no ratings or zero-norm features")
    return SpreadReport(
        user_indices=indices,
        values=values,
        min=lo,
        max=hi,
        mean=mean,
        std=std,
        coefficient_of_variation=std / abs(mean) if cv_defined else None,
        cv_defined=cv_defined,
        num_users=len(values),
        num_excluded=excluded,
        printed_sign=printed_sign,
    )


def implied_beta_norm_sq(model: FactorModel, data: RatingsDataset, i: int) -> float:
    """||beta_i||^2 implied by user i's VECTOR_DOT stationarity equation.

    sum_j 2 (R_ij - u_i.v_j)(beta_i.v_j) / sign(u_i.beta_i), with the sum over
    the user's observed items.
    """
    if model.framework.tag != Framework.VECTOR_DOT:
        raise ContractViolation("implied_beta_norm_sq requires a VECTOR_DOT model")
    rows, V, preds = _user_terms(model, data, i)
    s = sign(model.U[i] @ model.B[i])
    if s == 0:
        raise SingularityError(f"u_{i} is orthogonal to beta_{i}")
    return float(np.sum(2.0 * (data.ratings[rows] - preds) * (V @ model.B[i]))) / s


def implied_beta_norm_sq_report(model: FactorModel, data: RatingsDataset) -> List[NormSqCheck]:
    """Implied vs. actual ||beta_i||^2 for every user where the identity is defined"""
    checks = []
    counts = data.user_counts
    for i in range(model.num_users):
        if counts[i] == 0 or sign(model.U[i] @ model.B[i]) == 0:
            continue
        checks.append(NormSqCheck(
            user_index=i,
            implied=implied_beta_norm_sq(model, data, i),
            actual=float(model.B[i] @ model.B[i]),
        ))
    return checks


def plug_in_framework(model: FactorModel, data: RatingsDataset) -> RegularizationFramework:
    """PER_VECTOR_SCALAR coefficients read off the implied per-user values.

    Negative implied values are clipped to 0, ineligible users get 0, and
    every item gets the mean user coefficient.
    """
    report = implied_beta_spread(model, data)
    beta_i = np.zeros(model.num_users)
    beta_i[report.user_indices] = np.maximum(report.values, 0.0)
    gamma = float(beta_i[report.user_indices].mean())
    return RegularizationFramework.per_vector_scalar(beta_i, np.full(model.num_items, gamma))


def write_spread_csv(report: SpreadReport, path: Path) -> Path:
    """`user_index,implied_beta` rows followed by one `# summary` line"""
    path = Path(path).expanduser()
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({"user_index": report.user_indices, "implied_beta": report.values})
    cv: Optional[str] = (
        f"{report.coefficient_of_variation:.10g}" if report.cv_defined else "undefined"
    )
    summary = (
        f"# summary,num_users={report.num_users},excluded={report.num_excluded},"
        f"min={report.min:.10g},max={report.max:.10g},mean={report.mean:.10g},"
        f"std={report.std:.10g},cv={cv}\n"
    )
    with path.open("w", newline="") as handle:
        frame.to_csv(handle, index=False, float_format="%.17g", lineterminator="\n")
        handle.write(summary)
    return path
