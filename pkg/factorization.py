"""
Core data model: observed ratings, factor matrices, regularization frameworks
and the objective function evaluated under each framework.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from errors import ContractViolation
from models import Framework, LossBreakdown

logger = logging.getLogger(__name__)


@dataclass
class RegularizationFramework:
    """Which penalty is active, together with its scalar coefficients.

    VECTOR_DOT keeps its coefficients in FactorModel.B / FactorModel.G, so
    only the tag is stored here for that framework.
    """

    tag: Framework = Framework.NONE
    beta: float = 0.0
    beta_v: Optional[float] = None  # item-side constant; None means same as beta
    beta_i: Optional[np.ndarray] = None
    gamma_j: Optional[np.ndarray] = None

    def __post_init__(self):
        self.tag = Framework(self.tag)
        if self.beta < 0 or (self.beta_v is not None and self.beta_v < 0):
            raise ContractViolation("scalar regularization coefficients must be nonnegative")
        if self.tag == Framework.PER_VECTOR_SCALAR:
            if self.beta_i is None or self.gamma_j is None:
                raise ContractViolation("PER_VECTOR_SCALAR needs beta_i and gamma_j")
            self.beta_i = np.asarray(self.beta_i, dtype=np.float64).reshape(-1)
            self.gamma_j = np.asarray(self.gamma_j, dtype=np.float64).reshape(-1)
            if np.any(self.beta_i < 0) or np.any(self.gamma_j < 0):
                raise ContractViolation("per-vector coefficients must be nonnegative")

    @classmethod
    def none(cls) -> "RegularizationFramework":
        return cls(Framework.NONE)

    @classmethod
    def global_scalar(cls, beta: float, beta_v: Optional[float] = None) -> "RegularizationFramework":
        return cls(Framework.GLOBAL_SCALAR, beta=float(beta), beta_v=beta_v)

    @classmethod
    def per_vector_scalar(cls, beta_i, gamma_j) -> "RegularizationFramework":
        return cls(Framework.PER_VECTOR_SCALAR, beta_i=beta_i, gamma_j=gamma_j)

    @classmethod
    def vector_dot(cls) -> "RegularizationFramework":
        return cls(Framework.VECTOR_DOT)

    @property
    def item_beta(self) -> float:
        return self.beta if self.beta_v is None else self.beta_v


@dataclass(eq=False)
class RatingsDataset:
    """Sparse observed ratings with dense user/item indices.

    Observations are stored as three flat arrays; per-user and per-item
    adjacency (CSR-style offsets into a stable ordering) is built on
    construction so both traversal orders are cheap.
    """

    num_users: int
    num_items: int
    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    r_min: float = 1.0
    r_max: float = 5.0
    user_ids: Optional[List[str]] = None
    item_ids: Optional[List[str]] = None
    num_duplicates_dropped: int = 0

    _user_order: np.ndarray = field(init=False, repr=False)
    _user_ptr: np.ndarray = field(init=False, repr=False)
    _item_order: np.ndarray = field(init=False, repr=False)
    _item_ptr: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.users = np.ascontiguousarray(self.users, dtype=np.int64).reshape(-1)
        self.items = np.ascontiguousarray(self.items, dtype=np.int64).reshape(-1)
        self.ratings = np.ascontiguousarray(self.ratings, dtype=np.float64).reshape(-1)
        self.r_min = float(self.r_min)
        self.r_max = float(self.r_max)
        if self.user_ids is None:
            self.user_ids = [str(i) for i in range(self.num_users)]
        if self.item_ids is None:
            self.item_ids = [str(j) for j in range(self.num_items)]
        self._validate()

        user_counts = np.bincount(self.users, minlength=self.num_users)
        item_counts = np.bincount(self.items, minlength=self.num_items)
        self._user_order = np.argsort(self.users, kind="stable")
        self._user_ptr = np.concatenate(([0], np.cumsum(user_counts)))
        self._item_order = np.argsort(self.items, kind="stable")
        self._item_ptr = np.concatenate(([0], np.cumsum(item_counts)))

    def _validate(self) -> None:
        n = self.users.shape[0]
        if self.items.shape[0] != n or self.ratings.shape[0] != n:
            raise ContractViolation("users, items and ratings must have equal length")
        if self.num_users < 0 or self.num_items < 0:
            raise ContractViolation("dataset dimensions must be nonnegative")
        if self.r_min > self.r_max:
            raise ContractViolation(f"r_min {self.r_min} exceeds r_max {self.r_max}")
        if n:
            if self.users.min() < 0 or self.users.max() >= self.num_users:
                raise ContractViolation("user index out of range")
            if self.items.min() < 0 or self.items.max() >= self.num_items:
                raise ContractViolation("item index out of range")
            if not np.all(np.isfinite(self.ratings)):
                raise ContractViolation("ratings must be finite")
            if self.ratings.min() < self.r_min or self.ratings.max() > self.r_max:
                raise ContractViolation(
                    f"ratings must lie in [{self.r_min}, {self.r_max}]"
                )
            keys = self.users * self.num_items + self.items
            if np.unique(keys).shape[0] != n:
                raise ContractViolation("duplicate (user, item) observation")
        if len(self.user_ids) != self.num_users or len(set(self.user_ids)) != self.num_users:
            raise ContractViolation("user id map must be a bijection onto [0, M)")
        if len(self.item_ids) != self.num_items or len(set(self.item_ids)) != self.num_items:
            raise ContractViolation("item id map must be a bijection onto [0, N)")

    @property
    def num_observations(self) -> int:
        return int(self.users.shape[0])

    @property
    def user_counts(self) -> np.ndarray:
        return np.diff(self._user_ptr)

    @property
    def item_counts(self) -> np.ndarray:
        return np.diff(self._item_ptr)

    @property
    def mean_rating(self) -> float:
        if self.num_observations == 0:
            return 0.5 * (self.r_min + self.r_max)
        return float(self.ratings.mean())

    @property
    def user_id_map(self) -> Dict[str, int]:
        return {ext: idx for idx, ext in enumerate(self.user_ids)}

    @property
    def item_id_map(self) -> Dict[str, int]:
        return {ext: idx for idx, ext in enumerate(self.item_ids)}

    def user_observations(self, i: int) -> np.ndarray:
        """Observation indices for user i, in observation-list order"""
        if not 0 <= i < self.num_users:
            raise ContractViolation(f"user index {i} out of range [0, {self.num_users})")
        return self._user_order[self._user_ptr[i]:self._user_ptr[i + 1]]

    def item_observations(self, j: int) -> np.ndarray:
        if not 0 <= j < self.num_items:
            raise ContractViolation(f"item index {j} out of range [0, {self.num_items})")
        return self._item_order[self._item_ptr[j]:self._item_ptr[j + 1]]

    def subset(self, indices: np.ndarray) -> "RatingsDataset":
        """Dataset restricted to some observations; dimensions and id maps are kept"""
        indices = np.asarray(indices, dtype=np.int64)
        return RatingsDataset(
            num_users=self.num_users,
            num_items=self.num_items,
            users=self.users[indices],
            items=self.items[indices],
            ratings=self.ratings[indices],
            r_min=self.r_min,
            r_max=self.r_max,
            user_ids=list(self.user_ids),
            item_ids=list(self.item_ids),
        )


@dataclass(eq=False)
class FactorModel:
    """User/item feature matrices plus, for VECTOR_DOT, the regularization vectors"""

    U: np.ndarray
    V: np.ndarray
    framework: RegularizationFramework = field(default_factory=RegularizationFramework)
    B: Optional[np.ndarray] = None
    G: Optional[np.ndarray] = None

    def __post_init__(self):
        self.U = np.ascontiguousarray(self.U, dtype=np.float64)
        self.V = np.ascontiguousarray(self.V, dtype=np.float64)
        if self.U.ndim != 2 or self.V.ndim != 2 or self.U.shape[1] != self.V.shape[1]:
            raise ContractViolation("U and V must be 2-D with the same number of columns")
        dot = self.framework.tag == Framework.VECTOR_DOT
        if dot != (self.B is not None) or dot != (self.G is not None):
            raise ContractViolation("B and G exist exactly when the framework is VECTOR_DOT")
        if dot:
            self.B = np.ascontiguousarray(self.B, dtype=np.float64)
            self.G = np.ascontiguousarray(self.G, dtype=np.float64)
            if self.B.shape != self.U.shape or self.G.shape != self.V.shape:
                raise ContractViolation("B/G shapes must mirror U/V")
        if self.framework.tag == Framework.PER_VECTOR_SCALAR:
            if self.framework.beta_i.shape[0] != self.num_users:
                raise ContractViolation("beta_i must have one entry per user")
            if self.framework.gamma_j.shape[0] != self.num_items:
                raise ContractViolation("gamma_j must have one entry per item")

    @property
    def num_users(self) -> int:
        return int(self.U.shape[0])

    @property
    def num_items(self) -> int:
        return int(self.V.shape[0])

    @property
    def k(self) -> int:
        return int(self.U.shape[1])

    def arrays(self) -> List[np.ndarray]:
        arrays = [self.U, self.V]
        if self.B is not None:
            arrays.extend([self.B, self.G])
        return arrays

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def copy(self) -> "FactorModel":
        return FactorModel(
            U=self.U.copy(),
            V=self.V.copy(),
            framework=self.framework,
            B=None if self.B is None else self.B.copy(),
            G=None if self.G is None else self.G.copy(),
        )


def check_compatible(model: FactorModel, data: RatingsDataset) -> None:
    if model.num_users != data.num_users or model.num_items != data.num_items:
        raise ContractViolation(
            f"model is {model.num_users}x{model.num_items} but data is "
            f"{data.num_users}x{data.num_items}"
        )


def predict(model: FactorModel, i: int, j: int) -> float:
    """Unclamped prediction u_i . v_j"""
    if not 0 <= i < model.num_users:
        raise ContractViolation(f"user index {i} out of range [0, {model.num_users})")
    if not 0 <= j < model.num_items:
        raise ContractViolation(f"item index {j} out of range [0, {model.num_items})")
    return float(model.U[i] @ model.V[j])


def row_dots(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return np.einsum("ik,ik->i", X, Y)


def penalty(model: FactorModel) -> float:
    """Penalty term of the objective for the model's framework.

    GLOBAL_SCALAR:      beta * sum ||u_i|| + beta_v * sum ||v_j||
    PER_VECTOR_SCALAR:  sum beta_i ||u_i|| + sum gamma_j ||v_j||
    VECTOR_DOT:         sum |beta_i . u_i| + sum |gamma_j . v_j|
    """
    fw = model.framework
    if fw.tag == Framework.NONE:
        return 0.0
    if fw.tag == Framework.GLOBAL_SCALAR:
        user_norms = np.linalg.norm(model.U, axis=1).sum()
        item_norms = np.linalg.norm(model.V, axis=1).sum()
        return float(fw.beta * user_norms + fw.item_beta * item_norms)
    if fw.tag == Framework.PER_VECTOR_SCALAR:
        return float(
            fw.beta_i @ np.linalg.norm(model.U, axis=1)
            + fw.gamma_j @ np.linalg.norm(model.V, axis=1)
        )
    return float(
        np.abs(row_dots(model.B, model.U)).sum() + np.abs(row_dots(model.G, model.V)).sum()
    )


def residuals(model: FactorModel, data: RatingsDataset) -> np.ndarray:
    """R_ij - u_i . v_j for every observation, in observation order"""
    check_compatible(model, data)
    return data.ratings - row_dots(model.U[data.users], model.V[data.items])


def total_loss(model: FactorModel, data: RatingsDataset) -> LossBreakdown:
    """Squared error over observed ratings plus the framework penalty"""
    r = residuals(model, data)
    return LossBreakdown.from_terms(float(r @ r), penalty(model))
