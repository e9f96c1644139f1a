import math
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

DME_DEFINITION = (
    "Degree of Matthew Effect = Zipf slope of recommendation exposure minus "
    "Zipf slope of training popularity (interpretation, not a quotation of the source metric)"
)


class Framework(str, Enum):
    """Regularization frameworks understood by the trainer"""
    NONE = "none"
    GLOBAL_SCALAR = "global_scalar"
    PER_VECTOR_SCALAR = "per_vector_scalar"
    VECTOR_DOT = "vector_dot"


class TrainMode(str, Enum):
    SGD = "sgd"
    BATCH_GD = "batch_gd"


class Hyperparams(BaseModel):
    """Training knobs for a single factorization run"""
    model_config = ConfigDict(frozen=True)

    k: int = Field(10, ge=1)
    eta_feat: float = Field(0.01, ge=0.0)
    eta_reg: Optional[float] = Field(None, ge=0.0)  # None: same as eta_feat
    epochs: int = Field(200, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    init_scale_feat: Optional[float] = Field(None, ge=0.0)  # None: 1/sqrt(k)
    init_reg_value: float = 0.01
    clamp_predictions: bool = True
    train_mode: TrainMode = TrainMode.SGD
    early_stop_tol: float = Field(1e-5, ge=0.0)

    @property
    def reg_learning_rate(self) -> float:
        return self.eta_feat if self.eta_reg is None else self.eta_reg

    @property
    def feature_init_scale(self) -> float:
        if self.init_scale_feat is None:
            return 1.0 / math.sqrt(self.k)
        return self.init_scale_feat


class LossBreakdown(BaseModel):
    """Fit and penalty terms of the objective, reported separately"""
    model_config = ConfigDict(frozen=True)

    fit: float = Field(ge=0.0)
    penalty: float = Field(ge=0.0)
    total: float

    @model_validator(mode="after")
    def _check_decomposition(self) -> "LossBreakdown":
        if self.total != self.fit + self.penalty:
            raise ValueError("total must equal fit + penalty")
        return self

    @classmethod
    def from_terms(cls, fit: float, penalty: float) -> "LossBreakdown":
        return cls(fit=fit, penalty=penalty, total=fit + penalty)


class SpreadReport(BaseModel):
    """Implied per-user coefficients and how far apart they are"""
    user_indices: List[int]
    values: List[float]
    min: float
    max: float
    mean: float
    std: float = Field(ge=0.0)
    coefficient_of_variation: Optional[float] = None
    cv_defined: bool
    num_users: int
    num_excluded: int = 0
    printed_sign: bool = False

    @model_validator(mode="after")
    def _check_shape(self) -> "SpreadReport":
        if len(self.values) != self.num_users or len(self.user_indices) != self.num_users:
            raise ValueError("values length must equal num_users")
        if not (self.min <= self.mean <= self.max):
            raise ValueError("mean must lie between min and max")
        return self


class NormSqCheck(BaseModel):
    """Implied vs. actual squared norm of one user's regularization vector"""
    user_index: int
    implied: float
    actual: float

    @property
    def gap(self) -> float:
        return self.actual - self.implied


class EvalReport(BaseModel):
    mae: float = Field(ge=0.0)
    rmse: float = Field(ge=0.0)
    dme: Optional[float] = None
    num_test_ratings: int = Field(gt=0)
    clamped: bool
    k_top: int = 10
    dme_definition: str = DME_DEFINITION

    def to_csv_row(self) -> str:
        dme = "" if self.dme is None else f"{self.dme:.10g}"
        return f"{self.mae:.10g},{dme},{self.num_test_ratings}"


class RunStatus(str, Enum):
    OK = "ok"
    DIVERGED = "diverged"


class SurfaceRow(BaseModel):
    """One grid cell of the surface table"""
    model_config = ConfigDict(frozen=True)

    framework: Framework
    learning_rate: float
    reg_magnitude: float
    mae: Optional[float] = None
    dme: Optional[float] = None
    status: RunStatus = RunStatus.OK


class SurfaceTable(BaseModel):
    rows: List[SurfaceRow]

    def frameworks(self) -> List[Framework]:
        seen: List[Framework] = []
        for row in self.rows:
            if row.framework not in seen:
                seen.append(row.framework)
        return seen

    def rows_for(self, framework: Framework) -> List[SurfaceRow]:
        return [row for row in self.rows if row.framework == framework]

    def best_row(self, framework: Framework) -> Optional[SurfaceRow]:
        """Lowest-MAE ok row for a framework (first in table order on ties)"""
        best = None
        for row in self.rows_for(framework):
            if row.status != RunStatus.OK or row.mae is None:
                continue
            if best is None or row.mae < best.mae:
                best = row
        return best

    def best_rows(self) -> Dict[Framework, Optional[SurfaceRow]]:
        return {framework: self.best_row(framework) for framework in self.frameworks()}


class GridSpec(BaseModel):
    """Grid search over learning rate x regularization magnitude"""
    learning_rates: List[float] = Field(default_factory=lambda: [0.001, 0.003, 0.01, 0.03, 0.1])
    reg_magnitudes: List[float] = Field(default_factory=lambda: [0.0, 0.001, 0.01, 0.1, 1.0])
    frameworks: List[Framework] = Field(
        default_factory=lambda: [Framework.GLOBAL_SCALAR, Framework.VECTOR_DOT]
    )
    dataset_path: Optional[Path] = None
    dataset_preset: str = "movielens"
    split_ratio: float = Field(0.8, gt=0.0, lt=1.0)
    split_seed: int = 0
    hyperparams: Hyperparams = Field(default_factory=Hyperparams)
    k_top: int = Field(10, ge=1)
    clamp: bool = True

    @field_validator("learning_rates")
    @classmethod
    def _positive_rates(cls, values: List[float]) -> List[float]:
        if not values:
            raise ValueError("learning_rates must not be empty")
        if any(not (v > 0.0) or not math.isfinite(v) for v in values):
            raise ValueError("every learning rate must be a finite value > 0")
        if len(set(values)) != len(values):
            raise ValueError("learning_rates must not repeat")
        return values

    @field_validator("reg_magnitudes")
    @classmethod
    def _nonnegative_magnitudes(cls, values: List[float]) -> List[float]:
        if not values:
            raise ValueError("reg_magnitudes must not be empty")
        if any(not (v >= 0.0) or not math.isfinite(v) for v in values):
            raise ValueError("every regularization magnitude must be a finite value >= 0")
        if len(set(values)) != len(values):
            raise ValueError("reg_magnitudes must not repeat")
        return values

    @field_validator("frameworks")
    @classmethod
    def _some_framework(cls, values: List[Framework]) -> List[Framework]:
        if not values:
            raise ValueError("frameworks must not be empty")
        if len(set(values)) != len(values):
            raise ValueError("frameworks must not repeat")
        return values
