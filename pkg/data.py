"""
Rating-table ingestion, canonical CSV round-tripping, synthetic datasets and
seeded train/test splits.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from errors import ContractViolation, DatasetFormatError
from factorization import RatingsDataset

logger = logging.getLogger(__name__)

CANONICAL_META_HEADER = "M,N,r_min,r_max"
CANONICAL_COLUMNS = "user_index,item_index,rating"
DEFAULT_SPLIT_RATIO = 0.8


class TableSchema(BaseModel):
    """Column layout of a delimiter-separated ratings table"""
    model_config = ConfigDict(frozen=True)

    name: str = "custom"
    delimiter: str = ","
    header: bool = True
    user_col: int = Field(0, ge=0)
    item_col: int = Field(1, ge=0)
    rating_col: int = Field(2, ge=0)
    r_min: float = 0.5
    r_max: float = 5.0

    @model_validator(mode="after")
    def _check(self) -> "TableSchema":
        if len({self.user_col, self.item_col, self.rating_col}) != 3:
            raise ValueError("user, item and rating columns must differ")
        if self.r_min > self.r_max:
            raise ValueError("r_min must not exceed r_max")
        return self


PRESETS: Dict[str, TableSchema] = {
    # ratings.csv: userId,movieId,rating,timestamp
    "movielens": TableSchema(name="movielens", delimiter=",", header=True, r_min=0.5, r_max=5.0),
    "comoda": TableSchema(name="comoda", delimiter=",", header=True, r_min=1.0, r_max=5.0),
    "movielens100k": TableSchema(name="movielens100k", delimiter="\t", header=False, r_min=1.0, r_max=5.0),
    "movielens1m": TableSchema(name="movielens1m", delimiter="::", header=False, r_min=1.0, r_max=5.0),
}


def get_schema(preset: str) -> TableSchema:
    try:
        return PRESETS[preset]
    except KeyError:
        raise ValueError(f"Unknown dataset preset '{preset}' (choose from {', '.join(PRESETS)})")


@dataclass(eq=False)
class SplitPair:
    train: RatingsDataset
    test: RatingsDataset
    ratio: float
    seed: int


def load_ratings_table(path: Union[str, Path], schema: TableSchema) -> RatingsDataset:
    """
    Parse a ratings table into a dense-indexed dataset.

    External IDs are remapped in first-appearance order; extra columns are
    ignored; a repeated (user, item) pair keeps its last rating.
    """
    path = Path(path).expanduser()
    if not path.exists():
        raise FileNotFoundError(f"Ratings file not found: {path}")

    columns = [schema.user_col, schema.item_col, schema.rating_col]
    try:
        frame = pd.read_csv(
            path,
            sep=schema.delimiter,
            header=0 if schema.header else None,
            usecols=columns,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
            engine="python" if len(schema.delimiter) > 1 else "c",
        )
    except pd.errors.EmptyDataError:
        raise DatasetFormatError(f"{path} is empty")
    except (pd.errors.ParserError, ValueError) as exc:
        raise DatasetFormatError(f"{path}: {exc}")

    first_line = 2 if schema.header else 1
    line_numbers = np.arange(len(frame)) + first_line
    frame.columns = range(frame.shape[1])
    position = {col: pos for pos, col in enumerate(sorted(columns))}
    users = frame[position[schema.user_col]].fillna("").str.strip()
    items = frame[position[schema.item_col]].fillna("").str.strip()
    raw_ratings = frame[position[schema.rating_col]].fillna("").str.strip()

    blank = (users == "") & (items == "") & (raw_ratings == "")
    users, items, raw_ratings = users[~blank], items[~blank], raw_ratings[~blank]
    line_numbers = line_numbers[~blank.to_numpy()]
    if len(users) == 0:
        raise DatasetFormatError(f"{path} contains no ratings")

    ratings = pd.to_numeric(raw_ratings, errors="coerce").to_numpy(dtype=np.float64)
    bad = (users == "").to_numpy() | (items == "").to_numpy() | ~np.isfinite(ratings)
    if bad.any():
        pos = int(np.argmax(bad))
        raise DatasetFormatError("unparseable row", line=int(line_numbers[pos]))
    out_of_bounds = (ratings < schema.r_min) | (ratings > schema.r_max)
    if out_of_bounds.any():
        pos = int(np.argmax(out_of_bounds))
        raise DatasetFormatError(
            f"rating {ratings[pos]} outside [{schema.r_min}, {schema.r_max}]",
            line=int(line_numbers[pos]),
        )

    user_codes, user_ids = pd.factorize(users)
    item_codes, item_ids = pd.factorize(items)
    observations = pd.DataFrame({"u": user_codes, "i": item_codes, "r": ratings})
    deduped = observations.drop_duplicates(subset=["u", "i"], keep="last")
    duplicates = len(observations) - len(deduped)
    if duplicates:
        logger.warning(f"Dropped {duplicates} duplicate (user, item) rows from {path}, keeping the last")

    dataset = RatingsDataset(
        num_users=len(user_ids),
        num_items=len(item_ids),
        users=deduped["u"].to_numpy(),
        items=deduped["i"].to_numpy(),
        ratings=deduped["r"].to_numpy(),
        r_min=schema.r_min,
        r_max=schema.r_max,
        user_ids=[str(u) for u in user_ids],
        item_ids=[str(i) for i in item_ids],
        num_duplicates_dropped=duplicates,
    )
    logger.info(
        f"Loaded {dataset.num_observations} ratings from {path}: "
        f"{dataset.num_users} users x {dataset.num_items} items"
    )
    return dataset


def write_canonical(data: RatingsDataset, path: Union[str, Path]) -> Path:
    """Write `user_index,item_index,rating` rows under a `M,N,r_min,r_max` header"""
    path = Path(path).expanduser()
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({
        "user_index": data.users,
        "item_index": data.items,
        "rating": data.ratings,
    })
    with path.open("w", newline="") as handle:
        handle.write(f"{CANONICAL_META_HEADER}\n")
        handle.write(f"{data.num_users},{data.num_items},{data.r_min!r},{data.r_max!r}\n")
        frame.to_csv(handle, index=False, lineterminator="\n")
    return path


def is_canonical(path: Union[str, Path]) -> bool:
    with Path(path).expanduser().open() as handle:
        return handle.readline().strip() == CANONICAL_META_HEADER


def load_canonical(path: Union[str, Path]) -> RatingsDataset:
    path = Path(path).expanduser()
    with path.open() as handle:
        if handle.readline().strip() != CANONICAL_META_HEADER:
            raise DatasetFormatError(f"{path} is not a canonical ratings file", line=1)
        meta = handle.readline().strip().split(",")
        try:
            num_users, num_items = int(meta[0]), int(meta[1])
            r_min, r_max = float(meta[2]), float(meta[3])
        except (IndexError, ValueError):
            raise DatasetFormatError("malformed dimension header", line=2)
        frame = pd.read_csv(handle, dtype={"user_index": np.int64, "item_index": np.int64,
                                           "rating": np.float64})
    try:
        return RatingsDataset(
            num_users=num_users,
            num_items=num_items,
            users=frame["user_index"].to_numpy(),
            items=frame["item_index"].to_numpy(),
            ratings=frame["rating"].to_numpy(),
            r_min=r_min,
            r_max=r_max,
        )
    except ContractViolation as exc:
        raise DatasetFormatError(f"{path}: {exc}")


def load_dataset(path: Union[str, Path], preset: Optional[str] = None) -> RatingsDataset:
    """Load a canonical file as-is, anything else through a schema preset"""
    path = Path(path).expanduser()
    if not path.exists():
        raise FileNotFoundError(f"Ratings file not found: {path}")
    if is_canonical(path):
        return load_canonical(path)
    return load_ratings_table(path, get_schema(preset or "movielens"))


def synthetic(num_users: int, num_items: int, k_true: int, density: float,
              noise_std: float, seed: int) -> RatingsDataset:
    """Low-rank ratings plus Gaussian noise, rescaled to [1, 5] and subsampled"""
    if num_users < 1 or num_items < 1:
        raise ContractViolation("synthetic data needs at least one user and one item")
    if k_true < 1:
        raise ContractViolation("k_true must be at least 1")
    if not (0.0 < density <= 1.0):
        raise ContractViolation(f"density must lie in (0, 1], got {density}")
    if noise_std < 0:
        raise ContractViolation("noise_std must be nonnegative")

    rng = np.random.default_rng(seed)
    U = rng.normal(size=(num_users, k_true))
    V = rng.normal(size=(num_items, k_true))
    full = U @ V.T + noise_std * rng.normal(size=(num_users, num_items))
    lo, hi = full.min(), full.max()
    if hi > lo:
        full = 1.0 + 4.0 * (full - lo) / (hi - lo)
    else:
        full = np.full_like(full, 3.0)
    np.clip(full, 1.0, 5.0, out=full)

    keep = rng.random((num_users, num_items)) < density
    users, items = np.nonzero(keep)
    return RatingsDataset(
        num_users=num_users,
        num_items=num_items,
        users=users,
        items=items,
        ratings=full[users, items],
        r_min=1.0,
        r_max=5.0,
    )


def split(data: RatingsDataset, ratio: float = DEFAULT_SPLIT_RATIO, seed: int = 0) -> SplitPair:
    """Seeded shuffle; the first ceil(ratio * n) observations go to train"""
    n = data.num_observations
    if n < 2:
        raise ContractViolation("splitting needs at least two observations")
    if not (0.0 < ratio < 1.0):
        raise ContractViolation(f"split ratio must lie in (0, 1), got {ratio}")
    n_train = math.ceil(round(ratio * n, 9))
    if n_train <= 0 or n_train >= n:
        raise ContractViolation(f"ratio {ratio} on {n} ratings leaves an empty train or test set")

    order = np.random.default_rng(seed).permutation(n)
    return SplitPair(
        train=data.subset(np.sort(order[:n_train])),
        test=data.subset(np.sort(order[n_train:])),
        ratio=ratio,
        seed=seed,
    )
