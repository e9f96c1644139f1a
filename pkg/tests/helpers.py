"""Builders shared by the test modules."""

from typing import Optional, Tuple

import numpy as np

from factorization import FactorModel, RatingsDataset, RegularizationFramework
from models import Framework


def make_dataset(num_users: int, num_items: int, triples, r_min: float = 1.0,
                 r_max: float = 5.0) -> RatingsDataset:
    """Dataset from (user, item, rating) triples"""
    triples = list(triples)
    users = [t[0] for t in triples]
    items = [t[1] for t in triples]
    ratings = [t[2] for t in triples]
    return RatingsDataset(num_users=num_users, num_items=num_items, users=users,
                          items=items, ratings=ratings, r_min=r_min, r_max=r_max)


def make_model(U, V, framework: Optional[RegularizationFramework] = None,
               B=None, G=None) -> FactorModel:
    return FactorModel(U=np.asarray(U, dtype=float), V=np.asarray(V, dtype=float),
                       framework=framework or RegularizationFramework.none(), B=B, G=G)


def random_framework(rng: np.random.Generator, tag: Framework, num_users: int,
                     num_items: int) -> RegularizationFramework:
    if tag == Framework.GLOBAL_SCALAR:
        return RegularizationFramework.global_scalar(rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0))
    if tag == Framework.PER_VECTOR_SCALAR:
        return RegularizationFramework.per_vector_scalar(
            rng.uniform(0.1, 1.0, num_users), rng.uniform(0.1, 1.0, num_items)
        )
    if tag == Framework.VECTOR_DOT:
        return RegularizationFramework.vector_dot()
    return RegularizationFramework.none()


def random_instance(seed: int, tag: Framework = Framework.NONE, max_users: int = 5,
                    max_items: int = 5, max_k: int = 4,
                    density: float = 0.6) -> Tuple[FactorModel, RatingsDataset]:
    """Small random model plus random observed ratings in [1, 5]"""
    rng = np.random.default_rng(seed)
    M = int(rng.integers(1, max_users + 1))
    N = int(rng.integers(1, max_items + 1))
    k = int(rng.integers(1, max_k + 1))
    mask = rng.random((M, N)) < density
    if not mask.any():
        mask[rng.integers(M), rng.integers(N)] = True
    users, items = np.nonzero(mask)
    data = RatingsDataset(num_users=M, num_items=N, users=users, items=items,
                          ratings=rng.uniform(1.0, 5.0, users.shape[0]))
    B = G = None
    if tag == Framework.VECTOR_DOT:
        B = rng.uniform(-1.0, 1.0, (M, k))
        G = rng.uniform(-1.0, 1.0, (N, k))
    model = FactorModel(
        U=rng.uniform(-0.8, 0.8, (M, k)),
        V=rng.uniform(-0.8, 0.8, (N, k)),
        framework=random_framework(rng, tag, M, N),
        B=B,
        G=G,
    )
    return model, data


def random_ratings(seed: int, num_users: int, num_items: int, density: float = 0.5) -> RatingsDataset:
    rng = np.random.default_rng(seed)
    mask = rng.random((num_users, num_items)) < density
    mask[np.arange(num_users), rng.integers(num_items, size=num_users)] = True
    users, items = np.nonzero(mask)
    return RatingsDataset(num_users=num_users, num_items=num_items, users=users, items=items,
                          ratings=rng.integers(1, 6, users.shape[0]).astype(float))


def brute_force_loss(model: FactorModel, data: RatingsDataset) -> float:
    fit = 0.0
    for u, i, r in zip(data.users, data.items, data.ratings):
        pred = 0.0
        for f in range(model.k):
            pred += model.U[u, f] * model.V[i, f]
        fit += (r - pred) ** 2
    fw = model.framework
    pen = 0.0
    for row in range(model.num_users):
        norm = float(np.sqrt(sum(x * x for x in model.U[row])))
        if fw.tag == Framework.GLOBAL_SCALAR:
            pen += fw.beta * norm
        elif fw.tag == Framework.PER_VECTOR_SCALAR:
            pen += fw.beta_i[row] * norm
        elif fw.tag == Framework.VECTOR_DOT:
            pen += abs(sum(a * b for a, b in zip(model.B[row], model.U[row])))
    for col in range(model.num_items):
        norm = float(np.sqrt(sum(x * x for x in model.V[col])))
        if fw.tag == Framework.GLOBAL_SCALAR:
            pen += fw.item_beta * norm
        elif fw.tag == Framework.PER_VECTOR_SCALAR:
            pen += fw.gamma_j[col] * norm
        elif fw.tag == Framework.VECTOR_DOT:
            pen += abs(sum(a * b for a, b in zip(model.G[col], model.V[col])))
    return fit + pen
