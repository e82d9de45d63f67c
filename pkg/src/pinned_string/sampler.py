"""
Exact joint sampling of the d-component pinned string at finite point sets.

Every component is an independent draw ``L @ z`` with ``L`` the jittered
Cholesky factor of the single-component covariance.  Replicate ``i`` of a run
seeded with ``seed`` always reads its normals from the Philox stream with key
``seed`` and counter block ``i``, so a replicate's values do not depend on how
replicates are batched or scheduled across workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernel import LowerFactor, as_points, cov_matrix, factorize

RNG_ID = "numpy-Philox4x64-10/key=seed/counter[3]=replicate"

_U64 = 2**64


def _check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed < _U64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def replicate_generator(seed: int, replicate: int) -> np.random.Generator:
    """Generator for one replicate: Philox keyed by ``seed``, top counter word = ``replicate``."""
    seed = _check_seed(seed)
    if not 0 <= replicate < _U64:
        raise ValueError("replicate index out of range")
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, int(replicate)]))


def standard_normals(seed: int, replicates, shape) -> np.ndarray:
    """Stack of ``standard_normal(shape)`` draws, one per replicate index."""
    reps = np.atleast_1d(np.asarray(replicates, dtype=np.uint64))
    out = np.empty((reps.size, *shape))
    for k, r in enumerate(reps):
        out[k] = replicate_generator(seed, int(r)).standard_normal(shape)
    return out


@dataclass
class FieldSample:
    points: np.ndarray
    d: int
    values: np.ndarray
    seed: int
    rng_id: str = RNG_ID
    replicate: int = 0


class FieldSampler:
    """Factor a point set once and draw any number of replicates from it.

    Points are sorted by ``(t, x)`` before factorization so equal sets give
    equal factors; outputs follow the caller's order.
    """

    def __init__(self, points):
        self.points = as_points(points)
        self.order = np.lexsort((self.points[:, 1], self.points[:, 0]))
        self.factor: LowerFactor = factorize(cov_matrix(self.points[self.order]))
        self.n = self.points.shape[0]

    def values(self, d: int, seed: int, replicates) -> np.ndarray:
        """Array of shape ``(len(replicates), n, d)``."""
        if int(d) < 1:
            raise ValueError("d must be a positive integer")
        z = standard_normals(seed, replicates, (self.n, int(d)))
        canon = np.einsum("ij,rjk->rik", self.factor.L, z, optimize=True)
        out = np.empty_like(canon)
        out[:, self.order, :] = canon
        return out

    def sample(self, d: int, seed: int, replicate: int = 0) -> FieldSample:
        vals = self.values(d, seed, [replicate])[0]
        return FieldSample(self.points.copy(), int(d), vals, _check_seed(seed), RNG_ID, int(replicate))


def sample_field(points, d: int, seed: int, replicate: int = 0) -> FieldSample:
    """One exact draw of the d-component string at ``points``."""
    return FieldSampler(points).sample(d, seed, replicate)


def sample_replicates(points, d: int, seed: int, reps: int) -> np.ndarray:
    """Replicates ``0..reps-1`` as an array of shape ``(reps, n, d)``."""
    return FieldSampler(points).values(d, seed, np.arange(int(reps)))


def scale_points(points, L: float) -> np.ndarray:
    """Map ``(t, x) -> (L^4 t, L^2 x)``; the string's law is invariant under this and ``U -> U/L``."""
    L = float(L)
    if not L > 0 or not np.isfinite(L):
        raise ValueError("scale L must be positive and finite")
    P = as_points(points)
    return np.column_stack([L**4 * P[:, 0], L**2 * P[:, 1]])
