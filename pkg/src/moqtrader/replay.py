"""Age-bounded experience replay with covariance whitening at sampling time.

Raw reward vectors are stored alongside the scalar so the whitening
transform can be applied when a minibatch is drawn; the stored originals
are never modified.  Element age is measured in network updates since
insertion, and the same bound applies to single- and multi-reward runs
(multi-reward replays are simply longer).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import BufferTooSmall
from .rewards import RewardVector

DEFAULT_EIGEN_FLOOR = 1e-8

_COMPACT_MIN = 4096


@dataclass(slots=True)
class Experience:
    """One replay unit: (s, gamma, w, r, w.r, a, s_new) plus an age stamp."""

    state: np.ndarray
    gamma: float
    weights: np.ndarray
    raw_reward: RewardVector
    scalar_reward: float
    action: int
    next_state: np.ndarray
    terminal: bool
    birth_update: int = 0


@dataclass(frozen=True)
class WhiteningStats:
    """Sample mean/covariance of the replay's raw rewards and Sigma^(-1/2)."""

    mean: np.ndarray
    covariance: np.ndarray
    inv_sqrt: np.ndarray


class ReplayBuffer:
    """Insertion-ordered store whose elements never outlive max_age updates."""

    def __init__(self, max_age: int):
        if max_age < 0:
            raise ValueError("max_age must be >= 0")
        self.max_age = max_age
        self.update_counter = 0
        self._items: list[Experience] = []
        self._rewards = np.empty((1024, 4))
        self._lo = 0

    def __len__(self) -> int:
        return len(self._items) - self._lo

    def __iter__(self):
        return iter(self._items[self._lo :])

    def __getitem__(self, i: int) -> Experience:
        n = len(self)
        if not -n <= i < n:
            raise IndexError(i)
        return self._items[self._lo + (i % n)]

    @property
    def reward_matrix(self) -> np.ndarray:
        """View of all live raw reward vectors, insertion order, shape (n, 4)."""
        return self._rewards[self._lo : len(self._items)]

    def push(self, experience: Experience) -> None:
        experience.birth_update = self.update_counter
        hi = len(self._items)
        if hi == len(self._rewards):
            grown = np.empty((max(2 * hi, 1024), 4))
            grown[:hi] = self._rewards
            self._rewards = grown
        self._rewards[hi] = experience.raw_reward
        self._items.append(experience)
        self._evict()

    def advance_updates(self, n: int) -> None:
        if n < 0:
            raise ValueError("n must be >= 0")
        self.update_counter += n
        self._evict()

    def _evict(self) -> None:
        items, counter, max_age = self._items, self.update_counter, self.max_age
        lo, hi = self._lo, len(items)
        while lo < hi and counter - items[lo].birth_update > max_age:
            lo += 1
        self._lo = lo
        if lo > _COMPACT_MIN and lo * 2 > hi:
            self._items = items[lo:]
            self._rewards = self._rewards[lo:hi].copy()
            self._lo = 0

    def sample_batch(self, batchsize: int, rng: np.random.Generator) -> list[Experience]:
        """Uniform sample without replacement; deterministic under the rng."""
        n = len(self)
        if batchsize < 1 or batchsize > n:
            raise BufferTooSmall(f"batchsize {batchsize} vs buffer length {n}")
        idx = rng.choice(n, size=batchsize, replace=False)
        lo = self._lo
        return [self._items[lo + int(i)] for i in idx]

    def dump(self, path: str | Path) -> None:
        """Debug dump: JSON array of experience records in insertion order."""
        records = [
            {
                "state": exp.state.tolist(),
                "gamma": exp.gamma,
                "weights": exp.weights.tolist(),
                "raw_reward": list(exp.raw_reward),
                "scalar_reward": exp.scalar_reward,
                "action": exp.action,
                "next_state": exp.next_state.tolist(),
                "terminal": exp.terminal,
                "birth_update": exp.birth_update,
            }
            for exp in self
        ]
        Path(path).write_text(json.dumps(records))


def compute_whitening(buffer: ReplayBuffer, eigen_floor: float = DEFAULT_EIGEN_FLOOR) -> WhiteningStats:
    """Covariance over all raw rewards in the replay and its inverse square root.

    Eigenvalues are clamped to at least eigen_floor before inversion, which
    bounds the amplification of near-degenerate components (POWC is sparse
    and regularly makes the covariance near-singular).
    """
    rewards = buffer.reward_matrix
    if len(rewards) < 2:
        raise BufferTooSmall("need at least 2 experiences to estimate covariance")
    mean = rewards.mean(axis=0)
    cov = np.cov(rewards, rowvar=False)
    eigvals, eigvecs = np.linalg.eigh(cov)
    eigvals = np.maximum(eigvals, eigen_floor)
    inv_sqrt = (eigvecs / np.sqrt(eigvals)) @ eigvecs.T
    inv_sqrt = 0.5 * (inv_sqrt + inv_sqrt.T)
    return WhiteningStats(mean=mean, covariance=cov, inv_sqrt=inv_sqrt)


def whiten_batch(batch: list[Experience], stats: WhiteningStats) -> list[Experience]:
    """Rescale a sampled batch: r~ = Sigma^(-1/2) r / ||w||, scalar = w . r~.

    Returns fresh experiences; the buffer's stored originals are untouched.
    """
    if not batch:
        return []
    raw = np.array([exp.raw_reward for exp in batch])
    weights = np.stack([exp.weights for exp in batch])
    norms = np.linalg.norm(weights, axis=1)
    rescaled = (raw @ stats.inv_sqrt) / norms[:, None]
    scalars = np.einsum("ij,ij->i", weights, rescaled)
    return [
        replace(exp, raw_reward=RewardVector(*rescaled[i]), scalar_reward=float(scalars[i]))
        for i, exp in enumerate(batch)
    ]
