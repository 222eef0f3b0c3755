"""Augmented action spaces and the expert similarity matrices that go with them.

Original actions always occupy indices ``[0, |A|)``. The extra actions are
laid out in blocks of ``|A|``, so augmented index ``j`` of a duplicate or
semi-duplicate space realizes base action ``j % |A|``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple, Union

import numpy as np

from .envs import ActionRealization, Env, StepResult

KINDS = ("none", "duplicate", "semi_duplicate", "random", "noop")
RANDOM_K_MODES = ("clique", "identity")
SEMI_DUPLICATE_SETS = 4
RANDOM_SETS = 4


@dataclass(frozen=True)
class Deterministic:
    base_action: int
    magnitude: float = 1.0


@dataclass(frozen=True)
class RandomUniform:
    """Executes one of ``choices`` base actions, drawn uniformly at step time."""

    choices: int


@dataclass(frozen=True)
class Noop:
    pass


TableEntry = Union[Deterministic, RandomUniform, Noop]


@dataclass(frozen=True)
class AugmentationSpec:
    kind: str = "none"
    n: int = 1
    h: float = 1.0
    random_k: str = "clique"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown augmentation kind {self.kind!r}; choose from {KINDS}")
        if self.n < 1:
            raise ValueError(f"augmentation multiplier n must be >= 1, got {self.n}")
        if not 0.0 <= self.h <= 1.0:
            raise ValueError(f"similarity score h must lie in [0, 1], got {self.h}")
        if self.random_k not in RANDOM_K_MODES:
            raise ValueError(f"random_k must be one of {RANDOM_K_MODES}, got {self.random_k!r}")


class SimilarityMatrix:
    """Symmetric matrix of action similarity scores with a unit diagonal."""

    def __init__(self, entries):
        k = np.array(entries, dtype=np.float64)
        if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] < 1:
            raise ValueError(f"similarity matrix must be square and non-empty, got shape {k.shape}")
        if not np.array_equal(k, k.T):
            raise ValueError("similarity matrix must be symmetric")
        if np.any(k < 0.0) or np.any(k > 1.0):
            raise ValueError("similarity scores must lie in [0, 1]")
        if not np.all(np.diag(k) == 1.0):
            raise ValueError("similarity matrix must have a unit diagonal")
        k.setflags(write=False)
        self.entries = k

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def __getitem__(self, idx):
        return self.entries[idx]

    def __eq__(self, other):
        return isinstance(other, SimilarityMatrix) and np.array_equal(self.entries, other.entries)

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.entries, np.eye(self.size)))

    def to_text(self) -> str:
        """Rows of space-separated decimals, one row per line."""
        return "".join(" ".join(repr(float(v)) for v in row) + "\n" for row in self.entries)

    @classmethod
    def from_text(cls, text: str) -> "SimilarityMatrix":
        rows = [[float(v) for v in line.split()] for line in text.splitlines() if line.strip()]
        return cls(rows)

    def __repr__(self):
        return f"SimilarityMatrix(size={self.size})"


def identity_similarity(size: int) -> SimilarityMatrix:
    if size < 1:
        raise ValueError("size must be >= 1")
    return SimilarityMatrix(np.eye(size))


def _clique_matrix(groups: List[int]) -> np.ndarray:
    """1 where two indices share a group label (label -1 means singleton)."""
    g = np.asarray(groups)
    k = (g[:, None] == g[None, :]) & (g[:, None] >= 0)
    k = k.astype(np.float64)
    np.fill_diagonal(k, 1.0)
    return k


def build_augmentation(spec: AugmentationSpec,
                       base_action_count: int) -> Tuple[List[TableEntry], SimilarityMatrix]:
    """Action table and expert similarity matrix for ``spec``."""
    n_base = int(base_action_count)
    if n_base < 1:
        raise ValueError("base_action_count must be >= 1")
    originals: List[TableEntry] = [Deterministic(i, 1.0) for i in range(n_base)]

    if spec.kind == "none":
        return originals, identity_similarity(n_base)

    if spec.kind == "duplicate":
        table = [Deterministic(j % n_base, 1.0) for j in range(spec.n * n_base)]
        return table, SimilarityMatrix(_clique_matrix([j % n_base for j in range(len(table))]))

    if spec.kind == "semi_duplicate":
        size = (1 + SEMI_DUPLICATE_SETS) * n_base
        table = originals + [Deterministic(j % n_base, spec.h) for j in range(n_base, size)]
        base = np.arange(size) % n_base
        is_orig = np.arange(size) < n_base
        same_base = base[:, None] == base[None, :]
        k = np.zeros((size, size))
        # reduced copies of one base action are identical realizations
        k[same_base & ~is_orig[:, None] & ~is_orig[None, :]] = 1.0
        k[same_base & (is_orig[:, None] ^ is_orig[None, :])] = spec.h
        np.fill_diagonal(k, 1.0)
        return table, SimilarityMatrix(k)

    if spec.kind == "random":
        table = originals + [RandomUniform(n_base) for _ in range(RANDOM_SETS * n_base)]
        if spec.random_k == "identity":
            return table, identity_similarity(len(table))
        groups = [-1] * n_base + [0] * (RANDOM_SETS * n_base)
        return table, SimilarityMatrix(_clique_matrix(groups))

    # noop
    table = originals + [Noop() for _ in range(spec.n * n_base)]
    groups = [-1] * n_base + [0] * (spec.n * n_base)
    return table, SimilarityMatrix(_clique_matrix(groups))


def resolve(table: List[TableEntry], j: int, rng: np.random.Generator) -> ActionRealization:
    """Concrete base action and magnitude for augmented action ``j``."""
    entry = table[j]
    if isinstance(entry, Deterministic):
        return ActionRealization(entry.base_action, entry.magnitude)
    if isinstance(entry, RandomUniform):
        return ActionRealization(int(rng.integers(entry.choices)), 1.0)
    return ActionRealization(0, 0.0)


class AugmentedEnv:
    """A base environment seen through an augmented action table."""

    def __init__(self, base: Env, table: List[TableEntry], sampling_seed: int = 0):
        n_base = base.spec.base_action_count
        if list(table[:n_base]) != [Deterministic(i, 1.0) for i in range(n_base)]:
            raise ValueError("augmented table must start with the original actions in order")
        self.base = base
        self.table = list(table)
        self.rng = np.random.default_rng(sampling_seed)
        # realizations of deterministic entries are built once
        self._fixed = [resolve(self.table, j, self.rng)
                       if isinstance(e, (Deterministic, Noop)) else None
                       for j, e in enumerate(self.table)]

    @classmethod
    def from_spec(cls, base: Env, spec: AugmentationSpec, sampling_seed: int = 0):
        table, k = build_augmentation(spec, base.spec.base_action_count)
        return cls(base, table, sampling_seed), k

    @property
    def spec(self):
        return self.base.spec

    @property
    def action_count(self) -> int:
        return len(self.table)

    def reset(self, seed: int) -> np.ndarray:
        return self.base.reset(seed)

    def realize(self, j: int) -> ActionRealization:
        if not 0 <= j < len(self.table):
            raise IndexError(f"augmented action {j} out of range for {len(self.table)} actions")
        fixed = self._fixed[j]
        if fixed is not None:
            return fixed
        return resolve(self.table, j, self.rng)

    def step(self, j: int) -> StepResult:
        return self.base.step(self.realize(j))
