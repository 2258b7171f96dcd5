"""Complete and observed graph data, synthetic generators and missingness.

Pairs are stored as integer arrays of shape ``(k, 2)`` with 0-based node
indices, sorted lexicographically. Self-loops are never part of the pair
universe. For undirected graphs only the strict upper triangle ``i < j`` is
iterated, so every unordered pair carries exactly one sampling draw, one score
and one p-value.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ContractViolation, ParameterError


def _check_binary(name, mat):
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ContractViolation(f"{name} must be a square matrix, got shape {mat.shape}")
    if not np.isin(mat, (0, 1)).all():
        raise ContractViolation(f"{name} entries must be 0 or 1")


def _check_undirected(name, mat):
    if not np.array_equal(mat, mat.T):
        raise ContractViolation(f"{name} must be symmetric for an undirected graph")


def _check_probability(name, value):
    if not (0.0 <= value <= 1.0):
        raise ParameterError(f"{name} must lie in [0, 1], got {value}")


def pair_universe(n: int, directed: bool = False) -> np.ndarray:
    """All candidate node pairs: ``i < j`` if undirected, ``i != j`` otherwise."""
    if directed:
        i, j = np.nonzero(~np.eye(n, dtype=bool))
    else:
        i, j = np.triu_indices(n, k=1)
    return np.column_stack([i, j]).astype(np.int64)


def universe_size(n: int, directed: bool = False) -> int:
    return n * (n - 1) if directed else n * (n - 1) // 2


def pair_mask(n: int, pairs: np.ndarray, directed: bool = False) -> np.ndarray:
    """Boolean ``n x n`` indicator of ``pairs`` (symmetrised when undirected)."""
    mask = np.zeros((n, n), dtype=bool)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    mask[pairs[:, 0], pairs[:, 1]] = True
    if not directed:
        mask[pairs[:, 1], pairs[:, 0]] = True
    return mask


def as_pair_set(pairs) -> set:
    return {(int(i), int(j)) for i, j in np.asarray(pairs).reshape(-1, 2)}


@dataclass(frozen=True, eq=False)
class CompleteGraphData:
    """Ground truth adjacency ``a_star`` with node covariates ``x``."""

    a_star: np.ndarray
    x: np.ndarray
    directed: bool = False

    def __post_init__(self):
        a_star = np.asarray(self.a_star, dtype=np.int8)
        x = np.asarray(self.x, dtype=float)
        _check_binary("a_star", a_star)
        n = a_star.shape[0]
        if n < 1:
            raise ContractViolation("graph must have at least one node")
        if x.ndim == 1 and x.size == 0:
            x = x.reshape(n, 0)
        if x.ndim != 2 or x.shape[0] != n:
            raise ContractViolation(f"covariates must have {n} rows, got shape {x.shape}")
        if np.diagonal(a_star).any():
            raise ContractViolation("self-loops are not allowed")
        if not self.directed:
            _check_undirected("a_star", a_star)
        object.__setattr__(self, "a_star", a_star)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.a_star.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True, eq=False)
class SamplingMatrix:
    """Indicator of pairs whose true/false status is observed."""

    omega: np.ndarray
    directed: bool = False

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=np.int8)
        _check_binary("omega", omega)
        if not self.directed:
            _check_undirected("omega", omega)
        object.__setattr__(self, "omega", omega)


@dataclass(frozen=True, eq=False)
class Observation:
    """The statistician's input: observed adjacency, covariates, sampling matrix."""

    a: np.ndarray
    x: np.ndarray
    omega: np.ndarray
    directed: bool = False

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.int8)
        omega = np.asarray(self.omega, dtype=np.int8)
        x = np.asarray(self.x, dtype=float)
        _check_binary("a", a)
        _check_binary("omega", omega)
        if a.shape != omega.shape:
            raise ContractViolation(f"a has shape {a.shape} but omega has shape {omega.shape}")
        n = a.shape[0]
        if x.ndim == 1 and x.size == 0:
            x = x.reshape(n, 0)
        if x.ndim != 2 or x.shape[0] != n:
            raise ContractViolation(f"covariates must have {n} rows, got shape {x.shape}")
        if (a > omega).any():
            raise ContractViolation("an observed edge (a=1) must have omega=1")
        if not self.directed:
            _check_undirected("a", a)
            _check_undirected("omega", omega)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.a.shape[0]


@dataclass(frozen=True, eq=False)
class EdgePartition:
    """Index sets over the pair universe.

    ``h0`` and ``h1`` are ``None`` unless ground truth was supplied.
    """

    d_obs: np.ndarray
    d_test: np.ndarray
    d0: np.ndarray
    d1: np.ndarray
    h0: Optional[np.ndarray] = None
    h1: Optional[np.ndarray] = None

    @property
    def k0(self) -> int:
        return len(self.d0)

    @property
    def m(self) -> int:
        return len(self.d_test)

    @property
    def m0(self) -> Optional[int]:
        return None if self.h0 is None else len(self.h0)

    @property
    def has_ground_truth(self) -> bool:
        return self.h0 is not None


def generate_sbm(n, block_count, within_prob, between_prob, covariate_dim, rng,
                 signal=2.0) -> CompleteGraphData:
    """Undirected stochastic block model with block-informative covariates.

    Nodes are split into ``block_count`` contiguous, nearly equal blocks. A
    node in block ``b`` gets covariate ``signal * e_{b mod d} + N(0, I_d)``.
    """
    if n < 1:
        raise ParameterError(f"n must be positive, got {n}")
    if not (1 <= block_count <= n):
        raise ParameterError(f"block_count must lie in [1, n], got {block_count}")
    _check_probability("within_prob", within_prob)
    _check_probability("between_prob", between_prob)
    if covariate_dim < 0:
        raise ParameterError(f"covariate_dim must be non-negative, got {covariate_dim}")

    blocks = np.arange(n) * block_count // n
    same = blocks[:, None] == blocks[None, :]
    probs = np.where(same, within_prob, between_prob)
    upper = np.triu(rng.random((n, n)) < probs, k=1)
    a_star = (upper | upper.T).astype(np.int8)

    means = np.zeros((n, covariate_dim))
    if covariate_dim > 0:
        means[np.arange(n), blocks % covariate_dim] = signal
    x = means + rng.standard_normal((n, covariate_dim))
    return CompleteGraphData(a_star=a_star, x=x, directed=False)


def sample_omega(g: CompleteGraphData, w0, w1, rng) -> SamplingMatrix:
    """Double standard sampling: observe a pair w.p. ``w1`` if it is an edge, else ``w0``."""
    _check_probability("w0", w0)
    _check_probability("w1", w1)
    n = g.n
    probs = np.where(g.a_star == 1, w1, w0)
    draws = rng.random((n, n)) < probs
    if g.directed:
        omega = draws
    else:
        upper = np.triu(draws, k=1)
        omega = upper | upper.T
    omega = omega.astype(np.int8)
    np.fill_diagonal(omega, 0)
    return SamplingMatrix(omega=omega, directed=g.directed)


def observe(g: CompleteGraphData, omega) -> Observation:
    if isinstance(omega, SamplingMatrix):
        omega = omega.omega
    omega = np.asarray(omega, dtype=np.int8)
    if omega.shape != g.a_star.shape:
        raise ContractViolation(
            f"omega has shape {omega.shape} but the graph has {g.a_star.shape}")
    return Observation(a=omega * g.a_star, x=g.x, omega=omega, directed=g.directed)


def partition_edges(obs: Observation, ground_truth: Optional[CompleteGraphData] = None
                    ) -> EdgePartition:
    pairs = pair_universe(obs.n, obs.directed)
    i, j = pairs[:, 0], pairs[:, 1]
    sampled = obs.omega[i, j] == 1
    edge = obs.a[i, j] == 1
    h0 = h1 = None
    if ground_truth is not None:
        if ground_truth.a_star.shape != obs.a.shape:
            raise ContractViolation("ground truth and observation differ in size")
        true_edge = ground_truth.a_star[i, j] == 1
        h0 = pairs[~sampled & ~true_edge]
        h1 = pairs[~sampled & true_edge]
    return EdgePartition(
        d_obs=pairs[sampled],
        d_test=pairs[~sampled],
        d0=pairs[sampled & ~edge],
        d1=pairs[sampled & edge],
        h0=h0,
        h1=h1,
    )
