"""Score functions trained on the masked observation.

Every scorer here sees only ``Z_train = (A, X, omega_train)``. The pairs it
scores are exactly those with ``omega_train == 0`` (calibration plus test), so
a scorer cannot tell calibration pairs from test pairs. Ties are broken by an
independent uniform key attached to every pair of the universe.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit

from .errors import ContractViolation, OptimizationError, ParameterError
from .graph import Observation, SamplingMatrix, pair_universe

SCORER_KINDS = ("common_neighbors", "erm_logistic")


@dataclass(frozen=True, eq=False)
class TrainMask:
    omega_train: np.ndarray


@dataclass(frozen=True)
class ScorerSpec:
    kind: str = "common_neighbors"
    k_hops: int = 1
    regularization: float = 1e-3
    max_iterations: int = 300
    learning_rate: float = 0.5
    use_covariates: bool = True

    def __post_init__(self):
        if self.kind not in SCORER_KINDS:
            raise ParameterError(f"scorer kind must be one of {SCORER_KINDS}, got {self.kind!r}")
        if int(self.k_hops) != self.k_hops or self.k_hops < 1:
            raise ParameterError(f"k_hops must be a positive integer, got {self.k_hops}")
        if self.regularization < 0:
            raise ParameterError("regularization must be non-negative")
        if self.max_iterations < 1:
            raise ParameterError("max_iterations must be positive")
        if not self.learning_rate > 0:
            raise ParameterError("learning_rate must be positive")

    def check_graph(self, n):
        if self.k_hops > n:
            raise ParameterError(f"k_hops={self.k_hops} exceeds the node count {n}")


@dataclass(frozen=True, eq=False)
class ScoreTable:
    """Scores and tie-breaking keys for a set of pairs, in lexicographic pair order."""

    n: int
    pairs: np.ndarray
    scores: np.ndarray
    tiebreak: np.ndarray
    _codes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        codes = pairs[:, 0] * self.n + pairs[:, 1]
        order = np.argsort(codes, kind="stable")
        object.__setattr__(self, "pairs", pairs[order])
        object.__setattr__(self, "scores", np.asarray(self.scores, dtype=float)[order])
        object.__setattr__(self, "tiebreak", np.asarray(self.tiebreak, dtype=float)[order])
        object.__setattr__(self, "_codes", codes[order])
        if len(np.unique(self._codes)) != len(self._codes):
            raise ContractViolation("duplicate pair in score table")

    def __len__(self):
        return len(self.pairs)

    def indices(self, pairs) -> np.ndarray:
        """Row positions of ``pairs``; raises if any pair has no score."""
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        codes = pairs[:, 0] * self.n + pairs[:, 1]
        pos = np.searchsorted(self._codes, codes)
        pos_clipped = np.minimum(pos, max(len(self._codes) - 1, 0))
        if len(self._codes) == 0:
            found = np.zeros(len(codes), dtype=bool)
        else:
            found = self._codes[pos_clipped] == codes
        if not found.all():
            i, j = pairs[np.argmin(found)]
            raise ContractViolation(f"no score for pair ({i + 1}, {j + 1})")
        return pos_clipped

    def lookup(self, pairs):
        idx = self.indices(pairs)
        return self.scores[idx], self.tiebreak[idx]

    def as_dict(self) -> dict:
        return {(int(i), int(j)): (float(s), float(t))
                for (i, j), s, t in zip(self.pairs, self.scores, self.tiebreak)}


def build_train_mask(omega, d_cal, directed=None) -> TrainMask:
    """Hide calibration pairs from training: ``omega_train = 0`` on ``d_cal``."""
    if isinstance(omega, SamplingMatrix):
        directed = omega.directed if directed is None else directed
        omega = omega.omega
    directed = bool(directed)
    omega = np.asarray(omega, dtype=np.int8)
    d_cal = np.asarray(d_cal, dtype=np.int64).reshape(-1, 2)
    if len(d_cal) and (omega[d_cal[:, 0], d_cal[:, 1]] != 1).any():
        raise ContractViolation("calibration set contains an unobserved pair")
    omega_train = omega.copy()
    omega_train[d_cal[:, 0], d_cal[:, 1]] = 0
    if not directed:
        omega_train[d_cal[:, 1], d_cal[:, 0]] = 0
    return TrainMask(omega_train=omega_train)


def apply_train_mask(obs: Observation, mask: TrainMask) -> Observation:
    """``Z_train``: the observation with calibration pairs treated as missing."""
    omega_train = mask.omega_train
    return Observation(a=obs.a * omega_train, x=obs.x, omega=omega_train, directed=obs.directed)


def draw_tiebreak_keys(n, rng) -> np.ndarray:
    """``n x n`` matrix of keys, uniform on the open interval (0, 1)."""
    return (rng.integers(0, 2**53, size=(n, n)) + 0.5) / 2.0**53


def masked_pairs(z_train: Observation) -> np.ndarray:
    pairs = pair_universe(z_train.n, z_train.directed)
    return pairs[z_train.omega[pairs[:, 0], pairs[:, 1]] == 0]


def _table(z_train, pairs, scores, keys):
    return ScoreTable(n=z_train.n, pairs=pairs, scores=scores,
                      tiebreak=keys[pairs[:, 0], pairs[:, 1]])


# --------------------------------------------------------------------- features

def adjacency_powers(a, k_hops):
    if k_hops < 1:
        raise ParameterError(f"k_hops must be at least 1, got {k_hops}")
    a = np.asarray(a, dtype=float)
    powers = [a]
    for _ in range(k_hops - 1):
        powers.append(powers[-1] @ a)
    return powers


def khop_feature_matrix(a, pairs, k_hops) -> np.ndarray:
    """Row ``r`` is ``(a_i, a_j, a^2_i, a^2_j, ..., a^K_i, a^K_j)`` for pair ``(i, j) = pairs[r]``."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    blocks = []
    for p in adjacency_powers(a, k_hops):
        blocks.append(p[pairs[:, 0]])
        blocks.append(p[pairs[:, 1]])
    return np.hstack(blocks)


def khop_features(a, pair, k_hops) -> np.ndarray:
    return khop_feature_matrix(a, [pair], k_hops)[0]


def neighborhood_means(a, x, k_hops) -> np.ndarray:
    """Mean covariate over nodes within ``k_hops`` hops (node itself excluded)."""
    n = a.shape[0]
    adj = np.asarray(a, dtype=bool)
    reach = adj.copy()
    frontier = adj.copy()
    for _ in range(k_hops - 1):
        frontier = (frontier.astype(np.int64) @ adj.astype(np.int64)) > 0
        reach |= frontier
    np.fill_diagonal(reach, False)
    counts = reach.sum(axis=1, keepdims=True)
    sums = reach.astype(float) @ x
    return np.divide(sums, counts, out=np.zeros((n, x.shape[1])), where=counts > 0)


def erm_feature_matrix(z_train: Observation, pairs, spec: ScorerSpec) -> np.ndarray:
    feats = [khop_feature_matrix(z_train.a, pairs, spec.k_hops)]
    if spec.use_covariates and z_train.x.shape[1] > 0:
        x = z_train.x
        nb = neighborhood_means(z_train.a, x, spec.k_hops)
        i, j = pairs[:, 0], pairs[:, 1]
        feats += [nb[i], nb[j], np.abs(x[i] - x[j])]
    return np.hstack(feats)


# --------------------------------------------------------------------- scorers

def score_common_neighbors(z_train: Observation, rng) -> ScoreTable:
    """Score ``a_i . a_j`` for every masked pair of ``z_train``."""
    keys = draw_tiebreak_keys(z_train.n, rng)
    pairs = masked_pairs(z_train)
    a = z_train.a.astype(np.int64)
    scores = np.einsum("ij,ij->i", a[pairs[:, 0]], a[pairs[:, 1]]).astype(float)
    return _table(z_train, pairs, scores, keys)


def logistic_loss_grad(theta, features, labels, regularization):
    """Mean cross-entropy plus ``regularization/2 * ||w||^2``; ``theta = (bias, w)``."""
    z = theta[0] + features @ theta[1:]
    y = labels
    loss = -np.mean(y * log_expit(z) + (1 - y) * log_expit(-z))
    loss += 0.5 * regularization * theta[1:] @ theta[1:]
    resid = (expit(z) - y) / len(y)
    grad = np.empty_like(theta)
    grad[0] = resid.sum()
    grad[1:] = features.T @ resid + regularization * theta[1:]
    return loss, grad


def fit_logistic(features, labels, spec: ScorerSpec):
    """Full-batch gradient descent from zero; returns ``(theta, loss_history)``."""
    theta = np.zeros(features.shape[1] + 1)
    history = []
    for it in range(spec.max_iterations):
        loss, grad = logistic_loss_grad(theta, features, labels, spec.regularization)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise OptimizationError(
                f"non-finite loss at iteration {it} (last finite loss "
                f"{history[-1] if history else 'n/a'})", iteration=it, loss=loss)
        history.append(loss)
        theta = theta - spec.learning_rate * grad
    return theta, np.array(history)


def standardize(train, other):
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    std[std == 0] = 1.0
    return (train - mean) / std, (other - mean) / std


def score_erm_logistic(z_train: Observation, spec: ScorerSpec, rng) -> ScoreTable:
    """Linear-logistic ERM trained on pairs with ``omega_train == 1`` only."""
    spec.check_graph(z_train.n)
    keys = draw_tiebreak_keys(z_train.n, rng)
    universe = pair_universe(z_train.n, z_train.directed)
    observed = z_train.omega[universe[:, 0], universe[:, 1]] == 1
    train_pairs, score_pairs = universe[observed], universe[~observed]
    labels = z_train.a[train_pairs[:, 0], train_pairs[:, 1]].astype(float)

    if len(labels) == 0 or labels.min() == labels.max():
        return _table(z_train, score_pairs, np.full(len(score_pairs), 0.5), keys)

    x_train, x_score = standardize(erm_feature_matrix(z_train, train_pairs, spec),
                                   erm_feature_matrix(z_train, score_pairs, spec))
    theta, _ = fit_logistic(x_train, labels, spec)
    scores = expit(theta[0] + x_score @ theta[1:])
    return _table(z_train, score_pairs, scores, keys)


def compute_scores(z_train: Observation, spec: ScorerSpec, rng) -> ScoreTable:
    if spec.kind == "common_neighbors":
        return score_common_neighbors(z_train, rng)
    return score_erm_logistic(z_train, spec, rng)
