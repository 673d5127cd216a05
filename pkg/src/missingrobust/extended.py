"""Extended observation space: real coordinates plus a missing token.

A scalar observation is either a finite float or the token ``STAR``.  Bulk
data lives in :class:`ExtendedArray`, a dense value matrix paired with a
boolean observation mask.  Missingness is a tag (the mask), never a sentinel
value in the data channel: NaN is rejected everywhere, so equality and
ordering are total on observed values.  Masked payload entries are
canonicalised to 0.0 and never read.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError, SizeError


class _MissingToken:
    """Singleton tag for an unobserved coordinate."""

    __slots__ = ()
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "STAR"


STAR = _MissingToken()


def is_missing(x) -> bool:
    return x is STAR


def _check_finite_scalar(x) -> float:
    v = float(x)
    if not np.isfinite(v):
        raise DomainError(f"observed values must be finite, got {x!r}")
    return v


class ExtendedArray:
    """``n x d`` sample over the extended space.

    ``values`` holds the payload (0.0 at masked entries), ``observed`` the
    mask.  Both arrays are read-only after construction.
    """

    __slots__ = ("values", "observed")

    def __init__(self, values, observed):
        values = np.array(values, dtype=float)
        observed = np.array(observed, dtype=bool)
        if values.ndim == 1:
            values = values[:, None]
        if observed.ndim == 1:
            observed = observed[:, None]
        if values.ndim != 2 or observed.shape != values.shape:
            raise DimensionError(
                f"values {values.shape} and observed {observed.shape} must be "
                "matching n x d arrays"
            )
        if values.shape[1] < 1:
            raise DimensionError("dimension d must be at least 1")
        if not np.all(np.isfinite(values[observed])):
            raise DomainError("observed values must be finite (no NaN/inf)")
        values = np.where(observed, values, 0.0)
        values.setflags(write=False)
        observed.setflags(write=False)
        self.values = values
        self.observed = observed

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def row(self, i: int) -> tuple:
        return tuple(
            self.values[i, j] if self.observed[i, j] else STAR
            for j in range(self.d)
        )

    def rows(self):
        for i in range(self.n):
            yield self.row(i)

    def fully_observed(self) -> np.ndarray:
        """Boolean mask of rows with every coordinate observed."""
        return self.observed.all(axis=1)

    def complete_rows(self) -> np.ndarray:
        """Values of the fully observed rows, shape (m, d)."""
        return self.values[self.fully_observed()]

    def univariate(self) -> tuple[np.ndarray, np.ndarray]:
        """(values, observed) as flat vectors; requires d = 1."""
        if self.d != 1:
            raise DimensionError(f"expected univariate data, got d={self.d}")
        return self.values[:, 0], self.observed[:, 0]

    @classmethod
    def from_rows(cls, rows, d: int | None = None) -> "ExtendedArray":
        rows = list(rows)
        if not rows:
            if d is None:
                raise DimensionError("cannot infer d from an empty sample")
            return cls(np.zeros((0, d)), np.zeros((0, d), dtype=bool))
        first = rows[0]
        scalar = not isinstance(first, (tuple, list, np.ndarray))
        if scalar:
            rows = [(r,) for r in rows]
        if d is None:
            d = len(rows[0])
        vals = np.zeros((len(rows), d))
        obs = np.zeros((len(rows), d), dtype=bool)
        for i, r in enumerate(rows):
            if len(r) != d:
                raise DimensionError(f"row {i} has length {len(r)}, expected {d}")
            for j, x in enumerate(r):
                if is_missing(x):
                    continue
                vals[i, j] = _check_finite_scalar(x)
                obs[i, j] = True
        return cls(vals, obs)

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other) -> bool:
        if not isinstance(other, ExtendedArray):
            return NotImplemented
        return (
            self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.observed, other.observed)
        )

    def __repr__(self) -> str:
        return f"ExtendedArray(n={self.n}, d={self.d}, observed={int(self.observed.sum())})"


def as_univariate(sample) -> tuple[np.ndarray, np.ndarray]:
    """Coerce a univariate sample to (values, observed) vectors.

    Accepts an ExtendedArray with d = 1 or any iterable of floats and STARs.
    """
    if isinstance(sample, ExtendedArray):
        return sample.univariate()
    vals, obs = [], []
    for x in sample:
        if is_missing(x):
            vals.append(0.0)
            obs.append(False)
        else:
            vals.append(_check_finite_scalar(x))
            obs.append(True)
    return np.asarray(vals, dtype=float), np.asarray(obs, dtype=bool)


def make_observation(x, omega) -> tuple:
    """Mask the vector ``x`` with the 0/1 revelation pattern ``omega``.

    Coordinate j of the result is x_j where omega_j = 1 and STAR where
    omega_j = 0.
    """
    x = list(x)
    omega = list(omega)
    if len(x) != len(omega):
        raise DimensionError(
            f"value length {len(x)} != pattern length {len(omega)}"
        )
    out = []
    for xj, wj in zip(x, omega):
        if wj not in (0, 1, False, True):
            raise DomainError(f"revelation pattern entries must be 0/1, got {wj!r}")
        out.append(_check_finite_scalar(xj) if wj else STAR)
    return tuple(out)


def observed_indices(sample) -> tuple[int, ...]:
    """Indices of fully observed rows (or observed scalars), ascending.

    A vector row counts as observed only when every coordinate is observed.
    """
    if isinstance(sample, ExtendedArray):
        return tuple(int(i) for i in np.flatnonzero(sample.fully_observed()))
    out = []
    for i, r in enumerate(sample):
        if isinstance(r, (tuple, list, np.ndarray)):
            if all(not is_missing(x) for x in r):
                out.append(i)
        elif not is_missing(r):
            out.append(i)
    return tuple(out)


@dataclass(frozen=True)
class PatternDistribution:
    """Distribution over revelation patterns, stored as sparse support.

    ``support`` lists distinct subsets of {0, ..., d-1} (observed index
    sets); ``probs`` must sum to 1 within 1e-12 and are renormalised exactly
    on construction.
    """

    d: int
    support: tuple[frozenset, ...]
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.d < 1:
            raise DimensionError("d must be at least 1")
        support = tuple(frozenset(int(j) for j in s) for s in self.support)
        if len(set(support)) != len(support):
            raise DomainError("pattern support subsets must be distinct")
        for s in support:
            if any(j < 0 or j >= self.d for j in s):
                raise DomainError(f"pattern {sorted(s)} out of range for d={self.d}")
        probs = np.asarray(self.probs, dtype=float)
        if len(probs) != len(support) or np.any(probs < 0):
            raise DomainError("probs must be nonnegative, one per subset")
        total = probs.sum()
        if abs(total - 1.0) > 1e-12:
            raise DomainError(f"pattern probabilities sum to {total}, not 1")
        probs = probs / total
        probs.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)

    def masks(self) -> np.ndarray:
        """Support patterns as a (K, d) boolean array, in support order."""
        out = np.zeros((len(self.support), self.d), dtype=bool)
        for k, s in enumerate(self.support):
            out[k, list(s)] = True
        return out

    def marginal(self, j: int) -> float:
        return float(sum(p for s, p in zip(self.support, self.probs) if j in s))

    def marginals(self) -> np.ndarray:
        return np.array([self.marginal(j) for j in range(self.d)])

    def pair_prob(self, j: int, k: int) -> float:
        return float(
            sum(p for s, p in zip(self.support, self.probs) if j in s and k in s)
        )

    def cumprobs(self) -> np.ndarray:
        return np.cumsum(self.probs)

    def sample_masks(self, stream, n: int) -> np.ndarray:
        """n pattern draws as an (n, d) boolean array; consumes n uniforms."""
        idx = stream.categorical(self.cumprobs(), n)
        return self.masks()[idx]

    @staticmethod
    def all_or_nothing(d: int, q: float) -> "PatternDistribution":
        if not 0.0 <= q <= 1.0:
            raise DomainError(f"q must lie in [0, 1], got {q}")
        full = frozenset(range(d))
        if q == 1.0:
            return PatternDistribution(d, (full,), np.array([1.0]))
        if q == 0.0:
            return PatternDistribution(d, (frozenset(),), np.array([1.0]))
        return PatternDistribution(d, (full, frozenset()), np.array([q, 1.0 - q]))

    @staticmethod
    def independent(d: int, qs) -> "PatternDistribution":
        """Independent per-coordinate observation; enumerates all 2^d patterns."""
        if d > 16:
            raise SizeError("independent pattern enumeration capped at d <= 16")
        qs = np.broadcast_to(np.asarray(qs, dtype=float), (d,))
        if np.any((qs < 0) | (qs > 1)):
            raise DomainError("per-coordinate probabilities must lie in [0, 1]")
        support, probs = [], []
        for bits in itertools.product((0, 1), repeat=d):
            p = 1.0
            for j, b in enumerate(bits):
                p *= qs[j] if b else (1.0 - qs[j])
            if p > 0.0:
                support.append(frozenset(j for j, b in enumerate(bits) if b))
                probs.append(p)
        return PatternDistribution(d, tuple(support), np.array(probs))

    @staticmethod
    def always(d: int) -> "PatternDistribution":
        return PatternDistribution.all_or_nothing(d, 1.0)


def effective_contamination(epsilon: float, q: float) -> float:
    """Effective contamination level: epsilon / (q (1 - epsilon))."""
    if not 0.0 <= epsilon < 1.0:
        raise DomainError(f"epsilon must lie in [0, 1), got {epsilon}")
    if not 0.0 < q <= 1.0:
        raise DomainError(f"q must lie in (0, 1], got {q}")
    return epsilon / (q * (1.0 - epsilon))


@dataclass(frozen=True)
class ContaminationParams:
    """Contamination fraction plus observation rates.

    ``q_or_pi`` is either a scalar observation probability in (0, 1] or a
    PatternDistribution.  For a pattern distribution the scalar ``q`` used in
    the effective level is the probability of the fully observed pattern.
    """

    epsilon: float
    q_or_pi: object

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise DomainError(f"epsilon must lie in [0, 1), got {self.epsilon}")
        if not isinstance(self.q_or_pi, PatternDistribution):
            q = float(self.q_or_pi)
            if not 0.0 < q <= 1.0:
                raise DomainError(f"q must lie in (0, 1], got {q}")

    @property
    def q(self) -> float:
        if isinstance(self.q_or_pi, PatternDistribution):
            pi = self.q_or_pi
            return pi.pair_prob(0, 0) if pi.d == 1 else _full_pattern_prob(pi)
        return float(self.q_or_pi)

    @property
    def kappa(self) -> float:
        return effective_contamination(self.epsilon, self.q)


def _full_pattern_prob(pi: PatternDistribution) -> float:
    full = frozenset(range(pi.d))
    for s, p in zip(pi.support, pi.probs):
        if s == full:
            return float(p)
    return 0.0


def effective_rank(A: np.ndarray) -> float:
    """trace(A) / ||A||_op, with 0/0 taken as 0."""
    A = np.asarray(A, dtype=float)
    op = np.linalg.norm(A, 2) if A.size else 0.0
    if op == 0.0:
        return 0.0
    return float(np.trace(A)) / float(op)


def sigma_ipw(Sigma: np.ndarray, pi: PatternDistribution) -> np.ndarray:
    """Inverse-propensity-weighted covariance.

    Entry (j, k) is q_jk / (q_j q_k) * Sigma_jk where q_jk is the probability
    that coordinates j and k are observed together.  The diagonal reduces to
    Sigma_jj / q_j.  The result is symmetrised exactly; a negative eigenvalue
    beyond -1e-8 * ||.||_op triggers a warning, not an error.
    """
    Sigma = np.asarray(Sigma, dtype=float)
    d = Sigma.shape[0]
    if Sigma.shape != (d, d):
        raise DimensionError(f"Sigma must be square, got {Sigma.shape}")
    if not np.allclose(Sigma, Sigma.T, atol=1e-12, rtol=0.0):
        raise DomainError("Sigma must be symmetric")
    if pi.d != d:
        raise DimensionError(f"pattern dimension {pi.d} != Sigma dimension {d}")
    qj = pi.marginals()
    if np.any(qj <= 0.0):
        j = int(np.argmin(qj))
        raise DomainError(f"coordinate never observed: q_{j} = 0")
    Q = np.empty((d, d))
    for j in range(d):
        for k in range(j, d):
            Q[j, k] = Q[k, j] = pi.pair_prob(j, k)
    out = Sigma * Q / np.outer(qj, qj)
    out = 0.5 * (out + out.T)
    op = np.linalg.norm(out, 2)
    if op > 0.0:
        lam_min = float(np.linalg.eigvalsh(out)[0])
        if lam_min < -1e-8 * op:
            warnings.warn(
                f"weighted covariance has negative eigenvalue {lam_min:.3e} "
                f"(operator norm {op:.3e})",
                RuntimeWarning,
                stacklevel=2,
            )
    return out
