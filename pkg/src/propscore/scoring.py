"""Proper scoring rules expressed as losses (lower is better).

Every function accepts a single probability vector of shape ``(K,)`` or a
batch of shape ``(n, K)``; outcome indices broadcast the same way.  Sums
over outcomes use compensated (Neumaier) summation so results do not
depend on the order in which outcomes are listed.

Each rule is tied to a convex generator ``phi`` on the simplex.  Its loss
for outcome ``i`` is ``-(phi(q) + grad_phi(q) . (e_i - q))``, its
divergence is the Bregman divergence of ``phi`` and its generalized
entropy is ``-phi(f)``, so that::

    expected_loss(rule, f, q) == divergence(f, q) + generalized_entropy(f)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import BoundaryError

__all__ = [
    "BregmanGenerator",
    "ScoringRule",
    "NEGENTROPY",
    "SQUARED_NORM",
    "EUCLIDEAN_NORM",
    "LOG",
    "QUADRATIC",
    "SPHERICAL",
    "RULES",
    "get_rule",
    "bregman_rule",
    "polynomial_generator",
    "compensated_sum",
    "as_probability_vector",
    "log_loss",
    "quadratic_loss",
    "spherical_loss",
    "bregman_loss",
    "kl_divergence",
    "squared_euclidean",
    "bregman_divergence",
    "generalized_entropy",
    "expected_loss",
]


def compensated_sum(x, axis=-1):
    """Neumaier-compensated sum of ``x`` along ``axis``."""
    x = np.moveaxis(np.asarray(x, dtype=float), axis, -1)
    total = np.zeros(x.shape[:-1])
    comp = np.zeros(x.shape[:-1])
    with np.errstate(invalid="ignore"):
        for k in range(x.shape[-1]):
            v = x[..., k]
            t = total + v
            big = np.abs(total) >= np.abs(v)
            comp += np.where(big, (total - t) + v, (v - t) + total)
            total = t
        out = total + comp
    # inf - inf in the correction term must not turn an infinite sum into nan
    out = np.where(np.isfinite(total), out, total)
    return out[()] if out.ndim == 0 else out


def as_probability_vector(weights, tol=1e-9):
    """Validate ``weights`` as point(s) on the simplex and return a float array.

    Vectors whose sum is within ``tol`` of one are rescaled to sum to one.
    """
    q = np.array(weights, dtype=float)
    if q.ndim not in (1, 2) or q.shape[-1] < 2:
        raise ValueError(f"expected shape (K,) or (n, K) with K >= 2, got {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ValueError("probabilities must be finite")
    if np.any(q < 0):
        raise ValueError("probabilities must be nonnegative")
    s = compensated_sum(q)
    if np.any(np.abs(s - 1.0) > tol):
        raise ValueError(f"probabilities must sum to 1 (got {s})")
    return q / np.expand_dims(s, -1)


def _take(values, i):
    i = np.asarray(i)
    if not np.issubdtype(i.dtype, np.integer):
        raise TypeError("outcome index must be an integer")
    K = values.shape[-1]
    if np.any(i < 0) or np.any(i >= K):
        raise IndexError(f"outcome index out of range for K={K}")
    if values.ndim == 1:
        if i.ndim:
            return values[i]
        return values[int(i)]
    i = np.broadcast_to(i, values.shape[:-1])
    return np.take_along_axis(values, i[..., None], axis=-1)[..., 0]


def _pair(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape[-1] != q.shape[-1]:
        raise ValueError(f"dimension mismatch: K={p.shape[-1]} vs K={q.shape[-1]}")
    return p, q


def _xlogx(p):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)


def _sumsq(q):
    return compensated_sum(q * q)


# Generators -----------------------------------------------------------------


@dataclass(frozen=True)
class BregmanGenerator:
    """A strictly convex function on the simplex together with its gradient.

    ``phi`` maps ``(..., K)`` arrays to ``(...)``; ``grad`` maps ``(..., K)``
    to ``(..., K)``.  ``interior_only`` marks generators whose gradient is
    undefined when a coordinate is zero.
    """

    name: str
    phi: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    interior_only: bool = False

    def check_point(self, q):
        if self.interior_only and np.any(np.asarray(q) <= 0):
            raise BoundaryError(
                f"gradient of generator {self.name!r} is undefined at zero coordinates"
            )


def _negentropy_grad(p):
    with np.errstate(divide="ignore"):
        return np.log(p) + 1.0


NEGENTROPY = BregmanGenerator(
    "negentropy", lambda p: compensated_sum(_xlogx(p)), _negentropy_grad, interior_only=True
)
SQUARED_NORM = BregmanGenerator("squared_norm", _sumsq, lambda p: 2.0 * np.asarray(p))
EUCLIDEAN_NORM = BregmanGenerator(
    "euclidean_norm",
    lambda p: np.sqrt(_sumsq(p)),
    lambda p: np.asarray(p) / np.sqrt(_sumsq(p))[..., None],
)


def polynomial_generator(coefficients, name="polynomial"):
    """Separable polynomial generator ``phi(p) = sum_j sum_m c[j, m] p_j**m``.

    ``coefficients`` has shape ``(K, degree + 1)``.  Strict convexity on the
    simplex requires ``c[j, m] >= 0`` for ``m >= 2`` with at least one
    positive entry per row; this is checked.
    """
    c = np.array(coefficients, dtype=float)
    if c.ndim != 2 or c.shape[1] < 3:
        raise ValueError("coefficients must have shape (K, degree + 1) with degree >= 2")
    if np.any(c[:, 2:] < 0) or np.any(c[:, 2:].sum(axis=1) <= 0):
        raise ValueError("higher-order coefficients must be nonnegative and not all zero")
    powers = np.arange(c.shape[1])
    dc = c[:, 1:] * powers[1:]

    def phi(p):
        p = np.asarray(p, dtype=float)
        terms = c * p[..., None] ** powers
        return compensated_sum(terms.reshape(*p.shape[:-1], -1))

    def grad(p):
        p = np.asarray(p, dtype=float)
        return compensated_sum(dc * p[..., None] ** powers[:-1])

    return BregmanGenerator(name, phi, grad)


# Losses ---------------------------------------------------------------------


def _log_loss_all(q):
    with np.errstate(divide="ignore"):
        return -np.log(q)


def _quadratic_loss_all(q):
    return -2.0 * q + _sumsq(q)[..., None]


def _spherical_loss_all(q):
    return -q / np.sqrt(_sumsq(q))[..., None]


def _bregman_loss_all(gen, q):
    gen.check_point(q)
    g = gen.grad(q)
    base = gen.phi(q) - compensated_sum(g * q)
    return -(base[..., None] + g)


def log_loss(q, i):
    """Logarithmic loss ``-ln q_i``; ``+inf`` when ``q_i == 0``.

    >>> float(log_loss([0.5, 0.5], 0))
    0.6931471805599453
    """
    return _take(_log_loss_all(np.asarray(q, dtype=float)), i)


def quadratic_loss(q, i):
    """Quadratic (Brier-type) loss ``-2 q_i + ||q||^2``, bounded in ``[-1, 1]``."""
    return _take(_quadratic_loss_all(np.asarray(q, dtype=float)), i)


def spherical_loss(q, i):
    """Spherical loss ``-q_i / ||q||_2``, bounded in ``[-1, 0]``."""
    return _take(_spherical_loss_all(np.asarray(q, dtype=float)), i)


def bregman_loss(gen, q, i):
    """Loss of the proper scoring rule induced by generator ``gen``.

    Equals ``-(phi(q) + grad_phi(q) . (e_i - q))``.  Raises
    :class:`BoundaryError` when the gradient is undefined at ``q``.
    """
    return _take(_bregman_loss_all(gen, np.asarray(q, dtype=float)), i)


# Divergences ----------------------------------------------------------------


def kl_divergence(p, q):
    """KL divergence ``sum_j p_j ln(p_j / q_j)`` with ``0 ln(0/q) = 0``.

    Returns ``+inf`` when ``q_j = 0`` for some ``p_j > 0``.
    """
    p, q = _pair(p, q)
    pos = p > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(pos, p * np.log(np.where(pos, p, 1.0) / q), 0.0)
    return compensated_sum(terms)


def squared_euclidean(p, q):
    """Squared Euclidean distance ``||p - q||^2``."""
    p, q = _pair(p, q)
    return _sumsq(p - q)


def bregman_divergence(gen, p, q):
    """``phi(p) - phi(q) - grad_phi(q) . (p - q)`` for generator ``gen``."""
    p, q = _pair(p, q)
    gen.check_point(q)
    return gen.phi(p) - gen.phi(q) - compensated_sum(gen.grad(q) * (p - q))


def _spherical_divergence(p, q):
    p, q = _pair(p, q)
    return np.sqrt(_sumsq(p)) - compensated_sum(p * q) / np.sqrt(_sumsq(q))


def _shannon_entropy(f):
    return -compensated_sum(_xlogx(np.asarray(f, dtype=float)))


# Rules ----------------------------------------------------------------------


@dataclass(frozen=True)
class ScoringRule:
    """A proper scoring rule with its divergence and generalized entropy.

    ``loss_all(q)`` returns the loss for every outcome at once, shape
    ``(..., K)``; ``divergence(p, q)`` and ``entropy(f)`` reduce the last
    axis.
    """

    name: str
    generator: BregmanGenerator
    loss_all: Callable[[np.ndarray], np.ndarray]
    divergence: Callable[[np.ndarray, np.ndarray], np.ndarray]
    entropy: Callable[[np.ndarray], np.ndarray]

    def loss(self, q, i):
        return _take(self.loss_all(np.asarray(q, dtype=float)), i)

    @property
    def is_logarithmic(self):
        return self.name == "log"

    def __repr__(self):
        return f"ScoringRule({self.name!r})"


LOG = ScoringRule("log", NEGENTROPY, _log_loss_all, kl_divergence, _shannon_entropy)
QUADRATIC = ScoringRule(
    "quadratic", SQUARED_NORM, _quadratic_loss_all, squared_euclidean, lambda f: -_sumsq(np.asarray(f, dtype=float))
)
SPHERICAL = ScoringRule(
    "spherical",
    EUCLIDEAN_NORM,
    _spherical_loss_all,
    _spherical_divergence,
    lambda f: -np.sqrt(_sumsq(np.asarray(f, dtype=float))),
)
RULES = {rule.name: rule for rule in (LOG, QUADRATIC, SPHERICAL)}


def get_rule(rule):
    """Look up a built-in rule by name; ScoringRule instances pass through."""
    if isinstance(rule, ScoringRule):
        return rule
    try:
        return RULES[rule]
    except KeyError:
        raise ValueError(f"unknown scoring rule {rule!r}; choose from {sorted(RULES)}") from None


def bregman_rule(gen, name=None):
    """Build the proper scoring rule induced by an arbitrary generator."""

    def loss_all(q):
        return _bregman_loss_all(gen, q)

    def divergence(p, q):
        return bregman_divergence(gen, p, q)

    def entropy(f):
        return -gen.phi(np.asarray(f, dtype=float))

    return ScoringRule(name or f"bregman:{gen.name}", gen, loss_all, divergence, entropy)


def generalized_entropy(rule, f):
    """Model-independent term ``-phi(f)`` of the expected-loss decomposition.

    Shannon entropy for the log rule, ``-||f||^2`` for quadratic and
    ``-||f||_2`` for spherical.
    """
    return get_rule(rule).entropy(f)


def expected_loss(rule, f, q):
    """Expected loss ``sum_j f_j loss(q, j)`` when outcomes are drawn from ``f``.

    Outcomes with ``f_j == 0`` contribute nothing, even when their loss is
    infinite.
    """
    rule = get_rule(rule)
    f, q = _pair(f, q)
    losses = rule.loss_all(q)
    pos = f > 0
    with np.errstate(invalid="ignore"):
        terms = np.where(pos, f * np.where(pos, losses, 0.0), 0.0)
    return compensated_sum(terms)
