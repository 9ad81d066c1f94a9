"""Kth nearest-neighbour distance law and its two-component mixture.

For a homogeneous Poisson process of intensity ``lam`` the squared Kth
nearest-neighbour distance is Gamma(K, rate = lam * pi). A pattern made of a
dense feature superimposed on sparse clutter therefore gives distances that
follow a two-component mixture, fitted here by EM. Component 1 is always the
denser one (the feature).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.special import expit, gammaln

from .errors import (
    DegenerateComponent,
    DegenerateDistances,
    InvalidParams,
    NonFinite,
)
from .pattern import KnnDistances

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 1000


@dataclass(frozen=True)
class NnDensityParams:
    k: int
    lam: float

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise InvalidParams(f"k must be a positive integer, got {self.k!r}")
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise InvalidParams(f"intensity must be positive, got {self.lam!r}")


@dataclass(frozen=True)
class EMConfig:
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        if not self.tol > 0:
            raise InvalidParams("tol must be positive")
        if self.max_iter < 1:
            raise InvalidParams("max_iter must be at least 1")


@dataclass(frozen=True)
class MixtureFit:
    """Result of :func:`em_fit`.

    ``delta[i]`` is the posterior probability that point ``i`` is a feature
    point. ``loglik_trace[0]`` is the log-likelihood at the starting values,
    followed by one entry per EM step.
    """

    k: int
    lambda1: float
    lambda2: float
    p: float
    delta: np.ndarray
    loglik_trace: np.ndarray
    converged: bool
    n_iter: int

    @property
    def loglik(self) -> float:
        return float(self.loglik_trace[-1])


@dataclass(frozen=True)
class Labels:
    is_feature: np.ndarray

    def __len__(self):
        return len(self.is_feature)

    @property
    def n_feature(self) -> int:
        return int(np.count_nonzero(self.is_feature))


def nn_logdensity(x, k: int, lam: float) -> np.ndarray:
    """Log of :func:`nn_density`; ``-inf`` at ``x == 0``."""
    NnDensityParams(k, lam)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise InvalidParams("distances must be non-negative")
    rate = lam * np.pi
    with np.errstate(divide="ignore"):
        logx = np.log(x)
    return (
        np.log(2.0)
        + k * np.log(rate)
        + (2 * k - 1) * logx
        - rate * x * x
        - gammaln(k)
    )


def nn_density(x, k: int, lam: float):
    """Density of the ``k``-th nearest-neighbour distance in a Poisson process.

    ``f(x) = 2 (lam pi)^k x^(2k-1) exp(-lam pi x^2) / (k-1)!``, evaluated in
    the log domain so that large ``k`` does not overflow.

    >>> round(float(nn_density(1.0, 1, 1 / np.pi)), 6)
    0.735759
    """
    out = np.exp(nn_logdensity(x, k, lam))
    return float(out) if np.ndim(out) == 0 else out


def _as_distances(d) -> Tuple[np.ndarray, int]:
    if isinstance(d, KnnDistances):
        return np.asarray(d.d, dtype=float), d.k
    raise TypeError("expected KnnDistances")


def lambda_mle(d: KnnDistances) -> float:
    """Maximum-likelihood intensity ``n K / (pi sum d_i^2)`` for one component."""
    x, k = _as_distances(d)
    ss = float(np.sum(x * x))
    if len(x) == 0 or ss == 0.0:
        raise DegenerateDistances("sum of squared distances is zero")
    return len(x) * k / (np.pi * ss)


def mixture_loglik(d2: np.ndarray, k: int, lambda1: float, lambda2: float, p: float) -> float:
    """Log-likelihood of the two-component mixture given squared distances.

    Zero distances are skipped: their density is 0 under every parameter
    value, so they only shift the likelihood by a constant ``-inf``.
    """
    y = d2[d2 > 0]
    logx = 0.5 * np.log(y)
    base = np.log(2.0) + (2 * k - 1) * logx - gammaln(k)
    with np.errstate(divide="ignore"):
        l1 = np.log(p) + k * np.log(lambda1 * np.pi) - lambda1 * np.pi * y
        l2 = np.log1p(-p) + k * np.log(lambda2 * np.pi) - lambda2 * np.pi * y
    return float(np.sum(base + np.logaddexp(l1, l2)))


def e_step(d2: np.ndarray, k: int, lambda1: float, lambda2: float, p: float) -> np.ndarray:
    """Posterior probability of the feature component for each distance.

    Works on the log odds, in which the ``x^(2K-1)`` factors cancel. At
    ``d == 0`` this is the continuous limit ``p l1^K / (p l1^K + (1-p) l2^K)``.
    """
    with np.errstate(divide="ignore"):
        prior = np.log(p) - np.log1p(-p)
    log_odds = prior + k * np.log(lambda1 / lambda2) - np.pi * (lambda1 - lambda2) * d2
    return expit(log_odds)


def m_step(d2: np.ndarray, k: int, delta: np.ndarray) -> Tuple[float, float, float]:
    """Closed-form weighted MLEs; an empty component gets a NaN intensity."""
    w1 = np.sum(delta)
    w2 = np.sum(1.0 - delta)
    with np.errstate(divide="ignore", invalid="ignore"):
        lambda1 = k * w1 / (np.pi * np.sum(d2 * delta))
        lambda2 = k * w2 / (np.pi * np.sum(d2 * (1.0 - delta)))
    return float(lambda1), float(lambda2), float(w1) / len(d2)


def initial_params(d: KnnDistances) -> Tuple[float, float, float]:
    """Median split: the closer half seeds the feature, the farther half the clutter."""
    x, k = _as_distances(d)
    xs = np.sort(x)
    half = len(xs) // 2
    try:
        lambda1 = lambda_mle(KnnDistances(k, xs[:half]))
        lambda2 = lambda_mle(KnnDistances(k, xs[half:]))
    except DegenerateDistances as exc:
        raise DegenerateComponent(
            "cannot initialise EM: lower half of the distances is all zero"
        ) from exc
    return lambda1, lambda2, 0.5


def em_fit(
    d: KnnDistances,
    init: Optional[Tuple[float, float, float]] = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> MixtureFit:
    """Fit the two-component Kth-NN distance mixture by EM.

    Parameters
    ----------
    d : KnnDistances
        Observed distances, at least 4 of them.
    init : (lambda1, lambda2, p), optional
        Starting values. Defaults to :func:`initial_params`.
    tol : float
        Stop once the largest relative change of (lambda1, lambda2, p)
        drops below ``tol``.
    max_iter : int
        Upper bound on EM steps.

    Returns
    -------
    MixtureFit
        With ``lambda1 >= lambda2``; components are swapped at the end if
        needed.

    Raises
    ------
    DegenerateComponent
        If one component loses all its weight (sum of posteriors < 1e-10 n).
    NonFinite
        If an update produces a non-finite value.
    """
    EMConfig(tol, max_iter)
    x, k = _as_distances(d)
    n = len(x)
    if n < 4:
        raise InvalidParams(f"EM needs at least 4 distances, got {n}")
    d2 = x * x
    if init is None:
        lambda1, lambda2, p = initial_params(d)
    else:
        lambda1, lambda2, p = (float(v) for v in init)
        if not (lambda1 > 0 and lambda2 > 0 and 0 <= p <= 1):
            raise InvalidParams(f"invalid starting values {init!r}")
    eps = 1e-10 * n

    trace = [mixture_loglik(d2, k, lambda1, lambda2, p)]
    converged = False
    n_iter = 0
    delta = None
    for n_iter in range(1, max_iter + 1):
        delta = e_step(d2, k, lambda1, lambda2, p)
        w1 = float(np.sum(delta))
        if w1 < eps or n - w1 < eps:
            raise DegenerateComponent(
                f"EM collapsed to one component at step {n_iter} (K={k})",
                delta=delta, lambda1=lambda1, lambda2=lambda2, p=p,
            )
        new1, new2, new_p = m_step(d2, k, delta)
        if not all(np.isfinite(v) and v > 0 for v in (new1, new2, new_p)):
            raise NonFinite(
                f"non-finite EM update at step {n_iter} (K={k}): "
                f"{(new1, new2, new_p)}"
            )
        change = max(
            abs(new1 - lambda1) / lambda1,
            abs(new2 - lambda2) / lambda2,
            abs(new_p - p) / p,
        )
        lambda1, lambda2, p = new1, new2, new_p
        trace.append(mixture_loglik(d2, k, lambda1, lambda2, p))
        if change < tol:
            converged = True
            break

    if lambda1 < lambda2:
        lambda1, lambda2, p = lambda2, lambda1, 1.0 - p
    # posteriors consistent with the returned parameters
    delta = e_step(d2, k, lambda1, lambda2, p)
    delta.setflags(write=False)
    trace = np.asarray(trace)
    trace.setflags(write=False)
    return MixtureFit(k, lambda1, lambda2, p, delta, trace, converged, n_iter)


def classify(fit: MixtureFit) -> Labels:
    """Hard labels: feature when the posterior is at least 0.5 (ties go to feature)."""
    return Labels(np.asarray(fit.delta) >= 0.5)
