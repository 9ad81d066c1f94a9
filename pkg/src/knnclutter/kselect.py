"""Choosing K: entropy-versus-K curve and a one-break segmented regression.

The entropy of the feature posteriors is computed for every K in a
candidate set. The curve is then fitted by a continuous broken line whose
slope after the break is fixed at zero; the break location is the selected K.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    DegenerateComponent,
    InvalidK,
    KSetTooLarge,
    NonFinite,
    OutOfRange,
    TooFewPoints,
)
from .mixture import EMConfig, MixtureFit, em_fit
from .pattern import KnnDistances, PointPattern, neighbour_table

log = logging.getLogger(__name__)

DEFAULT_K_MAX = 35
THREADS_ENV = "KNNCLUTTER_THREADS"


def default_k_set(n: Optional[int] = None, k_max: int = DEFAULT_K_MAX) -> Tuple[int, ...]:
    """``1..k_max``; with ``n`` given, clipped to ``K <= n - 2``.

    Keeping one spare point above ``K + 1`` matches the minimum pattern size
    used by the iterative procedure.
    """
    top = k_max if n is None else min(k_max, n - 2)
    return tuple(range(1, top + 1))


def clip_k_set(k_set: Iterable[int], n: int) -> Tuple[Tuple[int, ...], bool]:
    """Drop K values that need ``n`` or more points. Returns (kept, clipped?)."""
    k_set = tuple(k_set)
    kept = tuple(k for k in k_set if k < n)
    return kept, len(kept) != len(k_set)


def _check_k_set(k_set) -> Tuple[int, ...]:
    ks = tuple(int(k) for k in k_set)
    if not ks:
        raise InvalidK("empty K set")
    if any(k < 1 for k in ks) or any(int(a) != a for a in k_set):
        raise InvalidK(f"K values must be positive integers, got {k_set!r}")
    if any(b <= a for a, b in zip(ks, ks[1:])):
        raise InvalidK("K set must be strictly increasing")
    return ks


@dataclass(frozen=True)
class EntropyCurve:
    """Entropy of the feature posteriors for each K.

    ``degenerate`` flags K values whose EM fit collapsed to one component;
    their entropy is that of the collapsed posterior. ``fits`` keeps the
    mixture fit per K (``None`` where EM collapsed) so that callers can
    classify at the selected K without refitting.
    """

    k_set: Tuple[int, ...]
    s: np.ndarray
    degenerate: Tuple[bool, ...] = ()
    fits: Dict[int, Optional[MixtureFit]] = field(default_factory=dict, repr=False, compare=False)
    collapsed_delta: Dict[int, np.ndarray] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        ks = _check_k_set(self.k_set)
        s = np.array(self.s, dtype=float).reshape(-1)
        if len(s) != len(ks):
            raise ValueError("one entropy value per K is required")
        if not np.all(np.isfinite(s)) or np.any(s < 0):
            raise ValueError("entropies must be finite and non-negative")
        s.setflags(write=False)
        object.__setattr__(self, "k_set", ks)
        object.__setattr__(self, "s", s)
        if not self.degenerate:
            object.__setattr__(self, "degenerate", (False,) * len(ks))

    def __len__(self):
        return len(self.k_set)

    @property
    def total(self) -> float:
        return float(np.sum(self.s))

    def posterior(self, k: int) -> np.ndarray:
        """Feature posteriors at ``k``: the EM fit's, or the collapsed ones."""
        fit = self.fits.get(k)
        if fit is not None:
            return np.asarray(fit.delta)
        return self.collapsed_delta[k]


@dataclass(frozen=True)
class SegmentedFit:
    """Continuous broken line ``alpha + beta * min(x, psi)``.

    Post-break slope is zero by construction.
    """

    psi: float
    alpha: float
    beta: float
    rss: float
    k_hat: int
    flat: bool = False

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.alpha + self.beta * np.minimum(x, self.psi)


def entropy(delta) -> float:
    """``-sum(delta * log2(delta))`` with ``0 log 0 = 0``.

    Only the feature term is summed.

    >>> entropy([0.5, 0.5])
    1.0
    """
    delta = np.asarray(delta, dtype=float)
    if np.any(~((delta >= 0) & (delta <= 1))):
        raise OutOfRange("posterior probabilities must lie in [0, 1]")
    pos = delta[delta > 0]
    return float(-np.sum(pos * np.log2(pos)))


def _collapsed_posterior(exc: DegenerateComponent, n: int) -> np.ndarray:
    if exc.delta is not None:
        w1 = float(np.sum(exc.delta))
        return np.full(n, 1.0 if w1 >= n - w1 else 0.0)
    # initialisation failed on zero distances: the dense component takes all
    return np.ones(n)


def _worker_count(workers: Optional[int]) -> int:
    if workers is None:
        env = os.environ.get(THREADS_ENV)
        try:
            workers = int(env) if env else 1
        except ValueError:
            log.warning("ignoring non-integer %s=%r", THREADS_ENV, env)
            workers = 1
    return max(1, workers)


def entropy_curve(
    pattern: PointPattern,
    k_set: Optional[Sequence[int]] = None,
    em_config: EMConfig = EMConfig(),
    workers: Optional[int] = None,
) -> EntropyCurve:
    """Fit the mixture at every K in ``k_set`` and record the posterior entropy.

    A K at which EM collapses (or produces non-finite updates) records the
    entropy of the collapsed posterior, which is 0, and is flagged in
    ``degenerate``; it never aborts the curve.

    ``workers`` (default: ``$KNNCLUTTER_THREADS`` or 1) evaluates distinct K
    values on a thread pool. Results are ordered by K either way.
    """
    ks = _check_k_set(default_k_set(pattern.n) if k_set is None else k_set)
    if ks[-1] >= pattern.n:
        raise KSetTooLarge(
            f"largest K ({ks[-1]}) must be below the number of points ({pattern.n})"
        )
    table = neighbour_table(pattern, ks[-1])

    def one(k):
        d = KnnDistances(k, table[:, k - 1])
        try:
            fit = em_fit(d, tol=em_config.tol, max_iter=em_config.max_iter)
        except DegenerateComponent as exc:
            return k, None, _collapsed_posterior(exc, pattern.n)
        except NonFinite:
            log.debug("non-finite EM update at K=%d, treated as collapsed", k)
            return k, None, np.ones(pattern.n)
        return k, fit, None

    n_workers = _worker_count(workers)
    if n_workers > 1 and len(ks) > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(one, ks))
    else:
        results = [one(k) for k in ks]

    fits, collapsed, s, flags = {}, {}, [], []
    for k, fit, dead in results:
        fits[k] = fit
        if fit is None:
            collapsed[k] = dead
            s.append(entropy(dead))
            flags.append(True)
        else:
            s.append(entropy(fit.delta))
            flags.append(False)
    return EntropyCurve(ks, np.array(s), tuple(flags), fits, collapsed)


def _nearest_k(k_set: Sequence[int], psi: float) -> int:
    ks = np.asarray(k_set, dtype=float)
    gap = np.abs(ks - psi)
    best = np.flatnonzero(gap <= gap.min() + 1e-9)
    return int(ks[best[-1]])  # ties toward the larger K


def _profile_rss(x: np.ndarray, y: np.ndarray, psi: float) -> Tuple[float, float, float]:
    """Least squares of ``y ~ alpha + beta * min(x, psi)``; returns (rss, alpha, beta)."""
    z = np.minimum(x, psi)
    zc = z - z.mean()
    szz = float(zc @ zc)
    if szz <= 1e-12 * max(1.0, float(z @ z)):
        beta = 0.0
    else:
        beta = float(zc @ (y - y.mean())) / szz
    alpha = float(y.mean() - beta * z.mean())
    r = y - alpha - beta * z
    return float(r @ r), alpha, beta


def _interval_break(x: np.ndarray, y: np.ndarray, m: int) -> Optional[Tuple[float, float, float, float]]:
    """Best break strictly inside ``(x[m], x[m+1])``, if the optimum lies there.

    With the break in that interval the model is linear in
    ``(alpha, beta, gamma = alpha + beta * psi)``: ``alpha + beta * x`` on the
    left points and ``gamma`` on the right ones. Returns (rss, alpha, beta, psi).
    """
    left = slice(0, m + 1)
    right = slice(m + 1, None)
    xl, yl, yr = x[left], y[left], y[right]
    if len(xl) < 2 or len(yr) < 1:
        return None
    xc = xl - xl.mean()
    sxx = float(xc @ xc)
    if sxx <= 0:
        return None
    beta = float(xc @ (yl - yl.mean())) / sxx
    if beta == 0.0:
        return None
    alpha = float(yl.mean() - beta * xl.mean())
    gamma = float(yr.mean())
    psi = (gamma - alpha) / beta
    if not (x[m] < psi < x[m + 1]):
        return None
    rl = yl - alpha - beta * xl
    rr = yr - gamma
    return float(rl @ rl + rr @ rr), alpha, beta, float(psi)


def fit_segmented(curve: EntropyCurve) -> SegmentedFit:
    """Locate the levelling-off point of an entropy curve.

    Every K in the set and every midpoint between consecutive K values is a
    candidate break, with the intercept and pre-break slope solved in closed
    form. Within each gap between consecutive K values the exact least
    squares break is also solved for, so a curve that is exactly broken-line
    is recovered with zero residual wherever its break lies. The candidate
    with the smallest residual sum of squares wins, the smaller break on
    ties. A curve with no variation is flagged ``flat`` and returns the
    smallest K.
    """
    if len(curve) < 4:
        raise TooFewPoints(f"segmented fit needs at least 4 points, got {len(curve)}")
    x = np.asarray(curve.k_set, dtype=float)
    y = np.asarray(curve.s, dtype=float)

    tss = float(np.sum((y - y.mean()) ** 2))
    scale = max(1.0, float(y @ y))
    if tss <= 1e-20 * scale:
        return SegmentedFit(x[0], float(y.mean()), 0.0, tss, int(x[0]), flat=True)

    tie = 1e-12 * scale

    def pick(cands):
        # floating-point ties resolve to the smallest break
        rss = np.array([c[0] for c in cands])
        return cands[int(np.flatnonzero(rss <= rss.min() + tie)[0])]

    grid = np.sort(np.concatenate([x, 0.5 * (x[:-1] + x[1:])]))
    best = pick([(*_profile_rss(x, y, psi), float(psi)) for psi in grid])
    inner = [hit for m in range(len(x) - 1) if (hit := _interval_break(x, y, m)) is not None]
    # an off-grid break is used only when it is strictly better than the grid
    inner = [c for c in inner if c[0] < best[0] - tie]
    if inner:
        r, alpha, beta, psi = pick(sorted(inner, key=lambda c: c[3]))
    else:
        r, alpha, beta, psi = best
    return SegmentedFit(psi, alpha, beta, r, _nearest_k(curve.k_set, psi), flat=False)


@dataclass(frozen=True)
class KSelection:
    k_hat: int
    curve: EntropyCurve
    segmented: SegmentedFit

    def __iter__(self):
        return iter((self.k_hat, self.curve, self.segmented))


def select_k(
    pattern: PointPattern,
    k_set: Optional[Sequence[int]] = None,
    em_config: EMConfig = EMConfig(),
    workers: Optional[int] = None,
) -> KSelection:
    """Entropy curve over ``k_set`` followed by the segmented fit.

    Unpacks as ``k_hat, curve, segmented``.
    """
    curve = entropy_curve(pattern, k_set, em_config, workers)
    seg = fit_segmented(curve)
    return KSelection(seg.k_hat, curve, seg)
