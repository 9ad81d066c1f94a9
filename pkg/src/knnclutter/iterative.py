"""Repeated clutter removal with an overall-entropy stopping rule.

Each iteration classifies the current pattern and keeps only its feature
points for the next one. The overall entropy of an iteration is the sum of
the per-K entropies over a fixed K set; iteration J is selected as soon as
iteration J + 1 has a larger overall entropy.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DegenerateComponent, InvalidK, NonFinite, PatternTooSmall
from .kselect import EntropyCurve, _check_k_set, default_k_set, entropy_curve, fit_segmented
from .mixture import EMConfig, Labels, MixtureFit, em_fit
from .pattern import PointPattern, knn_distances, subset

log = logging.getLogger(__name__)

AUTO = "auto"
KMode = Union[int, str]


@dataclass(frozen=True)
class IterationRecord:
    """One pass of the classifier.

    ``fit`` is ``None`` when EM collapsed at ``k_used``; ``delta`` then holds
    the collapsed posterior. ``curve`` and ``s_j`` are ``None`` when entropy
    was not requested (forced benchmark runs with fixed K).
    """

    index: int
    n: int
    k_used: int
    labels: Labels
    delta: np.ndarray
    fit: Optional[MixtureFit]
    s_j: Optional[float]
    curve: Optional[EntropyCurve]
    pattern: PointPattern

    @property
    def n_feature(self) -> int:
        return self.labels.n_feature


@dataclass(frozen=True)
class IterationTrace:
    records: Tuple[IterationRecord, ...]
    j_hat: int
    final_labels: Labels
    criterion_triggered: bool
    n_original: int

    @property
    def s_sequence(self) -> List[Optional[float]]:
        return [r.s_j for r in self.records]


def _check_k_mode(k_mode: KMode) -> KMode:
    if k_mode == AUTO:
        return AUTO
    if isinstance(k_mode, bool) or int(k_mode) != k_mode or int(k_mode) < 1:
        raise InvalidK(f"k_mode must be a positive integer or 'auto', got {k_mode!r}")
    return int(k_mode)


def _fit_at(pattern: PointPattern, k: int, em_config: EMConfig):
    d = knn_distances(pattern, k)
    try:
        fit = em_fit(d, tol=em_config.tol, max_iter=em_config.max_iter)
        return fit, np.asarray(fit.delta)
    except DegenerateComponent as exc:
        if exc.delta is None:
            return None, np.ones(pattern.n)
        w1 = float(np.sum(exc.delta))
        return None, np.full(pattern.n, 1.0 if w1 >= pattern.n - w1 else 0.0)
    except NonFinite:
        return None, np.ones(pattern.n)


def classify_once(
    pattern: PointPattern,
    k_mode: KMode,
    k_set: Sequence[int],
    em_config: EMConfig = EMConfig(),
    with_entropy: bool = True,
    workers: Optional[int] = None,
) -> Tuple[int, Optional[MixtureFit], np.ndarray, Optional[EntropyCurve]]:
    """Classify one pattern: returns (k_used, fit, posteriors, entropy curve)."""
    curve = None
    if k_mode == AUTO or with_entropy:
        curve = entropy_curve(pattern, k_set, em_config, workers)
    if k_mode == AUTO:
        k_used = fit_segmented(curve).k_hat
    else:
        k_used = int(k_mode)
    if curve is not None and k_used in curve.fits:
        fit = curve.fits[k_used]
        delta = curve.posterior(k_used)
    else:
        fit, delta = _fit_at(pattern, k_used, em_config)
    return k_used, fit, delta, curve


def iterate_records(
    pattern: PointPattern,
    k_mode: KMode = AUTO,
    k_set: Optional[Sequence[int]] = None,
    max_iter: int = 10,
    min_points: Optional[int] = None,
    em_config: EMConfig = EMConfig(),
    with_entropy: bool = True,
    workers: Optional[int] = None,
) -> Iterator[IterationRecord]:
    """Yield successive iterations until ``max_iter`` or the pattern gets too small.

    No stopping rule is applied here; the caller decides when to stop
    consuming.
    """
    k_mode = _check_k_mode(k_mode)
    k_set = _check_k_set(default_k_set() if k_set is None else k_set)
    if min_points is None:
        min_points = max(k_set) + 2
    if k_mode != AUTO:
        min_points = max(min_points, k_mode + 1)
    current = pattern
    for j in range(1, max_iter + 1):
        if current.n < min_points:
            return
        k_used, fit, delta, curve = classify_once(
            current, k_mode, k_set, em_config, with_entropy, workers
        )
        labels = Labels(np.asarray(delta) >= 0.5)
        s_j = None if curve is None else curve.total
        yield IterationRecord(j, current.n, k_used, labels, np.asarray(delta), fit, s_j, curve, current)
        current = subset(current, labels.is_feature)


def compose_labels(trace_or_records, j_hat: Optional[int] = None, n_original: Optional[int] = None) -> Labels:
    """Map iteration-local labels back to the original pattern.

    A point is feature iff it was labelled feature at every iteration
    ``1..j_hat`` it took part in; points dropped earlier stay clutter.
    """
    if isinstance(trace_or_records, IterationTrace):
        records = trace_or_records.records
        j_hat = trace_or_records.j_hat if j_hat is None else j_hat
        n_original = trace_or_records.n_original
    else:
        records = tuple(trace_or_records)
        j_hat = len(records) if j_hat is None else j_hat
        if n_original is None:
            n_original = records[0].n
    if not records:
        raise ValueError("need at least one iteration record")
    # original row index of every point currently alive
    alive = np.arange(n_original)
    for rec in records[:j_hat]:
        alive = alive[rec.labels.is_feature]
    out = np.zeros(n_original, dtype=bool)
    out[alive] = True
    return Labels(out)


def run_iterative(
    pattern: PointPattern,
    k_mode: KMode = AUTO,
    k_set: Optional[Sequence[int]] = None,
    max_iter: int = 10,
    min_points: Optional[int] = None,
    em_config: EMConfig = EMConfig(),
    workers: Optional[int] = None,
) -> IterationTrace:
    """Iterate clutter removal and pick the iteration by overall entropy.

    Parameters
    ----------
    pattern : PointPattern
    k_mode : int or "auto"
        Fixed K, or re-estimate K at every iteration with the segmented fit.
    k_set : sequence of int, optional
        K values whose entropies are summed each iteration (same set every
        iteration). Defaults to ``1..35``.
    max_iter : int
        Maximum number of iterations computed, including the look-ahead one.
    min_points : int, optional
        Stop before classifying a pattern smaller than this. Defaults to
        ``max(k_set) + 2``.

    Returns
    -------
    IterationTrace
        ``j_hat`` is the first J with S_(J+1) > S_J. If the loop ends first,
        ``j_hat`` is the last completed iteration and
        ``criterion_triggered`` is False.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    k_set = _check_k_set(default_k_set() if k_set is None else k_set)
    if min_points is None:
        min_points = max(k_set) + 2
    if min_points <= max(k_set):
        raise ValueError("min_points must exceed the largest K in k_set")
    if pattern.n < min_points:
        raise PatternTooSmall(f"pattern has {pattern.n} points, need at least {min_points}")

    records: List[IterationRecord] = []
    triggered = False
    for rec in iterate_records(pattern, k_mode, k_set, max_iter, min_points, em_config, True, workers):
        records.append(rec)
        if len(records) >= 2 and records[-1].s_j > records[-2].s_j:
            triggered = True
            break
    j_hat = len(records) - 1 if triggered else len(records)
    if not triggered:
        log.info("entropy criterion not triggered; stopping at iteration %d", j_hat)
    final = compose_labels(records, j_hat, pattern.n)
    return IterationTrace(tuple(records), j_hat, final, triggered, pattern.n)
