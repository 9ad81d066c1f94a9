"""Point-process generators and the benchmark scenarios.

All scenarios put homogeneous Poisson clutter with 300 expected points on
the unit square and superimpose a feature pattern:

1. Poisson cluster process, 7.5 parents per unit area, 20 offspring each,
   uniform in a disc of radius 0.2, observed on the unit square.
2. Same with 15 parents and 10 offspring.
3. Poisson, 150 expected points on [0, 0.5]^2.
4. Poisson, 20 expected points on [0.25, 0.5]^2.

``"tworate"`` is the two-rate demonstration design: 200 expected clutter points
on [0, 10]^2 and 100 expected feature points on the unit square.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import ConfigError
from .pattern import PointPattern, Window

UNIT = Window.square(0.0, 1.0)


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def child_seed(master: int, *key: int) -> np.random.SeedSequence:
    """Independent, reproducible stream for (master seed, key...)."""
    return np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(k) for k in key))


def _uniform_in(window: Window, n: int, rng: np.random.Generator) -> np.ndarray:
    x = rng.uniform(window.xmin, window.xmax, n)
    y = rng.uniform(window.ymin, window.ymax, n)
    return np.column_stack([x, y])


def sim_poisson(window: Window, expected_n: float, rng=None, feature: bool = False) -> PointPattern:
    """Homogeneous Poisson pattern with ``expected_n`` points on average."""
    if not expected_n > 0:
        raise ValueError("expected_n must be positive")
    rng = as_rng(rng)
    n = int(rng.poisson(expected_n))
    pts = _uniform_in(window, n, rng)
    return PointPattern(pts, window, truth=np.full(n, feature))


def sim_cluster(
    window: Window, kappa: float, u: int, radius: float, rng=None
) -> PointPattern:
    """Poisson cluster process with exactly ``u`` offspring per parent.

    Parents are Poisson with intensity ``kappa`` on ``window`` dilated by
    ``radius``; offspring are uniform in the disc of ``radius`` around their
    parent and only those inside ``window`` are kept. This makes the process
    stationary inside the window with ``kappa * u * area`` expected points.
    """
    if not (kappa > 0 and radius > 0) or u < 1 or int(u) != u:
        raise ValueError("need kappa > 0, radius > 0 and integer u >= 1")
    rng = as_rng(rng)
    grown = Window(
        window.xmin - radius, window.xmax + radius,
        window.ymin - radius, window.ymax + radius,
    )
    n_par = int(rng.poisson(kappa * grown.area))
    parents = _uniform_in(grown, n_par, rng)
    m = n_par * int(u)
    r = radius * np.sqrt(rng.uniform(0.0, 1.0, m))
    theta = rng.uniform(0.0, 2.0 * np.pi, m)
    offs = np.repeat(parents, int(u), axis=0)
    offs = offs + np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    offs = offs[window.contains(offs)]
    return PointPattern(offs, window, truth=np.ones(len(offs), dtype=bool))


@dataclass(frozen=True)
class ScenarioSpec:
    """Clutter plus feature design.

    ``feature`` is ``("poisson", window, expected_n)`` or
    ``("cluster", window, kappa, u, radius)``.
    """

    scenario: Union[int, str]
    clutter_window: Window
    clutter_n: float
    feature: tuple
    seed: Optional[int] = None

    def __post_init__(self):
        if not self.clutter_n > 0:
            raise ConfigError("clutter expected count must be positive")
        kind = self.feature[0]
        if kind == "poisson":
            _, fw, fn = self.feature
            if not fn > 0:
                raise ConfigError("feature expected count must be positive")
        elif kind == "cluster":
            _, fw, kappa, u, radius = self.feature
            if not (kappa > 0 and radius > 0 and u >= 1):
                raise ConfigError("invalid cluster parameters")
        else:
            raise ConfigError(f"unknown feature generator {kind!r}")
        cw = self.clutter_window
        if not (cw.xmin <= fw.xmin and fw.xmax <= cw.xmax
                and cw.ymin <= fw.ymin and fw.ymax <= cw.ymax):
            raise ConfigError("feature window must lie inside the clutter window")

    def with_seed(self, seed) -> "ScenarioSpec":
        return ScenarioSpec(self.scenario, self.clutter_window, self.clutter_n, self.feature, seed)


SCENARIOS = {
    1: ScenarioSpec(1, UNIT, 300.0, ("cluster", UNIT, 7.5, 20, 0.2)),
    2: ScenarioSpec(2, UNIT, 300.0, ("cluster", UNIT, 15.0, 10, 0.2)),
    3: ScenarioSpec(3, UNIT, 300.0, ("poisson", Window.square(0.0, 0.5), 150.0)),
    4: ScenarioSpec(4, UNIT, 300.0, ("poisson", Window.square(0.25, 0.5), 20.0)),
    "tworate": ScenarioSpec("tworate", Window.square(0.0, 10.0), 200.0, ("poisson", UNIT, 100.0)),
}


def scenario_spec(scenario, seed=None) -> ScenarioSpec:
    key = scenario
    if isinstance(scenario, str) and scenario.isdigit():
        key = int(scenario)
    if key not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; choose from {list(SCENARIOS)}")
    return SCENARIOS[key].with_seed(seed)


def make_scenario(spec: ScenarioSpec, rng=None) -> PointPattern:
    """Superimpose clutter and feature, attach truth labels, shuffle the order."""
    if isinstance(spec, (int, str)):
        spec = scenario_spec(spec)
    rng = as_rng(spec.seed if rng is None else rng)
    clutter = sim_poisson(spec.clutter_window, spec.clutter_n, rng, feature=False)
    if spec.feature[0] == "poisson":
        _, fw, fn = spec.feature
        feat = sim_poisson(fw, fn, rng, feature=True)
    else:
        _, fw, kappa, u, radius = spec.feature
        feat = sim_cluster(fw, kappa, u, radius, rng)
    pts = np.vstack([clutter.points, feat.points])
    truth = np.concatenate([clutter.truth, feat.truth])
    order = rng.permutation(len(pts))
    return PointPattern(pts[order], spec.clutter_window, truth=truth[order])
