"""
Car Owner Population
Builds the commuter population from stereotype specifications and
computes analytic properties of a population spec.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from errors import ConfigurationError

logger = logging.getLogger(__name__)

CATEGORIES = ('A', 'B', 'C', 'D', 'E')
STAFF_LEVELS = (1, 2, 3, 4, 5, 6, 7)


class CommuteState(IntEnum):
    """Car owner state chart. Values index the engine's state array."""
    AT_HOME = 0
    WAY_WORK = 1
    AT_WORK = 2
    WAY_HOME = 3


@dataclass(frozen=True)
class Vehicle:
    """Conventional car in emissions category A-E, or an electric car"""
    electric: bool
    category: Optional[str] = None

    @classmethod
    def conventional(cls, category: str) -> "Vehicle":
        if category not in CATEGORIES:
            raise ConfigurationError('category', f"unknown emissions category {category!r}")
        return cls(electric=False, category=category)

    @classmethod
    def ev(cls) -> "Vehicle":
        return cls(electric=True)

    def __str__(self):
        return 'Electric' if self.electric else f"Conventional({self.category})"


@dataclass(frozen=True)
class StereotypeSpec:
    """One row of the stereotype table"""
    id: int
    share: float
    ea_low: float
    ea_high: float
    buy_probability: float

    def validate(self):
        prefix = f"stereotype.{self.id}"
        if not 0.0 <= self.share <= 1.0:
            raise ConfigurationError(f"{prefix}.share", f"share {self.share} outside [0, 1]")
        if not 0.0 <= self.ea_low <= self.ea_high <= 100.0:
            raise ConfigurationError(
                f"{prefix}.ea_low",
                f"awareness range [{self.ea_low}, {self.ea_high}] must satisfy 0 <= low <= high <= 100",
            )
        if not 0.0 <= self.buy_probability <= 1.0:
            raise ConfigurationError(
                f"{prefix}.buy_probability",
                f"probability {self.buy_probability} outside [0, 1]",
            )

    def pass_probability(self, threshold: float) -> float:
        """P(U[ea_low, ea_high] > threshold)"""
        if self.ea_high == self.ea_low:
            return 1.0 if self.ea_low > threshold else 0.0
        width = self.ea_high - self.ea_low
        return min(1.0, max(0.0, (self.ea_high - threshold) / width))


@dataclass(frozen=True)
class CogencySpec:
    """How agent cogency is drawn.

    kind 'adoption_fraction' gives every agent the scenario's adoption
    fraction; kind 'uniform' draws from uniform[low, high].
    """
    kind: str = 'adoption_fraction'
    low: float = 0.0
    high: float = 0.0

    def bounds(self, adoption_fraction: float) -> Tuple[float, float]:
        if self.kind == 'adoption_fraction':
            return adoption_fraction, adoption_fraction
        return self.low, self.high

    def validate(self):
        if self.kind not in ('adoption_fraction', 'uniform'):
            raise ConfigurationError('cogency', f"unknown cogency kind {self.kind!r}")
        if self.kind == 'uniform' and not 0.0 <= self.low <= self.high <= 1.0:
            raise ConfigurationError(
                'cogency', f"uniform bounds [{self.low}, {self.high}] must lie in [0, 1] with low <= high"
            )

    @classmethod
    def parse(cls, text: str) -> "CogencySpec":
        text = text.strip()
        if text == 'adoption_fraction':
            return cls()
        if text.startswith('uniform:'):
            parts = text[len('uniform:'):].split(',')
            if len(parts) != 2:
                raise ConfigurationError('cogency', "expected uniform:<lo>,<hi>")
            try:
                low, high = float(parts[0]), float(parts[1])
            except ValueError:
                raise ConfigurationError('cogency', f"non-numeric bounds in {text!r}")
            return cls('uniform', low, high)
        raise ConfigurationError('cogency', f"expected adoption_fraction or uniform:<lo>,<hi>, got {text!r}")

    def format(self) -> str:
        if self.kind == 'adoption_fraction':
            return 'adoption_fraction'
        return f"uniform:{self.low!r},{self.high!r}"


DEFAULT_STEREOTYPES = (
    StereotypeSpec(1, 0.01, 95.0, 100.0, 0.9),
    StereotypeSpec(2, 0.09, 70.0, 94.0, 0.7),
    StereotypeSpec(3, 0.30, 30.0, 69.0, 0.4),
    StereotypeSpec(4, 0.60, 0.0, 29.0, 0.2),
)


@dataclass(frozen=True)
class PopulationSpec:
    """Everything needed to synthesize a population"""
    stereotypes: Tuple[StereotypeSpec, ...] = DEFAULT_STEREOTYPES
    n_agents: int = 500
    staff_level_weights: Tuple[float, ...] = (1.0,) * 7
    fleet_category_weights: Tuple[float, ...] = (1.0,) * 5
    cogency: CogencySpec = field(default_factory=CogencySpec)

    def validate(self):
        if not self.stereotypes:
            raise ConfigurationError('stereotypes', "at least one stereotype is required")
        ids = [s.id for s in self.stereotypes]
        if len(set(ids)) != len(ids):
            raise ConfigurationError('stereotypes', f"duplicate stereotype ids {ids}")
        for stereotype in self.stereotypes:
            stereotype.validate()
        total = math.fsum(s.share for s in self.stereotypes)
        if abs(total - 1.0) > 1e-9:
            raise ConfigurationError('stereotype.share', f"shares sum to {total}, expected 1")
        if self.n_agents < 0:
            raise ConfigurationError('n_agents', f"n_agents must be >= 0, got {self.n_agents}")
        _check_weights('staff_level_weights', self.staff_level_weights, len(STAFF_LEVELS))
        _check_weights('fleet_category_weights', self.fleet_category_weights, len(CATEGORIES))
        self.cogency.validate()

    def stereotype(self, stereotype_id: int) -> StereotypeSpec:
        for s in self.stereotypes:
            if s.id == stereotype_id:
                return s
        raise KeyError(stereotype_id)


def _check_weights(name: str, weights: Sequence[float], expected: int):
    if len(weights) != expected:
        raise ConfigurationError(name, f"expected {expected} weights, got {len(weights)}")
    if any(w < 0 for w in weights):
        raise ConfigurationError(name, "weights must be non-negative")
    if not any(w > 0 for w in weights):
        raise ConfigurationError(name, "at least one weight must be positive")


@dataclass
class CarOwner:
    """One commuter agent"""
    id: int
    stereotype_id: int
    energy_awareness: float
    staff_level: int
    vehicle: Vehicle
    cogency: float
    commute_state: CommuteState = CommuteState.AT_HOME
    adopted_at: Optional[int] = None
    # Emissions category of the car owned before any adoption
    original_category: Optional[str] = None


def stereotype_counts(spec: PopulationSpec) -> List[int]:
    """Largest-remainder quota of n_agents over stereotype shares.

    Ties on the fractional remainder go to the earlier stereotype.
    """
    n = spec.n_agents
    raw = [s.share * n for s in spec.stereotypes]
    # round away float noise such as 0.09 * 500 = 44.999...
    floors = [math.floor(round(r, 9)) for r in raw]
    remainders = [max(0.0, r - f) for r, f in zip(raw, floors)]
    leftover = n - sum(floors)
    order = sorted(range(len(raw)), key=lambda i: (-remainders[i], i))
    for i in order[:max(0, leftover)]:
        floors[i] += 1
    return floors


def sample_population(spec: PopulationSpec, rng: np.random.Generator,
                      adoption_fraction: float = 0.015) -> List[CarOwner]:
    """Synthesize spec.n_agents car owners.

    Stereotypes are allotted by quota and then shuffled over agent ids;
    awareness, staff level, emissions category and cogency are drawn from rng
    in that order.
    """
    spec.validate()
    n = spec.n_agents
    if n == 0:
        return []

    counts = stereotype_counts(spec)
    stereotype_ids = np.repeat([s.id for s in spec.stereotypes], counts)
    stereotype_ids = rng.permutation(stereotype_ids)

    lows = {s.id: s.ea_low for s in spec.stereotypes}
    highs = {s.id: s.ea_high for s in spec.stereotypes}
    awareness = rng.uniform(
        np.array([lows[i] for i in stereotype_ids]),
        np.array([highs[i] for i in stereotype_ids]),
    )

    level_p = np.asarray(spec.staff_level_weights, dtype=float)
    levels = rng.choice(STAFF_LEVELS, size=n, p=level_p / level_p.sum())
    category_p = np.asarray(spec.fleet_category_weights, dtype=float)
    categories = rng.choice(len(CATEGORIES), size=n, p=category_p / category_p.sum())

    low, high = spec.cogency.bounds(adoption_fraction)
    cogency = rng.uniform(low, high, size=n)

    owners = []
    for i in range(n):
        category = CATEGORIES[categories[i]]
        owners.append(CarOwner(
            id=i,
            stereotype_id=int(stereotype_ids[i]),
            energy_awareness=float(awareness[i]),
            staff_level=int(levels[i]),
            vehicle=Vehicle.conventional(category),
            cogency=float(cogency[i]),
            original_category=category,
        ))

    logger.debug("Sampled %d car owners, stereotype counts %s", n, counts)
    return owners


def eligible_fraction(spec: PopulationSpec, threshold: float) -> float:
    """Expected fraction of agents whose awareness exceeds threshold"""
    if not 0.0 <= threshold <= 100.0:
        raise ConfigurationError('awareness_threshold', f"threshold {threshold} outside [0, 100]")
    return math.fsum(s.share * s.pass_probability(threshold) for s in spec.stereotypes)
