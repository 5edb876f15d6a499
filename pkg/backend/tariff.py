"""
Parking Charge Tariff
Annual permit charges by emissions category and staff level, EV charge
strategies, and the per-day revenue / fleet energy accounting.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from errors import ConfigurationError, DomainError
from population import CATEGORIES, STAFF_LEVELS, Vehicle

logger = logging.getLogger(__name__)

# Annual permit charges, rows A-E, columns staff level 1-7
CHARGE_TABLE = (
    (44.0, 57.0, 75.0, 105.0, 132.0, 165.0, 210.0),    # A  up to 120 g/km
    (58.0, 76.0, 100.0, 140.0, 176.0, 220.0, 280.0),   # B  121-150 g/km
    (73.0, 95.0, 125.0, 175.0, 220.0, 275.0, 350.0),   # C  151-165 g/km
    (87.0, 114.0, 150.0, 210.0, 264.0, 330.0, 420.0),  # D  166-200 g/km
    (102.0, 133.0, 175.0, 245.0, 308.0, 385.0, 490.0), # E  over 200 g/km
)


@dataclass(frozen=True)
class EvStrategy:
    """How electric cars are charged for parking.

    same_as_a  - the category A row (status quo, EVs are under 120 g/km)
    multiplier - m times the category A row
    flat       - one charge per staff level
    """
    kind: str = 'same_as_a'
    multiplier: float = 1.0
    flat: Tuple[float, ...] = ()

    @classmethod
    def parse(cls, text: str) -> "EvStrategy":
        text = text.strip()
        if text == 'same_as_a':
            return cls()
        kind, sep, rest = text.partition(':')
        if not sep:
            raise ConfigurationError('ev_strategy', f"expected same_as_a, multiplier:<m> or flat:<7 values>, got {text!r}")
        try:
            if kind == 'multiplier':
                return cls('multiplier', multiplier=float(rest))
            if kind == 'flat':
                return cls('flat', flat=tuple(float(v) for v in rest.split(',')))
        except ValueError:
            raise ConfigurationError('ev_strategy', f"non-numeric value in {text!r}")
        raise ConfigurationError('ev_strategy', f"unknown strategy {kind!r}")

    def format(self) -> str:
        if self.kind == 'multiplier':
            return f"multiplier:{self.multiplier!r}"
        if self.kind == 'flat':
            return 'flat:' + ','.join(repr(v) for v in self.flat)
        return 'same_as_a'

    def validate(self):
        if self.kind == 'multiplier' and not 0.0 <= self.multiplier <= 1.0:
            raise ConfigurationError('ev_strategy', f"multiplier {self.multiplier} outside [0, 1]")
        if self.kind == 'flat':
            if len(self.flat) != len(STAFF_LEVELS):
                raise ConfigurationError('ev_strategy', f"flat strategy needs 7 values, got {len(self.flat)}")
            if any(v < 0 for v in self.flat):
                raise ConfigurationError('ev_strategy', "flat charges must be >= 0")
        if self.kind not in ('same_as_a', 'multiplier', 'flat'):
            raise ConfigurationError('ev_strategy', f"unknown strategy {self.kind!r}")


@dataclass(frozen=True)
class TariffPolicy:
    table: Tuple[Tuple[float, ...], ...] = CHARGE_TABLE
    ev_strategy: EvStrategy = field(default_factory=EvStrategy)
    accrual_workdays_per_year: int = 220

    def validate(self):
        if len(self.table) != len(CATEGORIES) or any(len(row) != len(STAFF_LEVELS) for row in self.table):
            raise ConfigurationError('table', "charge table must be 5 rows (A-E) of 7 levels")
        for c, row in enumerate(self.table):
            key = f"table.{CATEGORIES[c]}"
            if any(v < 0 or not math.isfinite(v) for v in row):
                raise ConfigurationError(key, "charges must be finite and >= 0")
            if any(b <= a for a, b in zip(row, row[1:])):
                raise ConfigurationError(key, "charges must strictly increase with staff level")
            if c > 0 and any(v <= above for v, above in zip(row, self.table[c - 1])):
                raise ConfigurationError(key, f"charges must strictly exceed category {CATEGORIES[c - 1]}")
        self.ev_strategy.validate()
        if self.accrual_workdays_per_year <= 0:
            raise ConfigurationError('accrual_workdays_per_year', "must be > 0")

    def as_array(self) -> np.ndarray:
        return np.array(self.table, dtype=float)


@dataclass(frozen=True)
class EnergyModel:
    """Fleet energy proxy in grams of CO2"""
    intensity_by_category: Tuple[float, ...] = (110.0, 135.0, 158.0, 183.0, 220.0)
    round_trip_km: float = 20.0
    ev_intensity: float = 0.0

    def validate(self):
        if len(self.intensity_by_category) != len(CATEGORIES):
            raise ConfigurationError('intensity_by_category', "expected 5 intensities (A-E)")
        if any(v < 0 for v in self.intensity_by_category):
            raise ConfigurationError('intensity_by_category', "intensities must be >= 0")
        if self.ev_intensity < 0:
            raise ConfigurationError('ev_intensity', "must be >= 0")
        if not self.round_trip_km > 0:
            raise ConfigurationError('round_trip_km', "must be > 0")

    def intensity(self, vehicle: Vehicle) -> float:
        if vehicle.electric:
            return self.ev_intensity
        return self.intensity_by_category[CATEGORIES.index(vehicle.category)]


def _check_level(level: int):
    if level not in STAFF_LEVELS:
        raise DomainError(f"staff level {level!r} outside 1-7")


def lookup_charge(category: str, level: int, policy: TariffPolicy) -> float:
    """Annual charge for a conventional car"""
    if category not in CATEGORIES:
        raise DomainError(f"emissions category {category!r} outside A-E")
    _check_level(level)
    return policy.table[CATEGORIES.index(category)][level - 1]


def ev_charge(level: int, policy: TariffPolicy) -> float:
    """Annual charge for an electric car under the active strategy"""
    _check_level(level)
    strategy = policy.ev_strategy
    if strategy.kind == 'multiplier':
        return strategy.multiplier * policy.table[0][level - 1]
    if strategy.kind == 'flat':
        return strategy.flat[level - 1]
    return policy.table[0][level - 1]


def ev_charge_table(policy: TariffPolicy) -> np.ndarray:
    return np.array([ev_charge(level, policy) for level in STAFF_LEVELS], dtype=float)


def annual_charge(vehicle: Vehicle, level: int, policy: TariffPolicy) -> float:
    if vehicle.electric:
        return ev_charge(level, policy)
    return lookup_charge(vehicle.category, level, policy)


@dataclass
class CommuterColumns:
    """Column view of one day's commuters.

    category holds the index 0-4 of the conventional category and is ignored
    for electric cars; parked is False for commuters turned away by a full lot.
    """
    electric: np.ndarray
    category: np.ndarray
    level: np.ndarray
    parked: np.ndarray


def accrue_day(commuters: CommuterColumns, policy: TariffPolicy,
               energy: EnergyModel) -> Tuple[float, float]:
    """Revenue and energy proxy of one day.

    Revenue counts parked cars at annual charge / accrual workdays; energy
    counts every commuter, parked or turned away.
    """
    if len(commuters.electric) == 0:
        return 0.0, 0.0

    levels = commuters.level - 1
    conventional = policy.as_array()[commuters.category, levels]
    electric = ev_charge_table(policy)[levels]
    charges = np.where(commuters.electric, electric, conventional)
    revenue = float(charges[commuters.parked].sum()) / policy.accrual_workdays_per_year

    intensities = np.where(
        commuters.electric,
        energy.ev_intensity,
        np.asarray(energy.intensity_by_category, dtype=float)[commuters.category],
    )
    energy_proxy = float(intensities.sum()) * energy.round_trip_km
    return revenue, energy_proxy
