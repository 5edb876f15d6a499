"""
EV Adoption Dynamics
Advertising exposure, word-of-mouth contacts and the gated purchase
decision that turns a conventional car owner into an EV owner.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from errors import ConfigurationError, ProtocolError
from population import CarOwner, StereotypeSpec, Vehicle
from tariff import TariffPolicy, annual_charge

logger = logging.getLogger(__name__)

DAYS_PER_YEAR = 365.25


@dataclass(frozen=True)
class AdoptionParams:
    ad_rate: float = 0.011               # exposures per agent per year
    contact_rate: float = 100.0          # contacts per adopter per year
    adoption_fraction: float = 0.015     # default cogency
    awareness_threshold: float = 50.0
    incentive_beta: float = 0.0
    subsidy_fraction: float = 0.0
    subsidy_cap: float = 5000.0
    ev_price: float = 0.0
    conventional_price: float = 0.0
    amortization_years: float = 5.0
    salary_by_level: Tuple[float, ...] = (18000.0, 22000.0, 27000.0, 33000.0, 40000.0, 48000.0, 60000.0)

    def validate(self):
        for name in ('ad_rate', 'contact_rate', 'incentive_beta', 'ev_price', 'conventional_price'):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ConfigurationError(name, f"must be finite and >= 0, got {value}")
        for name in ('adoption_fraction', 'subsidy_fraction'):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(name, f"probability {value} outside [0, 1]")
        if not 0.0 <= self.awareness_threshold <= 100.0:
            raise ConfigurationError(
                'awareness_threshold', f"threshold {self.awareness_threshold} outside the 0-100 range"
            )
        if self.subsidy_cap < 0:
            raise ConfigurationError('subsidy_cap', "must be >= 0")
        if not self.amortization_years > 0:
            raise ConfigurationError('amortization_years', "must be > 0")
        if len(self.salary_by_level) != 7:
            raise ConfigurationError('salary_by_level', f"expected 7 salaries, got {len(self.salary_by_level)}")
        if self.salary_by_level[0] <= 0 or any(b <= a for a, b in zip(self.salary_by_level, self.salary_by_level[1:])):
            raise ConfigurationError('salary_by_level', "salaries must be positive and strictly increasing in level")


class TriggerKind(Enum):
    AD = 'Ad'
    WOM = 'WomMessage'


@dataclass(frozen=True)
class PurchaseTrigger:
    kind: TriggerKind
    day: int
    source: Optional[int] = None
    source_cogency: Optional[float] = None

    def __post_init__(self):
        if self.kind is TriggerKind.WOM and (self.source is None or self.source_cogency is None):
            raise ProtocolError("a WOM message needs a source and its cogency")
        if self.kind is TriggerKind.AD and self.source is not None:
            raise ProtocolError("an ad has no source agent")


def next_ad_exposure(owner_id: int, params: AdoptionParams, rng: np.random.Generator,
                     now: float = 0.0) -> float:
    """Day (fractional) of the owner's next ad exposure, inf when ad_rate is 0"""
    if params.ad_rate <= 0:
        return math.inf
    return now + rng.exponential(DAYS_PER_YEAR / params.ad_rate)


def daily_wom_contacts(adopter_ids: np.ndarray, population_size: int, params: AdoptionParams,
                       rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """One day of contacts for every adopter at once.

    Returns parallel (source, target) arrays; targets are uniform over the
    other agents.
    """
    adopter_ids = np.asarray(adopter_ids, dtype=np.int64)
    empty = np.empty(0, dtype=np.int64)
    if population_size < 2 or len(adopter_ids) == 0 or params.contact_rate <= 0:
        return empty, empty
    counts = rng.poisson(params.contact_rate / DAYS_PER_YEAR, size=len(adopter_ids))
    sources = np.repeat(adopter_ids, counts)
    targets = rng.integers(0, population_size - 1, size=len(sources))
    targets += targets >= sources
    return sources, targets


def wom_contacts(adopter_id: int, population_size: int, params: AdoptionParams,
                 rng: np.random.Generator) -> List[int]:
    """Agents contacted by one adopter during one day"""
    _, targets = daily_wom_contacts(np.array([adopter_id]), population_size, params, rng)
    return [int(t) for t in targets]


def incentive_multiplier(owner: CarOwner, tariff: TariffPolicy, params: AdoptionParams) -> float:
    """Scales the buy probability by the owner's yearly gain from switching"""
    if owner.vehicle.electric:
        raise ProtocolError(f"owner {owner.id} already drives an EV")
    if params.incentive_beta == 0:
        return 1.0
    level = owner.staff_level
    saving = annual_charge(owner.vehicle, level, tariff) - annual_charge(Vehicle.ev(), level, tariff)
    subsidy = min(params.subsidy_fraction * params.ev_price, params.subsidy_cap) / params.amortization_years
    premium = (params.ev_price - params.conventional_price) / params.amortization_years
    salary = params.salary_by_level[level - 1]
    factor = 1.0 + params.incentive_beta * (saving + subsidy - premium) / salary
    return min(2.0, max(0.0, factor))


def decide_purchase(owner: CarOwner, trigger: PurchaseTrigger, spec: StereotypeSpec,
                    tariff: TariffPolicy, params: AdoptionParams,
                    rng: np.random.Generator) -> bool:
    """Gate on awareness, then transmission (WOM only), then the buy draw.

    Always consumes exactly two uniforms from rng. Adopting flips the
    owner's vehicle to Electric and stamps adopted_at.
    """
    if owner.vehicle.electric:
        raise ProtocolError(f"{trigger.kind.value} trigger delivered to EV owner {owner.id}")
    u_transmit, u_buy = rng.random(2)

    if not owner.energy_awareness > params.awareness_threshold:
        return False
    if trigger.kind is TriggerKind.WOM and not u_transmit < trigger.source_cogency:
        return False
    p_buy = min(1.0, spec.buy_probability * incentive_multiplier(owner, tariff, params))
    if not u_buy < p_buy:
        return False

    owner.vehicle = Vehicle.ev()
    owner.adopted_at = trigger.day
    logger.debug("Owner %d adopted on day %d via %s", owner.id, trigger.day, trigger.kind.value)
    return True
