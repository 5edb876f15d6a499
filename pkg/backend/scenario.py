"""
Scenario Configuration
Line-oriented `section.key = value` scenario files: parsing with defaults,
canonical serialization and the content digest of a resolved scenario.
"""

import hashlib
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Mapping, Optional, Tuple

from adoption import AdoptionParams
from errors import ConfigurationError
from mobility import (
    WEEKDAYS, CommuteCalendar, format_time_of_day, format_weekdays, parse_time_of_day, parse_weekdays,
)
from population import CATEGORIES, DEFAULT_STEREOTYPES, CogencySpec, PopulationSpec
from tariff import EnergyModel, EvStrategy, TariffPolicy

logger = logging.getLogger(__name__)

MAX_SEED = 2 ** 64


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete description of one simulation run (all parameters + seed)"""
    population: PopulationSpec = field(default_factory=PopulationSpec)
    calendar: CommuteCalendar = field(default_factory=CommuteCalendar)
    lot_capacity: int = 600
    tariff: TariffPolicy = field(default_factory=TariffPolicy)
    energy: EnergyModel = field(default_factory=EnergyModel)
    adoption: AdoptionParams = field(default_factory=AdoptionParams)
    horizon_days: int = 3650
    replications: int = 100
    base_seed: int = 2010


# -- value converters -------------------------------------------------------

def _int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigurationError('value', f"expected an integer, got {text!r}")


def _float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ConfigurationError('value', f"expected a number, got {text!r}")
    if not math.isfinite(value):
        raise ConfigurationError('value', f"expected a finite number, got {text!r}")
    return value


def _floats(count: int) -> Callable[[str], Tuple[float, ...]]:
    def convert(text: str) -> Tuple[float, ...]:
        values = tuple(_float(v.strip()) for v in text.split(','))
        if len(values) != count:
            raise ConfigurationError('value', f"expected {count} comma-separated numbers, got {len(values)}")
        return values
    return convert


def _weekday(text: str) -> int:
    name = text.strip().lower()
    if name not in WEEKDAYS:
        raise ConfigurationError('value', f"expected one of {', '.join(WEEKDAYS)}, got {text!r}")
    return WEEKDAYS.index(name)


def _format_floats(values) -> str:
    return ','.join(repr(float(v)) for v in values)


@dataclass(frozen=True)
class KeySpec:
    parse: Callable[[str], object]
    format: Callable[[object], str]
    is_list: bool = False


INT = KeySpec(_int, str)
FLOAT = KeySpec(_float, lambda v: repr(float(v)))


def _list(count: int) -> KeySpec:
    return KeySpec(_floats(count), _format_floats, is_list=True)


STEREOTYPE_FIELDS = ('share', 'ea_low', 'ea_high', 'buy_probability')
ADOPTION_SCALARS = ('ad_rate', 'contact_rate', 'adoption_fraction', 'awareness_threshold', 'incentive_beta',
                    'subsidy_fraction', 'subsidy_cap', 'ev_price', 'conventional_price', 'amortization_years')


def _build_keys() -> Dict[str, KeySpec]:
    keys = {'population.n_agents': INT}
    for s in DEFAULT_STEREOTYPES:
        for name in STEREOTYPE_FIELDS:
            keys[f"population.stereotype.{s.id}.{name}"] = FLOAT
    keys['population.staff_level_weights'] = _list(7)
    keys['population.fleet_category_weights'] = _list(5)
    keys['population.cogency'] = KeySpec(CogencySpec.parse, lambda c: c.format())

    keys['calendar.depart_home_time'] = KeySpec(parse_time_of_day, format_time_of_day)
    keys['calendar.travel_minutes'] = INT
    keys['calendar.depart_work_time'] = KeySpec(parse_time_of_day, format_time_of_day)
    keys['calendar.workdays'] = KeySpec(parse_weekdays, format_weekdays, is_list=True)
    keys['calendar.start_weekday'] = KeySpec(_weekday, lambda d: WEEKDAYS[d])

    keys['lot.capacity'] = INT

    for category in CATEGORIES:
        keys[f"tariff.table.{category}"] = _list(7)
    keys['tariff.ev_strategy'] = KeySpec(EvStrategy.parse, lambda s: s.format())
    keys['tariff.accrual_workdays_per_year'] = INT

    keys['energy.intensity_by_category'] = _list(5)
    keys['energy.round_trip_km'] = FLOAT
    keys['energy.ev_intensity'] = FLOAT

    for name in ADOPTION_SCALARS:
        keys[f"adoption.{name}"] = FLOAT
    keys['adoption.salary_by_level'] = _list(7)

    keys['run.horizon_days'] = INT
    keys['run.replications'] = INT
    keys['run.base_seed'] = INT
    return keys


KEYS = _build_keys()


def is_scalar_key(key: str) -> bool:
    return key in KEYS and not KEYS[key].is_list


# -- config <-> typed values ----------------------------------------------------

def _typed_from_config(config: ScenarioConfig) -> Dict[str, object]:
    pop = config.population
    values: Dict[str, object] = {'population.n_agents': pop.n_agents}
    for s in pop.stereotypes:
        for name in STEREOTYPE_FIELDS:
            values[f"population.stereotype.{s.id}.{name}"] = getattr(s, name)
    values['population.staff_level_weights'] = pop.staff_level_weights
    values['population.fleet_category_weights'] = pop.fleet_category_weights
    values['population.cogency'] = pop.cogency

    cal = config.calendar
    values['calendar.depart_home_time'] = cal.depart_home_time
    values['calendar.travel_minutes'] = cal.travel_minutes
    values['calendar.depart_work_time'] = cal.depart_work_time
    values['calendar.workdays'] = cal.workdays
    values['calendar.start_weekday'] = cal.start_weekday

    values['lot.capacity'] = config.lot_capacity

    for category, row in zip(CATEGORIES, config.tariff.table):
        values[f"tariff.table.{category}"] = row
    values['tariff.ev_strategy'] = config.tariff.ev_strategy
    values['tariff.accrual_workdays_per_year'] = config.tariff.accrual_workdays_per_year

    values['energy.intensity_by_category'] = config.energy.intensity_by_category
    values['energy.round_trip_km'] = config.energy.round_trip_km
    values['energy.ev_intensity'] = config.energy.ev_intensity

    for name in ADOPTION_SCALARS:
        values[f"adoption.{name}"] = getattr(config.adoption, name)
    values['adoption.salary_by_level'] = config.adoption.salary_by_level

    values['run.horizon_days'] = config.horizon_days
    values['run.replications'] = config.replications
    values['run.base_seed'] = config.base_seed
    return values


def _validated(section: str, obj, lines: Mapping[str, int]):
    try:
        obj.validate()
    except ConfigurationError as exc:
        key = f"{section}.{exc.key}"
        raise exc.located(key, lines.get(key))
    return obj


def _config_from_typed(v: Mapping[str, object], lines: Mapping[str, int]) -> ScenarioConfig:
    stereotypes = tuple(
        replace(s, **{name: v[f"population.stereotype.{s.id}.{name}"] for name in STEREOTYPE_FIELDS})
        for s in DEFAULT_STEREOTYPES
    )
    population = _validated('population', PopulationSpec(
        stereotypes=stereotypes,
        n_agents=v['population.n_agents'],
        staff_level_weights=v['population.staff_level_weights'],
        fleet_category_weights=v['population.fleet_category_weights'],
        cogency=v['population.cogency'],
    ), lines)
    calendar = _validated('calendar', CommuteCalendar(
        depart_home_time=v['calendar.depart_home_time'],
        travel_minutes=v['calendar.travel_minutes'],
        depart_work_time=v['calendar.depart_work_time'],
        workdays=v['calendar.workdays'],
        start_weekday=v['calendar.start_weekday'],
    ), lines)
    tariff = _validated('tariff', TariffPolicy(
        table=tuple(v[f"tariff.table.{c}"] for c in CATEGORIES),
        ev_strategy=v['tariff.ev_strategy'],
        accrual_workdays_per_year=v['tariff.accrual_workdays_per_year'],
    ), lines)
    energy = _validated('energy', EnergyModel(
        intensity_by_category=v['energy.intensity_by_category'],
        round_trip_km=v['energy.round_trip_km'],
        ev_intensity=v['energy.ev_intensity'],
    ), lines)
    adoption = _validated('adoption', AdoptionParams(
        salary_by_level=v['adoption.salary_by_level'],
        **{name: v[f"adoption.{name}"] for name in ADOPTION_SCALARS},
    ), lines)

    checks = (
        ('lot.capacity', v['lot.capacity'] >= 0, "capacity must be >= 0"),
        ('run.horizon_days', v['run.horizon_days'] >= 0, "horizon must be >= 0 days"),
        ('run.replications', v['run.replications'] >= 1, "at least one replication is required"),
        ('run.base_seed', 0 <= v['run.base_seed'] < MAX_SEED, "seed must be an unsigned 64-bit integer"),
    )
    for key, ok, message in checks:
        if not ok:
            raise ConfigurationError(key, message, lines.get(key))

    return ScenarioConfig(
        population=population,
        calendar=calendar,
        lot_capacity=v['lot.capacity'],
        tariff=tariff,
        energy=energy,
        adoption=adoption,
        horizon_days=v['run.horizon_days'],
        replications=v['run.replications'],
        base_seed=v['run.base_seed'],
    )


# -- public API ---------------------------------------------------------------

def parse_scenario(text: str) -> ScenarioConfig:
    """Resolve scenario text into a validated config; absent keys take defaults"""
    values = _typed_from_config(ScenarioConfig())
    lines: Dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition('=')
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigurationError(key or line, "expected 'key = value'", lineno)
        if key not in KEYS:
            raise ConfigurationError(key, "unknown key", lineno)
        if key in lines:
            raise ConfigurationError(key, f"duplicate key (first set on line {lines[key]})", lineno)
        lines[key] = lineno
        try:
            values[key] = KEYS[key].parse(value)
        except ConfigurationError as exc:
            raise exc.located(key, lineno)
    return _config_from_typed(values, lines)


def serialize_scenario(config: ScenarioConfig) -> str:
    """Canonical text: every key, sorted, one `key = value` per line"""
    values = _typed_from_config(config)
    return ''.join(f"{key} = {KEYS[key].format(values[key])}\n" for key in sorted(values))


def scenario_digest(config: ScenarioConfig) -> str:
    return hashlib.sha256(serialize_scenario(config).encode('utf-8')).hexdigest()


def apply_overrides(config: ScenarioConfig, overrides: Mapping[str, str]) -> ScenarioConfig:
    """Re-resolve config with some keys replaced by scenario-file text values"""
    values = _typed_from_config(config)
    for key, text in overrides.items():
        if key not in KEYS:
            raise ConfigurationError(key, "unknown key")
        try:
            values[key] = KEYS[key].parse(str(text))
        except ConfigurationError as exc:
            raise exc.located(key, None)
    return _config_from_typed(values, {})


def load_scenario(path: str) -> ScenarioConfig:
    with open(path, 'rb') as f:
        data = f.read()
    try:
        text = data.decode('utf-8')
    except UnicodeDecodeError as exc:
        line = data.count(b'\n', 0, exc.start) + 1
        raise ConfigurationError('scenario', f"{path} is not valid UTF-8 (byte {exc.start})", line)
    config = parse_scenario(text)
    logger.info("Loaded scenario %s (digest %s)", path, scenario_digest(config)[:12])
    return config


def format_value(config: ScenarioConfig, key: str) -> str:
    return KEYS[key].format(_typed_from_config(config)[key])


def default_scenario(**changes) -> ScenarioConfig:
    return replace(ScenarioConfig(), **changes) if changes else ScenarioConfig()
