import numpy as np
import pytest

from errors import ConfigurationError, DomainError
from population import CATEGORIES, Vehicle
from tariff import (
    CHARGE_TABLE, CommuterColumns, EnergyModel, EvStrategy, TariffPolicy, accrue_day, annual_charge,
    ev_charge, ev_charge_table, lookup_charge,
)

EXPECTED = {
    'A': (44, 57, 75, 105, 132, 165, 210),
    'B': (58, 76, 100, 140, 176, 220, 280),
    'C': (73, 95, 125, 175, 220, 275, 350),
    'D': (87, 114, 150, 210, 264, 330, 420),
    'E': (102, 133, 175, 245, 308, 385, 490),
}


def test_all_35_charges_match_table():
    policy = TariffPolicy()
    for category, row in EXPECTED.items():
        for level, charge in enumerate(row, start=1):
            assert lookup_charge(category, level, policy) == charge
    assert lookup_charge('A', 1, policy) == 44
    assert lookup_charge('C', 4, policy) == 175
    assert lookup_charge('E', 7, policy) == 490


def test_default_table_is_monotone():
    TariffPolicy().validate()
    table = np.array(CHARGE_TABLE)
    assert np.all(np.diff(table, axis=0) > 0)
    assert np.all(np.diff(table, axis=1) > 0)


def test_out_of_domain_lookups():
    policy = TariffPolicy()
    with pytest.raises(DomainError):
        lookup_charge('F', 1, policy)
    for level in (0, 8):
        with pytest.raises(DomainError):
            lookup_charge('A', level, policy)
        with pytest.raises(DomainError):
            ev_charge(level, policy)


def test_non_monotone_row_rejected():
    table = list(CHARGE_TABLE)
    table[1] = (58.0, 50.0, 100.0, 140.0, 176.0, 220.0, 280.0)
    with pytest.raises(ConfigurationError) as exc:
        TariffPolicy(table=tuple(table)).validate()
    assert exc.value.key == 'table.B'


def test_row_must_exceed_category_above():
    table = list(CHARGE_TABLE)
    table[2] = CHARGE_TABLE[1]
    with pytest.raises(ConfigurationError) as exc:
        TariffPolicy(table=tuple(table)).validate()
    assert exc.value.key == 'table.C'


def test_ev_strategies():
    assert ev_charge(3, TariffPolicy()) == 75
    half = TariffPolicy(ev_strategy=EvStrategy.parse('multiplier:0.5'))
    assert ev_charge(1, half) == 22.0
    free = TariffPolicy(ev_strategy=EvStrategy.parse('multiplier:0.0'))
    assert ev_charge_table(free).tolist() == [0.0] * 7
    flat = TariffPolicy(ev_strategy=EvStrategy.parse('flat:1,2,3,4,5,6,7'))
    assert ev_charge_table(flat).tolist() == [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]


def test_ev_strategy_text_forms():
    for text in ('same_as_a', 'multiplier:0.5', 'flat:1.0,2.0,3.0,4.0,5.0,6.0,7.0'):
        assert EvStrategy.parse(EvStrategy.parse(text).format()) == EvStrategy.parse(text)
    for bad in ('bogus', 'multiplier:x', 'discount:0.5'):
        with pytest.raises(ConfigurationError):
            EvStrategy.parse(bad)
    with pytest.raises(ConfigurationError):
        EvStrategy('multiplier', multiplier=1.5).validate()
    with pytest.raises(ConfigurationError):
        EvStrategy('flat', flat=(1.0, 2.0)).validate()


def test_annual_charge_by_vehicle():
    policy = TariffPolicy(ev_strategy=EvStrategy.parse('multiplier:0.5'))
    assert annual_charge(Vehicle.conventional('D'), 5, policy) == 264
    assert annual_charge(Vehicle.ev(), 5, policy) == 66.0


def test_accrue_day_revenue_and_energy():
    commuters = CommuterColumns(
        electric=np.array([False, True, False]),
        category=np.array([CATEGORIES.index('E'), 0, CATEGORIES.index('A')]),
        level=np.array([7, 1, 2]),
        parked=np.array([True, True, False]),
    )
    revenue, energy = accrue_day(commuters, TariffPolicy(), EnergyModel())
    assert revenue == pytest.approx((490 + 44) / 220)
    # the turned-away commuter still drove
    assert energy == pytest.approx((220 + 0 + 110) * 20.0)


def test_accrue_day_empty():
    empty = CommuterColumns(*(np.array([], dtype=t) for t in (bool, np.int64, np.int64, bool)))
    assert accrue_day(empty, TariffPolicy(), EnergyModel()) == (0.0, 0.0)


def test_energy_model_intensity():
    model = EnergyModel()
    assert model.intensity(Vehicle.conventional('C')) == 158.0
    assert model.intensity(Vehicle.ev()) == 0.0
    with pytest.raises(ConfigurationError):
        EnergyModel(round_trip_km=0).validate()
