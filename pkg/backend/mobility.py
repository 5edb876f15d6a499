"""
Commute and Parking
Daily commute state chart of car owners, the Free/Occupied state chart of
parking spaces, and the request/release protocol between them.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from errors import ConfigurationError, ProtocolError
from population import CommuteState

logger = logging.getLogger(__name__)

MINUTES_PER_DAY = 1440
WEEKDAYS = ('mon', 'tue', 'wed', 'thu', 'fri', 'sat', 'sun')


class SpaceState(Enum):
    FREE = 'Free'
    OCCUPIED = 'Occupied'


@dataclass(frozen=True)
class ParkingSpace:
    id: int
    state: SpaceState
    occupant: Optional[int] = None


class ParkingLot:
    """Identical parking spaces handed out lowest id first.

    occupant[i] is the owner id parked in space i, or -1 when the space is Free.
    """

    def __init__(self, capacity: int):
        if capacity < 0:
            raise ConfigurationError('capacity', f"capacity must be >= 0, got {capacity}")
        self.capacity = capacity
        self.occupant = np.full(capacity, -1, dtype=np.int64)

    @property
    def spaces(self) -> List[ParkingSpace]:
        return [
            ParkingSpace(i, SpaceState.FREE) if o < 0 else ParkingSpace(i, SpaceState.OCCUPIED, int(o))
            for i, o in enumerate(self.occupant)
        ]

    @property
    def occupied_count(self) -> int:
        return int(np.count_nonzero(self.occupant >= 0))

    def space_of(self, owner_id: int) -> Optional[int]:
        held = np.flatnonzero(self.occupant == owner_id)
        return int(held[0]) if len(held) else None


@dataclass(frozen=True)
class CommuteCalendar:
    """Shared commute schedule, times in minutes after midnight"""
    depart_home_time: int = 8 * 60
    travel_minutes: int = 30
    depart_work_time: int = 17 * 60
    workdays: FrozenSet[int] = frozenset(range(5))
    start_weekday: int = 0

    def validate(self):
        if self.travel_minutes <= 0:
            raise ConfigurationError('travel_minutes', "travel time must be > 0")
        if not 0 <= self.depart_home_time < MINUTES_PER_DAY:
            raise ConfigurationError('depart_home_time', "must be a time of day")
        if not self.depart_home_time + self.travel_minutes < self.depart_work_time:
            raise ConfigurationError(
                'depart_work_time', "owners must arrive at work before they leave (depart_home + travel < depart_work)"
            )
        # everyone is home again before the end-of-day tick at 23:59
        if not self.depart_work_time + self.travel_minutes < MINUTES_PER_DAY - 1:
            raise ConfigurationError('depart_work_time', "owners must be home before 23:59")
        if not self.workdays <= set(range(7)):
            raise ConfigurationError('workdays', "weekdays must be mon..sun")
        if self.start_weekday not in range(7):
            raise ConfigurationError('start_weekday', "must be mon..sun")

    def is_workday(self, day: int) -> bool:
        return (self.start_weekday + day) % 7 in self.workdays


def parse_time_of_day(text: str) -> int:
    hours, sep, minutes = text.strip().partition(':')
    try:
        h, m = int(hours), int(minutes)
    except ValueError:
        raise ConfigurationError('time', f"expected HH:MM, got {text!r}")
    if not sep or not (0 <= h < 24 and 0 <= m < 60):
        raise ConfigurationError('time', f"expected HH:MM, got {text!r}")
    return h * 60 + m


def format_time_of_day(minutes: int) -> str:
    return f"{minutes // 60:02d}:{minutes % 60:02d}"


def parse_weekdays(text: str) -> FrozenSet[int]:
    names = [t.strip().lower() for t in text.split(',') if t.strip()]
    unknown = [n for n in names if n not in WEEKDAYS]
    if unknown:
        raise ConfigurationError('workdays', f"unknown weekday(s) {unknown}")
    return frozenset(WEEKDAYS.index(n) for n in names)


def format_weekdays(days: FrozenSet[int]) -> str:
    return ','.join(WEEKDAYS[d] for d in sorted(days))


@dataclass(frozen=True)
class CommutePhase:
    """One shared state transition of the commute, time in minutes since run start"""
    time: int
    from_state: CommuteState
    to_state: CommuteState
    action: Optional[str] = None  # 'request' | 'release'


@dataclass(frozen=True)
class CommuteEvent:
    time: int
    owner_id: int
    from_state: CommuteState
    to_state: CommuteState
    action: Optional[str] = None


def day_schedule(calendar: CommuteCalendar, day: int) -> List[CommutePhase]:
    """The four commute transitions of a workday; nothing on other days"""
    if not calendar.is_workday(day):
        return []
    start = day * MINUTES_PER_DAY
    dh = start + calendar.depart_home_time
    dw = start + calendar.depart_work_time
    travel = calendar.travel_minutes
    return [
        CommutePhase(dh, CommuteState.AT_HOME, CommuteState.WAY_WORK),
        CommutePhase(dh + travel, CommuteState.WAY_WORK, CommuteState.AT_WORK, 'request'),
        CommutePhase(dw, CommuteState.AT_WORK, CommuteState.WAY_HOME, 'release'),
        CommutePhase(dw + travel, CommuteState.WAY_HOME, CommuteState.AT_HOME),
    ]


def commute_events(owner_id: int, calendar: CommuteCalendar, day: int) -> List[CommuteEvent]:
    return [
        CommuteEvent(p.time, owner_id, p.from_state, p.to_state, p.action)
        for p in day_schedule(calendar, day)
    ]


def contact_minutes(calendar: CommuteCalendar, day: int) -> np.ndarray:
    """Minutes of the day (0-1439) spent AtHome or AtWork"""
    minutes = np.arange(MINUTES_PER_DAY)
    if not calendar.is_workday(day):
        return minutes
    travel = calendar.travel_minutes
    on_road = (
        ((minutes >= calendar.depart_home_time) & (minutes < calendar.depart_home_time + travel))
        | ((minutes >= calendar.depart_work_time) & (minutes < calendar.depart_work_time + travel))
    )
    return minutes[~on_road]


def request_space(owner_id: int, lot: ParkingLot) -> Optional[int]:
    """Park in the lowest-id Free space; None when the lot is full"""
    if lot.space_of(owner_id) is not None:
        raise ProtocolError(f"owner {owner_id} already holds space {lot.space_of(owner_id)}")
    free = np.flatnonzero(lot.occupant < 0)
    if len(free) == 0:
        logger.debug("Owner %d rejected, lot full (%d spaces)", owner_id, lot.capacity)
        return None
    space = int(free[0])
    lot.occupant[space] = owner_id
    return space


def release_space(owner_id: int, lot: ParkingLot) -> int:
    held = np.flatnonzero(lot.occupant == owner_id)
    if len(held) != 1:
        raise ProtocolError(f"owner {owner_id} holds {len(held)} spaces, expected exactly 1")
    space = int(held[0])
    lot.occupant[space] = -1
    return space


def request_spaces(owner_ids: Sequence[int], lot: ParkingLot) -> Tuple[np.ndarray, np.ndarray]:
    """Batch request_space in the given owner order.

    Returns (parked owner ids, rejected owner ids); the outcome equals
    calling request_space for each owner in turn.
    """
    owner_ids = np.asarray(owner_ids, dtype=np.int64)
    if len(np.unique(owner_ids)) != len(owner_ids):
        raise ProtocolError("an owner requested two spaces in one batch")
    holding = np.isin(owner_ids, lot.occupant[lot.occupant >= 0])
    if holding.any():
        raise ProtocolError(f"owner {int(owner_ids[holding][0])} already holds a space")
    free = np.flatnonzero(lot.occupant < 0)
    n = min(len(free), len(owner_ids))
    lot.occupant[free[:n]] = owner_ids[:n]
    return owner_ids[:n], owner_ids[n:]


def release_spaces(owner_ids: Sequence[int], lot: ParkingLot) -> np.ndarray:
    """Batch release_space; returns the released space ids"""
    owner_ids = np.asarray(owner_ids, dtype=np.int64)
    held = np.flatnonzero(np.isin(lot.occupant, owner_ids))
    if len(held) != len(owner_ids) or len(np.unique(owner_ids)) != len(owner_ids):
        raise ProtocolError(f"{len(owner_ids)} owners released {len(held)} spaces")
    lot.occupant[held] = -1
    return held


def audit_lot(lot: ParkingLot, parked_owner_ids: Sequence[int]):
    """No owner holds two spaces and the occupants are exactly the parked owners"""
    occupants = lot.occupant[lot.occupant >= 0]
    if len(np.unique(occupants)) != len(occupants):
        raise ProtocolError("an owner occupies two spaces")
    parked = np.asarray(parked_owner_ids, dtype=np.int64)
    if len(occupants) != len(parked) or not np.array_equal(np.sort(occupants), np.sort(parked)):
        raise ProtocolError(
            f"occupancy audit failed: {len(occupants)} spaces occupied, {len(parked)} owners parked"
        )
