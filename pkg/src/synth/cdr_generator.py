"""
Synthetic CDR events for a generated world

Each user draws a Poisson number of events per day at uniform times. Night
events (broad night window, local time) sit at the home tower with
probability p_home_night, otherwise at one of the home's nearest towers. Day
events go home, to a work tower or to a transit tower near the commute midpoint.
Every user has its own random substream, so users can be generated in any order.
"""

import logging
import math
from typing import Iterable, Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from config import StudyConfig
from ingest.records import CdrRecord
from synth.world import World, WorldConfig

logger = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400


class UserSampler:
    """Per-user event placement over the world's towers"""

    def __init__(self, world: World, config: Optional[WorldConfig] = None):
        self.world = world
        self.config = config or world.config
        self.cell_ids = np.array(world.registry.cell_ids)
        self.xy = world.registry.xy()
        self.tree = cKDTree(self.xy)
        self.index = {c: k for k, c in enumerate(self.cell_ids)}
        self.k_near = min(self.config.nearby_towers, len(self.cell_ids) - 1)
        self.study = StudyConfig(start=self.config.start, end=self.config.end,
                                 utc_offset_hours=self.config.utc_offset_hours)

    def _neighbours(self, point: np.ndarray, k: int, exclude: Optional[int] = None) -> np.ndarray:
        if k <= 0:
            return np.array([], dtype=int) if exclude is None else np.array([exclude])
        _, found = self.tree.query(point, k=min(k + 1, len(self.cell_ids)))
        found = np.atleast_1d(found)
        if exclude is not None:
            found = found[found != exclude]
        return found[:k]

    def _work_tower(self, home: int, rng: np.random.Generator) -> int:
        half = self.config.extent_km * 1000.0 / 2
        distance = rng.exponential(self.config.work_distance_km * 1000.0)
        angle = rng.uniform(0, 2 * math.pi)
        target = np.clip(self.xy[home] + distance * np.array([math.cos(angle), math.sin(angle)]), -half, half)
        return int(self.tree.query(target)[1])

    def events(self, user_index: int, user_id: str, home_cell: str) -> List[CdrRecord]:
        """All events of one user, sorted by timestamp"""
        cfg = self.config
        rng = np.random.default_rng([cfg.seed, 3, user_index])
        home = self.index[home_cell]
        work = self._work_tower(home, rng)
        near = self._neighbours(self.xy[home], self.k_near, exclude=home)
        if len(near) == 0:
            near = np.array([home])
        transit = self._neighbours((self.xy[home] + self.xy[work]) / 2, 2 * max(self.k_near, 1))

        per_day = rng.poisson(cfg.events_per_day, size=cfg.days)
        n = int(per_day.sum())
        if n == 0:
            return []
        day = np.repeat(np.arange(cfg.days), per_day)
        second = rng.integers(1, SECONDS_PER_DAY, size=n)
        ts = self.study.start_ts + day.astype(np.int64) * SECONDS_PER_DAY + second

        local_hour = ((ts + self.study.offset_seconds) % SECONDS_PER_DAY) / 3600.0
        lo, hi = self.study.night_broad
        night = (local_hour >= lo) | (local_hour < hi) if lo > hi else (local_hour >= lo) & (local_hour < hi)

        u = rng.random(n)
        towers = np.empty(n, dtype=np.int64)
        night_home = night & (u < cfg.p_home_night)
        night_near = night & ~night_home
        towers[night_home] = home
        towers[night_near] = near[rng.integers(0, len(near), size=int(night_near.sum()))]

        day_home = ~night & (u < cfg.p_home_day)
        day_work = ~night & (u >= cfg.p_home_day) & (u < cfg.p_home_day + cfg.p_work_day)
        day_transit = ~night & ~day_home & ~day_work
        towers[day_home] = home
        towers[day_work] = work
        towers[day_transit] = transit[rng.integers(0, len(transit), size=int(day_transit.sum()))]

        order = np.lexsort((towers, ts))
        cells = self.cell_ids[towers[order]]
        records = [CdrRecord(user_id, int(t), str(c)) for t, c in zip(ts[order], cells)]
        return records


def iter_cdr_records(world: World, config: Optional[WorldConfig] = None) -> Iterator[Tuple[str, List[CdrRecord]]]:
    """Yield (user_id, events) per user in user_id order"""
    sampler = UserSampler(world, config)
    for k, user_id in enumerate(sorted(world.truth.homes)):
        records = sampler.events(k, user_id, world.truth.homes[user_id])
        yield user_id, records


def generate_cdr(world: World, config: Optional[WorldConfig] = None) -> List[CdrRecord]:
    """
    Every synthetic event, sorted by (user_id, timestamp)

    Timestamps lie strictly inside the study window; zero days yields no events.
    """
    cfg = config or world.config
    if cfg.days == 0 or cfg.events_per_day == 0:
        return []
    records: List[CdrRecord] = []
    for _, events in iter_cdr_records(world, cfg):
        records.extend(events)
    logger.info(f"Synthetic CDR: {len(records)} events for {len(world.truth.homes)} users over "
                f"{cfg.days} days")
    return records


def records_frame(records: Iterable[CdrRecord]) -> pd.DataFrame:
    """CDR records in the ingest CSV layout (user_id,timestamp,cell_id)"""
    records = list(records)
    stamps = pd.to_datetime(pd.Series([r.timestamp for r in records], dtype='int64'), unit='s', utc=True)
    return pd.DataFrame({'user_id': [r.user_id for r in records],
                         'timestamp': stamps.dt.strftime('%Y-%m-%dT%H:%M:%SZ'),
                         'cell_id': [r.cell_id for r in records]})
