"""Hourly profiles, train/test splits and Monte-Carlo outage sampling.

Profile directories hold four CSV files, each with a ``day,hour,id,value``
header:

* ``load_p.csv``  active demand per load profile id, kW
* ``load_q.csv``  reactive demand per load profile id, kvar
* ``pv.csv``      available PV output per generator profile id, kW
* ``road_volume.csv``  traffic volume per road id, vehicles/h

Every (day, id) pair must have all 24 hours.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fleet import LineDamage
from .grid import PowerNetwork, damageable_lines
from .transport import HOURS_PER_DAY, TransportGraph

PROFILE_FILES = ("load_p", "load_q", "pv", "road_volume")
SPLITS = ("train", "test", "all")
TEST_FRACTION = 1 / 12
DEFAULT_REPAIR_TIME = (1, 4)
DEFAULT_REPAIR_RESOURCES = (2, 3)


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class ProfileSet:
    """Per-id arrays of shape ``(n_days, 24)``; ``days`` holds the day labels."""

    days: tuple[int, ...]
    load_p: dict[str, np.ndarray]
    load_q: dict[str, np.ndarray]
    pv: dict[str, np.ndarray]
    road_volume: dict[int, np.ndarray] = field(default_factory=dict)
    split: str = "all"

    def __post_init__(self):
        n = len(self.days)
        for name in PROFILE_FILES:
            for key, arr in getattr(self, name).items():
                if arr.shape != (n, HOURS_PER_DAY):
                    raise ProfileError(f"{name}[{key}]: expected shape {(n, HOURS_PER_DAY)}, got {arr.shape}")
                if np.any(arr < 0) or not np.all(np.isfinite(arr)):
                    raise ProfileError(f"{name}[{key}]: values must be finite and nonnegative")

    @property
    def n_days(self) -> int:
        return len(self.days)

    def select(self, split: str) -> "ProfileSet":
        if split not in SPLITS:
            raise ProfileError(f"unknown split {split!r}; expected one of {SPLITS}")
        if split == "all":
            return self
        n = self.n_days
        n_test = math.ceil(n * TEST_FRACTION) if n else 0
        rows = range(n - n_test, n) if split == "test" else range(0, n - n_test)
        rows = np.asarray(list(rows), dtype=int)

        def take(d):
            return {k: v[rows] for k, v in d.items()}

        return ProfileSet(
            days=tuple(self.days[i] for i in rows),
            load_p=take(self.load_p), load_q=take(self.load_q), pv=take(self.pv),
            road_volume=take(self.road_volume), split=split,
        )

    def road_matrix(self, day: int, graph: TransportGraph) -> np.ndarray | None:
        """``(24, n_roads)`` volumes for one day, falling back to each road's own profile."""
        if not self.road_volume:
            return None
        out = np.empty((HOURS_PER_DAY, len(graph.roads)))
        for j, road in enumerate(graph.roads):
            series = self.road_volume.get(road.id)
            out[:, j] = series[day] if series is not None else road.volume
        return out

    def check_ids(self, net: PowerNetwork, graph: TransportGraph | None = None) -> None:
        """Every profile the network references must exist, and no file may carry unknown ids."""
        load_ids = {d.profile or d.id for d in net.loads}
        pv_ids = {g.profile or g.id for g in net.generators if g.is_pv}
        for name, known, table in (("load_p", load_ids, self.load_p), ("load_q", load_ids, self.load_q),
                                   ("pv", pv_ids, self.pv)):
            unknown = sorted(set(table) - known)
            if unknown:
                raise ProfileError(f"{name}: unknown profile ids {unknown}")
            missing = sorted(known - set(table))
            if missing:
                raise ProfileError(f"{name}: no profile for {missing}")
        if graph is not None and self.road_volume:
            unknown = sorted(set(self.road_volume) - {r.id for r in graph.roads})
            if unknown:
                raise ProfileError(f"road_volume: unknown road ids {unknown}")

    def write(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name in PROFILE_FILES:
            with open(directory / f"{name}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["day", "hour", "id", "value"])
                for key, arr in getattr(self, name).items():
                    for i, day in enumerate(self.days):
                        for h in range(HOURS_PER_DAY):
                            w.writerow([day, h, key, f"{arr[i, h]:.6g}"])


def _read_table(path: Path, int_ids: bool) -> dict[tuple, dict[int, float]]:
    rows: dict[tuple, dict[int, float]] = defaultdict(dict)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"day", "hour", "id", "value"} <= set(reader.fieldnames):
            raise ProfileError(f"{path}: header must contain day,hour,id,value")
        for lineno, rec in enumerate(reader, start=2):
            try:
                day, hour = int(rec["day"]), int(rec["hour"])
                key = int(rec["id"]) if int_ids else rec["id"].strip()
                value = float(rec["value"])
            except (TypeError, ValueError) as exc:
                raise ProfileError(f"{path}:{lineno}: {exc}") from None
            if not 0 <= hour < HOURS_PER_DAY:
                raise ProfileError(f"{path}:{lineno}: hour {hour} outside 0..23")
            if value < 0 or not math.isfinite(value):
                raise ProfileError(f"{path}:{lineno}: value {value} must be finite and nonnegative")
            rows[(key, day)][hour] = value
    return rows


def load_profiles(path, split: str = "all", net: PowerNetwork | None = None,
                  graph: TransportGraph | None = None) -> ProfileSet:
    """Read a profile directory. ``road_volume.csv`` is optional; the others are not."""
    directory = Path(path)
    if not directory.is_dir():
        raise ProfileError(f"profile directory not found: {directory}")
    tables = {}
    for name in PROFILE_FILES:
        f = directory / f"{name}.csv"
        if not f.exists():
            if name == "road_volume":
                tables[name] = {}
                continue
            raise ProfileError(f"missing profile file: {f}")
        tables[name] = _read_table(f, int_ids=name == "road_volume")
    days = sorted({day for t in tables.values() for (_, day) in t})
    gaps = []
    arrays: dict[str, dict] = {}
    for name, table in tables.items():
        ids = sorted({k for (k, _) in table}, key=str)
        out = {}
        for key in ids:
            arr = np.zeros((len(days), HOURS_PER_DAY))
            for i, day in enumerate(days):
                hours = table.get((key, day), {})
                missing = [h for h in range(HOURS_PER_DAY) if h not in hours]
                if missing:
                    gaps.append(f"{name} id={key} day={day} hours={missing}")
                    continue
                arr[i] = [hours[h] for h in range(HOURS_PER_DAY)]
            out[key] = arr
        arrays[name] = out
    if gaps:
        shown = "; ".join(gaps[:10]) + (f"; ... ({len(gaps)} gaps)" if len(gaps) > 10 else "")
        raise ProfileError(f"{directory}: missing hours: {shown}")
    ps = ProfileSet(days=tuple(days), split="all", **arrays)
    if net is not None:
        ps.check_ids(net, graph)
    return ps.select(split)


def _double_peak(hours: np.ndarray) -> np.ndarray:
    morning = np.exp(-0.5 * ((hours - 8.0) / 2.0) ** 2)
    evening = np.exp(-0.5 * ((hours - 19.0) / 2.5) ** 2)
    return 0.45 + 0.3 * morning + 0.55 * evening


def synthetic_profiles(net: PowerNetwork, graph: TransportGraph | None = None, days: int = 30,
                       seed: int = 0) -> ProfileSet:
    """Double-peak load and half-sine PV with day-to-day noise.

    Load curves peak at the nominal load; PV peaks at ``p_max`` on a clear day.
    """
    rng = np.random.default_rng(seed)
    hours = np.arange(HOURS_PER_DAY, dtype=float)
    shape = _double_peak(hours)
    shape /= shape.max()
    sun = np.clip(np.sin(np.pi * (hours - 6.0) / 13.0), 0.0, None)
    load_p, load_q = {}, {}
    day_scale = 0.85 + 0.15 * rng.random(days)
    for d in net.loads:
        key = d.profile or d.id
        if key in load_p:
            continue
        noise = 1.0 + 0.05 * rng.standard_normal((days, HOURS_PER_DAY))
        mult = np.clip(day_scale[:, None] * shape[None, :] * noise, 0.0, 1.0)
        load_p[key] = d.p_kw * mult
        load_q[key] = d.q_kvar * mult
    pv = {}
    clearness = 0.4 + 0.6 * rng.random(days)
    for g in net.generators:
        if not g.is_pv:
            continue
        key = g.profile or g.id
        if key in pv:
            continue
        jitter = np.clip(1.0 + 0.05 * rng.standard_normal((days, HOURS_PER_DAY)), 0.0, None)
        pv[key] = np.clip(g.p_max * clearness[:, None] * sun[None, :] * jitter, 0.0, g.p_max)
    roads = {}
    if graph is not None:
        for r in graph.roads:
            base = np.asarray(r.volume, dtype=float)
            roads[r.id] = np.clip(base[None, :] * (0.9 + 0.2 * rng.random((days, 1))), 0.0, None)
    return ProfileSet(days=tuple(range(days)), load_p=load_p, load_q=load_q, pv=pv, road_volume=roads)


def import_ausgrid(csv_path, out_dir, load_map: dict[str, str], pv_map: dict[str, str],
                   load_scale: float = 1.0, pv_scale: float = 1.0, power_factor: float = 0.9) -> ProfileSet:
    """Convert an Ausgrid solar-home CSV to a profile directory.

    The source layout has one row per (customer, category, date) with 48
    half-hourly kWh readings. ``GC`` rows become load profiles and ``GG`` rows
    PV profiles, keyed through ``load_map``/``pv_map`` (customer -> profile id).
    Half-hour energy pairs are summed to hourly mean kW.
    """
    series: dict[tuple[str, str], dict[str, np.ndarray]] = {"GC": {}, "GG": {}}
    with open(csv_path, newline="") as fh:
        lines = fh.read().splitlines()
    # the public files carry a one-line banner above the header
    start = next((i for i, ln in enumerate(lines) if ln.startswith("Customer")), None)
    if start is None:
        raise ProfileError(f"{csv_path}: no 'Customer' header row")
    reader = csv.reader(lines[start:])
    header = next(reader)
    cat_col = header.index("Consumption Category")
    date_col = header.index("date")
    first = date_col + 1
    for rec in reader:
        if not rec:
            continue
        cust, cat, date = rec[0].strip(), rec[cat_col].strip(), rec[date_col].strip()
        if cat not in series:
            continue
        half = np.asarray([float(v or 0.0) for v in rec[first:first + 48]])
        if half.size != 48:
            raise ProfileError(f"{csv_path}: customer {cust} {date}: expected 48 readings")
        # reading k covers the half hour ending at (k+1)/2 h
        series[cat].setdefault(cust, {})[date] = half.reshape(24, 2).sum(axis=1)
    dates = sorted({d for cat in series.values() for per in cat.values() for d in per}, key=_date_key)
    index = {d: i for i, d in enumerate(dates)}

    def build(cat, mapping, scale):
        out = {}
        for cust, pid in mapping.items():
            per = series[cat].get(cust)
            if per is None:
                raise ProfileError(f"{csv_path}: customer {cust} has no {cat} rows")
            arr = np.zeros((len(dates), HOURS_PER_DAY))
            for d, vals in per.items():
                arr[index[d]] = vals
            out[pid] = np.clip(arr * scale, 0.0, None)
        return out

    load_p = build("GC", load_map, load_scale)
    tan = math.tan(math.acos(power_factor))
    load_q = {k: v * tan for k, v in load_p.items()}
    pv = build("GG", pv_map, pv_scale)
    ps = ProfileSet(days=tuple(range(len(dates))), load_p=load_p, load_q=load_q, pv=pv)
    ps.write(out_dir)
    return ps


def _date_key(text: str):
    for sep in ("/", "-"):
        parts = text.split(sep)
        if len(parts) == 3:
            a, b, c = (int(p) for p in parts)
            return (a, b, c) if a > 31 else (c, b, a)
    return (0, 0, 0)


@dataclass(frozen=True)
class OutageScenario:
    damaged: tuple[LineDamage, ...]
    seed: int | None = None

    @property
    def lines(self) -> tuple[int, ...]:
        return tuple(d.line for d in self.damaged)

    def to_dict(self) -> dict:
        return {"seed": self.seed,
                "damaged": [{"line": d.line, "repair_time": d.repair_time, "resources": d.resources}
                            for d in self.damaged]}

    @classmethod
    def from_dict(cls, raw: dict) -> "OutageScenario":
        return cls(tuple(LineDamage(int(d["line"]), int(d["repair_time"]), int(d["resources"]))
                         for d in raw.get("damaged", [])), raw.get("seed"))


def sample_outage(net: PowerNetwork, fragility: dict[int, float], seed: int | np.random.Generator,
                  repair_time=DEFAULT_REPAIR_TIME, repair_resources=DEFAULT_REPAIR_RESOURCES) -> OutageScenario:
    """Damage each damageable line independently with its fragility probability."""
    allowed = set(damageable_lines(net))
    for line, p in fragility.items():
        if line not in allowed:
            raise ValueError(f"line {line} is not damageable")
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"line {line}: probability {p} outside [0, 1]")
    for lo, hi in (repair_time, repair_resources):
        if lo > hi or lo < 0:
            raise ValueError(f"bad integer range [{lo}, {hi}]")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    damaged = []
    for line in sorted(allowed):
        hit = rng.random() < fragility.get(line, 0.0)
        rt = int(rng.integers(repair_time[0], repair_time[1] + 1))
        rs = int(rng.integers(repair_resources[0], repair_resources[1] + 1))
        if hit:
            damaged.append(LineDamage(line, rt, rs))
    return OutageScenario(tuple(damaged), None if isinstance(seed, np.random.Generator) else int(seed))
