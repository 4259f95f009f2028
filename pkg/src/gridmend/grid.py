"""Distribution network data model and its JSON file format."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

SCHEMA_VERSION = 1


class NetworkError(ValueError):
    """Raised when a network file cannot be parsed or violates an invariant."""


class LineKind(str, enum.Enum):
    FIXED = "fixed"
    TIE = "tie"
    DAMAGEABLE = "damageable"


class GenKind(str, enum.Enum):
    DG = "dg"
    PV_FORMING = "pv_forming"
    PV_FOLLOWING = "pv_following"


@dataclass(frozen=True)
class Bus:
    id: int


@dataclass(frozen=True)
class Line:
    """Branch between two buses. ``r`` and ``x`` are per unit, ``s_max`` in kVA."""

    id: int
    from_bus: int
    to_bus: int
    r: float
    x: float
    s_max: float
    kind: LineKind = LineKind.FIXED
    repair_time: int = 0
    repair_resources: int = 0

    @property
    def ends(self) -> tuple[int, int]:
        return (self.from_bus, self.to_bus)


@dataclass(frozen=True)
class Generator:
    id: str
    kind: GenKind
    bus: int
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    s_max: float = 0.0
    profile: str | None = None

    @property
    def is_pv(self) -> bool:
        return self.kind is not GenKind.DG

    @property
    def black_start(self) -> bool:
        return self.kind is not GenKind.PV_FOLLOWING


@dataclass(frozen=True)
class Load:
    id: str
    bus: int
    p_kw: float
    q_kvar: float
    essential: bool
    cost: float
    profile: str | None = None


@dataclass(frozen=True)
class MessStation:
    id: int
    bus: int
    node: int


@dataclass(frozen=True)
class PowerNetwork:
    name: str
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...] = ()
    loads: tuple[Load, ...] = ()
    stations: tuple[MessStation, ...] = ()
    base_kv: float = 12.66
    base_kva: float = 1000.0
    v_min: float = 0.95
    v_max: float = 1.05

    @property
    def bus_ids(self) -> list[int]:
        return [b.id for b in self.buses]

    @cached_property
    def bus_index(self) -> dict[int, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @cached_property
    def line_by_id(self) -> dict[int, Line]:
        return {ln.id: ln for ln in self.lines}

    @cached_property
    def station_by_id(self) -> dict[int, MessStation]:
        return {s.id: s for s in self.stations}

    def line(self, line_id: int) -> Line:
        return self.line_by_id[line_id]

    def black_start_buses(self) -> set[int]:
        """Buses that host a DG, a grid-forming PV or an MPS station."""
        out = {g.bus for g in self.generators if g.black_start}
        out.update(s.bus for s in self.stations)
        return out

    def tie_lines(self) -> list[int]:
        return [ln.id for ln in self.lines if ln.kind is LineKind.TIE]

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "base_kv": self.base_kv,
            "base_kva": self.base_kva,
            "v_min": self.v_min,
            "v_max": self.v_max,
            "buses": [{"id": b.id} for b in self.buses],
            "lines": [_line_dict(ln) for ln in self.lines],
            "generators": [_gen_dict(g) for g in self.generators],
            "loads": [_load_dict(d) for d in self.loads],
            "stations": [{"id": s.id, "bus": s.bus, "node": s.node} for s in self.stations],
        }

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")


def damageable_lines(net: PowerNetwork) -> list[int]:
    return [ln.id for ln in net.lines if ln.kind is LineKind.DAMAGEABLE]


def _line_dict(ln: Line) -> dict:
    d = {"id": ln.id, "from": ln.from_bus, "to": ln.to_bus, "r": ln.r, "x": ln.x,
         "s_max": ln.s_max, "kind": ln.kind.value}
    if ln.kind is LineKind.DAMAGEABLE:
        d["repair_time"] = ln.repair_time
        d["repair_resources"] = ln.repair_resources
    return d


def _gen_dict(g: Generator) -> dict:
    d = {"id": g.id, "kind": g.kind.value, "bus": g.bus, "p_min": g.p_min, "p_max": g.p_max,
         "q_min": g.q_min, "q_max": g.q_max}
    if g.is_pv:
        d["s_max"] = g.s_max
        d["profile"] = g.profile
    return d


def _load_dict(d: Load) -> dict:
    return {"id": d.id, "bus": d.bus, "p_kw": d.p_kw, "q_kvar": d.q_kvar,
            "essential": d.essential, "cost": d.cost, "profile": d.profile}


def load_network(path) -> PowerNetwork:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise NetworkError(f"{path}: parse error at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return network_from_dict(raw, source=str(path))


def network_from_dict(raw: dict, source: str = "<dict>") -> PowerNetwork:
    def req(obj, key, where):
        if key not in obj:
            raise NetworkError(f"{source}: {where}: missing field '{key}'")
        return obj[key]

    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise NetworkError(f"{source}: unsupported schema_version {version}")
    try:
        buses = tuple(Bus(int(req(b, "id", f"buses[{i}]"))) for i, b in enumerate(req(raw, "buses", "root")))
        lines = []
        for i, ln in enumerate(req(raw, "lines", "root")):
            where = f"lines[{i}]"
            kind = LineKind(ln.get("kind", "fixed"))
            lines.append(Line(
                id=int(req(ln, "id", where)),
                from_bus=int(req(ln, "from", where)),
                to_bus=int(req(ln, "to", where)),
                r=float(req(ln, "r", where)),
                x=float(req(ln, "x", where)),
                s_max=float(req(ln, "s_max", where)),
                kind=kind,
                repair_time=int(ln.get("repair_time", 0)),
                repair_resources=int(ln.get("repair_resources", 0)),
            ))
        gens = []
        for i, g in enumerate(raw.get("generators", [])):
            where = f"generators[{i}]"
            kind = GenKind(req(g, "kind", where))
            gens.append(Generator(
                id=str(req(g, "id", where)),
                kind=kind,
                bus=int(req(g, "bus", where)),
                p_min=float(g.get("p_min", 0.0)),
                p_max=float(req(g, "p_max", where)),
                q_min=float(g.get("q_min", 0.0)),
                q_max=float(g.get("q_max", 0.0)),
                s_max=float(g.get("s_max", 0.0)),
                profile=g.get("profile", str(g["id"]) if kind is not GenKind.DG else None),
            ))
        loads = []
        for i, d in enumerate(raw.get("loads", [])):
            where = f"loads[{i}]"
            loads.append(Load(
                id=str(req(d, "id", where)),
                bus=int(req(d, "bus", where)),
                p_kw=float(req(d, "p_kw", where)),
                q_kvar=float(d.get("q_kvar", 0.0)),
                essential=bool(d.get("essential", False)),
                cost=float(req(d, "cost", where)),
                profile=d.get("profile", str(d["id"])),
            ))
        stations = tuple(
            MessStation(int(req(s, "id", f"stations[{i}]")), int(req(s, "bus", f"stations[{i}]")),
                        int(req(s, "node", f"stations[{i}]")))
            for i, s in enumerate(raw.get("stations", []))
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, NetworkError):
            raise
        raise NetworkError(f"{source}: bad field value: {exc}") from exc

    net = PowerNetwork(
        name=str(raw.get("name", "network")),
        buses=tuple(sorted(buses, key=lambda b: b.id)),
        lines=tuple(sorted(lines, key=lambda ln: ln.id)),
        generators=tuple(gens),
        loads=tuple(loads),
        stations=tuple(sorted(stations, key=lambda s: s.id)),
        base_kv=float(raw.get("base_kv", 12.66)),
        base_kva=float(raw.get("base_kva", 1000.0)),
        v_min=float(raw.get("v_min", 0.95)),
        v_max=float(raw.get("v_max", 1.05)),
    )
    validate_network(net, source)
    return net


def validate_network(net: PowerNetwork, source: str = "network") -> None:
    ids = [b.id for b in net.buses]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise NetworkError(f"{source}: duplicate bus id(s) {dup}")
    if not ids:
        raise NetworkError(f"{source}: network has no buses")
    if ids != list(range(ids[0], ids[0] + len(ids))):
        raise NetworkError(f"{source}: bus ids must be contiguous")
    known = set(ids)
    line_ids = [ln.id for ln in net.lines]
    if len(set(line_ids)) != len(line_ids):
        raise NetworkError(f"{source}: duplicate line id")
    for ln in net.lines:
        where = f"line {ln.id}"
        if ln.from_bus not in known or ln.to_bus not in known:
            raise NetworkError(f"{source}: {where} references unknown bus")
        if ln.from_bus == ln.to_bus:
            raise NetworkError(f"{source}: {where} is a self-loop")
        if ln.r < 0 or ln.x < 0:
            raise NetworkError(f"{source}: {where} needs r >= 0 and x >= 0")
        if ln.s_max <= 0:
            raise NetworkError(f"{source}: {where} needs s_max > 0")
        if ln.kind is LineKind.DAMAGEABLE and (ln.repair_time < 1 or ln.repair_resources < 1):
            raise NetworkError(f"{source}: {where} is damageable but repair_time/repair_resources < 1")
    for g in net.generators:
        if g.bus not in known:
            raise NetworkError(f"{source}: generator {g.id} references unknown bus {g.bus}")
        if g.p_min > g.p_max or g.q_min > g.q_max:
            raise NetworkError(f"{source}: generator {g.id} has inverted bounds")
        if g.is_pv and g.s_max <= 0:
            raise NetworkError(f"{source}: PV {g.id} needs s_max > 0")
    if len({g.id for g in net.generators}) != len(net.generators):
        raise NetworkError(f"{source}: duplicate generator id")
    for d in net.loads:
        if d.bus not in known:
            raise NetworkError(f"{source}: load {d.id} references unknown bus {d.bus}")
        if d.cost <= 0:
            raise NetworkError(f"{source}: load {d.id} needs a positive shedding cost")
        if d.p_kw < 0:
            raise NetworkError(f"{source}: load {d.id} has negative demand")
    if len({d.id for d in net.loads}) != len(net.loads):
        raise NetworkError(f"{source}: duplicate load id")
    ess = [d.cost for d in net.loads if d.essential]
    non = [d.cost for d in net.loads if not d.essential]
    if ess and non and min(ess) < max(non):
        raise NetworkError(f"{source}: essential loads must carry the higher shedding cost")
    for s in net.stations:
        if s.bus not in known:
            raise NetworkError(f"{source}: station {s.id} references unknown bus {s.bus}")
    if len({s.id for s in net.stations}) != len(net.stations):
        raise NetworkError(f"{source}: duplicate station id")
    if not is_connected(net):
        raise NetworkError(f"{source}: lines do not connect every bus")


class UnionFind:
    def __init__(self, items):
        self.parent = {i: i for i in items}

    def find(self, a):
        root = a
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[a] != root:
            self.parent[a], a = root, self.parent[a]
        return root

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[max(ra, rb)] = min(ra, rb)
        return True


def is_connected(net: PowerNetwork) -> bool:
    uf = UnionFind(net.bus_ids)
    for ln in net.lines:
        uf.union(ln.from_bus, ln.to_bus)
    return len({uf.find(b) for b in net.bus_ids}) == 1
