"""Multi-agent restoration environment.

Agents are the mobile units: generators (MEG), storage (MESS) and repair
crews (RC). Each step every agent picks a high-level mode (travel or
power) and the matching low-level action; the central controller then
solves the restoration MILP and all agents share the resilience reward.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .fleet import (
    LineDamage,
    Location,
    MegState,
    MessState,
    RcState,
    meg_power_from_action,
    mess_power_from_action,
    mess_soc_step,
    rc_repair_step,
)
from .grid import NetworkError, PowerNetwork, damageable_lines, load_network
from .milp.restoration import DispatchSolution, MpsInjection, StepInputs, solve_step
from .scenario import (
    DEFAULT_REPAIR_RESOURCES,
    DEFAULT_REPAIR_TIME,
    OutageScenario,
    ProfileSet,
    load_profiles,
    sample_outage,
    synthetic_profiles,
)
from .transport import ROUTE_ARITY, RouteTable, TransportGraph, available_moves, graph_from_dict

log = logging.getLogger(__name__)

TRANSPORT, POWER = 0, 1
KINDS = ("meg", "mess", "rc")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MegSpec:
    id: str
    station: int
    p_min: float = 0.0
    p_max: float = 150.0
    q_min: float = -50.0
    q_max: float = 75.0


@dataclass(frozen=True)
class MessSpec:
    id: str
    station: int
    p_max: float = 100.0
    e_max: float = 400.0
    soc0: float = 0.5
    soc_min: float = 0.1
    soc_max: float = 0.9
    eta_c: float = 0.9
    eta_d: float = 0.9


@dataclass(frozen=True)
class RcSpec:
    id: str
    depot: int
    resources: int = 10


@dataclass
class EnvConfig:
    net: PowerNetwork
    graph: TransportGraph
    megs: tuple[MegSpec, ...]
    messes: tuple[MessSpec, ...]
    rcs: tuple[RcSpec, ...]
    profiles: ProfileSet
    fragility: dict[int, float] = field(default_factory=dict)
    repair_time: tuple[int, int] = DEFAULT_REPAIR_TIME
    repair_resources: tuple[int, int] = DEFAULT_REPAIR_RESOURCES
    fixed_outage: OutageScenario | None = None
    horizon: int = 24
    node_limit: int = 20_000
    time_limit: float | None = 2.0

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.profiles.n_days == 0:
            raise ConfigError("profile split has no days")
        stations = self.net.station_by_id
        for sid, node in self.graph.ms_nodes.items():
            if sid not in stations:
                raise ConfigError(f"transport maps station {sid}, which the network does not define")
            if stations[sid].node != node:
                raise ConfigError(f"station {sid}: network says node {stations[sid].node}, transport says {node}")
        for spec in (*self.megs, *self.messes):
            if spec.station not in stations or spec.station not in self.graph.ms_nodes:
                raise ConfigError(f"{spec.id}: station {spec.station} is not a known MS")
        for spec in self.rcs:
            if spec.depot not in self.graph.nodes:
                raise ConfigError(f"{spec.id}: depot node {spec.depot} is not in the transport graph")
        allowed = set(damageable_lines(self.net))
        for line in self.fragility:
            if line not in allowed:
                raise ConfigError(f"fragility given for non-damageable line {line}")
        for line in allowed:
            if line not in self.graph.rc_nodes:
                raise ConfigError(f"damageable line {line} has no repair-site node")
        ids = [s.id for s in (*self.megs, *self.messes, *self.rcs)]
        if len(set(ids)) != len(ids):
            raise ConfigError("fleet unit ids must be unique")
        self.profiles.check_ids(self.net, self.graph)


def _resolve(base: Path, ref) -> Path:
    p = Path(ref)
    return p if p.is_absolute() else base / p


def load_env_config(path, split: str = "train", overrides: dict | None = None) -> EnvConfig:
    """Read the scenario JSON that ties network, roads, fleet, outages and profiles together."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"scenario file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    raw.update(overrides or {})
    base = path.parent
    try:
        net_path = _resolve(base, raw["network"])
        if not net_path.exists():
            raise ConfigError(f"network file not found: {net_path}")
        net = load_network(net_path)
        transport = raw["transport"]
        if isinstance(transport, str):
            transport = json.loads(_resolve(base, transport).read_text())
        graph = graph_from_dict(transport)
        fleet = raw.get("fleet", {})
        megs = tuple(MegSpec(**m) for m in fleet.get("meg", []))
        messes = tuple(MessSpec(**m) for m in fleet.get("mess", []))
        rcs = tuple(RcSpec(**m) for m in fleet.get("rc", []))
        outage = raw.get("outage", {})
        fragility = {int(k): float(v) for k, v in outage.get("fragility", {}).items()}
        fixed = OutageScenario.from_dict(outage["fixed"]) if "fixed" in outage else None
        prof = raw.get("profiles", {"synthetic": {}})
        if "synthetic" in prof:
            syn = prof["synthetic"]
            profiles = synthetic_profiles(net, graph, days=int(syn.get("days", 30)), seed=int(syn.get("seed", 0)))
            profiles = profiles.select(split)
        else:
            profiles = load_profiles(_resolve(base, prof["directory"]), split, net, graph)
        milp = raw.get("milp", {})
        return EnvConfig(
            net=net, graph=graph, megs=megs, messes=messes, rcs=rcs, profiles=profiles,
            fragility=fragility,
            repair_time=tuple(outage.get("repair_time", DEFAULT_REPAIR_TIME)),
            repair_resources=tuple(outage.get("repair_resources", DEFAULT_REPAIR_RESOURCES)),
            fixed_outage=fixed,
            horizon=int(raw.get("horizon", 24)),
            node_limit=int(milp.get("node_limit", 20_000)),
            time_limit=milp.get("time_limit", 2.0),
        )
    except ConfigError:
        raise
    except NetworkError as exc:
        raise ConfigError(str(exc)) from None
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {type(exc).__name__}: {exc}") from None


@dataclass(frozen=True)
class AgentAction:
    """``hl`` 0 = travel, 1 = power. ``route`` indexes the move list (0 = stay)."""

    hl: int = POWER
    route: int = 0
    magnitude: float = 0.0
    repair: int = 0


@dataclass(frozen=True)
class AgentInfo:
    id: str
    kind: str


@dataclass
class StepResult:
    obs: list[np.ndarray]
    reward: float
    xi: np.ndarray
    solution: DispatchSolution
    status: str
    done: bool
    info: dict = field(default_factory=dict)


TRACE_FIELDS = ("time", "unit", "kind", "location", "mode", "route", "magnitude", "repair",
                "power", "soc", "xi", "lambda", "status", "note")


class DecPomdpEnv:
    def __init__(self, config: EnvConfig, seed: int = 0):
        self.cfg = config
        self.net = config.net
        self.graph = config.graph
        self.agents = tuple(
            [AgentInfo(s.id, "meg") for s in config.megs]
            + [AgentInfo(s.id, "mess") for s in config.messes]
            + [AgentInfo(s.id, "rc") for s in config.rcs]
        )
        self.n_agents = len(self.agents)
        self._rng = np.random.default_rng(seed)
        self._damageable = tuple(damageable_lines(self.net))
        self._node_station = {node: sid for sid, node in self.graph.ms_nodes.items()}
        self._candidates = {
            "mps": sorted(set(self.graph.ms_nodes.values())),
            "rc": sorted(set(self.graph.rc_nodes.values()) | ({self.graph.rc_depot} - {None})),
        }
        self._bus_load_max = self._max_bus_load()
        self._pv_max = max([g.p_max for g in self.net.generators if g.is_pv] or [1.0]) or 1.0
        self._rt_max = max(config.repair_time[1], 1)
        self._rs_max = max(config.repair_resources[1], 1)
        self.obs_dim = max(self._obs_width(a.kind) for a in self.agents) if self.agents else 0
        self.trace: list[dict] = []
        self.t = 0
        self.done = True

    # -- bookkeeping ---------------------------------------------------------

    def _max_bus_load(self) -> float:
        ps = self.cfg.profiles
        per_bus: dict[int, np.ndarray] = {}
        for d in self.net.loads:
            arr = ps.load_p.get(d.profile or d.id)
            peak = float(arr.max()) if arr is not None and arr.size else d.p_kw
            per_bus[d.bus] = per_bus.get(d.bus, 0.0) + peak
        return max(per_bus.values(), default=1.0) or 1.0

    def _cand_key(self, kind: str) -> str:
        return "rc" if kind == "rc" else "mps"

    def _obs_width(self, kind: str) -> int:
        common = len(self._candidates[self._cand_key(kind)]) + 1 + 1 + len(self._damageable)
        extra = {"rc": 3, "meg": 2, "mess": 3}[kind]
        return common + extra

    @property
    def kinds(self) -> list[str]:
        return [a.kind for a in self.agents]

    # -- reset ---------------------------------------------------------------

    def reset(self, seed: int | None = None, day: int | None = None,
              scenario: OutageScenario | None = None) -> list[np.ndarray]:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        cfg = self.cfg
        self.day = int(self._rng.integers(cfg.profiles.n_days)) if day is None else int(day)
        if not 0 <= self.day < cfg.profiles.n_days:
            raise ConfigError(f"day index {self.day} outside the profile split")
        if scenario is None:
            scenario = cfg.fixed_outage or sample_outage(
                self.net, cfg.fragility, self._rng, cfg.repair_time, cfg.repair_resources)
        self.scenario = scenario
        self.damage = {d.line: d for d in scenario.damaged}
        self.repaired: dict[int, str] = {}
        self.units: dict[str, MegState | MessState | RcState] = {}
        for s in cfg.megs:
            self.units[s.id] = MegState(s.id, Location.at(self.graph.ms_nodes[s.station]),
                                        s.p_min, s.p_max, s.q_min, s.q_max)
        for s in cfg.messes:
            self.units[s.id] = MessState(s.id, Location.at(self.graph.ms_nodes[s.station]), s.soc0,
                                         s.p_max, s.e_max, s.soc_min, s.soc_max, s.eta_c, s.eta_d)
        for s in cfg.rcs:
            self.units[s.id] = RcState(s.id, Location.at(s.depot), s.resources)
        self._rc_resources0 = {s.id: max(s.resources, 1) for s in cfg.rcs}
        self.routes = RouteTable(self.graph, cfg.profiles.road_matrix(self.day, self.graph))
        self._warm = None
        self.t = 0
        self.done = False
        self.trace = []
        return self.observe()

    # -- helpers -------------------------------------------------------------

    def out_lines(self) -> list[int]:
        return sorted(ln for ln in self.damage if ln not in self.repaired)

    def hour_inputs(self, hour: int) -> tuple[dict, dict, dict]:
        ps = self.cfg.profiles
        lp, lq, pv = {}, {}, {}
        for d in self.net.loads:
            key = d.profile or d.id
            lp[d.id] = float(ps.load_p[key][self.day, hour % 24])
            lq[d.id] = float(ps.load_q[key][self.day, hour % 24])
        for g in self.net.generators:
            if g.is_pv:
                pv[g.id] = float(ps.pv[g.profile or g.id][self.day, hour % 24])
        return lp, lq, pv

    def moves(self, agent: int) -> list[int]:
        a = self.agents[agent]
        loc = self.units[a.id].location
        if loc.in_transit:
            return []
        kind = "rc" if a.kind == "rc" else "mps"
        return available_moves(self.graph, kind, loc.node, self.t, self.out_lines(), ROUTE_ARITY, self.routes)

    def route_mask(self, agent: int) -> np.ndarray:
        mask = np.zeros(ROUTE_ARITY, dtype=bool)
        mask[: len(self.moves(agent))] = True
        return mask

    def repair_site(self, agent: int) -> int | None:
        """Unrepaired damaged line at this RC's node, if any."""
        loc = self.units[self.agents[agent].id].location
        if loc.in_transit:
            return None
        for line in self.out_lines():
            if self.graph.rc_nodes.get(line) == loc.node:
                return line
        return None

    def in_transit(self, agent: int) -> bool:
        return self.units[self.agents[agent].id].location.in_transit

    # -- observations --------------------------------------------------------

    def observe(self) -> list[np.ndarray]:
        return [self._observe(i) for i in range(self.n_agents)]

    def _observe(self, i: int) -> np.ndarray:
        a = self.agents[i]
        unit = self.units[a.id]
        loc = unit.location
        cands = self._candidates[self._cand_key(a.kind)]
        onehot = np.zeros(len(cands) + 1)
        if loc.in_transit:
            onehot[-1] = 1.0
        elif loc.node in cands:
            onehot[cands.index(loc.node)] = 1.0
        node = loc.dest if loc.in_transit else loc.node
        hour = min(self.t, self.cfg.horizon - 1)
        vols = []
        for j, road in enumerate(self.graph.roads):
            if node in (road.a, road.b):
                v = self.routes.volumes[hour % len(self.routes.volumes), j] if self.routes.volumes is not None \
                    else road.volume[hour % 24]
                vols.append(0.5 * min(v / road.capacity, 2.0))
        road_feat = [float(np.mean(vols)) if vols else 0.0]
        out = set(self.out_lines())
        line_feat = [1.0 if ln in out else 0.0 for ln in self._damageable]
        if a.kind == "rc":
            line = self.repair_site(i)
            if line is None:
                extra = [0.0, 0.0]
            else:
                d = self.damage[line]
                done = sum(u.progress.get(line, 0) for u in self.units.values() if isinstance(u, RcState))
                extra = [(d.repair_time - done) / self._rt_max, d.resources / self._rs_max]
            extra.append(unit.resources / self._rc_resources0[a.id])
        else:
            load, pv = self._local(node, hour)
            extra = [load, pv]
            if a.kind == "mess":
                extra.append(unit.soc)
        vec = np.zeros(self.obs_dim)
        feats = np.concatenate([onehot, road_feat, line_feat, extra])
        vec[: feats.size] = feats
        return vec

    def _local(self, node: int | None, hour: int) -> tuple[float, float]:
        sid = self._node_station.get(node)
        if sid is None:
            return 0.0, 0.0
        bus = self.net.station_by_id[sid].bus
        lp, _, pv = self.hour_inputs(hour)
        load = sum(lp[d.id] for d in self.net.loads if d.bus == bus)
        gen = sum(pv[g.id] for g in self.net.generators if g.is_pv and g.bus == bus)
        return min(load / self._bus_load_max, 1.0), min(gen / self._pv_max, 1.0)

    # -- step ----------------------------------------------------------------

    def step(self, actions: list[AgentAction]) -> StepResult:
        if self.done:
            raise RuntimeError("episode finished; call reset()")
        if len(actions) != self.n_agents:
            raise ValueError(f"expected {self.n_agents} actions, got {len(actions)}")
        t = self.t
        invalid: list[str] = []
        notes = {a.id: "" for a in self.agents}
        was_transit = [self.in_transit(i) for i in range(self.n_agents)]
        acted_power = [False] * self.n_agents

        # (1) departures
        for i, (a, act) in enumerate(zip(self.agents, actions)):
            unit = self.units[a.id]
            if was_transit[i]:
                if act.hl == TRANSPORT and act.route != 0:
                    invalid.append(f"{a.id}: route while in transit")
                continue
            if act.hl != TRANSPORT:
                continue
            moves = self.moves(i)
            k = int(act.route)
            if not 0 <= k < len(moves):
                invalid.append(f"{a.id}: route {k} not available")
                notes[a.id] = "invalid route"
                continue
            dest = moves[k]
            if dest == unit.location.node:
                continue
            hours = self.routes.duration(unit.location.node, dest, t)
            self.units[a.id] = replace(unit, location=unit.location.depart(dest, hours))
            notes[a.id] = f"depart->{dest}({hours}h)"

        # (2) advance transit; arrivals become usable from the next step
        for a in self.agents:
            unit = self.units[a.id]
            if unit.location.in_transit:
                self.units[a.id] = replace(unit, location=unit.location.advance())

        # (3) power-side decisions of units that started the step parked
        mps: list[MpsInjection] = []
        requests: dict[str, tuple[float, float]] = {}
        for i, (a, act) in enumerate(zip(self.agents, actions)):
            if was_transit[i] or act.hl != POWER:
                continue
            acted_power[i] = True
            unit = self.units[a.id]
            if a.kind == "rc":
                continue
            bus = self.net.station_by_id[self._node_station[unit.location.node]].bus
            if a.kind == "meg":
                p = meg_power_from_action(unit, float(act.magnitude))
                mps.append(MpsInjection(a.id, "meg", bus, p_request=p, q_min=unit.q_min, q_max=unit.q_max))
                requests[a.id] = (p, 0.0)
            else:
                ch, dis = mess_power_from_action(unit, float(act.magnitude))
                mps.append(MpsInjection(a.id, "mess", bus, p_request=-dis, charge_request=ch))
                requests[a.id] = (ch, dis)

        # (4) repairs
        for i, (a, act) in enumerate(zip(self.agents, actions)):
            if a.kind != "rc" or not acted_power[i] or not act.repair:
                continue
            line = self.repair_site(i)
            if line is None:
                invalid.append(f"{a.id}: repair with no damaged line here")
                notes[a.id] = "invalid repair"
                continue
            others = sum(u.progress.get(line, 0) for uid, u in self.units.items()
                         if isinstance(u, RcState) and uid != a.id)
            res = rc_repair_step(self.units[a.id], self.damage[line], True, others)
            self.units[a.id] = res.state
            if res.refused:
                invalid.append(f"{a.id}: not enough resources for line {line}")
                notes[a.id] = "refused"
            if res.repaired:
                self.repaired[line] = a.id
                notes[a.id] = f"repaired {line}"

        # (5) restoration MILP
        lp, lq, pv = self.hour_inputs(t)
        inputs = StepInputs(hour=t, load_p=lp, load_q=lq, pv_avail=pv,
                            out_lines=frozenset(self.out_lines()), mps=tuple(mps))
        sol = solve_step(self.net, inputs, node_limit=self.cfg.node_limit,
                         time_limit=self.cfg.time_limit, warm_assignment=self._warm)
        if sol.status != "infeasible":
            self._warm = sol.assignment()
        else:
            log.warning("restoration MILP infeasible at t=%d", t)

        # (6) storage state from executed power
        for m in mps:
            if m.kind != "mess":
                continue
            unit = self.units[m.unit]
            ch = sol.mess_charge.get(m.unit, 0.0)
            dis = -sol.mps_p.get(m.unit, 0.0)
            if ch > 0 and dis < 0:
                # both tiny round-off or a degenerate vertex; keep the net flow only
                net_p = ch + dis
                ch, dis = max(net_p, 0.0), min(net_p, 0.0)
            soc = mess_soc_step(unit, ch, dis)
            self.units[m.unit] = replace(unit, soc=float(np.clip(soc, unit.soc_min, unit.soc_max)))

        # (7) reward and contributions
        lam = self.resilience(sol, lp)
        xi = self.contribution(sol)

        for i, a in enumerate(self.agents):
            self._trace_row(t, i, actions[i], sol, xi[i], lam, was_transit[i], notes[a.id])

        self.t += 1
        self.done = self.t >= self.cfg.horizon
        obs = self.observe()
        info = {"invalid": invalid, "acted_power": acted_power, "was_transit": was_transit,
                "restored_kw": sol.total_restored, "out_lines": self.out_lines(), "requests": requests}
        return StepResult(obs, lam, xi, sol, sol.status, self.done, info)

    def resilience(self, sol: DispatchSolution, load_p: dict[str, float]) -> float:
        if sol.status == "infeasible":
            return 0.0
        demand = sum(d.cost * load_p[d.id] for d in self.net.loads)
        if demand <= 0:
            return 1.0
        served = sum(d.cost * min(sol.restored_p.get(d.id, 0.0), load_p[d.id]) for d in self.net.loads)
        return float(np.clip(served / demand, 0.0, 1.0))

    def contribution(self, sol: DispatchSolution) -> np.ndarray:
        """Share of restored load attributable to each agent; zeros when nothing is restored."""
        xi = np.zeros(self.n_agents)
        total = sol.total_restored
        if sol.status == "infeasible" or total <= 1e-9:
            return xi
        for i, a in enumerate(self.agents):
            if a.kind == "rc":
                flow = sum(abs(sol.line_p.get(ln, 0.0)) for ln, who in self.repaired.items() if who == a.id)
                xi[i] = flow / total
            else:
                xi[i] = abs(sol.mps_p.get(a.id, 0.0)) / total
        s = xi.sum()
        if s > 1.0:
            xi /= s
        return xi

    # -- trace ---------------------------------------------------------------

    def _trace_row(self, t, i, act, sol, xi, lam, transit, note):
        a = self.agents[i]
        unit = self.units[a.id]
        loc = unit.location
        where = f"->{loc.dest}" if loc.in_transit else str(loc.node)
        power = 0.0
        if a.kind == "meg":
            power = sol.mps_p.get(a.id, 0.0)
        elif a.kind == "mess":
            power = sol.mps_p.get(a.id, 0.0) - sol.mess_charge.get(a.id, 0.0)
        self.trace.append({
            "time": t, "unit": a.id, "kind": a.kind, "location": where,
            "mode": "transit" if transit else ("power" if act.hl == POWER else "transport"),
            "route": act.route, "magnitude": round(float(act.magnitude), 6), "repair": act.repair,
            "power": round(power, 6), "soc": round(unit.soc, 6) if a.kind == "mess" else "",
            "xi": round(float(xi), 6), "lambda": round(lam, 6), "status": sol.status, "note": note,
        })

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=TRACE_FIELDS)
            w.writeheader()
            w.writerows(self.trace)
