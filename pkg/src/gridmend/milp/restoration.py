"""Per-step restoration dispatch: weighted load pickup over a reconfigurable network.

The model is a LinDistFlow MILP in per unit. Line energisation ``y``, bus
energisation ``e`` and one root indicator per black-start bus are binary.
Radiality follows from a virtual unit-demand flow fed only at roots together
with ``sum(y) = sum(e) - sum(root)``; every energised island is then a tree
holding exactly one root.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from gridmend.grid import GenKind, LineKind, PowerNetwork, UnionFind
from gridmend.milp.bnb import branch_and_bound
from gridmend.milp.simplex import LinearProgram

# reward per p.u. of executed MPS power; orders of magnitude below any shedding cost
MPS_TIE_BREAK = 1e-3
BOUND_SNAP = 1e-10
_OCT_ANGLES = np.pi / 8 + np.arange(8) * np.pi / 4
OCTAGON = np.column_stack([np.cos(_OCT_ANGLES), np.sin(_OCT_ANGLES)])
OCTAGON_RHS = math.cos(math.pi / 8)


@dataclass(frozen=True)
class MpsInjection:
    """A mobile source connected at ``bus`` this step (requests in kW)."""

    unit: str
    kind: str  # "meg" | "mess"
    bus: int
    p_request: float = 0.0
    charge_request: float = 0.0
    q_min: float = 0.0
    q_max: float = 0.0


@dataclass(frozen=True)
class StepInputs:
    hour: int
    load_p: dict[str, float]
    load_q: dict[str, float]
    pv_avail: dict[str, float]
    out_lines: frozenset[int] = frozenset()
    mps: tuple[MpsInjection, ...] = ()

    @classmethod
    def nominal(cls, net: PowerNetwork, hour: int = 0, out_lines=(), mps=()) -> "StepInputs":
        return cls(
            hour=hour,
            load_p={d.id: d.p_kw for d in net.loads},
            load_q={d.id: d.q_kvar for d in net.loads},
            pv_avail={g.id: g.p_max for g in net.generators if g.is_pv},
            out_lines=frozenset(out_lines),
            mps=tuple(mps),
        )


@dataclass
class MilpProblem:
    net: PowerNetwork
    inputs: StepInputs
    lp: LinearProgram
    names: list[str]
    binaries: np.ndarray
    idx: dict[str, dict]
    black_start: list[int]
    row_names: list[str]
    n_ub: int
    big_m: dict[int, float]

    def var(self, kind: str, key) -> int:
        return self.idx[kind][key]


@dataclass
class DispatchSolution:
    status: str  # optimal | incumbent | infeasible
    objective: float  # shedding-cost weighted restored kW
    restored_p: dict[str, float] = field(default_factory=dict)
    restored_q: dict[str, float] = field(default_factory=dict)
    dg_p: dict[str, float] = field(default_factory=dict)
    dg_q: dict[str, float] = field(default_factory=dict)
    pv_p: dict[str, float] = field(default_factory=dict)
    pv_q: dict[str, float] = field(default_factory=dict)
    mps_p: dict[str, float] = field(default_factory=dict)  # MEG output or MESS discharge
    mps_q: dict[str, float] = field(default_factory=dict)
    mess_charge: dict[str, float] = field(default_factory=dict)
    line_p: dict[int, float] = field(default_factory=dict)
    line_q: dict[int, float] = field(default_factory=dict)
    v2: dict[int, float] = field(default_factory=dict)
    y: dict[int, int] = field(default_factory=dict)
    e: dict[int, int] = field(default_factory=dict)
    flow: dict[int, float] = field(default_factory=dict)
    source_flow: dict[int, float] = field(default_factory=dict)
    root: dict[int, int] = field(default_factory=dict)
    black_start: list[int] = field(default_factory=list)
    nodes: int = 0
    x: np.ndarray | None = field(default=None, repr=False)

    @property
    def total_restored(self) -> float:
        return float(sum(self.restored_p.values()))

    def assignment(self) -> dict[str, dict]:
        return {"y": dict(self.y), "e": dict(self.e), "root": dict(self.root)}


class _Rows:
    def __init__(self):
        self.ub: list[tuple[dict, float, str]] = []
        self.eq: list[tuple[dict, float, str]] = []

    def le(self, coefs: dict, rhs: float, name: str):
        self.ub.append((coefs, rhs, name))

    def ge(self, coefs: dict, rhs: float, name: str):
        self.ub.append(({k: -v for k, v in coefs.items()}, -rhs, name))

    def equal(self, coefs: dict, rhs: float, name: str):
        self.eq.append((coefs, rhs, name))


def step_black_start(net: PowerNetwork, inputs: StepInputs) -> list[int]:
    buses = {g.bus for g in net.generators if g.black_start}
    buses.update(m.bus for m in inputs.mps)
    return sorted(buses)


def line_big_m(net: PowerNetwork, line) -> float:
    s = line.s_max / net.base_kva
    return net.v_max ** 2 + 2.0 * (line.r + line.x) * s


def build_problem(net: PowerNetwork, inputs: StepInputs) -> MilpProblem:
    base = net.base_kva
    names: list[str] = []
    lb: list[float] = []
    ub: list[float] = []
    cost: list[float] = []
    idx: dict[str, dict] = {k: {} for k in (
        "e", "v2", "y", "p", "q", "f", "root", "fs", "pd", "pg", "qg", "pm", "qm", "pc")}

    def add(kind, key, name, lo, hi, c=0.0):
        idx[kind][key] = len(names)
        names.append(name)
        # round-off in requests (e.g. 1e-15 kW) would leave a sliver the simplex cannot use
        if hi - lo < BOUND_SNAP:
            hi = lo
        lb.append(lo)
        ub.append(hi)
        cost.append(c)
        return idx[kind][key]

    n_bus = len(net.buses)
    f_cap = float(n_bus)
    vmax2, vmin2 = net.v_max ** 2, net.v_min ** 2
    bs = step_black_start(net, inputs)

    for b in net.bus_ids:
        add("e", b, f"e_{b}", 0.0, 1.0)
    for ln in net.lines:
        hi = 0.0 if ln.id in inputs.out_lines else 1.0
        add("y", ln.id, f"y_{ln.id}", 0.0, hi)
    for b in bs:
        add("root", b, f"root_{b}", 0.0, 1.0)
    binaries = np.arange(len(names))

    for b in net.bus_ids:
        add("v2", b, f"v2_{b}", 0.0, vmax2)
    for ln in net.lines:
        s = ln.s_max / base
        add("p", ln.id, f"p_{ln.id}", -s, s)
        add("q", ln.id, f"q_{ln.id}", -s, s)
        add("f", ln.id, f"f_{ln.id}", -f_cap, f_cap)
    for b in bs:
        add("fs", b, f"fs_{b}", 0.0, f_cap)
    for d in net.loads:
        pmax = max(inputs.load_p.get(d.id, 0.0), 0.0) / base
        add("pd", d.id, f"pd_{d.id}", 0.0, pmax, d.cost)
    for g in net.generators:
        if g.is_pv:
            avail = min(max(inputs.pv_avail.get(g.id, 0.0), 0.0), g.p_max, g.s_max) / base
            add("pg", g.id, f"pg_{g.id}", 0.0, avail)
            s = g.s_max / base
            add("qg", g.id, f"qg_{g.id}", -s, s)
        else:
            add("pg", g.id, f"pg_{g.id}", min(g.p_min, 0.0) / base, g.p_max / base)
            add("qg", g.id, f"qg_{g.id}", min(g.q_min, 0.0) / base, max(g.q_max, 0.0) / base)
    for m in inputs.mps:
        add("pm", m.unit, f"pm_{m.unit}", 0.0, max(m.p_request, 0.0) / base, MPS_TIE_BREAK)
        add("qm", m.unit, f"qm_{m.unit}", min(m.q_min, 0.0) / base, max(m.q_max, 0.0) / base)
        if m.kind == "mess":
            add("pc", m.unit, f"pc_{m.unit}", 0.0, max(m.charge_request, 0.0) / base, MPS_TIE_BREAK)

    rows = _Rows()
    e, y, v2 = idx["e"], idx["y"], idx["v2"]
    P, Q, F = idx["p"], idx["q"], idx["f"]

    # nodal balances
    bal_p = {b: {} for b in net.bus_ids}
    bal_q = {b: {} for b in net.bus_ids}
    for g in net.generators:
        bal_p[g.bus][idx["pg"][g.id]] = 1.0
        bal_q[g.bus][idx["qg"][g.id]] = 1.0
    for m in inputs.mps:
        bal_p[m.bus][idx["pm"][m.unit]] = 1.0
        bal_q[m.bus][idx["qm"][m.unit]] = 1.0
        if m.unit in idx["pc"]:
            bal_p[m.bus][idx["pc"][m.unit]] = -1.0
    for d in net.loads:
        j = idx["pd"][d.id]
        bal_p[d.bus][j] = bal_p[d.bus].get(j, 0.0) - 1.0
        p0 = inputs.load_p.get(d.id, 0.0)
        if p0 > 0:
            ratio = inputs.load_q.get(d.id, 0.0) / p0
            bal_q[d.bus][j] = bal_q[d.bus].get(j, 0.0) - ratio
    for ln in net.lines:
        bal_p[ln.from_bus][P[ln.id]] = -1.0
        bal_p[ln.to_bus][P[ln.id]] = 1.0
        bal_q[ln.from_bus][Q[ln.id]] = -1.0
        bal_q[ln.to_bus][Q[ln.id]] = 1.0
    for b in net.bus_ids:
        rows.equal(bal_p[b], 0.0, f"pbal_{b}")
        rows.equal(bal_q[b], 0.0, f"qbal_{b}")

    # sources only inject on energised buses
    for g in net.generators:
        pg, qg, eb = idx["pg"][g.id], idx["qg"][g.id], e[g.bus]
        if g.is_pv:
            avail = ub[pg]
            rows.le({pg: 1.0, eb: -avail}, 0.0, f"pvon_{g.id}")
            s = g.s_max / base
            for k, (a, c) in enumerate(OCTAGON):
                rows.le({pg: a, qg: c, eb: -s * OCTAGON_RHS}, 0.0, f"pvcap_{g.id}_{k}")
        else:
            rows.le({pg: 1.0, eb: -g.p_max / base}, 0.0, f"dgpmax_{g.id}")
            rows.ge({pg: 1.0, eb: -g.p_min / base}, 0.0, f"dgpmin_{g.id}")
            rows.le({qg: 1.0, eb: -g.q_max / base}, 0.0, f"dgqmax_{g.id}")
            rows.ge({qg: 1.0, eb: -g.q_min / base}, 0.0, f"dgqmin_{g.id}")
    for m in inputs.mps:
        eb = e[m.bus]
        pm, qm = idx["pm"][m.unit], idx["qm"][m.unit]
        rows.le({pm: 1.0, eb: -ub[pm]}, 0.0, f"mpson_{m.unit}")
        rows.le({qm: 1.0, eb: -ub[qm]}, 0.0, f"mpsqmax_{m.unit}")
        rows.ge({qm: 1.0, eb: -lb[qm]}, 0.0, f"mpsqmin_{m.unit}")
        if m.unit in idx["pc"]:
            pc = idx["pc"][m.unit]
            rows.le({pc: 1.0, eb: -ub[pc]}, 0.0, f"chgon_{m.unit}")

    # loads served only on energised buses
    for d in net.loads:
        j = idx["pd"][d.id]
        rows.le({j: 1.0, e[d.bus]: -ub[j]}, 0.0, f"ldon_{d.id}")

    for b in net.bus_ids:
        rows.le({v2[b]: 1.0, e[b]: -vmax2}, 0.0, f"vmax_{b}")
        rows.ge({v2[b]: 1.0, e[b]: -vmin2}, 0.0, f"vmin_{b}")

    big_m = {}
    for ln in net.lines:
        s = ln.s_max / base
        p, q, yl = P[ln.id], Q[ln.id], y[ln.id]
        for k, (a, c) in enumerate(OCTAGON):
            rows.le({p: a, q: c, yl: -s * OCTAGON_RHS}, 0.0, f"therm_{ln.id}_{k}")
        M = line_big_m(net, ln)
        big_m[ln.id] = M
        vf, vt = v2[ln.from_bus], v2[ln.to_bus]
        drop = {vf: 1.0, vt: -1.0, p: -2.0 * ln.r, q: -2.0 * ln.x}
        rows.le({**drop, yl: M}, M, f"ldfup_{ln.id}")
        rows.le({**{k: -v for k, v in drop.items()}, yl: M}, M, f"ldflo_{ln.id}")
        rows.le({yl: 1.0, e[ln.from_bus]: -1.0}, 0.0, f"yfrom_{ln.id}")
        rows.le({yl: 1.0, e[ln.to_bus]: -1.0}, 0.0, f"yto_{ln.id}")
        rows.le({F[ln.id]: 1.0, yl: -f_cap}, 0.0, f"fcap+_{ln.id}")
        rows.le({F[ln.id]: -1.0, yl: -f_cap}, 0.0, f"fcap-_{ln.id}")

    # radiality: sum(y) = |B| - (sum(1 - e) + number of roots)
    count = {y[ln.id]: 1.0 for ln in net.lines}
    for b in net.bus_ids:
        count[e[b]] = -1.0
    for b in bs:
        count[idx["root"][b]] = 1.0
    rows.equal(count, 0.0, "radial")

    vbal = {b: {e[b]: -1.0} for b in net.bus_ids}
    for ln in net.lines:
        vbal[ln.from_bus][F[ln.id]] = -1.0
        vbal[ln.to_bus][F[ln.id]] = 1.0
    for b in bs:
        vbal[b][idx["fs"][b]] = 1.0
        rows.le({idx["fs"][b]: 1.0, idx["root"][b]: -f_cap}, 0.0, f"fsroot_{b}")
        rows.le({idx["root"][b]: 1.0, e[b]: -1.0}, 0.0, f"rooton_{b}")
    for b in net.bus_ids:
        rows.equal(vbal[b], 0.0, f"vflow_{b}")

    n = len(names)
    A_ub = np.zeros((len(rows.ub), n))
    b_ub = np.zeros(len(rows.ub))
    for i, (coefs, rhs, _) in enumerate(rows.ub):
        for j, v in coefs.items():
            A_ub[i, j] += v
        b_ub[i] = rhs
    A_eq = np.zeros((len(rows.eq), n))
    b_eq = np.zeros(len(rows.eq))
    for i, (coefs, rhs, _) in enumerate(rows.eq):
        for j, v in coefs.items():
            A_eq[i, j] += v
        b_eq[i] = rhs
    c = -np.asarray(cost)  # maximise
    lp = LinearProgram.build(c, A_ub, b_ub, A_eq, b_eq, np.asarray(lb), np.asarray(ub))
    row_names = [r[2] for r in rows.ub] + [r[2] for r in rows.eq]
    return MilpProblem(net, inputs, lp, names, binaries, idx, bs, row_names, len(rows.ub), big_m)


def radial_start(problem: MilpProblem) -> dict[int, float]:
    """Breadth-first spanning forest grown from the black-start buses.

    Normally closed lines are preferred over tie switches so the forest
    follows the normal configuration where it can.
    """
    net, out = problem.net, problem.inputs.out_lines
    adj: dict[int, list] = {b: [] for b in net.bus_ids}
    order = sorted(net.lines, key=lambda ln: (ln.kind is LineKind.TIE, ln.id))
    for ln in order:
        if ln.id in out:
            continue
        adj[ln.from_bus].append((ln.to_bus, ln.id))
        adj[ln.to_bus].append((ln.from_bus, ln.id))
    seen: set[int] = set()
    used: set[int] = set()
    roots: set[int] = set()
    for src in problem.black_start:
        if src in seen:
            continue
        roots.add(src)
        seen.add(src)
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for v, lid in adj[u]:
                if v not in seen:
                    seen.add(v)
                    used.add(lid)
                    queue.append(v)
    point = {}
    for b in net.bus_ids:
        point[problem.var("e", b)] = 1.0 if b in seen else 0.0
    for ln in net.lines:
        point[problem.var("y", ln.id)] = 1.0 if ln.id in used else 0.0
    for b in problem.black_start:
        point[problem.var("root", b)] = 1.0 if b in roots else 0.0
    return point


def assignment_point(problem: MilpProblem, assignment: dict[str, dict]) -> dict[int, float] | None:
    """Map a previous step's (y, e, root) assignment onto this problem's columns."""
    point = {}
    for kind in ("y", "e"):
        for key, v in assignment.get(kind, {}).items():
            if key not in problem.idx[kind]:
                return None
            point[problem.var(kind, key)] = float(v)
    roots = assignment.get("root", {})
    for b in problem.black_start:
        point[problem.var("root", b)] = float(roots.get(b, 0))
    for ln in problem.net.lines:
        if ln.id in problem.inputs.out_lines and point.get(problem.var("y", ln.id), 0.0) > 0:
            return None
    return point


def solve(
    problem: MilpProblem,
    node_limit: int = 20_000,
    time_limit: float | None = 2.0,
    warm_assignment: dict[str, dict] | None = None,
) -> DispatchSolution:
    starts = []
    if warm_assignment:
        pt = assignment_point(problem, warm_assignment)
        if pt is not None:
            starts.append(pt)
    starts.append(radial_start(problem))
    dark = {j: 0.0 for j in problem.binaries}
    starts.append(dark)
    res = branch_and_bound(problem.lp, problem.binaries, node_limit=node_limit,
                           time_limit=time_limit, start_points=starts)
    if res.x is None:
        return DispatchSolution(status="infeasible", objective=0.0, black_start=problem.black_start,
                                nodes=res.nodes)
    return _decode(problem, res.x, res.status, res.nodes)


def _decode(problem: MilpProblem, x: np.ndarray, status: str, nodes: int) -> DispatchSolution:
    net, base, idx = problem.net, problem.net.base_kva, problem.idx
    sol = DispatchSolution(status=status, objective=0.0, black_start=list(problem.black_start),
                           nodes=nodes, x=x)
    obj = 0.0
    for d in net.loads:
        p = max(float(x[idx["pd"][d.id]]), 0.0) * base
        sol.restored_p[d.id] = p
        p0 = problem.inputs.load_p.get(d.id, 0.0)
        sol.restored_q[d.id] = p * problem.inputs.load_q.get(d.id, 0.0) / p0 if p0 > 0 else 0.0
        obj += d.cost * p
    sol.objective = obj
    for g in net.generators:
        tgt_p, tgt_q = (sol.pv_p, sol.pv_q) if g.is_pv else (sol.dg_p, sol.dg_q)
        tgt_p[g.id] = float(x[idx["pg"][g.id]]) * base
        tgt_q[g.id] = float(x[idx["qg"][g.id]]) * base
    for m in problem.inputs.mps:
        sol.mps_p[m.unit] = max(float(x[idx["pm"][m.unit]]), 0.0) * base
        sol.mps_q[m.unit] = float(x[idx["qm"][m.unit]]) * base
        if m.unit in idx["pc"]:
            sol.mess_charge[m.unit] = max(float(x[idx["pc"][m.unit]]), 0.0) * base
    for ln in net.lines:
        sol.line_p[ln.id] = float(x[idx["p"][ln.id]]) * base
        sol.line_q[ln.id] = float(x[idx["q"][ln.id]]) * base
        sol.flow[ln.id] = float(x[idx["f"][ln.id]])
        sol.y[ln.id] = int(round(x[idx["y"][ln.id]]))
    for b in net.bus_ids:
        sol.e[b] = int(round(x[idx["e"][b]]))
        sol.v2[b] = float(x[idx["v2"][b]])
    for b in problem.black_start:
        sol.root[b] = int(round(x[idx["root"][b]]))
        sol.source_flow[b] = float(x[idx["fs"][b]])
    return sol


def solve_step(net: PowerNetwork, inputs: StepInputs, **kw) -> DispatchSolution:
    return solve(build_problem(net, inputs), **kw)


@dataclass
class RadialityReport:
    ok: bool
    islands: int
    violations: list[str]


def check_radiality(sol: DispatchSolution, net: PowerNetwork) -> RadialityReport:
    """Verify forest structure, black-start per island and the line-count identity."""
    violations = []
    energised = {b for b, v in sol.e.items() if v}
    lines = [net.line(lid) for lid, v in sol.y.items() if v]
    uf = UnionFind(net.bus_ids)
    for ln in lines:
        if ln.from_bus not in energised or ln.to_bus not in energised:
            violations.append(f"line {ln.id} energised with a dead end bus")
        if not uf.union(ln.from_bus, ln.to_bus):
            violations.append(f"cycle closed by line {ln.id}")
    comps: dict[int, set[int]] = {}
    for b in energised:
        comps.setdefault(uf.find(b), set()).add(b)
    sources = set(sol.black_start)
    for members in comps.values():
        if not members & sources:
            violations.append(f"orphan island {sorted(members)} has no black-start source")
    n_islands = len(comps)
    expected = len(net.buses) - ((len(net.buses) - len(energised)) + n_islands)
    if len(lines) != expected:
        violations.append(f"count mismatch: {len(lines)} energised lines, expected {expected}")
    return RadialityReport(not violations, n_islands, violations)


def write_lp(problem: MilpProblem, path) -> None:
    """Write the problem in CPLEX LP text format."""
    names = problem.names
    lp = problem.lp

    def expr(row):
        terms = []
        for j in np.flatnonzero(row):
            v = row[j]
            terms.append(f"{'-' if v < 0 else '+'} {abs(v):.12g} {names[j]}")
        if not terms:
            return "0 " + names[0]
        s = " ".join(terms)
        return s[2:] if s.startswith("+ ") else s

    def wrap(s):
        out, line = [], ""
        for tok in s.split(" "):
            if len(line) + len(tok) > 200:
                out.append(line)
                line = ""
            line += (" " if line else "") + tok
        out.append(line)
        return "\n   ".join(out)

    lines = ["\\ restoration dispatch", "Minimize", " obj: " + wrap(expr(lp.c)), "Subject To"]
    for i in range(lp.A_ub.shape[0]):
        lines.append(f" {_lp_name(problem.row_names[i])}: {wrap(expr(lp.A_ub[i]))} <= {lp.b_ub[i]:.12g}")
    for i in range(lp.A_eq.shape[0]):
        nm = _lp_name(problem.row_names[problem.n_ub + i])
        lines.append(f" {nm}: {wrap(expr(lp.A_eq[i]))} = {lp.b_eq[i]:.12g}")
    lines.append("Bounds")
    binset = set(int(j) for j in problem.binaries)
    for j, nm in enumerate(names):
        if j in binset:
            # binaries pinned by damage or missing sources
            if lp.lb[j] == lp.ub[j]:
                lines.append(f" {nm} = {lp.lb[j]:.12g}")
            continue
        lines.append(f" {lp.lb[j]:.12g} <= {nm} <= {lp.ub[j]:.12g}")
    lines.append("Binaries")
    lines.append(" " + " ".join(names[j] for j in problem.binaries))
    lines.append("End")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _lp_name(name: str) -> str:
    return name.replace("+", "p").replace("-", "m")
