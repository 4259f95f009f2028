"""Random small restoration instances and a brute-force reference solver."""

import itertools

import numpy as np
from scipy.optimize import linprog

from gridmend.grid import network_from_dict
from gridmend.milp.restoration import MpsInjection, StepInputs, build_problem
from gridmend.grid import UnionFind


def random_instance(rng, max_bus=6, max_lines=7):
    n = int(rng.integers(2, max_bus + 1))
    lines = []
    for b in range(2, n + 1):
        lines.append((int(rng.integers(1, b)), b))
    pairs = [p for p in itertools.combinations(range(1, n + 1), 2) if p not in lines]
    rng.shuffle(pairs)
    extra = int(rng.integers(0, max_lines - len(lines) + 1))
    lines += [tuple(map(int, p)) for p in pairs[:extra]]
    kinds = rng.choice(["fixed", "tie", "damageable"], size=len(lines))
    raw_lines = [
        {"id": i + 1, "from": a, "to": b, "r": float(rng.uniform(0.005, 0.05)),
         "x": float(rng.uniform(0.005, 0.05)), "s_max": float(rng.uniform(30, 300)),
         "kind": str(k), "repair_time": 1, "repair_resources": 1}
        for i, ((a, b), k) in enumerate(zip(lines, kinds))
    ]
    gens = [{"id": "G1", "kind": "dg", "bus": int(rng.integers(1, n + 1)),
             "p_max": float(rng.uniform(30, 200)), "q_min": -60, "q_max": 60}]
    if rng.random() < 0.5:
        gens.append({"id": "PV1", "kind": str(rng.choice(["pv_forming", "pv_following"])),
                     "bus": int(rng.integers(1, n + 1)), "p_max": 80.0, "s_max": 90.0})
    loads = []
    for b in range(1, n + 1):
        if rng.random() < 0.8:
            ess = bool(rng.random() < 0.3)
            loads.append({"id": f"D{b}", "bus": b, "p_kw": float(rng.uniform(5, 80)),
                          "q_kvar": float(rng.uniform(0, 20)), "essential": ess,
                          "cost": 2.5 if ess else 1.5})
    net = network_from_dict({"buses": [{"id": b} for b in range(1, n + 1)], "lines": raw_lines,
                             "generators": gens, "loads": loads})
    out = [ln["id"] for ln in raw_lines if ln["kind"] == "damageable" and rng.random() < 0.5]
    mps = []
    if rng.random() < 0.4:
        mps.append(MpsInjection("EG1", "meg", int(rng.integers(1, n + 1)),
                                p_request=float(rng.uniform(0, 100)), q_min=-30, q_max=30))
    if rng.random() < 0.3:
        mps.append(MpsInjection("ES1", "mess", int(rng.integers(1, n + 1)),
                                p_request=float(rng.uniform(0, 60)), charge_request=float(rng.uniform(0, 60))))
    inputs = StepInputs.nominal(net, hour=0, out_lines=out, mps=mps)
    inputs = StepInputs(0, inputs.load_p, inputs.load_q, {k: 0.8 * v for k, v in inputs.pv_avail.items()},
                        inputs.out_lines, inputs.mps)
    return net, inputs


def _structurally_possible(problem, y, e, root):
    net = problem.net
    if sum(y) != sum(e) - sum(root):
        return False
    energised = {b for b, v in zip(net.bus_ids, e) if v}
    for b, r in zip(problem.black_start, root):
        if r and b not in energised:
            return False
    uf = UnionFind(net.bus_ids)
    for ln, v in zip(net.lines, y):
        if v:
            if ln.from_bus not in energised or ln.to_bus not in energised:
                return False
            if not uf.union(ln.from_bus, ln.to_bus):
                return False
    roots_per = {}
    for b, r in zip(problem.black_start, root):
        if r:
            roots_per[uf.find(b)] = roots_per.get(uf.find(b), 0) + 1
    comps = {uf.find(b) for b in energised}
    return all(roots_per.get(c, 0) == 1 for c in comps)


def brute_force(problem):
    """Best objective over every binary assignment, each leaf solved as an LP.

    Returns the LP objective (minimisation form) or ``None`` if no leaf is feasible.
    """
    lp = problem.lp
    net = problem.net
    e_idx = [problem.var("e", b) for b in net.bus_ids]
    y_idx = [problem.var("y", ln.id) for ln in net.lines]
    r_idx = [problem.var("root", b) for b in problem.black_start]
    best = None
    me = lp.A_eq.shape[0]
    for e in itertools.product((0, 1), repeat=len(e_idx)):
        for y in itertools.product((0, 1), repeat=len(y_idx)):
            if any(v > lp.ub[j] for v, j in zip(y, y_idx)):
                continue
            for root in itertools.product((0, 1), repeat=len(r_idx)):
                if not _structurally_possible(problem, y, e, root):
                    continue
                lb, ub = lp.lb.copy(), lp.ub.copy()
                for vals, cols in ((e, e_idx), (y, y_idx), (root, r_idx)):
                    for v, j in zip(vals, cols):
                        lb[j] = ub[j] = v
                res = linprog(lp.c, lp.A_ub, lp.b_ub, lp.A_eq if me else None, lp.b_eq if me else None,
                              bounds=list(zip(lb, ub)), method="highs")
                if res.status == 0 and (best is None or res.fun < best):
                    best = res.fun
    return best


def instance_problem(seed):
    net, inputs = random_instance(np.random.default_rng(seed))
    return build_problem(net, inputs)
