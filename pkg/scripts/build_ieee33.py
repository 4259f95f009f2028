"""Regenerate the bundled 33-bus network and scenario files.

Line impedances and nominal loads are the canonical Baran-Wu feeder data.
Loads are placed on 23 buses and rescaled for islanded operation.
"""

import json
import math
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "gridmend" / "data"

# from, to, r (ohm), x (ohm)
BRANCHES = [
    (1, 2, 0.0922, 0.0470), (2, 3, 0.4930, 0.2511), (3, 4, 0.3660, 0.1864),
    (4, 5, 0.3811, 0.1941), (5, 6, 0.8190, 0.7070), (6, 7, 0.1872, 0.6188),
    (7, 8, 0.7114, 0.2351), (8, 9, 1.0300, 0.7400), (9, 10, 1.0440, 0.7400),
    (10, 11, 0.1966, 0.0650), (11, 12, 0.3744, 0.1238), (12, 13, 1.4680, 1.1550),
    (13, 14, 0.5416, 0.7129), (14, 15, 0.5910, 0.5260), (15, 16, 0.7463, 0.5450),
    (16, 17, 1.2890, 1.7210), (17, 18, 0.7320, 0.5740), (2, 19, 0.1640, 0.1565),
    (19, 20, 1.5042, 1.3554), (20, 21, 0.4095, 0.4784), (21, 22, 0.7089, 0.9373),
    (3, 23, 0.4512, 0.3083), (23, 24, 0.8980, 0.7091), (24, 25, 0.8960, 0.7011),
    (6, 26, 0.2030, 0.1034), (26, 27, 0.2842, 0.1447), (27, 28, 1.0590, 0.9337),
    (28, 29, 0.8042, 0.7006), (29, 30, 0.5075, 0.2585), (30, 31, 0.9744, 0.9630),
    (31, 32, 0.3105, 0.3619), (32, 33, 0.3410, 0.5302),
]
TIES = [(8, 21, 2.0, 2.0), (9, 15, 2.0, 2.0), (12, 22, 2.0, 2.0), (18, 33, 0.5, 0.5), (25, 29, 0.5, 0.5)]
NOMINAL = {
    2: (100, 60), 3: (90, 40), 4: (120, 80), 5: (60, 30), 6: (60, 20), 7: (200, 100), 8: (200, 100),
    9: (60, 20), 10: (60, 20), 11: (45, 30), 12: (60, 35), 13: (60, 35), 14: (120, 80), 15: (60, 10),
    16: (60, 20), 17: (60, 20), 18: (90, 40), 19: (90, 40), 20: (90, 40), 21: (90, 40), 22: (90, 40),
    23: (90, 50), 24: (420, 200), 25: (420, 200), 26: (60, 25), 27: (60, 25), 28: (60, 20),
    29: (120, 70), 30: (200, 600), 31: (150, 70), 32: (210, 100), 33: (60, 40),
}
LOAD_BUSES = [2, 3, 4, 5, 7, 8, 10, 12, 14, 16, 18, 19, 21, 22, 24, 25, 26, 28, 29, 30, 31, 32, 33]
ESSENTIAL = {2, 7, 14, 18, 24, 25, 30, 32}
TOTAL_PEAK_KW = 1300.0
DAMAGE_HIGH = {(4, 5), (14, 15), (2, 19), (3, 23), (6, 26), (31, 32)}
DAMAGE_LOW = {(8, 9), (10, 11), (16, 17), (20, 21), (24, 25), (28, 29)}
STATIONS = {1: 2, 2: 7, 3: 32, 4: 14, 5: 25}


def bus_xy(b):
    if b <= 18:
        return (float(b), 0.0)
    if b <= 22:
        return (float(b - 17), 1.5)
    if b <= 25:
        return (float(b - 20), -1.5)
    return (float(b - 20), -3.0)


def main():
    zbase = 12.66 ** 2 / 1.0
    scale = TOTAL_PEAK_KW / sum(NOMINAL[b][0] for b in LOAD_BUSES)
    lines = []
    for i, (f, t, r, x) in enumerate(BRANCHES, start=1):
        ln = {"id": i, "from": f, "to": t, "r": round(r / zbase, 8), "x": round(x / zbase, 8),
              "s_max": 1000.0, "kind": "fixed"}
        if (f, t) in DAMAGE_HIGH or (f, t) in DAMAGE_LOW:
            ln.update(kind="damageable", repair_time=2, repair_resources=2)
        lines.append(ln)
    for j, (f, t, r, x) in enumerate(TIES, start=len(BRANCHES) + 1):
        lines.append({"id": j, "from": f, "to": t, "r": round(r / zbase, 8), "x": round(x / zbase, 8),
                      "s_max": 600.0, "kind": "tie"})
    loads = []
    for b in LOAD_BUSES:
        p, q = NOMINAL[b]
        q = min(q, 0.6 * p)
        loads.append({"id": f"D{b}", "bus": b, "p_kw": round(p * scale, 2), "q_kvar": round(q * scale, 2),
                      "essential": b in ESSENTIAL, "cost": 2.5 if b in ESSENTIAL else 1.5,
                      "profile": f"D{b}"})
    gens = [
        {"id": "DG1", "kind": "dg", "bus": 33, "p_min": 0, "p_max": 200, "q_min": -67, "q_max": 100},
        {"id": "DG2", "kind": "dg", "bus": 22, "p_min": 0, "p_max": 300, "q_min": -100, "q_max": 150},
        {"id": "DG3", "kind": "dg", "bus": 1, "p_min": 0, "p_max": 400, "q_min": -133, "q_max": 200},
    ]
    for k, (b, kind, cap) in enumerate([(9, "pv_forming", 150), (18, "pv_following", 100),
                                        (24, "pv_forming", 150), (28, "pv_following", 100),
                                        (30, "pv_following", 120), (16, "pv_following", 100)], start=1):
        gens.append({"id": f"PV{k}", "kind": kind, "bus": b, "p_min": 0, "p_max": cap,
                     "q_min": -cap * 0.5, "q_max": cap * 0.5, "s_max": round(cap * 1.1, 1),
                     "profile": f"PV{k}"})

    # transport: stations, depot, damage sites at line midpoints, four junctions
    coords = {}
    names = {}
    node = 0
    ms_nodes = {}
    for ms, b in STATIONS.items():
        coords[node] = bus_xy(b)
        names[node] = f"MS{ms}"
        ms_nodes[ms] = node
        node += 1
    depot = node
    coords[depot] = (6.0, 1.0)
    names[depot] = "depot"
    node += 1
    rc_nodes = {}
    for ln in lines:
        if ln["kind"] != "damageable":
            continue
        (x1, y1), (x2, y2) = bus_xy(ln["from"]), bus_xy(ln["to"])
        coords[node] = ((x1 + x2) / 2, (y1 + y2) / 2)
        names[node] = f"L{ln['from']}-{ln['to']}"
        rc_nodes[ln["id"]] = node
        node += 1
    for xy in [(3.0, 0.7), (8.0, -0.8), (12.0, -1.2), (15.0, 0.8)]:
        coords[node] = xy
        names[node] = f"J{node}"
        node += 1
    rng = np.random.default_rng(33)
    ids = sorted(coords)
    edges = set()
    for a in ids:
        d = sorted(ids, key=lambda b: math.dist(coords[a], coords[b]))
        for b in d[1:4]:
            edges.add((min(a, b), max(a, b)))
    hours = np.arange(24)
    shape = 0.25 + 0.35 * np.exp(-((hours - 8) ** 2) / 3.0) + 0.9 * np.exp(-((hours - 16.5) ** 2) / 4.0)
    roads = []
    for k, (a, b) in enumerate(sorted(edges)):
        dist = math.dist(coords[a], coords[b])
        cap = float(rng.choice([800, 1000, 1200]))
        peak = float(rng.uniform(0.7, 1.35))
        vol = [round(float(v), 1) for v in cap * peak * shape / shape.max()]
        roads.append({"id": k, "a": a, "b": b, "free_time": round(0.2 + 0.3 * dist, 3), "capacity": cap,
                      "alpha": 0.15, "beta": 4.0, "volume": vol})

    stations = [{"id": ms, "bus": b, "node": ms_nodes[ms]} for ms, b in STATIONS.items()]
    net = {"schema_version": 1, "name": "ieee33-mg", "base_kv": 12.66, "base_kva": 1000.0,
           "v_min": 0.95, "v_max": 1.05, "buses": [{"id": b} for b in range(1, 34)], "lines": lines,
           "generators": gens, "loads": loads, "stations": stations}
    (OUT / "ieee33.json").write_text(json.dumps(net, indent=1) + "\n")

    fragility = {}
    for ln in lines:
        if ln["kind"] == "damageable":
            fragility[str(ln["id"])] = 0.7 if (ln["from"], ln["to"]) in DAMAGE_HIGH else 0.3
    scenario = {
        "schema_version": 1,
        "network": "ieee33.json",
        "transport": {"nodes": [{"id": n, "name": names[n]} for n in ids], "roads": roads,
                      "ms_nodes": {str(k): v for k, v in ms_nodes.items()},
                      "rc_nodes": {str(k): v for k, v in rc_nodes.items()}, "rc_depot": depot},
        "fleet": {
            "meg": [{"id": "MEG1", "station": 3, "p_min": 0, "p_max": 150, "q_min": -50, "q_max": 75}],
            "mess": [{"id": "MESS1", "station": 1, "p_max": 100, "e_max": 400, "soc0": 0.5,
                      "soc_min": 0.1, "soc_max": 0.9, "eta_c": 0.9, "eta_d": 0.9}],
            "rc": [{"id": "RC1", "depot": depot, "resources": 10}],
        },
        "outage": {"fragility": fragility, "repair_time": [1, 4], "repair_resources": [2, 3]},
        "profiles": {"synthetic": {"days": 60, "seed": 2024}},
        "horizon": 24,
    }
    (OUT / "ieee33_scenario.json").write_text(json.dumps(scenario, indent=1) + "\n")


if __name__ == "__main__":
    main()
