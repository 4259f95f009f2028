"""Best-first branch-and-bound over binary columns of a :class:`LinearProgram`."""

from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass

import numpy as np

from gridmend.milp.simplex import LinearProgram, LPStatus, SimplexSolver

INT_TOL = 1e-6
GAP_TOL = 1e-6
# tableau kept on open nodes only while it stays small; larger ones re-solve cold
_WARM_CELLS = 400_000


@dataclass
class MipResult:
    status: str  # optimal | incumbent | infeasible
    x: np.ndarray | None
    objective: float
    bound: float
    nodes: int
    lp_iterations: int


@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    lb: np.ndarray
    ub: np.ndarray
    warm: object | None


def branch_and_bound(
    lp: LinearProgram,
    binaries: np.ndarray,
    node_limit: int = 20_000,
    time_limit: float | None = 2.0,
    start_points: list[dict[int, float]] | None = None,
) -> MipResult:
    """Minimise ``lp`` with the columns in ``binaries`` restricted to {0, 1}.

    ``start_points`` are partial assignments of binary columns; each is fixed
    and solved as an LP to seed the incumbent before the tree search.
    """
    solver = SimplexSolver(lp)
    binaries = np.asarray(binaries, dtype=int)
    t0 = time.perf_counter()
    incumbent_x = None
    incumbent = np.inf
    lp_iters = 0

    def integral(x):
        frac = np.abs(x[binaries] - np.round(x[binaries]))
        return frac.max(initial=0.0) <= INT_TOL

    for point in start_points or []:
        lb = lp.lb.copy()
        ub = lp.ub.copy()
        for j, v in point.items():
            lb[j] = ub[j] = v
        res = solver.solve(lb, ub)
        lp_iters += res.iterations
        if res.status is LPStatus.OPTIMAL and integral(res.x) and res.objective < incumbent - 1e-12:
            incumbent, incumbent_x = res.objective, _snap(res.x, binaries)

    root = solver.solve()
    lp_iters += root.iterations
    if root.status is not LPStatus.OPTIMAL:
        if incumbent_x is not None:
            return MipResult("incumbent", incumbent_x, incumbent, -np.inf, 1, lp_iters)
        return MipResult("infeasible", None, np.inf, np.inf, 1, lp_iters)

    counter = itertools.count()
    heap: list[_Node] = []
    nodes = 0
    best_bound = root.objective

    def process(res, lb, ub):
        nonlocal incumbent, incumbent_x
        if res.status is not LPStatus.OPTIMAL:
            return
        if res.objective >= incumbent - GAP_TOL * 1e-3:
            return
        x = res.x
        frac = np.abs(x[binaries] - np.round(x[binaries]))
        if frac.max(initial=0.0) <= INT_TOL:
            incumbent, incumbent_x = res.objective, _snap(x, binaries)
            return
        warm = res.state if res.state is not None and res.state.T.size <= _WARM_CELLS else None
        heapq.heappush(heap, _Node(res.objective, next(counter), lb, ub, warm))

    process(root, lp.lb.copy(), lp.ub.copy())
    limit_hit = False
    while heap:
        node = heapq.heappop(heap)
        best_bound = node.bound
        if node.bound >= incumbent - GAP_TOL:
            heap.clear()
            break
        if nodes >= node_limit or (time_limit is not None and time.perf_counter() - t0 > time_limit):
            heapq.heappush(heap, node)
            limit_hit = True
            break
        nodes += 1
        x = node.warm.x[: lp.n] if node.warm is not None else None
        if x is None:
            res = solver.solve(node.lb, node.ub)
            lp_iters += res.iterations
            if res.status is not LPStatus.OPTIMAL:
                continue
            x = res.x
        # most fractional binary
        frac = np.abs(x[binaries] - np.round(x[binaries]))
        dist = np.abs(x[binaries] - 0.5)
        dist[frac <= INT_TOL] = np.inf
        j = int(binaries[int(np.argmin(dist))])
        for v in (1.0, 0.0):
            lb = node.lb.copy()
            ub = node.ub.copy()
            lb[j] = ub[j] = v
            res = solver.solve(lb, ub, warm=node.warm)
            lp_iters += res.iterations
            process(res, lb, ub)

    if incumbent_x is None:
        status = "incumbent" if limit_hit else "infeasible"
        return MipResult(status, None, np.inf, best_bound, nodes, lp_iters)
    if limit_hit:
        bound = min(n.bound for n in heap)
        status = "optimal" if incumbent - bound < GAP_TOL else "incumbent"
        return MipResult(status, incumbent_x, incumbent, bound, nodes, lp_iters)
    return MipResult("optimal", incumbent_x, incumbent, incumbent, nodes, lp_iters)


def _snap(x, binaries):
    x = x.copy()
    x[binaries] = np.round(x[binaries])
    return x
