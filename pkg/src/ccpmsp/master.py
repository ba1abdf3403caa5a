"""Master assignment model and its binary-program backends.

The master maximizes assigned utility subject to per-job assignment rows,
machine capacities, the chance row over scenario flags z, optional symmetry
and scenario-relaxation valid inequalities, and an accumulating cut pool.

Two backends solve it: a built-in depth-first branch-and-bound specialized
to this structure, and a bridge that writes an LP file and invokes an
external solver executable.  Both return the same objective on any model.
"""

from __future__ import annotations

import os
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .model import (
    BENDERS,
    Candidate,
    ConfigurationError,
    Cut,
    Instance,
    TOL,
)

OPTIMAL = "optimal"
FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
LIMIT = "limit"


class BackendError(RuntimeError):
    """External or internal backend failure, with diagnostics attached."""


@dataclass
class MasterModel:
    inst: Instance
    symmetry: bool = False
    scenario_relaxation: bool = False
    cuts: list[Cut] = field(default_factory=list)
    relax_coef: Optional[np.ndarray] = None  # (n_scenarios, n_jobs)

    @property
    def n_vars(self) -> int:
        return self.inst.n_jobs * self.inst.n_machines + self.inst.n_scenarios


@dataclass
class BackendSolution:
    status: str
    x: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None
    objective: Optional[float] = None
    bound: Optional[float] = None
    n_hook_calls: int = 0

    @property
    def candidate(self) -> Candidate:
        return Candidate(x=self.x, z=self.z)


def build_master(inst: Instance, symmetry: bool = True,
                 scenario_relaxation: bool = True) -> MasterModel:
    model = MasterModel(inst=inst)
    if symmetry:
        add_symmetry_constraints(model)
    if scenario_relaxation:
        add_scenario_relaxation(model)
    return model


def add_symmetry_constraints(model: MasterModel) -> MasterModel:
    """Lexicographic machine order: job j may only use machines m <= j, and
    machine m+1 only once machine m already holds a lower-indexed job."""
    model.symmetry = True
    return model


def add_scenario_relaxation(model: MasterModel) -> MasterModel:
    """Optimistic load rows, one per (machine, scenario): each assigned job
    contributes its execution time plus its cheapest outgoing setup (closing
    to the dummy included), a lower bound on any schedule containing it."""
    model.scenario_relaxation = True
    model.relax_coef = optimistic_load_coefficients(model.inst)
    return model


def optimistic_load_coefficients(inst: Instance) -> np.ndarray:
    coef = np.empty((inst.n_scenarios, inst.n_jobs))
    for w, sc in enumerate(inst.scenarios):
        d = sc.setup[1:, :].copy()
        np.fill_diagonal(d[:, 1:], np.inf)  # exclude j -> j
        coef[w] = sc.exec + d.min(axis=1)
    return coef


# ---------------------------------------------------------------------------
# generic row view (LP writing, substitution checks)
# ---------------------------------------------------------------------------


def xname(j: int, m: int) -> str:
    """Variable name for job j (1-based) on machine m (0-based)."""
    return f"x_{j}_{m + 1}"


def zname(w: int) -> str:
    return f"z_{w}"


def iter_rows(model: MasterModel):
    """Yield (name, coefs, sense, rhs) over every row of the model; coefs is
    a dict var-name -> coefficient, sense one of '<=', '>=', '='."""
    inst = model.inst
    n, M = inst.n_jobs, inst.n_machines
    for j in range(1, n + 1):
        yield (f"assign_{j}", {xname(j, m): 1.0 for m in range(M)}, "<=", 1.0)
    for m in range(M):
        yield (f"cap_{m + 1}", {xname(j, m): 1.0 for j in range(1, n + 1)}, "<=",
               float(inst.capacity))
    p = inst.scenario_prob
    yield ("chance", {zname(w): p for w in range(inst.n_scenarios)}, ">=",
           1.0 - inst.epsilon)
    if model.symmetry:
        for j in range(1, n + 1):
            for m in range(M):
                if m + 1 > j:
                    yield (f"sym_zero_{j}_{m + 1}", {xname(j, m): 1.0}, "=", 0.0)
        for j in range(1, n + 1):
            for m in range(M - 1):
                coefs = {xname(j, m + 1): 1.0}
                for k in range(1, j):
                    coefs[xname(k, m)] = coefs.get(xname(k, m), 0.0) - 1.0
                yield (f"sym_lex_{j}_{m + 1}", coefs, "<=", 0.0)
    if model.scenario_relaxation:
        T = inst.time_limit
        for w in range(inst.n_scenarios):
            mw = float(inst.big_m[w])
            for m in range(M):
                coefs = {
                    xname(j, m): float(model.relax_coef[w, j - 1])
                    for j in range(1, n + 1)
                }
                coefs[zname(w)] = mw
                yield (f"relax_{w}_{m + 1}", coefs, "<=", T + mw)
    for ci, cut in enumerate(model.cuts):
        if cut.kind == BENDERS:
            const, coefs_vec = cut.benders_payload
            mm = inst.big_m_max
            for m in range(M):
                coefs = {
                    xname(j, m): float(coefs_vec[j - 1])
                    for j in range(1, n + 1)
                    if coefs_vec[j - 1] != 0.0
                }
                coefs[zname(cut.scenario)] = mm
                yield (f"cut_{ci}_{m + 1}", coefs, "<=",
                       inst.time_limit + mm - const)
        else:
            for m in range(M):
                coefs = {xname(j, m): 1.0 for j in sorted(cut.job_set)}
                coefs[zname(cut.scenario)] = 1.0
                yield (f"cut_{ci}_{m + 1}", coefs, "<=", float(len(cut.job_set)))


def solution_values(inst: Instance, x: np.ndarray, z: np.ndarray) -> dict[str, float]:
    vals = {}
    for j in range(1, inst.n_jobs + 1):
        for m in range(inst.n_machines):
            vals[xname(j, m)] = float(x[j - 1, m])
    for w in range(inst.n_scenarios):
        vals[zname(w)] = float(z[w])
    return vals


def check_rows(model: MasterModel, x: np.ndarray, z: np.ndarray,
               tol: float = 1e-6) -> list[str]:
    """Names of rows violated by (x, z) under direct substitution."""
    vals = solution_values(model.inst, x, z)
    violated = []
    for name, coefs, sense, rhs in iter_rows(model):
        lhs = sum(c * vals[v] for v, c in coefs.items())
        if sense == "<=" and lhs > rhs + tol:
            violated.append(name)
        elif sense == ">=" and lhs < rhs - tol:
            violated.append(name)
        elif sense == "=" and abs(lhs - rhs) > tol:
            violated.append(name)
    return violated


def write_lp(model: MasterModel, path: str) -> None:
    """Emit the model in LP text format (maximization, binary section)."""
    inst = model.inst
    lines = ["Maximize"]
    terms = []
    for j in range(1, inst.n_jobs + 1):
        for m in range(inst.n_machines):
            terms.append(f"{float(inst.utilities[j - 1])!r} {xname(j, m)}")
    lines.append(" obj: " + " + ".join(terms))
    lines.append("Subject To")
    for name, coefs, sense, rhs in iter_rows(model):
        parts = []
        for v, c in coefs.items():
            c = float(c)
            if not parts:
                parts.append(f"{c!r} {v}" if c >= 0 else f"- {-c!r} {v}")
            elif c >= 0:
                parts.append(f"+ {c!r} {v}")
            else:
                parts.append(f"- {-c!r} {v}")
        op = {"<=": "<=", ">=": ">=", "=": "="}[sense]
        lines.append(f" {name}: {' '.join(parts)} {op} {float(rhs)!r}")
    lines.append("Binary")
    for j in range(1, inst.n_jobs + 1):
        for m in range(inst.n_machines):
            lines.append(f" {xname(j, m)}")
    for w in range(inst.n_scenarios):
        lines.append(f" {zname(w)}")
    lines.append("End")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# built-in branch and bound
# ---------------------------------------------------------------------------


class BuiltinBackend:
    """Depth-first search over job-to-machine assignments.

    Jobs are branched in index order, machines tried in index order before
    "unassigned", which realizes (job, machine)-lexicographic branching of
    the x variables.  Pruning uses the utility bound (largest remaining
    utilities that fit the residual capacity) and chance propagation: pool
    cuts and relaxation rows monotonically force scenario flags to zero as
    assignments grow, so a partial assignment whose surviving probability
    mass already misses 1 - epsilon is abandoned.  z is assigned greedily
    maximal at each leaf, which is optimal since z carries no objective.
    """

    supports_callback = True
    name = "builtin"

    def solve(self, model: MasterModel, time_budget: Optional[float] = None,
              hook: Optional[Callable] = None) -> BackendSolution:
        inst = model.inst
        n, M, B = inst.n_jobs, inst.n_machines, inst.capacity
        n_sc = inst.n_scenarios
        f = inst.utilities
        p = inst.scenario_prob
        need = 1.0 - inst.epsilon - 1e-12
        T = inst.time_limit
        deadline = None if time_budget is None else time.monotonic() + time_budget

        # suffix utility prefix-sums: top_suffix[j][r] = sum of r largest of f[j:]
        top_suffix = []
        for j in range(n + 1):
            tail = np.sort(f[j:])[::-1]
            top_suffix.append(np.concatenate(([0.0], np.cumsum(tail))))

        mask_cuts = []  # (jobmask, scenario)
        benders_cuts = []  # (scenario, const, coefs)
        for cut in model.cuts:
            if cut.kind == BENDERS:
                const, coefs = cut.benders_payload
                benders_cuts.append((cut.scenario, const, np.asarray(coefs, float)))
            else:
                mask_cuts.append((cut.job_mask(), cut.scenario))
        cuts_by_job = [[] for _ in range(n)]
        for ci, (mask, _) in enumerate(mask_cuts):
            for j in range(n):
                if mask >> j & 1:
                    cuts_by_job[j].append(ci)

        relax = model.relax_coef if model.scenario_relaxation else None

        assign = np.full(n, -1, dtype=np.int64)
        mach_mask = [0] * M
        mach_count = [0] * M
        mach_jobs: list[list[int]] = [[] for _ in range(M)]
        mach_load = np.zeros((M, n_sc))
        relax_hit = np.zeros((M, n_sc), dtype=bool)
        cut_hit = np.zeros((max(len(mask_cuts), 1), M), dtype=bool)
        forced = np.zeros(n_sc, dtype=np.int32)
        n_ok = n_sc

        pending: list[tuple[int, int]] = []  # callback-added (jobmask, scenario)
        pending_benders: list[tuple[int, float, np.ndarray]] = []

        best_obj = -np.inf
        best_x = None
        best_z = None
        state = {"limit": False, "open_bound": -np.inf, "ticks": 0, "n_hook": 0}

        def out_of_time() -> bool:
            if deadline is None:
                return False
            state["ticks"] += 1
            if state["ticks"] % 64 == 0 and time.monotonic() > deadline:
                state["limit"] = True
            return state["limit"]

        def bump(w: int, trail: list) -> None:
            nonlocal n_ok
            forced[w] += 1
            if forced[w] == 1:
                n_ok -= 1
            trail.append(w)

        def do_assign(j: int, m: int) -> list:
            nonlocal n_ok
            trail: list = []
            bit = 1 << j
            assign[j] = m
            mach_mask[m] |= bit
            mach_count[m] += 1
            mach_jobs[m].append(j)
            if relax is not None:
                mach_load[m] += relax[:, j]
                newly = (mach_load[m] > T + TOL) & ~relax_hit[m]
                for w in np.flatnonzero(newly):
                    relax_hit[m, w] = True
                    bump(int(w), trail)
                    trail.append(("relax", m, int(w)))
            for ci in cuts_by_job[j]:
                mask, w = mask_cuts[ci]
                if not cut_hit[ci, m] and mask & mach_mask[m] == mask:
                    cut_hit[ci, m] = True
                    bump(w, trail)
                    trail.append(("cut", ci, m))
            return trail

        def undo_assign(j: int, m: int, trail: list) -> None:
            nonlocal n_ok
            for item in reversed(trail):
                if isinstance(item, tuple):
                    if item[0] == "relax":
                        relax_hit[item[1], item[2]] = False
                    else:
                        cut_hit[item[1], item[2]] = False
                else:
                    forced[item] -= 1
                    if forced[item] == 0:
                        n_ok += 1
            bit = 1 << j
            assign[j] = -1
            mach_mask[m] &= ~bit
            mach_count[m] -= 1
            mach_jobs[m].pop()
            if relax is not None:
                mach_load[m] -= relax[:, j]

        def leaf_z() -> np.ndarray:
            z = forced == 0
            if benders_cuts or pending_benders or pending:
                z = z.copy()
                for w, const, coefs in benders_cuts + pending_benders:
                    if z[w]:
                        for m in range(M):
                            if mach_jobs[m] and const + coefs[mach_jobs[m]].sum() > T + TOL:
                                z[w] = False
                                break
                for mask, w in pending:
                    if z[w] and any(mask & mk == mask for mk in mach_mask):
                        z[w] = False
            return z

        def current_x() -> np.ndarray:
            x = np.zeros((n, M), dtype=np.int8)
            for j in range(n):
                if assign[j] >= 0:
                    x[j, assign[j]] = 1
            return x

        def handle_leaf(util: float) -> None:
            nonlocal best_obj, best_x, best_z
            z = leaf_z()
            if z.sum() * p < need:
                return
            if hook is not None:
                x = current_x()
                verified = False
                for _ in range(n_sc + 2):
                    state["n_hook"] += 1
                    new_cuts = hook(x, z.astype(np.int8))
                    if not new_cuts:
                        verified = True
                        break
                    for cut in new_cuts:
                        if cut.kind == BENDERS:
                            const, coefs0 = cut.benders_payload
                            pending_benders.append(
                                (cut.scenario, const, np.asarray(coefs0, float))
                            )
                        else:
                            pending.append((cut.job_mask(), cut.scenario))
                    z = leaf_z()
                    # a returned cut's scenario is a failing one for this x,
                    # so its flag must drop here even if the cut row itself
                    # does not bind at this candidate; z shrinks every round
                    for cut in new_cuts:
                        z[cut.scenario] = False
                    if z.sum() * p < need:
                        return
                if not verified:
                    return
            if util > best_obj + TOL:
                best_obj = util
                best_x = current_x()
                best_z = z.astype(np.int8)

        def dfs(j: int, util: float) -> None:
            if out_of_time():
                bound = util + top_suffix[j][min(
                    sum(B - c for c in mach_count), n - j)]
                state["open_bound"] = max(state["open_bound"], bound)
                return
            if n_ok * p < need:
                return
            slots = sum(B - c for c in mach_count)
            bound = util + top_suffix[j][min(slots, n - j)]
            if bound <= best_obj + TOL:
                return
            if j == n:
                handle_leaf(util)
                return
            limit_m = min(j + 1, M) if model.symmetry else M
            for m in range(limit_m):
                if mach_count[m] >= B:
                    continue
                if model.symmetry and m > 0 and mach_count[m - 1] == 0:
                    continue
                trail = do_assign(j, m)
                dfs(j + 1, util + f[j])
                undo_assign(j, m, trail)
                if state["limit"]:
                    bound = util + top_suffix[j][min(
                        sum(B - c for c in mach_count), n - j)]
                    state["open_bound"] = max(state["open_bound"], bound)
                    return
            dfs(j + 1, util)

        dfs(0, 0.0)

        n_hook = state["n_hook"]
        if best_x is None:
            if state["limit"]:
                return BackendSolution(
                    status=LIMIT, bound=max(state["open_bound"], 0.0),
                    n_hook_calls=n_hook,
                )
            return BackendSolution(status=INFEASIBLE, n_hook_calls=n_hook)
        status = LIMIT if state["limit"] else OPTIMAL
        bound = best_obj if status == OPTIMAL else max(state["open_bound"], best_obj)
        return BackendSolution(
            status=status, x=best_x, z=best_z, objective=float(best_obj),
            bound=float(bound), n_hook_calls=n_hook,
        )


# ---------------------------------------------------------------------------
# external solver bridge
# ---------------------------------------------------------------------------


class ExternalBackend:
    """Writes the model as an LP file and runs a solver executable.

    The command is invoked as ``<cmd> <model.lp> <solution.sol>`` and must
    write the solution as plain "name value" lines ('#'-prefixed comment
    lines are ignored); absent variables default to 0.
    """

    supports_callback = False
    name = "external"

    def __init__(self, cmd: str):
        if not cmd:
            raise ConfigurationError("external solver command not configured")
        self.cmd = cmd

    def solve(self, model: MasterModel, time_budget: Optional[float] = None,
              hook: Optional[Callable] = None) -> BackendSolution:
        if hook is not None:
            raise BackendError("external backend does not support lazy-cut callbacks")
        inst = model.inst
        with tempfile.TemporaryDirectory(prefix="ccpmsp_") as tmp:
            lp_path = os.path.join(tmp, "model.lp")
            sol_path = os.path.join(tmp, "model.sol")
            write_lp(model, lp_path)
            argv = shlex.split(self.cmd) + [lp_path, sol_path]
            try:
                proc = subprocess.run(
                    argv, capture_output=True, text=True,
                    timeout=None if time_budget is None else time_budget + 30.0,
                )
            except (OSError, subprocess.TimeoutExpired) as exc:
                raise BackendError(f"external solver failed to run: {exc}") from exc
            if proc.returncode != 0:
                raise BackendError(
                    f"external solver exited with {proc.returncode}: "
                    f"{proc.stderr.strip()[:500]}"
                )
            if not os.path.exists(sol_path):
                raise BackendError("external solver wrote no solution file")
            with open(sol_path) as fh:
                text = fh.read()
        vals: dict[str, float] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) >= 2:
                try:
                    vals[parts[0]] = float(parts[1])
                except ValueError:
                    continue
        x = np.zeros((inst.n_jobs, inst.n_machines), dtype=np.int8)
        for j in range(1, inst.n_jobs + 1):
            for m in range(inst.n_machines):
                x[j - 1, m] = int(round(vals.get(xname(j, m), 0.0)))
        z = np.array(
            [int(round(vals.get(zname(w), 0.0))) for w in range(inst.n_scenarios)],
            dtype=np.int8,
        )
        violated = check_rows(model, x, z)
        if violated:
            raise BackendError(f"external solution violates rows: {violated[:5]}")
        objective = float(inst.utilities @ x.sum(axis=1))
        return BackendSolution(
            status=OPTIMAL, x=x, z=z, objective=objective, bound=objective
        )


def solve_master(model: MasterModel, backend=None,
                 time_budget: Optional[float] = None,
                 hook: Optional[Callable] = None) -> BackendSolution:
    """Solve the master to proven optimality (or budget) with the given
    backend; defaults to the built-in branch and bound."""
    if backend is None:
        backend = BuiltinBackend()
    return backend.solve(model, time_budget=time_budget, hook=hook)
