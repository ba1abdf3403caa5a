"""Outer solve loop: propose a master candidate, check every (machine,
scenario) sequencing subproblem on the cached diagrams, emit cuts, repeat.

A candidate becomes the answer only after every scenario it claims (z = 1)
has been verified feasible on all machines, so the returned objective is
exact whenever the status says optimal.  Two driving modes exist: the
default iterative loop re-solves the master after each cut batch, and a
callback mode feeds cuts to the backend's in-search lazy-cut hook; both
finish with the same objective.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import jobset, lastjob, netflow
from .diagram import JOBSET, LASTJOB, DiagramCache, canonical_remap, sub_times
from .master import (
    BuiltinBackend,
    ExternalBackend,
    LIMIT,
    OPTIMAL,
    build_master,
    solve_master,
)
from .model import (
    BENDERS,
    Candidate,
    ConfigurationError,
    Cut,
    IIS,
    Instance,
    NOGOOD,
    StructuralError,
    TOL,
)
from .oracle import OracleLimits, verify_candidate

VARIANTS = (LASTJOB, JOBSET)
CUT_KINDS = (NOGOOD, IIS, BENDERS)


@dataclass
class SolveOptions:
    variant: str = JOBSET
    cut_kind: str = IIS
    symmetry: bool = True
    scenario_relaxation: bool = True
    time_budget: float = 1200.0
    backend: str = "builtin"  # or "external"
    external_cmd: Optional[str] = None
    mode: str = "iterative"  # or "callback"
    benders_flavor: str = "mdd"  # "bdd" | "mdd"
    benders_strategy: int = 1  # 0 = basic cut, 1 = layer-strengthened
    workers: int = 1
    verify_with_oracle: bool = True

    def check(self, inst: Instance) -> None:
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}")
        if self.cut_kind not in CUT_KINDS:
            raise ConfigurationError(f"unknown cut kind {self.cut_kind!r}")
        if self.mode not in ("iterative", "callback"):
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.benders_flavor not in ("bdd", "mdd"):
            raise ConfigurationError(f"unknown diagram flavor {self.benders_flavor!r}")
        if self.cut_kind == BENDERS:
            netflow.check_scale(inst.n_jobs, self.benders_flavor)


@dataclass
class SolveReport:
    objective: Optional[float] = None
    bound: Optional[float] = None
    gap: float = float("inf")
    optimal: bool = False
    status: str = "unknown"
    n_callbacks: int = 0
    n_cuts: int = 0
    subproblem_resolution_time: float = 0.0
    resolution_time_per_callback: float = 0.0
    cut_creation_time: float = 0.0
    subproblem_creation_time: float = 0.0
    wall_time: float = 0.0
    check_counts: Optional[np.ndarray] = None  # (n_machines, n_scenarios)
    cuts: Optional[list] = None  # final pool (diagnostics)


@dataclass
class _Counters:
    n_callbacks: int = 0
    resolution_time: float = 0.0
    cut_time: float = 0.0
    check_counts: np.ndarray = None


def compute_gap(objective: Optional[float], bound: Optional[float]) -> float:
    """Relative optimality gap; infinite without an incumbent."""
    if objective is None or bound is None:
        return float("inf")
    diff = bound - objective
    if diff <= TOL:
        return 0.0
    if objective <= TOL:
        return float("inf")
    return diff / objective


def collect_report(objective, bound, status, counters: _Counters,
                   cache: DiagramCache, netflow_build_time: float,
                   wall_time: float, n_cuts: int) -> SolveReport:
    per_cb = (
        counters.resolution_time / counters.n_callbacks
        if counters.n_callbacks else 0.0
    )
    gap = compute_gap(objective, bound)
    return SolveReport(
        objective=objective,
        bound=bound,
        gap=gap,
        optimal=status == OPTIMAL and gap == 0.0,
        status=status,
        n_callbacks=counters.n_callbacks,
        n_cuts=n_cuts,
        subproblem_resolution_time=counters.resolution_time,
        resolution_time_per_callback=per_cb,
        cut_creation_time=counters.cut_time,
        subproblem_creation_time=cache.build_time + netflow_build_time,
        wall_time=wall_time,
        check_counts=counters.check_counts,
    )


def _min_time(variant: str, diag, t, d) -> float:
    if variant == LASTJOB:
        return lastjob.min_time(diag, t, d)
    return jobset.min_time(diag, t, d)


def check_candidate(inst: Instance, cand: Candidate, cache: DiagramCache,
                    variant: str, counters: Optional[_Counters] = None,
                    workers: int = 1) -> list[tuple[int, int, tuple]]:
    """Sequencing check of every (machine, scenario) the candidate claims.

    Only scenarios with z = 1 are checked (cuts bind through z); machines
    without jobs are trivially fine.  Returns (machine, scenario, jobs)
    failures sorted by (scenario, machine).
    """
    t0 = time.perf_counter()
    active = np.flatnonzero(cand.z)
    tasks = []
    for m in range(inst.n_machines):
        jobs = cand.machine_jobs(m)
        if len(jobs) == 0:
            continue
        if len(jobs) > inst.capacity:
            raise StructuralError(
                f"machine {m} holds {len(jobs)} jobs, capacity {inst.capacity}"
            )
        diag = cache.get_or_build(variant, len(jobs))
        remap = canonical_remap(jobs)
        for w in active:
            tasks.append((m, int(w), jobs, diag, remap))

    def run(task):
        m, w, jobs, diag, remap = task
        t, d = sub_times(inst.scenarios[w], remap)
        return m, w, jobs, _min_time(variant, diag, t, d)

    if workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(task) for task in tasks]

    failures = []
    for m, w, jobs, mt in results:
        if counters is not None:
            counters.check_counts[m, w] += 1
        if mt > inst.time_limit + TOL:
            failures.append((m, w, tuple(int(j) for j in jobs)))
    failures.sort(key=lambda f: (f[1], f[0], f[2]))
    if counters is not None:
        counters.resolution_time += time.perf_counter() - t0
    return failures


def emit_cuts(failures, cut_kind: str, inst: Instance, cache: DiagramCache,
              opts: Optional[SolveOptions] = None, cand: Optional[Candidate] = None,
              counters: Optional[_Counters] = None,
              flow_ctx: Optional["netflow.FlowContext"] = None) -> list[Cut]:
    """Render the cut batch for a list of failures, deduplicated by key."""
    t0 = time.perf_counter()
    cuts: list[Cut] = []
    seen = set()

    def push(cut: Cut):
        key = cut.key()
        if key not in seen:
            seen.add(key)
            cuts.append(cut)

    if cut_kind == NOGOOD:
        for _, w, jobs in failures:
            push(Cut(job_set=frozenset(jobs), scenario=w, kind=NOGOOD))
    elif cut_kind == IIS:
        for _, w, jobs in failures:
            diag = cache.get_or_build(
                opts.variant if opts else JOBSET, len(jobs)
            )
            remap = canonical_remap(jobs)
            t, d = sub_times(inst.scenarios[w], remap)
            if diag.variant == LASTJOB:
                sets = lastjob.iis(diag, inst.time_limit, t, d)
            else:
                sets = jobset.iis(diag, inst.time_limit, t, d)
            for s in sets:
                orig = frozenset(int(remap[c]) for c in s)
                push(Cut(job_set=orig, scenario=w, kind=IIS))
    elif cut_kind == BENDERS:
        if flow_ctx is None or cand is None:
            raise ConfigurationError("benders cuts need a flow context and candidate")
        for m, w, jobs in failures:
            cut = flow_ctx.cut_for(inst, cand.x[:, m], w, jobs)
            push(cut)
    else:
        raise ConfigurationError(f"unknown cut kind {cut_kind!r}")
    if counters is not None:
        counters.cut_time += time.perf_counter() - t0
    return cuts


def _make_backend(opts: SolveOptions):
    if opts.backend == "builtin":
        return BuiltinBackend()
    if opts.backend == "external":
        return ExternalBackend(opts.external_cmd)
    raise ConfigurationError(f"unknown backend {opts.backend!r}")


def solve_ccpmsp(inst: Instance, opts: Optional[SolveOptions] = None):
    """Solve an instance; returns (Candidate or None, SolveReport)."""
    opts = opts or SolveOptions()
    opts.check(inst)
    start = time.perf_counter()
    deadline = start + opts.time_budget

    cache = DiagramCache(max_depth=inst.capacity)
    counters = _Counters(
        check_counts=np.zeros((inst.n_machines, inst.n_scenarios), dtype=np.int64)
    )
    flow_ctx = (
        netflow.FlowContext(inst, opts.benders_flavor, opts.benders_strategy)
        if opts.cut_kind == BENDERS
        else None
    )
    model = build_master(
        inst, symmetry=opts.symmetry, scenario_relaxation=opts.scenario_relaxation
    )
    backend = _make_backend(opts)
    pool_keys = set()

    def remaining() -> float:
        return deadline - time.perf_counter()

    def append_cuts(new_cuts) -> list[Cut]:
        fresh = []
        for cut in new_cuts:
            if cut.key() not in pool_keys:
                pool_keys.add(cut.key())
                model.cuts.append(cut)
                fresh.append(cut)
        return fresh

    if opts.mode == "callback" and backend.supports_callback:

        def hook(x, z):
            counters.n_callbacks += 1
            cand = Candidate(x=x, z=z)
            failures = check_candidate(
                inst, cand, cache, opts.variant, counters, opts.workers
            )
            if not failures:
                return []
            cuts = emit_cuts(
                failures, opts.cut_kind, inst, cache, opts, cand, counters, flow_ctx
            )
            fresh = append_cuts(cuts)
            if not fresh:
                # every derived cut was already pooled (possible for weak flow
                # cuts); a no-good for a freshly failing pair is always new,
                # so the batch stays nonempty whenever failures exist
                fresh = append_cuts(emit_cuts(failures, NOGOOD, inst, cache))
            return fresh

        sol = solve_master(model, backend, time_budget=remaining(), hook=hook)
        wall = time.perf_counter() - start
        status = sol.status
        objective = sol.objective
        bound = sol.bound
        cand = sol.candidate if sol.x is not None else None
    else:
        objective = None
        bound = None
        cand = None
        status = LIMIT
        while True:
            sol = solve_master(model, backend, time_budget=remaining())
            counters.n_callbacks += 1
            if sol.x is None:
                status = sol.status
                bound = sol.bound
                break
            bound = sol.bound
            failures = check_candidate(
                inst, sol.candidate, cache, opts.variant, counters, opts.workers
            )
            if not failures:
                cand = sol.candidate
                objective = sol.objective
                status = sol.status
                break
            cuts = emit_cuts(
                failures, opts.cut_kind, inst, cache, opts, sol.candidate,
                counters, flow_ctx,
            )
            fresh = append_cuts(cuts)
            binding = _batch_excludes(inst, model, fresh, sol.candidate)
            if not binding:
                # degenerate batch (possible for weak flow cuts): force progress
                fallback = emit_cuts(failures, NOGOOD, inst, cache)
                if not append_cuts(fallback):
                    raise StructuralError("cut pool failed to exclude a candidate")
            if remaining() <= 0:
                status = LIMIT
                break
        wall = time.perf_counter() - start

    if (cand is not None and opts.verify_with_oracle
            and inst.capacity <= OracleLimits().max_seq_jobs):
        problems = verify_candidate(inst, cand)
        if problems:
            raise StructuralError(
                f"solver produced an infeasible candidate: {problems[:3]}"
            )

    report = collect_report(
        objective, bound, status, counters, cache,
        flow_ctx.build_time if flow_ctx else 0.0,
        wall, len(model.cuts),
    )
    report.cuts = list(model.cuts)
    return cand, report


def _batch_excludes(inst: Instance, model, fresh_cuts, cand: Candidate) -> bool:
    """True if some fresh cut row is violated by the candidate as-is."""
    for cut in fresh_cuts:
        w = cut.scenario
        if cand.z[w] == 0:
            continue
        if cut.kind == BENDERS:
            const, coefs = cut.benders_payload
            coefs = np.asarray(coefs, float)
            for m in range(inst.n_machines):
                if const + float(coefs @ cand.x[:, m]) > inst.time_limit + TOL:
                    return True
        else:
            mask_jobs = np.array(sorted(cut.job_set)) - 1
            for m in range(inst.n_machines):
                if cand.x[mask_jobs, m].sum() >= len(cut.job_set):
                    return True
    return False
