from itertools import permutations
from math import comb

import numpy as np
import pytest

from ccpmsp import jobset, lastjob, oracle
from ccpmsp.diagram import (
    JOBSET,
    LASTJOB,
    DiagramCache,
    JobSetSpec,
    LastJobSpec,
    build_top_down,
    canonical_remap,
    get_or_build,
    min_completion_time,
    sub_times,
    to_dot,
)
from ccpmsp.model import ConfigurationError, StructuralError
from conftest import random_scenario


def test_worked_example_layer_shapes(uniform_scenario):
    assert build_top_down(LastJobSpec(3), 3).layer_sizes() == [1, 3, 6, 1]
    assert build_top_down(JobSetSpec(3), 3).layer_sizes() == [1, 3, 3, 1]


def test_depth_one_single_arc():
    for spec in (LastJobSpec(1), JobSetSpec(1)):
        d = build_top_down(spec, 1)
        assert d.layer_sizes() == [1, 1]
        assert d.n_arcs == 1


@pytest.mark.parametrize("k", range(1, 11))
def test_closed_form_layer_sizes(k):
    lj = build_top_down(LastJobSpec(k), k)
    js = build_top_down(JobSetSpec(k), k)
    for p in range(1, k + 1):
        assert len(lj.layers[p - 1]) == comb(k, p - 1) * max(1, p - 1)
        assert len(js.layers[p - 1]) == comb(k, p - 1)
    assert len(lj.layers[k]) == 1 and len(js.layers[k]) == 1
    assert js.n_nodes <= lj.n_nodes
    if k >= 3:
        assert js.n_nodes < lj.n_nodes


@pytest.mark.parametrize("k", range(1, 8))
@pytest.mark.parametrize("variant", [LASTJOB, JOBSET])
def test_paths_are_exactly_the_permutations(k, variant):
    spec = LastJobSpec(k) if variant == LASTJOB else JobSetSpec(k)
    d = build_top_down(spec, k)
    paths = []

    def walk(node, seq):
        if node == d.terminal:
            paths.append(tuple(seq))
            return
        for a in d.node_out[node]:
            walk(int(d.arc_head[a]), seq + [int(d.arc_value[a])])

    walk(d.root, [])
    assert sorted(paths) == sorted(permutations(range(1, k + 1)))


def test_no_duplicate_values_leaving_a_node():
    for spec in (LastJobSpec(5), JobSetSpec(5)):
        d = build_top_down(spec, 5)
        for n in range(d.n_nodes):
            vals = [int(d.arc_value[a]) for a in d.node_out[n]]
            assert len(vals) == len(set(vals))


def test_states_distinct_within_layer():
    d = build_top_down(JobSetSpec(6), 6)
    for layer in d.layers:
        states = [d.states[n] for n in layer]
        assert len(states) == len(set(states))


def test_worked_example_min_time(uniform_scenario):
    remap = canonical_remap([1, 2, 3])
    t, d = sub_times(uniform_scenario, remap)
    lj = build_top_down(LastJobSpec(3), 3)
    js = build_top_down(JobSetSpec(3), 3)
    assert min_completion_time(lj, lastjob.arc_costs(lj, t, d)) == pytest.approx(14.0)
    assert min_completion_time(js, jobset.arc_costs(js, t, d)) == pytest.approx(14.0)


def test_depth_one_includes_closing_setup():
    sc = random_scenario(np.random.default_rng(0), 1)
    t = np.array([0.0, 4.0])
    d = sc.setup.copy()
    lj = build_top_down(LastJobSpec(1), 1)
    expect = 4.0 + d[1, 0]
    assert lastjob.min_time(lj, t, d) == pytest.approx(expect)
    js = build_top_down(JobSetSpec(1), 1)
    assert jobset.min_time(js, t, d) == pytest.approx(expect)


@pytest.mark.parametrize("seed", range(8))
def test_min_time_equals_permutation_enumeration(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 8))
    sc = random_scenario(rng, k)
    remap = canonical_remap(range(1, k + 1))
    t, d = sub_times(sc, remap)
    want = oracle.brute_min_time(range(1, k + 1), sc, True)
    lj = build_top_down(LastJobSpec(k), k)
    js = build_top_down(JobSetSpec(k), k)
    assert lastjob.min_time(lj, t, d) == pytest.approx(want, abs=1e-9)
    assert jobset.min_time(js, t, d) == pytest.approx(want, abs=1e-9)


def test_canonical_remap_sorts():
    remap = canonical_remap([4, 9, 2])
    assert remap.tolist() == [0, 2, 4, 9]
    assert canonical_remap([1, 2, 3]).tolist() == [0, 1, 2, 3]


def test_canonical_remap_rejects_duplicates():
    with pytest.raises(StructuralError):
        canonical_remap([3, 3, 1])


@pytest.mark.parametrize("seed", range(5))
def test_remapped_evaluation_matches_direct_subset(seed):
    # evaluating a subset through the canonical diagram equals brute force
    # over the original ids
    rng = np.random.default_rng(100 + seed)
    n = 9
    sc = random_scenario(rng, n)
    jobs = sorted(rng.choice(np.arange(1, n + 1), size=rng.integers(2, 7),
                             replace=False).tolist())
    remap = canonical_remap(jobs)
    t, d = sub_times(sc, remap)
    k = len(jobs)
    lj = build_top_down(LastJobSpec(k), k)
    want = oracle.brute_min_time(jobs, sc, True)
    assert lastjob.min_time(lj, t, d) == pytest.approx(want, abs=1e-9)


def test_cache_returns_identical_structure():
    cache = DiagramCache(max_depth=6)
    a = get_or_build(cache, LASTJOB, 5)
    b = get_or_build(cache, LASTJOB, 5)
    assert a is b
    assert a.fingerprint() == b.fingerprint()


def test_cache_depth_guard_and_variant_isolation():
    cache = DiagramCache(max_depth=4)
    with pytest.raises(ConfigurationError):
        get_or_build(cache, LASTJOB, 5)
    get_or_build(cache, LASTJOB, 3)
    get_or_build(cache, JOBSET, 3)
    assert cache.count(LASTJOB) == 1 and cache.count(JOBSET) == 1
    for k in range(1, 5):
        get_or_build(cache, LASTJOB, k)
        get_or_build(cache, JOBSET, k)
    assert cache.count(LASTJOB) == 4 and cache.count(JOBSET) == 4


def test_dot_export_mentions_every_node():
    d = build_top_down(JobSetSpec(3), 3)
    dot = to_dot(d)
    assert dot.startswith("digraph")
    assert dot.count("->") == d.n_arcs
