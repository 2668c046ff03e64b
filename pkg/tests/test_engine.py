import itertools
import math

import numpy as np
import pytest

from bndp.assoc import ScreenOptions
from bndp.core import Column, Dataset, Network, NodeSubset, ParentConstraints
from bndp.engine import (
    BestParentsTable,
    EngineError,
    best_parents,
    best_sinks,
    enumerate_dags,
    exhaustive_search,
    generational_expansion,
    learn,
    recover_networks,
)
from bndp.scoring import LocalScoreTable, ScoreConfig, compute_local_scores

PAPER_PP = ([1, 3], [2, 0], [1], [0])  # 0-indexed worked-example pp sets


def paper_constraints(indegree=2):
    return ParentConstraints(
        tuple(NodeSubset.from_indices(m) for m in PAPER_PP), indegree
    )


def cont(matrix, names=None):
    names = names or [f"V{i}" for i in range(matrix.shape[1])]
    return Dataset(
        [Column(n, "continuous", matrix[:, i].copy()) for i, n in enumerate(names)]
    )


def random_local_table(pp, d, rng, names=None):
    """Random score tables over all parent subsets within pp and d."""
    p = len(pp)
    scores = []
    for i in range(p):
        members = sorted(NodeSubset(pp[i]))
        table = {}
        for size in range(min(d, len(members)) + 1):
            for combo in itertools.combinations(members, size):
                mask = 0
                for j in combo:
                    mask |= 1 << j
                table[mask] = float(rng.normal())
        scores.append(table)
    names = names or tuple(f"V{i}" for i in range(p))
    return LocalScoreTable(scores, names, d, "bic")


def random_constraints(p, rng, density=0.5, indegree=2):
    pp = []
    for i in range(p):
        mask = 0
        for j in range(p):
            if j != i and rng.random() < density:
                mask |= 1 << j
        pp.append(NodeSubset(mask))
    return ParentConstraints(tuple(pp), indegree)


def brute_force_best(table, pool, d):
    """Independent max over all parent subsets within the pool."""
    members = sorted(NodeSubset(pool))
    best, best_masks = -math.inf, []
    for size in range(min(d, len(members)) + 1):
        for combo in itertools.combinations(members, size):
            mask = 0
            for j in combo:
                mask |= 1 << j
            s = table[mask]
            if s > best + 1e-12:
                best, best_masks = s, [mask]
            elif abs(s - best) <= 1e-12:
                best_masks.append(mask)
    return best, sorted(best_masks)


def complete_generational_orderings(pp, p):
    """Brute-force enumeration straight from the definition."""
    out = []
    for perm in itertools.permutations(range(p)):
        prefix = 0
        ok = True
        for k, v in enumerate(perm):
            if k > 0 and not (pp[v] & prefix):
                ok = False
                break
            prefix |= 1 << v
        if ok:
            out.append(perm)
    return out


# ------------------------------------------------------------ best parents


class TestBestParents:
    def test_empty_pool(self):
        rng = np.random.default_rng(0)
        c = random_constraints(4, rng)
        local = random_local_table([int(m) for m in c.pp], 2, rng)
        bpt = best_parents(local, c)
        for i in range(4):
            score, subsets = bpt.entry(i, 0)
            assert score == local.score(i, 0)
            assert subsets == (0,)

    def test_full_pool_matches_brute_force(self):
        rng = np.random.default_rng(1)
        for trial in range(30):
            gen = np.random.default_rng(trial)
            p = int(gen.integers(2, 7))
            d = int(gen.integers(1, p))
            c = random_constraints(p, gen, density=0.6, indegree=d)
            local = random_local_table([int(m) for m in c.pp], d, gen)
            bpt = best_parents(local, c)
            for i in range(p):
                pool = int(c.pp[i])
                score, subsets = bpt.entry(i, pool)
                b_score, b_masks = brute_force_best(local.subsets(i), pool, d)
                assert abs(score - b_score) < 1e-12
                assert sorted(subsets) == b_masks

    def test_sub_pools_match_brute_force(self):
        gen = np.random.default_rng(5)
        c = random_constraints(5, gen, density=0.8, indegree=2)
        local = random_local_table([int(m) for m in c.pp], 2, gen)
        bpt = best_parents(local, c)
        for i in range(5):
            pool_full = int(c.pp[i])
            sub = pool_full
            while sub:
                score, subsets = bpt.entry(i, sub)
                b_score, b_masks = brute_force_best(local.subsets(i), sub, 2)
                assert abs(score - b_score) < 1e-12
                assert sorted(subsets) == b_masks
                sub = (sub - 1) & pool_full

    def test_lazy_and_eager_agree(self):
        gen = np.random.default_rng(9)
        c = random_constraints(6, gen, density=0.9, indegree=3)
        local = random_local_table([int(m) for m in c.pp], 3, gen)
        eager = BestParentsTable(local, c, eager_bits=12)
        lazy = BestParentsTable(local, c, eager_bits=0)
        for i in range(6):
            pool = int(c.pp[i])
            sub = pool
            while True:
                assert eager.entry(i, sub) == lazy.entry(i, sub)
                if sub == 0:
                    break
                sub = (sub - 1) & pool

    def test_monotone_in_pool(self):
        gen = np.random.default_rng(13)
        c = random_constraints(6, gen, density=0.7, indegree=2)
        local = random_local_table([int(m) for m in c.pp], 2, gen)
        bpt = best_parents(local, c)
        for i in range(6):
            pool = int(c.pp[i])
            sub = pool
            while sub:
                smaller = (sub - 1) & pool
                if NodeSubset(smaller).issubset(sub):
                    assert bpt.score(i, smaller) <= bpt.score(i, sub) + 1e-12
                sub = smaller

    def test_exact_ties_all_kept(self):
        local = LocalScoreTable(
            [{0: -1.0, 0b10: -0.5, 0b100: -0.5, 0b110: -3.0}, {0: 0.0}, {0: 0.0}],
            ("a", "b", "c"),
            2,
            "bic",
        )
        c = ParentConstraints(
            (NodeSubset(0b110), NodeSubset(0), NodeSubset(0)), indegree=2
        )
        bpt = best_parents(local, c)
        score, subsets = bpt.entry(0, 0b110)
        assert score == -0.5
        assert subsets == (0b10, 0b100)


# ---------------------------------------------------------------- expansion


class TestGenerationalExpansion:
    def test_worked_example_lattice(self):
        reach = {int(m) for m in generational_expansion(paper_constraints())}

        def mask(*xs):
            return sum(1 << x for x in xs)

        # all singletons
        for v in range(4):
            assert mask(v) in reach
        # reachable pairs {1,2},{2,3},{1,4} (1-indexed)
        assert mask(0, 1) in reach
        assert mask(1, 2) in reach
        assert mask(0, 3) in reach
        # excluded: {1,3},{3,4},{1,3,4} and the figure's spurious {2,4}
        assert mask(0, 2) not in reach
        assert mask(2, 3) not in reach
        assert mask(0, 2, 3) not in reach
        assert mask(1, 3) not in reach
        # reachable triples and the full set
        assert mask(0, 1, 2) in reach
        assert mask(0, 1, 3) in reach
        assert mask(0, 1, 2, 3) in reach
        assert len(reach) == 10

    def test_complete_pp_all_subsets(self):
        c = ParentConstraints.complete(4, 3)
        reach = list(generational_expansion(c))
        assert len(reach) == 2**4 - 1
        assert len(set(reach)) == len(reach)

    def test_empty_pp_only_singletons(self):
        c = ParentConstraints((NodeSubset(0),) * 3, indegree=1)
        reach = list(generational_expansion(c))
        assert sorted(int(m) for m in reach) == [1, 2, 4]

    def test_emitted_once_level_order(self):
        rng = np.random.default_rng(3)
        c = random_constraints(6, rng, density=0.5)
        seen = list(generational_expansion(c))
        assert len(seen) == len(set(seen))
        sizes = [m.count() for m in seen]
        assert sizes == sorted(sizes)

    def test_cap_enforced(self):
        c = ParentConstraints.complete(10, 2)
        with pytest.raises(EngineError):
            list(generational_expansion(c, max_subsets=50))


# ---------------------------------------------------------------- best sinks


class TestBestSinks:
    def test_singletons_score_empty_set(self):
        rng = np.random.default_rng(0)
        c = paper_constraints()
        local = random_local_table([int(m) for m in c.pp], 2, rng)
        bst = best_sinks(best_parents(local, c), c, local)
        for v in range(4):
            score, sinks = bst.entries[1 << v]
            assert score == local.score(v, 0)
            assert sinks == (v,)

    def test_counting_theorem_p3_p4(self):
        rng = np.random.default_rng(1)
        for p, expected in ((3, 48), (4, 1536)):
            c = ParentConstraints.complete(p, p - 1)
            local = random_local_table([int(m) for m in c.pp], p - 1, rng)
            bst = best_sinks(best_parents(local, c), c, local, instrument=True)
            full = (1 << p) - 1
            assert bst.combination_count(full) == expected
            assert expected == math.factorial(p) * 2 ** math.comb(p, 2)

    def test_table_has_seven_entries_p3(self):
        rng = np.random.default_rng(2)
        c = ParentConstraints.complete(3, 2)
        local = random_local_table([int(m) for m in c.pp], 2, rng)
        bst = best_sinks(best_parents(local, c), c, local)
        assert bst.n_subsets == 7

    def test_recursion_identity(self):
        # Every entry equals the max over admissible sink decompositions.
        rng = np.random.default_rng(4)
        for trial in range(20):
            gen = np.random.default_rng(100 + trial)
            p = int(gen.integers(2, 7))
            c = random_constraints(p, gen, density=0.6, indegree=2)
            local = random_local_table([int(m) for m in c.pp], 2, gen)
            bpt = best_parents(local, c)
            bst = best_sinks(bpt, c, local)
            for w, (score, sinks) in bst.entries.items():
                if NodeSubset(w).count() == 1:
                    continue
                cands = {}
                for s in NodeSubset(w):
                    prev = w ^ (1 << s)
                    pool = int(c.pp[s]) & prev
                    if pool and prev in bst.entries:
                        cands[s] = bst.entries[prev][0] + bpt.score(s, pool)
                assert cands
                best = max(cands.values())
                assert abs(score - best) < 1e-9
                for s in sinks:
                    assert abs(cands[s] - best) <= 1e-9 * max(1.0, abs(best))

    def test_figure_best_sink_chain(self):
        # local scores crafted so the best network is the chain
        # 2 -> 1 -> 0 -> 3 with unique best sinks peeling 3,0,1,2
        c = paper_constraints()
        bonus = 5.0
        scores = [
            {0: -1.0, 0b0010: -1.0 + bonus, 0b1000: -1.5, 0b1010: -1.2},
            {0: -1.0, 0b0100: -1.0 + bonus, 0b0001: -1.5, 0b0101: -1.2},
            {0: -1.0, 0b0010: -10.0},
            {0: -1.0, 0b0001: -1.0 + bonus},
        ]
        local = LocalScoreTable(scores, ("a", "b", "c", "d"), 2, "bic")
        bpt = best_parents(local, c)
        bst = best_sinks(bpt, c, local)
        full = 0b1111
        assert bst.sinks(full) == (3,)
        assert bst.sinks(full ^ 0b1000) == (0,)
        assert bst.sinks(0b0110) == (1,)
        result = recover_networks(bst, bpt, c, local)
        assert len(result.networks) == 1
        net = result.networks[0]
        assert net.ordering == (2, 1, 0, 3)
        assert net.edges() == [(0, 3), (1, 0), (2, 1)]
        assert abs(net.total_score - (-4.0 + 3 * bonus)) < 1e-12


# ------------------------------------------------------------------ recover


class TestRecoverNetworks:
    def test_single_node(self):
        c = ParentConstraints((NodeSubset(0),), indegree=1)
        local = LocalScoreTable([{0: -2.0}], ("x",), 1, "bic")
        bpt = best_parents(local, c)
        bst = best_sinks(bpt, c, local)
        result = recover_networks(bst, bpt, c, local)
        assert len(result.networks) == 1
        net = result.networks[0]
        assert net.parents == (NodeSubset(0),)
        assert net.total_score == -2.0

    def test_exact_tie_returns_both(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal(200)
        y = 0.9 * x + 0.5 * rng.standard_normal(200)
        data = cont(np.column_stack([x, y]))
        c = ParentConstraints.complete(2, 1)
        local = compute_local_scores(data, c, ScoreConfig("bic"))
        bpt = best_parents(local, c)
        bst = best_sinks(bpt, c, local)
        result = recover_networks(bst, bpt, c, local)
        edge_sets = {tuple(int(m) for m in net.parents) for net in result.networks}
        assert edge_sets == {(0, 0b01), (0b10, 0)}  # both orientations

    def test_disconnected_packing(self):
        # two independent pp components recovered as a union graph
        pp = (
            NodeSubset.from_indices([1]),
            NodeSubset.from_indices([0]),
            NodeSubset.from_indices([3]),
            NodeSubset.from_indices([2]),
        )
        c = ParentConstraints(pp, indegree=1)
        rng = np.random.default_rng(8)
        x = rng.standard_normal(300)
        y = 1.2 * x + 0.4 * rng.standard_normal(300)
        z = rng.standard_normal(300)
        w = 1.2 * z + 0.4 * rng.standard_normal(300)
        data = cont(np.column_stack([x, y, z, w]))
        local = compute_local_scores(data, c, ScoreConfig("bic"))
        bpt = best_parents(local, c)
        bst = best_sinks(bpt, c, local)
        assert (0b1111 not in bst.entries)
        result = recover_networks(bst, bpt, c, local)
        net = result.networks[0]
        assert net.skeleton() == {(0, 1), (2, 3)}
        assert len(result.covered) == 2

    def test_overlapping_maximal_subsets(self):
        # pp: node 0 can take 1 or 2 as parent; 1 and 2 are sources with
        # empty pp, so {0,1,2} is unreachable and maximal subsets overlap
        pp = (NodeSubset.from_indices([1, 2]), NodeSubset(0), NodeSubset(0))
        c = ParentConstraints(pp, indegree=2)
        rng = np.random.default_rng(9)
        a = rng.standard_normal(300)
        b = rng.standard_normal(300)
        y = 1.0 * a + 0.3 * rng.standard_normal(300)
        data = cont(np.column_stack([y, a, b]))
        local = compute_local_scores(data, c, ScoreConfig("bic"))
        bpt = best_parents(local, c)
        bst = best_sinks(bpt, c, local)
        result = recover_networks(bst, bpt, c, local)
        net = result.networks[0]
        # the stronger component {y,a} wins; b is isolated
        assert net.edges() == [(1, 0)]
        assert net.parents[2] == 0

    def test_cap_truncation(self):
        # many exactly tied optima from symmetric structure
        rng = np.random.default_rng(10)
        M = rng.standard_normal((50, 5)) * 1e-12  # essentially all noise, ties
        data = cont(M)
        c = ParentConstraints.complete(5, 2)
        local = compute_local_scores(data, c, ScoreConfig("bic"))
        bpt = best_parents(local, c)
        bst = best_sinks(bpt, c, local)
        result = recover_networks(bst, bpt, c, local, cap=3)
        assert len(result.networks) <= 3


# ---------------------------------------------------------------- orderings


class TestOrderingSemantics:
    def test_paths_equal_complete_orderings(self):
        rng = np.random.default_rng(11)
        for trial in range(25):
            gen = np.random.default_rng(trial)
            p = int(gen.integers(2, 6))
            c = random_constraints(p, gen, density=0.45)
            pp = [int(m) for m in c.pp]
            orderings = complete_generational_orderings(pp, p)
            reach = {int(m) for m in generational_expansion(c)}
            # walk every path through the emitted lattice
            paths = []

            def walk(prefix_mask, order):
                if len(order) == p:
                    paths.append(tuple(order))
                    return
                for v in range(p):
                    bit = 1 << v
                    if prefix_mask & bit:
                        continue
                    if prefix_mask and not (pp[v] & prefix_mask):
                        continue
                    if (prefix_mask | bit) not in reach:
                        continue
                    walk(prefix_mask | bit, order + [v])

            walk(0, [])
            assert sorted(paths) == sorted(orderings)


# --------------------------------------------------------------- exhaustive


class TestExhaustive:
    def test_dag_count_p3(self):
        assert sum(1 for _ in enumerate_dags(3)) == 25

    def test_dag_count_p4(self):
        assert sum(1 for _ in enumerate_dags(4)) == 543

    def test_refuses_large(self):
        rng = np.random.default_rng(0)
        data = cont(rng.standard_normal((30, 7)))
        with pytest.raises(EngineError):
            exhaustive_search(data, ScoreConfig("bic"), 2)

    def test_matches_enumeration(self):
        # order-based oracle equals direct DAG enumeration scoring
        rng = np.random.default_rng(1)
        for trial in range(10):
            gen = np.random.default_rng(200 + trial)
            p = int(gen.integers(2, 5))
            M = gen.standard_normal((80, p))
            if p >= 2:
                M[:, 1] += gen.uniform(0.5, 1.5) * M[:, 0]
            data = cont(M)
            d = int(gen.integers(1, p + 1)) if p > 1 else 1
            c = random_constraints(p, gen, density=0.7, indegree=d)
            local = compute_local_scores(data, c, ScoreConfig("bic"))
            best_enum = -math.inf
            for parents in enumerate_dags(p, c):
                total = sum(local.score(i, parents[i]) for i in range(p))
                best_enum = max(best_enum, total)
            result = exhaustive_search(data, ScoreConfig("bic"), d, c)
            assert abs(result.optimal_score - best_enum) < 1e-9

    def test_empty_graph_optimal_on_noise(self):
        wins = 0
        reps = 30
        for k in range(reps):
            rng = np.random.default_rng(300 + k)
            data = cont(rng.standard_normal((150, 2)))
            result = exhaustive_search(data, ScoreConfig("bic"), 1)
            if all(int(m) == 0 for m in result.networks[0].parents):
                wins += 1
        assert wins >= 0.8 * reps

    def test_generational_restriction_smaller_space(self):
        # with a collider-only pp star, the generational space cannot
        # express both roots before the center
        rng = np.random.default_rng(12)
        a = rng.standard_normal(400)
        b = rng.standard_normal(400)
        y = a + b + 0.5 * rng.standard_normal(400)
        data = cont(np.column_stack([y, a, b]))
        pp = (NodeSubset.from_indices([1, 2]), NodeSubset.from_indices([0]),
              NodeSubset.from_indices([0]))
        c = ParentConstraints(pp, indegree=2)
        unrestricted = exhaustive_search(data, ScoreConfig("bic"), 2, c)
        restricted = exhaustive_search(
            data, ScoreConfig("bic"), 2, c, generational_only=True
        )
        collider = (0b110, 0, 0)
        assert any(
            tuple(int(m) for m in net.parents) == collider
            for net in unrestricted.networks
        )
        assert restricted.optimal_score < unrestricted.optimal_score


# -------------------------------------------------------------------- learn


class TestLearn:
    def test_chain_recovery(self):
        hits = 0
        reps = 20
        for k in range(reps):
            rng = np.random.default_rng(400 + k)
            n = 1000
            x = rng.standard_normal(n)
            y = 1.1 * x + 0.6 * rng.standard_normal(n)
            z = 1.1 * y + 0.6 * rng.standard_normal(n)
            data = cont(np.column_stack([x, y, z]), list("xyz"))
            res = learn(data, ScreenOptions(alpha=0.001), ScoreConfig("bic"), 2)
            names = res.data.names
            skel = {
                tuple(sorted((names[a], names[b])))
                for a, b in res.networks[0].edges()
            }
            if skel == {("x", "y"), ("y", "z")}:
                hits += 1
        assert hits >= 0.9 * reps

    def test_dp_equals_oracle_small(self):
        rng = np.random.default_rng(17)
        for trial in range(15):
            gen = np.random.default_rng(500 + trial)
            p = int(gen.integers(2, 6))
            M = gen.standard_normal((120, p))
            for _ in range(p - 1):
                i, j = gen.integers(0, p, 2)
                if i != j:
                    M[:, j] += gen.uniform(0.4, 1.2) * M[:, i]
            data = cont(M)
            res = learn(data, ScreenOptions(corr_cutoff=0.0), ScoreConfig("bic"), 2)
            oracle = exhaustive_search(
                res.data, ScoreConfig("bic"), 2, res.constraints
            )
            got = res.networks[0].total_score
            assert abs(got - oracle.optimal_score) <= 1e-9 * max(1.0, abs(got))

    def test_report_contents(self):
        rng = np.random.default_rng(18)
        x = rng.standard_normal(300)
        y = x + 0.5 * rng.standard_normal(300)
        data = cont(np.column_stack([x, y]))
        res = learn(data, ScreenOptions(alpha=0.01), ScoreConfig("bic"), 2)
        report = res.report
        assert report["feas_set_size"] == 2
        assert set(report["stage_ms"]) == {
            "screen",
            "local_scores",
            "best_parents",
            "best_sinks",
            "recover",
        }
        assert report["n_reachable_subsets"] == 3
        assert report["optimal_score"] == res.networks[0].total_score

    def test_every_network_validates(self):
        rng = np.random.default_rng(19)
        M = rng.standard_normal((200, 5))
        M[:, 3] += M[:, 0]
        M[:, 4] += M[:, 3]
        data = cont(M)
        res = learn(data, ScreenOptions(alpha=0.05), ScoreConfig("bic"), 2)
        from bndp.core import validate_dag

        for net in res.networks:
            assert validate_dag(net.parents).acyclic
            net.check_constraints(res.constraints)
            assert net.total_score == sum(net.local_scores)

    def test_prefix_scores_telescope(self):
        rng = np.random.default_rng(20)
        M = rng.standard_normal((150, 4))
        M[:, 1] += 0.9 * M[:, 0]
        M[:, 2] += 0.9 * M[:, 1]
        data = cont(M)
        res = learn(data, ScreenOptions(corr_cutoff=0.0), ScoreConfig("bic"), 2)
        local = compute_local_scores(res.data, res.constraints, ScoreConfig("bic"))
        bpt = best_parents(local, res.constraints)
        bst = best_sinks(bpt, res.constraints, local)
        net = res.networks[0]
        prefix = 0
        running = 0.0
        for v in net.ordering:
            prefix |= 1 << v
            running += net.local_scores[v]
            stored = bst.entries[prefix][0]
            assert abs(stored - running) <= 1e-9 * max(1.0, abs(stored))
