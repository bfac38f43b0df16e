"""Reduction: schedule, codec, edge oracle, planted cliques, decoded
function, extraction, materialization, export."""

import itertools
import json
from fractions import Fraction

import pytest

from gapclique import rng as rngmod
from gapclique.errors import BudgetExceeded, ContractViolation, PropertyViolation
from gapclique.ffield import FieldMatrix, FieldVector, block_inner
from gapclique.cliquesolve import is_clique, max_clique_exact, read_dimacs, read_graph_json
from gapclique.randmap import LinearMapG, apply_g, sample_g
from gapclique.reduction import (
    CliqueInstance,
    ReductionParams,
    Vertex,
    build_gamma,
    export_graph,
    extract_witness,
    floor_log2,
    is_valid_vertex,
    normalized_ratio_fn,
    param_schedule,
    value_relation,
    var_points,
    vertex_codec,
    vertex_eval,
)
from gapclique.vecsum import VecSumInstance, generate_planted


def make_instance(seed, q, k, m, n, l, planted=True):
    src = generate_planted(rngmod.stream(seed, "instance"), q, k, m, n)
    g = sample_g(rngmod.stream(seed, "matrices"), q, k, m, l, seed=seed)
    return CliqueInstance(ReductionParams(q=q, k=k, l=l), g, src)


def random_vertex(rng, q, k, l):
    kk = k * k
    alpha = tuple(rng.randrange(q) for _ in range(kk))
    beta = tuple(rng.randrange(q) for _ in range(kk))
    x = tuple(rng.randrange(q) for _ in range(l))
    y = x if alpha == beta else tuple(rng.randrange(q) for _ in range(l))
    return Vertex(alpha, beta, x, y)


class TestParamSchedule:
    def test_first_scheduled_prime(self):
        params = param_schedule(1, 16)
        assert params.q == 4099
        assert params.schedule.lam == 4099**2

    def test_identity_normalizes_to_log_term(self):
        f = normalized_ratio_fn(lambda x: x)
        for v in (2, 7, 4099**2, 1 << 60):
            assert f(v) == floor_log2(v) // 15

    def test_bound_holds_up_to_k4(self):
        for k in range(1, 5):
            params = param_schedule(k, 16)
            sched = params.schedule
            assert sched.qhat > 1 << (12 * k)
            assert sched.f_prime_at_lam < 2 * k**3
            assert sched.lam == sched.qhat ** (2 * k * k)

    def test_normalization_makes_bound_unconditional(self):
        # the clamped ratio function satisfies the bound for any input f
        params = param_schedule(1, 16, f=lambda x: 10**9)
        assert params.schedule.f_prime_at_lam < params.schedule.bound

    def test_ratio_function_errors_propagate(self):
        def bad(_):
            raise ValueError("unevaluable")

        with pytest.raises(ValueError):
            param_schedule(1, 16, f=bad)

    def test_epsilon_kappa_defaults(self):
        p = ReductionParams(q=5, k=2, l=3)
        assert abs(p.epsilon() - 5 ** (-1 / 2)) < 1e-12
        assert p.kappa() == Fraction(1, 16)


class TestVertexCodec:
    @pytest.mark.parametrize(
        "q,k,l,count",
        [(2, 1, 1, 12), (3, 1, 1, 63), (2, 1, 2, 40), (3, 1, 2, 513), (2, 2, 1, 992)],
    )
    def test_counts(self, q, k, l, count):
        assert vertex_codec(ReductionParams(q=q, k=k, l=l)).count == count

    @pytest.mark.parametrize("q,k,l", [(2, 1, 1), (3, 1, 1), (2, 1, 2), (2, 2, 1)])
    def test_bijection(self, q, k, l):
        codec = vertex_codec(ReductionParams(q=q, k=k, l=l))
        seen = set()
        params = ReductionParams(q=q, k=k, l=l)
        for r in range(codec.count):
            v = codec.unrank(r)
            assert is_valid_vertex(v, params)
            assert codec.rank(v) == r
            seen.add(v)
        assert len(seen) == codec.count

    def test_count_matches_brute_enumeration(self):
        q, k, l = 3, 1, 2
        params = ReductionParams(q=q, k=k, l=l)
        brute = sum(
            1
            for alpha in itertools.product(range(q), repeat=1)
            for beta in itertools.product(range(q), repeat=1)
            for x in itertools.product(range(q), repeat=l)
            for y in itertools.product(range(q), repeat=l)
            if is_valid_vertex(Vertex(alpha, beta, x, y), params)
        )
        assert vertex_codec(params).count == brute


class TestVertexEval:
    def test_diagonal_consistency(self):
        v = Vertex((1,), (1,), (2,), (2,))
        assert vertex_eval(v, (1,), 3) == (2,)
        assert vertex_eval(v, (2,), 3) == (1,)  # alpha+beta = 2, value 2x = 4 mod 3

    def test_sum_slot_is_sum_of_slots(self):
        v = Vertex((1,), (2,), (2, 1), (0, 2))
        q = 3
        s = tuple((a + b) % q for a, b in zip(v.alpha, v.beta))
        assert vertex_eval(v, s, q) == tuple((a + b) % q for a, b in zip(v.x, v.y))

    def test_point_outside_var_rejected(self):
        v = Vertex((1,), (2,), (1,), (1,))
        with pytest.raises(ContractViolation):
            vertex_eval(v, (1, 1), 3)  # wrong shape entirely
        # var of ((1,), (1,)) at q=5 is {(1,), (2,)}; (0,) is outside
        with pytest.raises(ContractViolation):
            vertex_eval(Vertex((1,), (1,), (0,), (0,)), (0,), 5)

    def test_collapse_cases_enumerated_q2(self):
        # var has exactly 1 point iff alpha = beta = 0; never 3 points at q=2
        # with alpha = beta (since alpha+beta = 0 collides or coincides)
        q, k, l = 2, 1, 1
        codec = vertex_codec(ReductionParams(q=q, k=k, l=l))
        for r in range(codec.count):
            v = codec.unrank(r)
            pts = var_points(v, q)
            assert 1 <= len(pts) <= 3
            if v.alpha == v.beta == (0,):
                assert len(pts) == 1
            direct = {v.alpha, v.beta, tuple((a + b) % q for a, b in zip(v.alpha, v.beta))}
            assert set(pts) == direct

    def test_value_relation_keeps_collided_values(self):
        # beta = 0 collides the alpha and alpha+beta slots; with y != 0 the
        # vertex is internally inconsistent and the relation records both
        v = Vertex((1,), (0,), (2,), (1,))
        rel = value_relation(v, 3)
        assert rel[(1,)] == {(2,), (0,)}


class TestEdgeOracle:
    def setup_method(self):
        self.ci = make_instance(21, 3, 1, 4, 4, 2)

    def test_self_pair_triggers_rule1_not_rule2(self):
        # for internally consistent vertices the self-pair fires only rule 1
        # (rule 3 can fire for alpha on a degenerate scalar line); an
        # internally inconsistent vertex legitimately conflicts with itself
        r = rngmod.stream(0, "v")
        seen = 0
        while seen < 50:
            v = random_vertex(r, 3, 1, 2)
            if any(len(vals) > 1 for vals in value_relation(v, 3).values()):
                continue
            seen += 1
            types = self.ci.non_edge_types(v, v)
            assert 1 in types and 2 not in types

    def test_same_cloud_not_adjacent(self):
        v = Vertex((1,), (2,), (0, 1), (1, 1))
        w = Vertex((1,), (2,), (1, 1), (0, 1))
        assert 1 in self.ci.non_edge_types(v, w)
        assert not self.ci.is_edge(v, w)

    def test_shared_point_value_mismatch_is_rule2(self):
        v = Vertex((1,), (2,), (0, 1), (1, 1))
        w = Vertex((2,), (0,), (2, 2), (0, 0))  # shares point (2,) with value y=v(2)
        # v(2) = x + y = (1,2); w(2) = (2,2) differs
        assert 2 in self.ci.non_edge_types(v, w)

    def test_planted_pairs_have_no_types(self):
        clique = self.ci.planted_clique(self.ci.source.planted)
        for a, b in itertools.combinations(clique[:8], 2):
            if a != b:
                assert self.ci.non_edge_types(a, b) == frozenset()

    def test_is_edge_symmetric_on_random_pairs(self):
        r = rngmod.stream(33, "sym")
        for _ in range(10000):
            u = random_vertex(r, 3, 1, 2)
            v = random_vertex(r, 3, 1, 2)
            if u == v:
                continue
            assert self.ci.is_edge(u, v) == self.ci.is_edge(v, u)

    def test_self_edge_query_rejected(self):
        v = random_vertex(rngmod.stream(1, "v"), 3, 1, 2)
        with pytest.raises(ContractViolation):
            self.ci.is_edge(v, v)

    def test_non_edge_types_subset_of_rules(self):
        r = rngmod.stream(34, "rules")
        for _ in range(300):
            u = random_vertex(r, 3, 1, 2)
            v = random_vertex(r, 3, 1, 2)
            assert self.ci.non_edge_types(u, v) <= {1, 2, 3, 4, 5}


class TestPlantedClique:
    @pytest.mark.parametrize("q,k,l", [(3, 1, 1), (3, 1, 2), (3, 1, 4), (2, 1, 2), (2, 2, 1)])
    def test_planted_is_verified_clique(self, q, k, l):
        ci = make_instance(40 + q + k + l, q, k, 8 if q == 2 else 4, 4, l)
        clique = ci.planted_clique(ci.source.planted)
        assert len(clique) == q ** (2 * k * k)
        assert ci.verify_clique(clique) is None

    def test_non_summing_tuple_has_rule5_violation(self):
        ci = make_instance(50, 3, 2, 4, 3, 2)
        src = ci.source
        bad = None
        for idx in itertools.product(*(range(len(us)) for us in src.collections)):
            s = FieldVector.zero(3, 4)
            for i, j in enumerate(idx):
                s = s + src.collections[i][j]
            if not s.is_zero():
                bad = idx
                break
        assert bad is not None
        t = ci.planted_clique(bad)
        violation = ci.verify_clique(t)
        assert violation is not None
        # scan for a rule-5 pair specifically
        found5 = False
        for a, b in itertools.combinations(t, 2):
            if a != b and 5 in ci.non_edge_types(a, b):
                found5 = True
                break
        assert found5

    def test_budget_refusal(self):
        ci = make_instance(51, 3, 2, 4, 3, 2)
        with pytest.raises(BudgetExceeded):
            ci.planted_clique(ci.source.planted, clique_budget=100)


class TestGamma:
    def test_planted_gamma_matches_image_sums(self):
        ci = make_instance(60, 3, 1, 4, 4, 2)
        clique = ci.planted_clique(ci.source.planted)
        gamma = build_gamma(clique, ci, rng=rngmod.stream(60, "gamma-fill"))
        u = ci.source.collections[0][ci.source.planted[0]]
        img = apply_g(ci.gmap, u)
        for p in gamma.var_points:
            want = block_inner(FieldVector(3, p), img)
            assert gamma.table.value_at(p) == want.entries

    def test_gamma_scalar_respecting(self):
        ci = make_instance(61, 3, 1, 4, 4, 2)
        clique = ci.planted_clique(ci.source.planted)
        gamma = build_gamma(clique, ci, rng=rngmod.stream(61, "gamma-fill"))
        assert gamma.table.is_scalar_respecting()

    def test_pass_probability_meets_clique_density(self):
        # a sub-clique of the planted set: the decoded function still passes
        # with probability at least |T| / P^2
        ci = make_instance(62, 3, 1, 4, 4, 2)
        clique = ci.planted_clique(ci.source.planted)
        q, k = 3, 1
        for size in (1, 3, len(clique)):
            sub = clique[:size]
            gamma = build_gamma(sub, ci, rng=rngmod.stream(62, "gamma-fill"))
            assert gamma.pass_probability() >= Fraction(size, q ** (4 * k * k))

    def test_non_clique_refused_with_pair(self):
        ci = make_instance(63, 3, 1, 4, 4, 2)
        v = Vertex((1,), (2,), (0, 1), (1, 1))
        w = Vertex((1,), (2,), (1, 1), (0, 1))
        with pytest.raises(PropertyViolation) as exc:
            build_gamma([v, w], ci, rng=rngmod.stream(63, "gamma-fill"))
        assert "not a clique" in str(exc.value)

    def test_fill_log_covers_domain(self):
        ci = make_instance(64, 3, 1, 4, 2, 2)
        sub = ci.planted_clique(ci.source.planted)[:2]
        gamma = build_gamma(sub, ci, rng=rngmod.stream(64, "gamma-fill"))
        assert set(gamma.fill_log) == {(a,) for a in range(3)}
        assert all(tag in ("clique", "closure", "random") for tag in gamma.fill_log.values())


class TestExtraction:
    def test_round_trip_on_planted_clique(self):
        ci = make_instance(7, 3, 1, 4, 4, 2)
        clique = ci.planted_clique(ci.source.planted)
        rep = extract_witness(clique, ci, rng=rngmod.stream(7, "gamma-fill"))
        assert rep.verdict == "witness"
        assert all(d.max_residual == 0 for d in rep.directions)
        assert rep.z_star == (0,) * 4
        s = FieldVector.zero(3, 4)
        for i, idx in enumerate(rep.witness_indices):
            s = s + ci.source.collections[i][idx]
        assert s.is_zero()
        assert rep.r_star_dense

    def test_zero_kappa_still_exact(self):
        # a separation-certified map keeps distinct source vectors apart, so
        # tightening the distance bound to zero still decodes exactly
        from gapclique.experiments import certified_map

        src = generate_planted(rngmod.stream(8, "instance"), 3, 1, 4, 4)
        gmap, _ = certified_map(8, "zerokappa", src, 4, "separation")
        ci = CliqueInstance(ReductionParams(q=3, k=1, l=4), gmap, src)
        clique = ci.planted_clique(src.planted)
        rep = extract_witness(
            clique, ci, kappa=Fraction(0), rng=rngmod.stream(8, "gamma-fill")
        )
        assert rep.verdict == "witness"
        assert all(d.max_residual == 0 for d in rep.directions)

    def test_small_clique_refused_at_gate(self):
        ci = make_instance(9, 3, 1, 4, 4, 2)
        clique = ci.planted_clique(ci.source.planted)
        rep = extract_witness(clique[:2], ci, eps=0.9)
        assert rep.verdict == "refused" and rep.stage == "size_gate"

    def test_ambiguity_reported_never_guessed(self):
        # a collapsing map sends two distinct source vectors to the same
        # image; the extractor must name the ambiguity instead of choosing
        q, m, l = 3, 2, 2
        src = VecSumInstance(
            q=q,
            k=1,
            m=m,
            collections=((FieldVector(q, (0, 0)), FieldVector(q, (0, 1))),),
            planted=(0,),
        )
        gmap = LinearMapG.from_matrices(
            [FieldMatrix(q, 1, m, (1, 0)) for _ in range(l)]
        )
        ci = CliqueInstance(ReductionParams(q=q, k=1, l=l), gmap, src)
        clique = ci.planted_clique((0,))
        rep = extract_witness(clique, ci, rng=rngmod.stream(10, "gamma-fill"))
        assert rep.verdict == "failed"
        assert rep.stage == "decode"
        assert "ambiguous" in rep.detail

    def test_report_serializes_exact_rationals(self):
        ci = make_instance(11, 3, 1, 4, 4, 2)
        clique = ci.planted_clique(ci.source.planted)
        rep = extract_witness(clique, ci, rng=rngmod.stream(11, "gamma-fill"))
        doc = rep.to_json()
        assert doc["verdict"] == "witness"
        for d in doc["directions"]:
            assert d["max_residual"] == "0/1"
            for _, (idx, frac) in zip(d["residuals"], d["residuals"].items()):
                num, den = frac[1].split("/")
                assert int(den) > 0
        json.dumps(doc)


class TestSoundnessDeskScale:
    @pytest.mark.parametrize("l", [2, 4])
    def test_no_instance_graphs_have_small_cliques(self, l):
        # certified NO instances + wellspread-certified maps: the exact
        # maximum clique stays strictly below the completeness target
        from gapclique.experiments import certified_no_instance

        for seed in range(3):
            inst, gmap, _, _ = certified_no_instance(
                seed, f"soundness-module/{l}/{seed}", 2, 1, 8, 4, l
            )
            ci = CliqueInstance(ReductionParams(q=2, k=1, l=l), gmap, inst)
            res = max_clique_exact(ci.materialize())
            assert res.optimal and res.size < 4


class TestMaterializeExport:
    def test_twelve_vertex_graph(self):
        ci = make_instance(70, 2, 1, 8, 4, 1)
        graph = ci.materialize()
        assert graph.n == 12
        graph.validate_symmetric()

    def test_rematerialization_identical(self):
        ci = make_instance(71, 2, 1, 8, 4, 1)
        a = ci.materialize()
        b = ci.materialize()
        assert a.adj == b.adj

    def test_planted_graph_contains_target_clique(self):
        ci = make_instance(72, 2, 1, 8, 4, 1)
        graph = ci.materialize()
        res = max_clique_exact(graph)
        assert res.optimal and res.size == 2 ** 2  # q^(2k^2)
        labels = [graph.labels[v] for v in res.vertices]
        assert is_clique(graph, res.vertices)
        assert len({(v.alpha, v.beta) for v in labels}) == len(labels)  # one per cloud

    def test_budget_refusal_names_exact_count(self):
        ci = make_instance(73, 3, 1, 4, 4, 2)
        with pytest.raises(BudgetExceeded) as exc:
            ci.materialize(budget=100)
        assert exc.value.required == 513

    def test_dimacs_round_trip(self, tmp_path):
        ci = make_instance(74, 2, 1, 8, 4, 1)
        graph = ci.materialize()
        p = tmp_path / "g.dimacs"
        export_graph(graph, "dimacs", p)
        back = read_dimacs(p)
        assert back.n == graph.n and back.adj == graph.adj

    def test_dimacs_empty_edges(self, tmp_path):
        from gapclique.cliquesolve import DenseGraph

        p = tmp_path / "empty.dimacs"
        export_graph(DenseGraph.from_edges(5, []), "dimacs", p)
        lines = p.read_text().splitlines()
        assert lines == ["p edge 5 0"]

    def test_json_meta_hash_tracks_instance(self, tmp_path):
        a = make_instance(75, 2, 1, 8, 4, 1)
        b = make_instance(76, 2, 1, 8, 4, 1)
        pa, pb = tmp_path / "a.json", tmp_path / "b.json"
        export_graph(a.materialize(), "json", pa, meta={"instance_hash": a.source.fingerprint()})
        export_graph(b.materialize(), "json", pb, meta={"instance_hash": b.source.fingerprint()})
        _, ma = read_graph_json(pa)
        _, mb = read_graph_json(pb)
        assert ma["instance_hash"] != mb["instance_hash"]

    def test_reduction_json_round_trip(self):
        ci = make_instance(77, 3, 1, 4, 4, 2)
        back = CliqueInstance.from_json(ci.to_json())
        assert back.codec.count == ci.codec.count
        assert back.gmap == ci.gmap
        assert back.source.collections == ci.source.collections
