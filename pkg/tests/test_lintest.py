"""Linearity testing: the test itself, Fourier identities, list decoding
against brute-force oracles, and the piecing procedure."""

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from gapclique import rng as rngmod
from gapclique.errors import BudgetExceeded, ContractViolation, PiecingRefused
from gapclique.ffield import rank_tuple
from gapclique.lintest import (
    FunctionTable,
    LinearScalarFn,
    LinearVecFn,
    accepted_set,
    agreement,
    eval_linear,
    fourier_transform,
    line_representatives,
    list_decode_scalar,
    pass_probability,
    piece_together,
    random_scalar_respecting_table,
    triple_correlation_check,
    verify_unique_consistency,
)

TOL = 1e-9


def corrupt_lines(fn_table: FunctionTable, replacements) -> FunctionTable:
    """Replace whole scalar lines (rep -> new values), re-closing the
    scalar-respecting structure along each corrupted line."""
    q, d, l = fn_table.q, fn_table.d, fn_table.l
    vals = np.array(fn_table.values, copy=True)
    for rep, newv in replacements:
        newv = np.atleast_1d(np.array(newv, dtype=np.int64))
        for c in range(1, q):
            vals[rank_tuple(q, tuple(e * c % q for e in rep))] = newv * c % q
    out = FunctionTable(q, d, l, vals)
    assert out.is_scalar_respecting()
    return out


class TestEvalLinear:
    def test_zero_coefficients(self):
        c = LinearScalarFn(5, (0, 0, 0))
        assert all(eval_linear(c, a) == 0 for a in itertools.product(range(5), repeat=3))

    def test_projection(self):
        c = LinearScalarFn(7, (1, 0, 0))
        assert eval_linear(c, (4, 5, 6)) == 4

    def test_wraps(self):
        assert eval_linear(LinearScalarFn(5, (2, 3)), (1, 1)) == 0

    def test_vector_valued_via_theta_blocks(self):
        fn = LinearVecFn(3, 4, ((1, 0, 2, 1), (0, 1, 1, 2), (2, 2, 0, 1)))
        back = LinearVecFn.from_theta_blocks(fn.theta_blocks(2))
        assert back == fn


class TestPassProbability:
    def test_linear_passes_exactly(self):
        fn = LinearScalarFn(7, (3, 5))
        assert pass_probability(FunctionTable.from_linear(fn)) == 1

    def test_constant_nonzero_never_passes(self):
        f = FunctionTable(5, 1, 1, [[2]] * 5)
        assert pass_probability(f) == 0

    def test_random_tables_average_near_one_over_q(self):
        vals = []
        for i in range(200):
            r = rngmod.stream(100 + i, "pp")
            f = FunctionTable(3, 1, 1, [[r.randrange(3)] for _ in range(3)])
            vals.append(float(pass_probability(f)))
        mean = float(np.mean(vals))
        sigma = float(np.std(vals, ddof=1)) / math.sqrt(len(vals))
        assert abs(mean - 1 / 3) <= 3 * sigma

    def test_monte_carlo_mode_brackets_exact(self):
        f = random_scalar_respecting_table(rngmod.stream(3, "mc"), 5, 2)
        exact = float(pass_probability(f))
        est = pass_probability(f, mode="monte_carlo", samples=4000, rng=rngmod.stream(4, "mc"))
        assert est.ci_low <= exact <= est.ci_high

    def test_budget_refusal_reports_requirement(self):
        f = random_scalar_respecting_table(rngmod.stream(5, "b"), 5, 2)
        with pytest.raises(BudgetExceeded) as exc:
            pass_probability(f, pair_budget=100)
        assert exc.value.required == (5**2) ** 2


class TestAcceptedSet:
    def test_linear_accepts_everything(self):
        f = FunctionTable.from_linear(LinearScalarFn(3, (1, 2)))
        acc = accepted_set(f)
        assert acc.pair_count == 9 * 9
        assert acc.var_count == 9

    def test_matches_definitional_double_loop(self):
        f = random_scalar_respecting_table(rngmod.stream(8, "acc"), 3, 2, 2)
        acc = accepted_set(f)
        q, d = f.q, f.d
        for a in itertools.product(range(q), repeat=d):
            for b in itertools.product(range(q), repeat=d):
                s = tuple((x + y) % q for x, y in zip(a, b))
                expect = f.value_at(a) != () and all(
                    (u + v) % q == w
                    for u, v, w in zip(f.value_at(a), f.value_at(b), f.value_at(s))
                )
                assert bool(acc.pair_mask[f.rank(a), f.rank(b)]) == expect

    def test_single_corrupted_point_shrinks_set(self):
        f = FunctionTable.from_linear(LinearScalarFn(3, (2,)))
        vals = np.array(f.values, copy=True)
        vals[1] = (vals[1] + 1) % 3  # bump f at a nonzero point
        g = FunctionTable(3, 1, 1, vals)
        acc = accepted_set(g)
        assert acc.pair_count < 9

    def test_var_contains_origin_when_f0_is_zero(self):
        f = random_scalar_respecting_table(rngmod.stream(9, "var"), 5, 1)
        acc = accepted_set(f)
        assert bool(acc.var_mask[0])  # (0,0) always accepted since f(0) = 0


class TestFourier:
    def test_character_transform_is_delta(self):
        fn = LinearScalarFn(5, (2, 3))
        ft = fourier_transform(FunctionTable.from_linear(fn))
        assert abs(ft.coefficient((2, 3)) - 1) < 1e-12
        for rho in itertools.product(range(5), repeat=2):
            if rho != (2, 3):
                assert abs(ft.coefficient(rho)) < 1e-12

    def test_zero_function(self):
        f = FunctionTable(3, 2, 1, [[0]] * 9)
        ft = fourier_transform(f)
        assert abs(ft.coefficient((0, 0)) - 1) < 1e-12

    @pytest.mark.parametrize("q", [2, 3, 5, 7, 11, 13])
    def test_root_of_unity_geometric_sums(self, q):
        for j in range(1, q):
            z = np.exp(2j * np.pi * j / q)
            assert abs(sum(z**i for i in range(q))) < 1e-12
        assert abs(sum(1**i for i in range(q)) - q) < 1e-12

    @pytest.mark.parametrize("q,d", [(2, 1), (3, 2), (5, 2), (7, 1), (11, 2), (13, 2)])
    def test_inversion_reproduces_table(self, q, d):
        f = random_scalar_respecting_table(rngmod.stream(q * 100 + d, "inv"), q, d)
        ft = fourier_transform(f)
        phases = np.exp(2j * np.pi * f.values[:, 0] / q)
        assert np.max(np.abs(ft.synthesize() - phases)) < TOL

    def test_scalar_respecting_coefficients_are_real(self):
        f = random_scalar_respecting_table(rngmod.stream(17, "re"), 7, 2)
        fourier_transform(f).real_parts()  # raises if any imaginary part > tol


def all_scalar_respecting_tables(q, d):
    """Every scalar-respecting table as one (count, q^d) value matrix."""
    reps = line_representatives(q, d)
    n = q**d
    count = q ** len(reps)
    vals = np.zeros((count, n), dtype=np.int64)
    choices = np.array(list(itertools.product(range(q), repeat=len(reps))), dtype=np.int64)
    for j, rep in enumerate(reps):
        for c in range(1, q):
            vals[:, rank_tuple(q, tuple(e * c % q for e in rep))] = choices[:, j] * c % q
    return vals


class TestAgreementIdentity:
    def test_agreement_with_itself(self):
        fn = LinearScalarFn(5, (1, 4))
        assert agreement(FunctionTable.from_linear(fn), fn) == 1

    def test_distinct_characters_agree_exactly_one_in_q(self):
        f = FunctionTable.from_linear(LinearScalarFn(3, (2,)))
        assert agreement(f, LinearScalarFn(3, (1,))) == Fraction(1, 3)

    def test_identity_at_full_agreement(self):
        q = 7
        assert 1 == Fraction(1, q) + Fraction(q - 1, q) * 1

    @pytest.mark.parametrize("q,d", [(3, 1), (3, 2), (5, 1), (5, 2)])
    def test_identity_for_all_scalar_respecting_tables(self, q, d):
        # Pr[f = character(rho)] = 1/q + (q-1)/q * coeff(rho), for every
        # scalar-respecting f and every rho, checked exhaustively
        vals = all_scalar_respecting_tables(q, d)
        n = q**d
        from gapclique.lintest import _domain

        digits, _ = _domain(q, d)
        chars = digits @ digits.T % q  # [rho_rank, alpha_rank]
        phases = np.exp(2j * np.pi * vals / q)
        dft = np.exp(-2j * np.pi * chars / q)
        coeffs = phases @ dft.T / n  # [table, rho]
        assert np.max(np.abs(coeffs.imag)) < TOL
        agree = (vals[:, None, :] == chars[None, :, :]).mean(axis=2)
        rhs = 1 / q + (q - 1) / q * coeffs.real
        assert np.max(np.abs(agree - rhs)) < TOL


class TestTripleCorrelation:
    def test_same_character_correlates_fully(self):
        f = FunctionTable.from_linear(LinearScalarFn(3, (1, 2)))
        rep = triple_correlation_check(f, f, f)
        assert rep.lhs == 1
        assert abs(rep.rhs - 1) < TOL

    def test_identity_exact_for_all_triples_q3_d1(self):
        # at d=1 every scalar-respecting table is a character; enumerate all
        tables = [FunctionTable.from_linear(LinearScalarFn(3, (r,))) for r in range(3)]
        for g1, g2, g3 in itertools.product(tables, repeat=3):
            rep = triple_correlation_check(g1, g2, g3)
            assert rep.abs_diff < TOL

    def test_identity_on_random_tables_q3_d2(self):
        for i in range(50):
            r = rngmod.stream(i, "triple")
            g1 = random_scalar_respecting_table(r, 3, 2)
            g2 = random_scalar_respecting_table(r, 3, 2)
            g3 = random_scalar_respecting_table(r, 3, 2)
            rep = triple_correlation_check(g1, g2, g3)
            assert rep.abs_diff < TOL

    def test_large_correlation_forces_large_coefficient(self):
        # with g2 = g3 linear, coefficient mass of g2 is 1, so the largest
        # coefficient of g1 must reach (lhs - 1/q) * q / (q-1)
        q = 5
        lin = FunctionTable.from_linear(LinearScalarFn(q, (2, 1)))
        g1 = corrupt_lines(
            FunctionTable.from_linear(LinearScalarFn(q, (2, 1))),
            [(rep, 3) for rep in line_representatives(q, 2)[:2]],
        )
        rep = triple_correlation_check(g1, lin, lin)
        assert rep.same_g2_g3
        lower = (float(rep.lhs) - 1 / q) * q / (q - 1)
        assert rep.max_coeff_g1 >= lower - TOL


class TestListDecode:
    def test_exact_linear_decodes_to_itself(self):
        fn = LinearScalarFn(7, (4, 2))
        got = list_decode_scalar(FunctionTable.from_linear(fn), 0.5)
        assert [c.rho for c in got] == [(4, 2)]

    def test_random_tables_decode_empty(self):
        empty = 0
        for i in range(100):
            f = random_scalar_respecting_table(rngmod.stream(1000 + i, "rd"), 101, 2)
            if not list_decode_scalar(f, 0.5):
                empty += 1
        assert empty >= 99

    def test_point_six_agreement_is_recovered(self):
        q, d = 11, 2
        fn = LinearScalarFn(q, (3, 7))
        reps = line_representatives(q, d)
        # corrupt 4 of 12 lines: agreement stays >= 0.6
        f = corrupt_lines(
            FunctionTable.from_linear(fn), [(rep, (i + 5) % q) for i, rep in enumerate(reps[:4])]
        )
        assert agreement(f, fn) >= Fraction(3, 5)
        got = list_decode_scalar(f, 0.25)
        assert fn.rho in {c.rho for c in got}

    def test_list_size_respects_parseval_cap(self):
        f = random_scalar_respecting_table(rngmod.stream(2, "cap"), 5, 2)
        delta = 0.3
        got = list_decode_scalar(f, delta)
        assert len(got) <= 1 / (0.25 * delta) ** 2

    def test_non_scalar_respecting_rejected(self):
        f = FunctionTable(5, 1, 1, [[0], [1], [2], [3], [3]])
        assert not f.is_scalar_respecting()
        with pytest.raises(ContractViolation):
            list_decode_scalar(f, 0.5)

    @pytest.mark.parametrize("q,d,delta", [(3, 2, 0.25), (5, 2, 0.1), (11, 2, 0.5)])
    def test_oracle_equivalence_spot(self, q, d, delta):
        f = random_scalar_respecting_table(rngmod.stream(q + d, "oe"), q, d)
        got = {c.rho for c in list_decode_scalar(f, delta)}
        thr = Fraction(1, q) + Fraction(q - 1, q) * Fraction(0.25 * delta)
        want = {
            rho
            for rho in itertools.product(range(q), repeat=d)
            if agreement(f, LinearScalarFn(q, rho)) >= thr
        }
        assert got == want


class TestUniqueConsistency:
    def test_linear_fully_consistent(self):
        fn = LinearScalarFn(5, (1, 2))
        f = FunctionTable.from_linear(fn)
        rep = verify_unique_consistency(f, [fn])
        assert rep.fraction == 1 and not rep.empty_accepted_set

    def test_empty_list_gives_zero(self):
        f = random_scalar_respecting_table(rngmod.stream(3, "uc"), 5, 1)
        assert verify_unique_consistency(f, []).fraction == 0

    def test_empty_accepted_set_flagged(self):
        f = FunctionTable(5, 1, 1, [[2]] * 5)
        rep = verify_unique_consistency(f, [LinearScalarFn(5, (1,))])
        assert rep.fraction == 0 and rep.empty_accepted_set

    def test_corrupted_linear_stays_consistent_on_accepted_pairs(self):
        q, d = 11, 2
        fn = LinearScalarFn(q, (3, 7))
        reps = line_representatives(q, d)
        f = corrupt_lines(FunctionTable.from_linear(fn), [(reps[0], 5), (reps[5], 9)])
        assert agreement(f, fn) == Fraction(111, 121)
        lst = list_decode_scalar(f, 0.5)
        assert [c.rho for c in lst] == [(3, 7)]
        rep = verify_unique_consistency(f, lst)
        # shape of the guarantee: all but a small fraction of accepted pairs
        assert rep.fraction >= Fraction(95, 100)
        assert rep.fraction == Fraction(11221, 11341)


class TestPieceTogether:
    def test_exactly_linear_vector_function(self):
        fn = LinearVecFn(5, 2, ((1, 2), (3, 4), (0, 1)))
        res = piece_together(FunctionTable.from_linear(fn), Fraction(1, 2), Fraction(1, 4))
        assert res.ok and res.fn == fn and res.agreement == 1
        assert res.pass_probability == 1

    def test_noisy_linear_recovered_against_brute_force(self):
        # corrupt 2 of 12 lines of a linear vector function; the pieced
        # function must equal both the original and the per-coordinate
        # brute-force argmax over every candidate coefficient vector
        q, d, l = 11, 2, 4
        r = rngmod.stream(123, "noise")
        c0 = LinearVecFn(q, d, tuple(tuple(r.randrange(q) for _ in range(d)) for _ in range(l)))
        reps = line_representatives(q, d)
        f = corrupt_lines(
            FunctionTable.from_linear(c0),
            [(reps[2], [r.randrange(q) for _ in range(l)]),
             (reps[9], [r.randrange(q) for _ in range(l)])],
        )
        res = piece_together(f, 0.5, Fraction(1, 4), delta_schedule=lambda e, ei: 1.0)
        assert res.ok and res.fn == c0
        for i in range(l):
            fi = f.coordinate(i)
            best = max(
                itertools.product(range(q), repeat=d),
                key=lambda rho: (agreement(fi, LinearScalarFn(q, rho)), rho),
            )
            assert best == c0.rhos[i]
        # measured agreement satisfies the piecing guarantee
        eps = float(res.pass_probability)
        assert float(res.agreement) >= eps * eps / 3

    def test_low_pass_probability_refused(self):
        f = FunctionTable(5, 1, 1, [[2]] * 5)
        f._scalar_respecting = False
        g = random_scalar_respecting_table(rngmod.stream(4, "low"), 5, 2)
        measured = pass_probability(g)
        with pytest.raises(PiecingRefused) as exc:
            piece_together(g, 0.99, Fraction(1, 4))
        assert exc.value.pass_probability == measured

    def test_no_anchor_reported_not_raised(self):
        t = random_scalar_respecting_table(rngmod.stream(0, "na"), 5, 2, 2)
        res = piece_together(t, 0.05, Fraction(1, 4))
        assert not res.ok and res.fn is None and res.failure == "no_anchor"

    def test_agreement_bound_whenever_ok(self):
        # noisy linear tables at varying corruption; whenever piecing
        # succeeds, the measured agreement meets the eps^2 / 3 guarantee
        q, d, l = 7, 2, 3
        reps = line_representatives(q, d)
        hits = 0
        for i in range(12):
            r = rngmod.stream(i, "bnd")
            c0 = LinearVecFn(q, d, tuple(tuple(r.randrange(q) for _ in range(d)) for _ in range(l)))
            n_corrupt = i % 4
            f = corrupt_lines(
                FunctionTable.from_linear(c0),
                [(rep, [r.randrange(q) for _ in range(l)]) for rep in reps[:n_corrupt]],
            )
            try:
                res = piece_together(f, 0.2, Fraction(1, 4), delta_schedule=lambda e, ei: 1.0)
            except PiecingRefused:
                continue
            if res.ok:
                hits += 1
                eps = float(res.pass_probability)
                assert float(res.agreement) >= eps * eps / 3
        assert hits >= 8


class TestSerialization:
    def test_round_trip(self, tmp_path):
        f = random_scalar_respecting_table(rngmod.stream(6, "ser"), 5, 2, 3)
        p = tmp_path / "table.json"
        f.save(p)
        g = FunctionTable.load(p)
        assert g.q == f.q and g.d == f.d and g.l == f.l
        assert np.array_equal(g.values, f.values)

    def test_version_gate(self):
        with pytest.raises(ContractViolation):
            FunctionTable.from_json({"version": 2, "q": 3, "d": 1, "l": 1, "values": [0, 0, 0]})
