"""Linearity testing over prime fields in the low-soundness regime.

The test draws a uniform pair (alpha, beta) and accepts iff
f(alpha) + f(beta) = f(alpha + beta).  Everything downstream of the test is
built here: the exact accepted-pair set, Fourier analysis over q-th roots of
unity, threshold list decoding of near-linear scalar functions, and the
constructive piecing procedure that assembles one linear vector-valued
function out of the per-coordinate lists.

All probabilities computed by enumeration are exact rationals; only the
Fourier side lives in floating point, with a 1e-9 tolerance.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import BudgetExceeded, ContractViolation, PiecingRefused, PropertyViolation
from .ffield import FieldVector, BlockVector, rank_tuple, unrank_tuple
from .stats import wilson_interval

# Exact enumeration caps: tables up to 2^18 points, pair scans up to 2^24.
MAX_TABLE_SIZE = 1 << 18
DEFAULT_PAIR_BUDGET = 1 << 24
# Fourier threshold for list decoding is LIST_CONSTANT * delta.
LIST_CONSTANT = 0.25
FLOAT_TOL = 1e-9


@lru_cache(maxsize=64)
def _domain(q: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Digit matrix for the whole domain in lexicographic (rank) order.

    Row r of the digit matrix is the point with rank r; `place` holds the
    base-q place values so that digits @ place recovers ranks.
    """
    n = q**d
    place = q ** np.arange(d - 1, -1, -1, dtype=np.int64)
    idx = np.arange(n, dtype=np.int64)
    digits = (idx[:, None] // place[None, :]) % q
    digits.setflags(write=False)
    place.setflags(write=False)
    return digits, place


class FunctionTable:
    """Explicit table of a function from F_q^d to F_q^l.

    Values are stored as an (q^d, l) integer array in lexicographic order of
    the domain point (first coordinate most significant).  Tables are
    immutable after construction.
    """

    def __init__(self, q: int, d: int, l: int, values, *, _skip_checks: bool = False):
        if q < 2 or d < 1 or l < 1:
            raise ContractViolation("need q >= 2, d >= 1, l >= 1")
        n = q**d
        if n > MAX_TABLE_SIZE:
            raise BudgetExceeded("table size", required=n, budget=MAX_TABLE_SIZE)
        vals = np.array(values, dtype=np.int64)
        if vals.shape != (n, l):
            raise ContractViolation(f"expected value shape {(n, l)}, got {vals.shape}")
        if not _skip_checks:
            vals %= q
        vals.setflags(write=False)
        self.q = q
        self.d = d
        self.l = l
        self.values = vals
        self._scalar_respecting: Optional[bool] = None

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_callable(cls, q: int, d: int, l: int, fn: Callable) -> "FunctionTable":
        """Tabulate fn over the whole domain; fn maps a residue tuple to a
        length-l sequence of residues (or a single residue when l == 1)."""
        n = q**d
        if n > MAX_TABLE_SIZE:
            raise BudgetExceeded("table size", required=n, budget=MAX_TABLE_SIZE)
        rows = []
        for r in range(n):
            v = fn(unrank_tuple(q, d, r))
            if isinstance(v, int):
                v = (v,)
            rows.append(tuple(v))
        return cls(q, d, l, rows)

    @classmethod
    def from_linear(cls, fn: "LinearScalarFn | LinearVecFn") -> "FunctionTable":
        q, d = fn.q, fn.d
        digits, _ = _domain(q, d)
        if isinstance(fn, LinearScalarFn):
            rho = np.array(fn.rho, dtype=np.int64)
            vals = (digits @ rho % q)[:, None]
            return cls(q, d, 1, vals, _skip_checks=True)
        coeff = np.array(fn.rhos, dtype=np.int64).T  # (d, l)
        vals = digits @ coeff % q
        return cls(q, d, fn.l, vals, _skip_checks=True)

    # -- indexing ----------------------------------------------------------

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def rank(self, alpha: tuple[int, ...]) -> int:
        return rank_tuple(self.q, alpha)

    def unrank(self, r: int) -> tuple[int, ...]:
        return unrank_tuple(self.q, self.d, r)

    def value_at(self, alpha: tuple[int, ...]) -> tuple[int, ...]:
        return tuple(int(v) for v in self.values[self.rank(alpha)])

    def coordinate(self, i: int) -> "FunctionTable":
        """The scalar table obtained by projecting to output coordinate i."""
        t = FunctionTable(self.q, self.d, 1, self.values[:, i : i + 1], _skip_checks=True)
        if self._scalar_respecting:
            # inherited: every coordinate of a scalar-respecting table is
            # scalar respecting; the converse does not hold, so False and
            # None are not propagated
            t._scalar_respecting = True
        return t

    # -- scalar-respecting flag ---------------------------------------------

    def is_scalar_respecting(self) -> bool:
        """True iff f(c * alpha) = c * f(alpha) for every scalar c and point
        alpha; verified exhaustively once and cached."""
        if self._scalar_respecting is None:
            q = self.q
            digits, place = _domain(q, self.d)
            ok = True
            for c in range(q):
                scaled_rank = (digits * c % q) @ place
                if not np.array_equal(self.values[scaled_rank], self.values * c % q):
                    ok = False
                    break
            self._scalar_respecting = ok
        return self._scalar_respecting

    def ensure_scalar_respecting(self):
        if not self.is_scalar_respecting():
            raise ContractViolation("function table is not scalar respecting")

    # -- serialization -------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "version": 1,
            "q": self.q,
            "d": self.d,
            "l": self.l,
            "values": [int(v) for v in self.values.reshape(-1)],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "FunctionTable":
        if doc.get("version") != 1:
            raise ContractViolation(f"unsupported table version {doc.get('version')}")
        q, d, l = doc["q"], doc["d"], doc["l"]
        vals = np.array(doc["values"], dtype=np.int64).reshape(q**d, l)
        return cls(q, d, l, vals)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> "FunctionTable":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


# -- linear functions --------------------------------------------------------


@dataclass(frozen=True)
class LinearScalarFn:
    """alpha -> <rho, alpha>; linear by construction."""

    q: int
    rho: tuple[int, ...]

    def __post_init__(self):
        if any(not (0 <= e < self.q) for e in self.rho):
            object.__setattr__(self, "rho", tuple(e % self.q for e in self.rho))

    @property
    def d(self) -> int:
        return len(self.rho)

    def eval(self, alpha: tuple[int, ...]) -> int:
        if len(alpha) != self.d:
            raise ContractViolation("dimension mismatch")
        return sum(r * a for r, a in zip(self.rho, alpha)) % self.q


@dataclass(frozen=True)
class LinearVecFn:
    """Vector-valued linear function; one coefficient vector per output
    coordinate, so evaluation is coordinate-wise inner products.

    For a domain of k blocks of width k, `theta_blocks` regroups the
    coefficients per direction: block i collects the i-th domain block of
    every coefficient vector, so that evaluating at a point supported on
    block i alone equals the block-inner product against theta_blocks()[i].
    """

    q: int
    d: int
    rhos: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if any(len(r) != self.d for r in self.rhos):
            raise ContractViolation("coefficient vectors must have the domain dimension")
        if any(not (0 <= e < self.q) for r in self.rhos for e in r):
            object.__setattr__(
                self, "rhos", tuple(tuple(e % self.q for e in r) for r in self.rhos)
            )

    @property
    def l(self) -> int:
        return len(self.rhos)

    def eval(self, alpha: tuple[int, ...]) -> tuple[int, ...]:
        if len(alpha) != self.d:
            raise ContractViolation("dimension mismatch")
        return tuple(sum(r * a for r, a in zip(rho, alpha)) % self.q for rho in self.rhos)

    def theta_blocks(self, k: int) -> tuple[BlockVector, ...]:
        if self.d != k * k:
            raise ContractViolation(f"domain dim {self.d} is not {k}x{k} blocks")
        out = []
        for i in range(k):
            blocks = [
                FieldVector(self.q, rho[i * k : (i + 1) * k]) for rho in self.rhos
            ]
            out.append(BlockVector.from_blocks(blocks))
        return tuple(out)

    @classmethod
    def from_theta_blocks(cls, thetas: Sequence[BlockVector]) -> "LinearVecFn":
        k = len(thetas)
        q = thetas[0].q
        l = thetas[0].n_blocks
        if any(t.width != k or t.n_blocks != l for t in thetas):
            raise ContractViolation("inconsistent theta block shapes")
        rhos = []
        for j in range(l):
            rho: list[int] = []
            for i in range(k):
                rho.extend(thetas[i].block(j).entries)
            rhos.append(tuple(rho))
        return cls(q, k * k, tuple(rhos))


def eval_linear(fn: LinearScalarFn | LinearVecFn, alpha: tuple[int, ...]):
    return fn.eval(alpha)


# -- the test and its accepted set --------------------------------------------


@dataclass(frozen=True)
class AcceptedSet:
    """Exact accepted-pair set of the test and its first-coordinate
    projection, held as boolean masks over domain ranks."""

    q: int
    d: int
    pair_mask: np.ndarray  # (n, n) bool; [i, j] <=> pair (point_i, point_j) accepted
    var_mask: np.ndarray  # (n,) bool

    @property
    def pair_count(self) -> int:
        return int(self.pair_mask.sum())

    @property
    def var_count(self) -> int:
        return int(self.var_mask.sum())

    def pairs(self):
        q, d = self.q, self.d
        for i, j in zip(*np.nonzero(self.pair_mask)):
            yield unrank_tuple(q, d, int(i)), unrank_tuple(q, d, int(j))

    def var_points(self):
        for i in np.nonzero(self.var_mask)[0]:
            yield unrank_tuple(self.q, self.d, int(i))


def accepted_set(f: FunctionTable, pair_budget: int = DEFAULT_PAIR_BUDGET) -> AcceptedSet:
    """Enumerate every pair and record which ones the test accepts."""
    n = f.size
    if n * n > pair_budget:
        raise BudgetExceeded("pair enumeration", required=n * n, budget=pair_budget)
    q = f.q
    digits, place = _domain(q, f.d)
    vals = f.values
    mask = np.empty((n, n), dtype=bool)
    for i in range(n):
        sum_rank = ((digits[i] + digits) % q) @ place
        mask[i] = ((vals[i] + vals) % q == vals[sum_rank]).all(axis=1)
    mask.setflags(write=False)
    var = mask.any(axis=1)
    var.setflags(write=False)
    return AcceptedSet(q, f.d, mask, var)


@dataclass(frozen=True)
class PassEstimate:
    """Monte Carlo estimate of the pass probability with a 99% Wilson CI."""

    passes: int
    samples: int
    estimate: float
    ci_low: float
    ci_high: float


def pass_probability(
    f: FunctionTable,
    mode: str = "exact",
    samples: int = 0,
    rng: Optional[random.Random] = None,
    pair_budget: int = DEFAULT_PAIR_BUDGET,
):
    """Probability that the test accepts f.

    Exact mode enumerates all q^{2d} pairs (budget-gated) and returns an
    exact Fraction.  Monte Carlo mode samples pairs and returns a
    PassEstimate with a 99% binomial confidence interval.
    """
    if mode == "exact":
        acc = accepted_set(f, pair_budget)
        n = f.size
        return Fraction(acc.pair_count, n * n)
    if mode != "monte_carlo":
        raise ContractViolation(f"unknown mode {mode!r}")
    if samples < 1:
        raise ContractViolation("monte_carlo mode needs samples >= 1")
    if rng is None:
        raise ContractViolation("monte_carlo mode needs an rng")
    q, n = f.q, f.size
    digits, place = _domain(q, f.d)
    vals = f.values
    passes = 0
    for _ in range(samples):
        i = rng.randrange(n)
        j = rng.randrange(n)
        s = int(((digits[i] + digits[j]) % q) @ place)
        if np.array_equal((vals[i] + vals[j]) % q, vals[s]):
            passes += 1
    lo, hi = wilson_interval(passes, samples)
    return PassEstimate(passes, samples, passes / samples, lo, hi)


# -- Fourier analysis ----------------------------------------------------------


@dataclass(frozen=True)
class FourierTable:
    """Fourier coefficients of alpha -> omega^{f(alpha)} against the
    characters alpha -> omega^{<rho, alpha>}, indexed by the rank of rho."""

    q: int
    d: int
    coeffs: np.ndarray  # complex, shape (q^d,)

    def __post_init__(self):
        power = float(np.sum(np.abs(self.coeffs) ** 2))
        if abs(power - 1.0) > FLOAT_TOL:
            raise PropertyViolation(f"Parseval check failed: total power {power}")
        self.coeffs.setflags(write=False)

    def coefficient(self, rho: tuple[int, ...]) -> complex:
        return complex(self.coeffs[rank_tuple(self.q, rho)])

    def real_parts(self, tol: float = FLOAT_TOL) -> np.ndarray:
        """Real parts of all coefficients; raises if any imaginary part
        exceeds tol (they must all be real for scalar-respecting input)."""
        worst = float(np.max(np.abs(self.coeffs.imag))) if self.coeffs.size else 0.0
        if worst > tol:
            raise PropertyViolation(f"coefficient imaginary part {worst} exceeds {tol}")
        return self.coeffs.real

    def synthesize(self) -> np.ndarray:
        """Reconstruct the complex point values from the coefficients."""
        n = self.q**self.d
        shape = (self.q,) * self.d
        return np.fft.ifftn(self.coeffs.reshape(shape) * n).reshape(-1)


def phase_values(f: FunctionTable) -> np.ndarray:
    """omega^{f(alpha)} for a scalar table."""
    if f.l != 1:
        raise ContractViolation("phase values need a scalar-range table")
    return np.exp(2j * np.pi * f.values[:, 0] / f.q)


def fourier_transform(f: FunctionTable) -> FourierTable:
    """Fourier coefficients of the phase function of a scalar table.

    Coefficient at rho is the average of omega^{f(alpha)} times the
    conjugated character at alpha, which is exactly the multidimensional DFT
    of the phase values divided by the domain size.
    """
    if f.l != 1:
        raise ContractViolation("fourier_transform needs a scalar-range table")
    n = f.size
    g = phase_values(f).reshape((f.q,) * f.d)
    coeffs = np.fft.fftn(g).reshape(-1) / n
    return FourierTable(f.q, f.d, coeffs)


def agreement(f: FunctionTable, c: LinearScalarFn) -> Fraction:
    """Pr over uniform alpha that f(alpha) = c(alpha), exact."""
    if f.l != 1:
        raise ContractViolation("agreement needs a scalar-range table")
    if c.d != f.d or c.q != f.q:
        raise ContractViolation("shape mismatch between table and linear function")
    digits, _ = _domain(f.q, f.d)
    rho = np.array(c.rho, dtype=np.int64)
    cvals = digits @ rho % f.q
    return Fraction(int((f.values[:, 0] == cvals).sum()), f.size)


@dataclass(frozen=True)
class TripleCorrelationReport:
    """Enumerated vs Fourier-side value of the triple correlation
    Pr[g1(a) * g2(b) = g3(a+b)] over uniform pairs."""

    lhs: Fraction
    rhs: float
    abs_diff: float
    budget_used: int
    max_coeff_g1: float
    same_g2_g3: bool

    def to_json(self) -> dict:
        return {
            "lhs": float(self.lhs),
            "lhs_exact": f"{self.lhs.numerator}/{self.lhs.denominator}",
            "rhs": self.rhs,
            "abs_diff": self.abs_diff,
            "budget_used": self.budget_used,
            "max_coeff_g1": self.max_coeff_g1,
            "same_g2_g3": self.same_g2_g3,
        }


def triple_correlation_check(
    g1: FunctionTable,
    g2: FunctionTable,
    g3: FunctionTable,
    pair_budget: int = DEFAULT_PAIR_BUDGET,
) -> TripleCorrelationReport:
    """Check the correlation identity for three scalar-respecting tables.

    LHS: exact enumeration of Pr[f1(a) + f2(b) = f3(a+b)].
    RHS: 1/q + (q-1)/q * sum over rho of the coefficient triple product.
    When g2 and g3 coincide, the largest coefficient of g1 is the quantity
    bounded below by the correlation, so it is included in the report.
    """
    for g in (g1, g2, g3):
        if g.l != 1:
            raise ContractViolation("triple correlation needs scalar-range tables")
        g.ensure_scalar_respecting()
    if not (g1.q == g2.q == g3.q and g1.d == g2.d == g3.d):
        raise ContractViolation("tables must share domain")
    q, d = g1.q, g1.d
    n = g1.size
    if n * n > pair_budget:
        raise BudgetExceeded("pair enumeration", required=n * n, budget=pair_budget)
    digits, place = _domain(q, d)
    v1, v2, v3 = g1.values[:, 0], g2.values[:, 0], g3.values[:, 0]
    count = 0
    for i in range(n):
        sum_rank = ((digits[i] + digits) % q) @ place
        count += int(((v1[i] + v2) % q == v3[sum_rank]).sum())
    lhs = Fraction(count, n * n)
    c1 = fourier_transform(g1).real_parts()
    c2 = fourier_transform(g2).real_parts()
    c3 = fourier_transform(g3).real_parts()
    rhs = 1.0 / q + (q - 1) / q * float(np.sum(c1 * c2 * c3))
    return TripleCorrelationReport(
        lhs=lhs,
        rhs=rhs,
        abs_diff=abs(float(lhs) - rhs),
        budget_used=n * n,
        max_coeff_g1=float(np.max(c1)),
        same_g2_g3=bool(np.array_equal(g2.values, g3.values)),
    )


# -- list decoding --------------------------------------------------------------


def list_decode_scalar(
    f: FunctionTable, delta: float, c_list: float = LIST_CONSTANT
) -> tuple[LinearScalarFn, ...]:
    """All linear functions whose Fourier coefficient is at least
    c_list * delta, in rank order of the coefficient vector.

    Requires a scalar-respecting input so coefficients are real and the
    threshold comparison matches the exact agreement filter.  The comparison
    carries a 1e-9 slack toward inclusion so that coefficients exactly at the
    threshold are kept despite float error.
    """
    if f.l != 1:
        raise ContractViolation("list decoding needs a scalar-range table")
    if delta <= 0:
        raise ContractViolation("delta must be positive")
    f.ensure_scalar_respecting()
    re = fourier_transform(f).real_parts()
    threshold = c_list * delta
    hits = np.nonzero(re >= threshold - FLOAT_TOL)[0]
    return tuple(
        LinearScalarFn(f.q, unrank_tuple(f.q, f.d, int(r))) for r in hits
    )


@dataclass(frozen=True)
class ConsistencyReport:
    """Fraction of accepted pairs on which exactly one list member matches f
    at both endpoints."""

    fraction: Fraction
    accepted_pairs: int
    empty_accepted_set: bool


def verify_unique_consistency(
    f: FunctionTable,
    fns: Sequence[LinearScalarFn],
    pair_budget: int = DEFAULT_PAIR_BUDGET,
) -> ConsistencyReport:
    """Measure Pr over accepted pairs (a, b) that a unique list member agrees
    with f at both a and b; exact.  An empty accepted set yields fraction 0
    with a warning flag."""
    if f.l != 1:
        raise ContractViolation("unique consistency needs a scalar-range table")
    acc = accepted_set(f, pair_budget)
    total = acc.pair_count
    if total == 0:
        return ConsistencyReport(Fraction(0), 0, True)
    if not fns:
        return ConsistencyReport(Fraction(0), total, False)
    digits, _ = _domain(f.q, f.d)
    agree = np.stack(
        [digits @ np.array(c.rho, dtype=np.int64) % f.q == f.values[:, 0] for c in fns]
    ).astype(np.int64)  # (r, n)
    both = agree.T @ agree  # [i, j] = number of members matching at both points
    good = int(((both == 1) & acc.pair_mask).sum())
    return ConsistencyReport(Fraction(good, total), total, False)


# -- piecing ---------------------------------------------------------------------


@dataclass
class PiecingState:
    """Intermediate objects of the piecing procedure, kept for inspection."""

    deltas: tuple[float, ...]
    lists: tuple[tuple[LinearScalarFn, ...], ...]
    labels: np.ndarray  # (n, l) int; 0 = no unique match, else 1-based list index
    var_ranks: np.ndarray
    v_star_ranks: np.ndarray
    w_star_ranks: np.ndarray
    anchor_rank: Optional[int]


@dataclass
class PiecingResult:
    """Outcome of the piecing procedure.

    `fn` is the assembled linear function (None when no anchor point exists),
    `agreement` the measured probability over the test's variable set that
    the table is within the distance threshold of `fn`.
    """

    ok: bool
    fn: Optional[LinearVecFn]
    agreement: Optional[Fraction]
    pass_probability: Fraction
    coordinate_pass: tuple[Fraction, ...]
    state: PiecingState
    failure: Optional[str] = None


def default_delta_schedule(eps: float, eps_i: float) -> float:
    """Per-coordinate list-decoding threshold; the analysis sets it to
    eps^11 * eps_i and desk-scale callers usually override it."""
    return eps**11 * eps_i


def piece_together(
    f: FunctionTable,
    eps,
    kappa,
    c_list: float = LIST_CONSTANT,
    delta_schedule: Callable[[float, float], float] = default_delta_schedule,
    pair_budget: int = DEFAULT_PAIR_BUDGET,
) -> PiecingResult:
    """Assemble one linear vector-valued function from per-coordinate decoded
    lists.

    Procedure: list-decode each output coordinate, label every domain point
    with the unique list member matching there (0 if none), keep the points
    whose label vector is almost fully labeled (V*) and the points of high
    degree in the accepted-pair graph (W*), anchor at the lexicographically
    smallest point of the intersection, and read the assembled function off
    the anchor's labels.  Returns the function together with the measured
    probability, over the variable set, of being within relative Hamming
    distance kappa of it.

    Refuses (raises PiecingRefused) when the measured pass probability is
    below eps; returns ok=False with failure="no_anchor" when the
    intersection of V* and W* is empty.
    """
    f.ensure_scalar_respecting()
    kappa = Fraction(kappa)
    n = f.size
    acc = accepted_set(f, pair_budget)
    eps_meas = Fraction(acc.pair_count, n * n)
    if eps_meas < eps:
        raise PiecingRefused(eps_meas, eps)
    eps_f = float(eps_meas)

    lists: list[tuple[LinearScalarFn, ...]] = []
    deltas: list[float] = []
    coord_pass: list[Fraction] = []
    labels = np.zeros((n, f.l), dtype=np.int64)
    digits, _ = _domain(f.q, f.d)
    for i in range(f.l):
        fi = f.coordinate(i)
        acc_i = accepted_set(fi, pair_budget)
        eps_i = Fraction(acc_i.pair_count, n * n)
        coord_pass.append(eps_i)
        delta_i = delta_schedule(eps_f, float(eps_i))
        fns = list_decode_scalar(fi, delta_i, c_list)
        lists.append(fns)
        deltas.append(delta_i)
        if fns:
            agree = np.stack(
                [
                    digits @ np.array(c.rho, dtype=np.int64) % f.q == fi.values[:, 0]
                    for c in fns
                ]
            )
            counts = agree.sum(axis=0)
            unique = counts == 1
            labels[unique, i] = agree[:, unique].argmax(axis=0) + 1

    var_ranks = np.nonzero(acc.var_mask)[0]
    var_count = var_ranks.size
    weights = (labels[var_ranks] != 0).mean(axis=1)
    v_star = var_ranks[weights >= 1.0 - eps_f**2.5]
    degrees = acc.pair_mask[var_ranks].sum(axis=1)
    w_star = var_ranks[degrees >= (eps_f**2 / 2.0) * var_count]
    state = PiecingState(
        deltas=tuple(deltas),
        lists=tuple(lists),
        labels=labels,
        var_ranks=var_ranks,
        v_star_ranks=v_star,
        w_star_ranks=w_star,
        anchor_rank=None,
    )
    both = np.intersect1d(v_star, w_star)
    if both.size == 0:
        return PiecingResult(
            ok=False,
            fn=None,
            agreement=None,
            pass_probability=eps_meas,
            coordinate_pass=tuple(coord_pass),
            state=state,
            failure="no_anchor",
        )
    anchor = int(both.min())
    state.anchor_rank = anchor

    zero_rho = (0,) * f.d
    rhos = []
    for i in range(f.l):
        lab = int(labels[anchor, i])
        rhos.append(lists[i][lab - 1].rho if lab > 0 else zero_rho)
    fn = LinearVecFn(f.q, f.d, tuple(rhos))

    coeff = np.array(fn.rhos, dtype=np.int64).T
    fn_vals = digits @ coeff % f.q
    mism = (f.values[var_ranks] != fn_vals[var_ranks]).sum(axis=1)
    within = int((mism <= kappa * f.l).sum())
    return PiecingResult(
        ok=True,
        fn=fn,
        agreement=Fraction(within, var_count),
        pass_probability=eps_meas,
        coordinate_pass=tuple(coord_pass),
        state=state,
    )


# -- random scalar-respecting tables ----------------------------------------------


def line_representatives(q: int, d: int) -> tuple[tuple[int, ...], ...]:
    """One nonzero representative per line through the origin, chosen as the
    lexicographically smallest point on the line."""
    n = q**d
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    digits, place = _domain(q, d)
    reps = []
    for r in range(1, n):
        if seen[r]:
            continue
        reps.append(unrank_tuple(q, d, r))
        scaled = (digits[r][None, :] * np.arange(1, q)[:, None] % q) @ place
        seen[scaled] = True
    return tuple(reps)


def random_scalar_respecting_table(
    rng: random.Random, q: int, d: int, l: int = 1
) -> FunctionTable:
    """Uniformly random scalar-respecting table: zero at the origin, an
    independent uniform value on each line's representative, scaled along the
    line."""
    vals = np.zeros((q**d, l), dtype=np.int64)
    for rep in line_representatives(q, d):
        choice = np.array([rng.randrange(q) for _ in range(l)], dtype=np.int64)
        for c in range(1, q):
            vals[rank_tuple(q, tuple(e * c % q for e in rep))] = choice * c % q
    t = FunctionTable(q, d, l, vals, _skip_checks=True)
    t._scalar_respecting = True
    return t
