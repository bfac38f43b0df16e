"""The random block-linear map b -> (A_1 b, ..., A_l b) and its two goodness
properties.

Wellspread: every nonzero combination sum built from one scaled vector per
collection keeps relative Hamming weight at least 2/3 under the map.

Pairwise separation: for same-collection triples with distinct differences
and linearly independent directions, the block-inner images stay at relative
distance at least 1/2.  The zero-difference degenerate case (one difference
vanishes) reduces to a single-direction weight bound, which is checked for
every nonzero direction so the property has content at k = 1 as well.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .errors import BudgetExceeded, ContractViolation
from .ffield import (
    BlockVector,
    FieldMatrix,
    FieldVector,
    block_inner,
    mat_vec,
    rel_hamming,
    rel_weight,
    sample_matrix,
)
from .stats import wilson_interval
from .vecsum import VecSumInstance

DEFAULT_CHECK_BUDGET = 5_000_000

WEIGHT_THRESHOLD = Fraction(2, 3)
SEPARATION_THRESHOLD = Fraction(1, 2)


@dataclass(frozen=True)
class LinearMapG:
    """l matrices of shape k x m over F_q, applied jointly as one linear map
    into l blocks of width k."""

    q: int
    k: int
    m: int
    l: int
    matrices: tuple[FieldMatrix, ...]
    seed: Optional[int] = None

    def __post_init__(self):
        if self.l < 1 or len(self.matrices) != self.l:
            raise ContractViolation("need l >= 1 matrices")
        for a in self.matrices:
            if a.q != self.q or a.rows != self.k or a.cols != self.m:
                raise ContractViolation("matrix shape/modulus mismatch")

    @classmethod
    def from_matrices(cls, matrices, seed: Optional[int] = None) -> "LinearMapG":
        mats = tuple(matrices)
        a = mats[0]
        return cls(q=a.q, k=a.rows, m=a.cols, l=len(mats), matrices=mats, seed=seed)

    def to_json(self) -> dict:
        return {
            "version": 1,
            "q": self.q,
            "k": self.k,
            "m": self.m,
            "l": self.l,
            "matrices": [list(a.entries) for a in self.matrices],
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "LinearMapG":
        if doc.get("version") != 1:
            raise ContractViolation(f"unsupported map version {doc.get('version')}")
        q, k, m = doc["q"], doc["k"], doc["m"]
        mats = tuple(FieldMatrix(q, k, m, tuple(e)) for e in doc["matrices"])
        return cls(q=q, k=k, m=m, l=doc["l"], matrices=mats, seed=doc.get("seed"))


def sample_g(rng: random.Random, q: int, k: int, m: int, l: int,
             seed: Optional[int] = None) -> LinearMapG:
    """l i.i.d. uniform matrices; deterministic given the rng state."""
    mats = tuple(sample_matrix(rng, k, m, q) for _ in range(l))
    return LinearMapG(q=q, k=k, m=m, l=l, matrices=mats, seed=seed)


def apply_g(g: LinearMapG, b: FieldVector) -> BlockVector:
    """Image of b: one block per matrix, each block a matrix-vector product."""
    if b.dim != g.m or b.q != g.q:
        raise ContractViolation("vector shape/modulus mismatch")
    return BlockVector.from_blocks([mat_vec(a, b) for a in g.matrices])


@dataclass(frozen=True)
class GoodMapCertificate:
    """Outcome of one goodness check; a counterexample always re-verifies
    against the raw definition."""

    property_name: str  # "wellspread" | "pairwise_separation"
    mode: str  # "exhaustive" | "monte_carlo"
    passed: bool
    checked: int
    counterexample: Optional[dict]
    instance_fingerprint: str
    map_seed: Optional[int]

    def to_json(self) -> dict:
        return {
            "property": self.property_name,
            "mode": self.mode,
            "passed": self.passed,
            "checked": self.checked,
            "counterexample": self.counterexample,
            "instance_fingerprint": self.instance_fingerprint,
            "map_seed": self.map_seed,
        }


def _check_shapes(g: LinearMapG, inst: VecSumInstance):
    if g.q != inst.q or g.m != inst.m or g.k != inst.k:
        raise ContractViolation("map does not match instance shapes")


def check_wellspread(
    g: LinearMapG,
    inst: VecSumInstance,
    mode: str = "exhaustive",
    samples: int = 0,
    rng: Optional[random.Random] = None,
    budget: int = DEFAULT_CHECK_BUDGET,
) -> GoodMapCertificate:
    """For every choice of scalars and one vector per collection whose scaled
    sum is nonzero, the image must have relative weight >= 2/3 over all k*l
    coordinates."""
    _check_shapes(g, inst)
    q, k = g.q, g.k
    sizes = inst.sizes
    if mode == "exhaustive":
        total = (q**k) * math.prod(sizes)
        if total > budget:
            raise BudgetExceeded("wellspread enumeration", required=total, budget=budget)
        cases = itertools.product(
            itertools.product(range(q), repeat=k),
            itertools.product(*(range(s) for s in sizes)),
        )
        checked = 0
        seen: dict[tuple[int, ...], bool] = {}
        for gammas, indices in cases:
            s = FieldVector.zero(q, inst.m)
            for i in range(k):
                if gammas[i]:
                    s = s + inst.collections[i][indices[i]].scale(gammas[i])
            if s.is_zero():
                continue
            checked += 1
            key = s.entries
            ok = seen.get(key)
            if ok is None:
                ok = rel_weight(apply_g(g, s).vec) >= WEIGHT_THRESHOLD
                seen[key] = ok
            if not ok:
                image = apply_g(g, s)
                return GoodMapCertificate(
                    "wellspread",
                    "exhaustive",
                    False,
                    checked,
                    {
                        "gammas": list(gammas),
                        "indices": list(indices),
                        "sum": list(s.entries),
                        "weight": str(rel_weight(image.vec)),
                    },
                    inst.fingerprint(),
                    g.seed,
                )
        return GoodMapCertificate(
            "wellspread", "exhaustive", True, checked, None, inst.fingerprint(), g.seed
        )
    if mode != "monte_carlo":
        raise ContractViolation(f"unknown mode {mode!r}")
    if rng is None or samples < 1:
        raise ContractViolation("monte_carlo mode needs rng and samples >= 1")
    checked = 0
    for _ in range(samples):
        gammas = [rng.randrange(q) for _ in range(k)]
        indices = [rng.randrange(s) for s in sizes]
        s = FieldVector.zero(q, inst.m)
        for i in range(k):
            if gammas[i]:
                s = s + inst.collections[i][indices[i]].scale(gammas[i])
        if s.is_zero():
            continue
        checked += 1
        if rel_weight(apply_g(g, s).vec) < WEIGHT_THRESHOLD:
            return GoodMapCertificate(
                "wellspread",
                "monte_carlo",
                False,
                checked,
                {
                    "gammas": gammas,
                    "indices": indices,
                    "sum": list(s.entries),
                    "weight": str(rel_weight(apply_g(g, s).vec)),
                },
                inst.fingerprint(),
                g.seed,
            )
    return GoodMapCertificate(
        "wellspread", "monte_carlo", True, checked, None, inst.fingerprint(), g.seed
    )


def _independent_pairs(q: int, k: int):
    """All ordered pairs of linearly independent vectors in F_q^k, in
    lexicographic order."""
    points = list(itertools.product(range(q), repeat=k))
    nonzero = [p for p in points if any(p)]
    for a in nonzero:
        multiples = {tuple(c * x % q for x in a) for c in range(q)}
        for b in nonzero:
            if b not in multiples:
                yield a, b


def check_pairwise_separation(
    g: LinearMapG,
    inst: VecSumInstance,
    mode: str = "exhaustive",
    samples: int = 0,
    rng: Optional[random.Random] = None,
    budget: int = DEFAULT_CHECK_BUDGET,
) -> GoodMapCertificate:
    """Separation of block-inner images.

    Main case: for every collection i, ordered triples (u1, u2, u3) from it
    with u3 - u1 != u2 - u3, and every linearly independent pair of
    directions, the two images differ in at least half the coordinates.
    Degenerate case: for every nonzero difference of two members of one
    collection and every nonzero direction, the image has weight >= 1/2
    (this is what the main case degenerates to when one difference is zero,
    and it is the part that keeps the check meaningful at k = 1, where no
    independent pairs exist).
    """
    _check_shapes(g, inst)
    q, k = g.q, g.k
    indep = list(_independent_pairs(q, k))
    nonzero_dirs = [
        p for p in itertools.product(range(q), repeat=k) if any(p)
    ]

    def image(alpha: tuple[int, ...], diff: FieldVector) -> FieldVector:
        return block_inner(FieldVector(q, alpha), apply_g(g, diff))

    if mode == "exhaustive":
        triples = sum(s**3 for s in inst.sizes)
        pair_diffs = sum(s * s for s in inst.sizes)
        total = triples * max(1, len(indep)) + pair_diffs * len(nonzero_dirs)
        if total > budget:
            raise BudgetExceeded("separation enumeration", required=total, budget=budget)
        checked = 0
        img_cache: dict[tuple[tuple[int, ...], tuple[int, ...]], FieldVector] = {}

        def cached_image(alpha, diff: FieldVector) -> FieldVector:
            key = (alpha, diff.entries)
            v = img_cache.get(key)
            if v is None:
                v = image(alpha, diff)
                img_cache[key] = v
            return v

        for i, us in enumerate(inst.collections):
            # degenerate case: single nonzero differences
            for a, b in itertools.product(range(len(us)), repeat=2):
                w = us[a] - us[b]
                if w.is_zero():
                    continue
                for alpha in nonzero_dirs:
                    checked += 1
                    img = cached_image(alpha, w)
                    if rel_weight(img) < SEPARATION_THRESHOLD:
                        return GoodMapCertificate(
                            "pairwise_separation",
                            "exhaustive",
                            False,
                            checked,
                            {
                                "collection": i,
                                "case": "single-difference",
                                "pair": [a, b],
                                "alpha": list(alpha),
                                "weight": str(rel_weight(img)),
                            },
                            inst.fingerprint(),
                            g.seed,
                        )
            # main case: triples with distinct differences, independent pairs
            for t1, t2, t3 in itertools.product(range(len(us)), repeat=3):
                d1 = us[t3] - us[t1]
                d2 = us[t2] - us[t3]
                if d1 == d2:
                    continue
                for alpha, beta in indep:
                    checked += 1
                    dist = rel_hamming(cached_image(alpha, d1), cached_image(beta, d2))
                    if dist < SEPARATION_THRESHOLD:
                        return GoodMapCertificate(
                            "pairwise_separation",
                            "exhaustive",
                            False,
                            checked,
                            {
                                "collection": i,
                                "case": "triple",
                                "triple": [t1, t2, t3],
                                "alpha": list(alpha),
                                "beta": list(beta),
                                "distance": str(dist),
                            },
                            inst.fingerprint(),
                            g.seed,
                        )
        return GoodMapCertificate(
            "pairwise_separation",
            "exhaustive",
            True,
            checked,
            None,
            inst.fingerprint(),
            g.seed,
        )
    if mode != "monte_carlo":
        raise ContractViolation(f"unknown mode {mode!r}")
    if rng is None or samples < 1:
        raise ContractViolation("monte_carlo mode needs rng and samples >= 1")
    checked = 0
    for _ in range(samples):
        i = rng.randrange(inst.k)
        us = inst.collections[i]
        t1, t2, t3 = (rng.randrange(len(us)) for _ in range(3))
        d1 = us[t3] - us[t1]
        d2 = us[t2] - us[t3]
        if d1 == d2:
            continue
        if indep:
            alpha, beta = indep[rng.randrange(len(indep))]
        else:
            continue
        checked += 1
        dist = rel_hamming(image(alpha, d1), image(beta, d2))
        if dist < SEPARATION_THRESHOLD:
            return GoodMapCertificate(
                "pairwise_separation",
                "monte_carlo",
                False,
                checked,
                {
                    "collection": i,
                    "case": "triple",
                    "triple": [t1, t2, t3],
                    "alpha": list(alpha),
                    "beta": list(beta),
                    "distance": str(dist),
                },
                inst.fingerprint(),
                g.seed,
            )
    return GoodMapCertificate(
        "pairwise_separation", "monte_carlo", True, checked, None, inst.fingerprint(), g.seed
    )


def union_bound_values(q: int, k: int, m: int, l: int, n: int) -> dict:
    """The two union-bound expressions from the goodness analysis, evaluated
    numerically, with flags marking where they are vacuous (>= 1)."""
    zeros_w = l * k // 3 + 1
    wellspread = (q * n) ** k * math.comb(l * k, zeros_w) * q ** (-zeros_w)
    zeros_s = l // 2 if l % 2 == 0 else l // 2 + 1
    separation = n**4 * q ** (2 * k) * math.comb(l, zeros_s) * q ** (-zeros_s)
    return {
        "wellspread_bound": wellspread,
        "wellspread_vacuous": wellspread >= 1.0,
        "separation_bound": separation,
        "separation_vacuous": separation >= 1.0,
    }


@dataclass(frozen=True)
class FailureRateReport:
    """Empirical failure rates of both properties over freshly sampled maps,
    with Wilson intervals and the analytic union-bound values for context."""

    trials: int
    wellspread_failures: int
    separation_failures: int
    wellspread_rate: Optional[float]
    separation_rate: Optional[float]
    wellspread_ci: tuple[float, float]
    separation_ci: tuple[float, float]
    union_bounds: dict

    def to_json(self) -> dict:
        return {
            "trials": self.trials,
            "wellspread_failures": self.wellspread_failures,
            "separation_failures": self.separation_failures,
            "wellspread_rate": self.wellspread_rate,
            "separation_rate": self.separation_rate,
            "wellspread_ci": list(self.wellspread_ci),
            "separation_ci": list(self.separation_ci),
            "union_bounds": self.union_bounds,
        }


def estimate_failure_rate(
    inst: VecSumInstance,
    l: int,
    trials: int,
    rng: random.Random,
    budget: int = DEFAULT_CHECK_BUDGET,
) -> FailureRateReport:
    """Sample fresh maps, run both exhaustive checks per map, and report the
    empirical failure fractions."""
    ws_fail = 0
    sep_fail = 0
    for _ in range(trials):
        g = sample_g(rng, inst.q, inst.k, inst.m, l)
        if not check_wellspread(g, inst, budget=budget).passed:
            ws_fail += 1
        if not check_pairwise_separation(g, inst, budget=budget).passed:
            sep_fail += 1
    n = max(inst.sizes)
    return FailureRateReport(
        trials=trials,
        wellspread_failures=ws_fail,
        separation_failures=sep_fail,
        wellspread_rate=ws_fail / trials if trials else None,
        separation_rate=sep_fail / trials if trials else None,
        wellspread_ci=wilson_interval(ws_fail, trials),
        separation_ci=wilson_interval(sep_fail, trials),
        union_bounds=union_bound_values(inst.q, inst.k, inst.m, l, n),
    )
