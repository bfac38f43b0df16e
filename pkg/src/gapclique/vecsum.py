"""Vector-sum instances: k collections of vectors over a prime field, with
the question whether one vector per collection sums to zero.

Generators produce either planted YES instances or brute-force-certified NO
instances; certification is never probabilistic because downstream soundness
experiments need ground truth.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import random
from dataclasses import dataclass, field
from typing import Optional

from .errors import BudgetExceeded, ContractViolation, PropertyViolation
from .ffield import FieldVector

DEFAULT_TUPLE_BUDGET = 2_000_000
DEFAULT_SUMSET_CAP = 1_000_000


@dataclass(frozen=True)
class VecSumInstance:
    """k collections of m-dimensional vectors over F_q, with an optional
    planted witness (one index per collection) and provenance metadata."""

    q: int
    k: int
    m: int
    collections: tuple[tuple[FieldVector, ...], ...]
    planted: Optional[tuple[int, ...]] = None
    seed: Optional[int] = None
    generator: Optional[str] = None
    certificate: Optional[dict] = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.collections) != self.k:
            raise ContractViolation(f"expected {self.k} collections")
        for us in self.collections:
            if not us:
                raise ContractViolation("collections must be non-empty")
            for u in us:
                if u.q != self.q or u.dim != self.m:
                    raise ContractViolation("vector shape/modulus mismatch")
        if self.planted is not None:
            if len(self.planted) != self.k:
                raise ContractViolation("planted witness needs one index per collection")
            s = FieldVector.zero(self.q, self.m)
            for i, idx in enumerate(self.planted):
                s = s + self.collections[i][idx]
            if not s.is_zero():
                raise ContractViolation("planted witness does not sum to zero")

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(us) for us in self.collections)

    def tuple_count(self) -> int:
        return math.prod(self.sizes)

    def to_json(self) -> dict:
        return {
            "version": 1,
            "q": self.q,
            "k": self.k,
            "m": self.m,
            "collections": [
                [list(u.entries) for u in us] for us in self.collections
            ],
            "planted": list(self.planted) if self.planted is not None else None,
            "seed": self.seed,
            "generator": self.generator,
            "certificate": self.certificate,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "VecSumInstance":
        if doc.get("version") != 1:
            raise ContractViolation(f"unsupported instance version {doc.get('version')}")
        q = doc["q"]
        cols = tuple(
            tuple(FieldVector(q, tuple(e)) for e in us) for us in doc["collections"]
        )
        planted = doc.get("planted")
        return cls(
            q=q,
            k=doc["k"],
            m=doc["m"],
            collections=cols,
            planted=tuple(planted) if planted is not None else None,
            seed=doc.get("seed"),
            generator=doc.get("generator"),
            certificate=doc.get("certificate"),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> "VecSumInstance":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def fingerprint(self) -> str:
        doc = self.to_json()
        doc.pop("certificate", None)
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class Witness:
    """A sum-zero tuple: one vector index per collection."""

    indices: tuple[int, ...]
    vectors: tuple[FieldVector, ...]


def generate_planted(
    rng: random.Random, q: int, k: int, m: int, n_per_collection: int
) -> VecSumInstance:
    """Planted YES instance: the first k-1 collections are fully uniform; one
    tuple is completed by the negated partial sum and inserted at a random
    position of the last collection."""
    if n_per_collection < 1:
        raise ContractViolation("need at least one vector per collection")
    cols: list[list[FieldVector]] = []
    witness_prefix: list[int] = []
    partial = FieldVector.zero(q, m)
    for _ in range(k - 1):
        us = [FieldVector.uniform(rng, q, m) for _ in range(n_per_collection)]
        idx = rng.randrange(n_per_collection)
        witness_prefix.append(idx)
        partial = partial + us[idx]
        cols.append(us)
    last = [FieldVector.uniform(rng, q, m) for _ in range(n_per_collection - 1)]
    pos = rng.randrange(n_per_collection)
    last.insert(pos, -partial)
    cols.append(last)
    return VecSumInstance(
        q=q,
        k=k,
        m=m,
        collections=tuple(tuple(us) for us in cols),
        planted=tuple(witness_prefix + [pos]),
        generator="planted",
    )


def brute_force_decide(
    inst: VecSumInstance, tuple_budget: int = DEFAULT_TUPLE_BUDGET
) -> Optional[Witness]:
    """Full enumeration; returns the lexicographically first witness tuple or
    None after checking every tuple."""
    total = inst.tuple_count()
    if total > tuple_budget:
        raise BudgetExceeded("tuple enumeration", required=total, budget=tuple_budget)
    q, m = inst.q, inst.m
    entry_lists = [
        [u.entries for u in us] for us in inst.collections
    ]
    for indices in itertools.product(*(range(len(us)) for us in entry_lists)):
        acc = [0] * m
        for i, idx in enumerate(indices):
            e = entry_lists[i][idx]
            for j in range(m):
                acc[j] += e[j]
        if all(v % q == 0 for v in acc):
            return Witness(
                indices=indices,
                vectors=tuple(inst.collections[i][idx] for i, idx in enumerate(indices)),
            )
    return None


def generate_unsat(
    rng: random.Random,
    q: int,
    k: int,
    m: int,
    n_per_collection: int,
    max_retries: int = 200,
    tuple_budget: int = DEFAULT_TUPLE_BUDGET,
) -> VecSumInstance:
    """Uniform collections, rejection-sampled until brute force certifies NO.

    The returned instance carries a certificate recording the exhaustive
    check.  Raises PropertyViolation when retries run out, which is the
    expected outcome when q^m is small relative to the tuple count.
    """
    total = n_per_collection**k
    if total > tuple_budget:
        raise BudgetExceeded("tuple enumeration", required=total, budget=tuple_budget)
    for attempt in range(max_retries):
        cols = tuple(
            tuple(FieldVector.uniform(rng, q, m) for _ in range(n_per_collection))
            for _ in range(k)
        )
        inst = VecSumInstance(q=q, k=k, m=m, collections=cols, generator="unsat")
        if brute_force_decide(inst, tuple_budget) is None:
            return VecSumInstance(
                q=q,
                k=k,
                m=m,
                collections=cols,
                generator="unsat",
                certificate={
                    "certified_no": True,
                    "tuples_checked": total,
                    "attempts": attempt + 1,
                },
            )
    raise PropertyViolation(
        f"could not sample a NO instance in {max_retries} attempts "
        f"(q^m={q**m} vs {total} tuples)"
    )


def from_target_variant(inst: VecSumInstance, target: FieldVector) -> VecSumInstance:
    """Convert a target-vector instance (does some tuple sum to the target?)
    into the zero-sum form by appending a singleton collection holding the
    negated target."""
    if target.dim != inst.m or target.q != inst.q:
        raise ContractViolation("target shape/modulus mismatch")
    planted = None
    if inst.planted is not None:
        s = FieldVector.zero(inst.q, inst.m)
        for i, idx in enumerate(inst.planted):
            s = s + inst.collections[i][idx]
        if s == target:
            planted = tuple(inst.planted) + (0,)
    return VecSumInstance(
        q=inst.q,
        k=inst.k + 1,
        m=inst.m,
        collections=inst.collections + ((-target,),),
        planted=planted,
        seed=inst.seed,
        generator="target-variant",
    )


def paper_dimension(k: int, n: int, c_m: float = 1.0) -> int:
    """Schedule-faithful ambient dimension: ceil(c_m * k^2 * log2 n)."""
    if n < 2:
        return max(1, int(math.ceil(c_m * k * k)))
    return max(1, int(math.ceil(c_m * k * k * math.log2(n))))


@dataclass(frozen=True)
class SumsetView:
    """Enumerated elements of the r-fold scaled sumset of a collection."""

    order: int
    source_size: int
    elements: frozenset[tuple[int, ...]]


def enumerate_sumset(
    collection,
    r: int,
    cap: int = DEFAULT_SUMSET_CAP,
) -> SumsetView:
    """Exact element set of all sums of r scaled collection members
    (gamma_1 b_1 + ... + gamma_r b_r, repeats allowed), deduplicated."""
    vecs = list(collection)
    if not vecs:
        raise ContractViolation("collection must be non-empty")
    if r < 1:
        raise ContractViolation("sumset order must be >= 1")
    q = vecs[0].q
    m = vecs[0].dim
    total = (q * len(vecs)) ** r
    if total > cap:
        raise BudgetExceeded("sumset enumeration", required=total, budget=cap)
    scaled = [[b.scale(c).entries for c in range(q)] for b in vecs]
    elements: set[tuple[int, ...]] = set()
    for combo in itertools.product(range(len(vecs)), repeat=r):
        for gammas in itertools.product(range(q), repeat=r):
            acc = [0] * m
            for b_idx, c in zip(combo, gammas):
                e = scaled[b_idx][c]
                for j in range(m):
                    acc[j] += e[j]
            elements.add(tuple(v % q for v in acc))
    return SumsetView(order=r, source_size=len(vecs), elements=frozenset(elements))
