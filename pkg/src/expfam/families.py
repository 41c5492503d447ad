"""Polynomial exponential families and their factor-graph structure.

A family is a set of monomial basis functions ("factors") on R^n together
with a base measure exp(-sum_i x_i^p).  A model fixes a coefficient vector
on top of a family.  This module holds the structural queries everything
else is built on: bipartite variable/factor graphs, maximal factors,
maximal cliques and their spans, induced subgraphs, and per-variable
group l1 norms.

All types are immutable after construction and all operations are pure,
so they are safe to share across parallel workers.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Factor",
    "Family",
    "TailSpec",
    "Model",
    "FactorGraph",
    "StructureSet",
    "eval_basis",
    "partial_derivative",
    "build_factor_graph",
    "maximal_structure",
    "induced_subgraph",
    "group_l1_norms",
    "generate_family",
    "family_to_dict",
    "family_from_dict",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]


@dataclass(frozen=True)
class Factor:
    """A monomial prod_i x_i^{e_i}, stored sparsely as (variable, degree) pairs.

    Degrees are positive integers; variables with degree zero are not stored.
    The pairs are kept sorted by variable index so equal monomials compare
    and hash equal.
    """

    exponents: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        pairs = tuple(sorted((int(v), int(d)) for v, d in self.exponents))
        seen = set()
        for v, d in pairs:
            if v < 0:
                raise ValueError(f"negative variable index {v}")
            if d <= 0:
                raise ValueError(f"factor stores zero/negative degree for variable {v}")
            if v in seen:
                raise ValueError(f"duplicate variable {v} in factor")
            seen.add(v)
        object.__setattr__(self, "exponents", pairs)

    @classmethod
    def from_dict(cls, exponents: Mapping[int, int]) -> "Factor":
        return cls(tuple((v, d) for v, d in exponents.items()))

    @property
    def support(self) -> tuple[int, ...]:
        """Variables appearing in the monomial."""
        return tuple(v for v, _ in self.exponents)

    @property
    def degree(self) -> int:
        """Total degree of the monomial."""
        return sum(d for _, d in self.exponents)

    def degree_of(self, i: int) -> int:
        for v, d in self.exponents:
            if v == i:
                return d
        return 0

    def dense_exponents(self, n: int) -> tuple[int, ...]:
        out = [0] * n
        for v, d in self.exponents:
            out[v] = d
        return tuple(out)

    def __str__(self) -> str:
        if not self.exponents:
            return "1"
        return "*".join(
            f"x{v}" if d == 1 else f"x{v}^{d}" for v, d in self.exponents
        )


def eval_basis(factor: Factor, x: np.ndarray) -> float:
    """Evaluate the monomial at x.  The empty factor evaluates to 1."""
    x = np.asarray(x, dtype=float)
    _check_point(factor, x)
    out = 1.0
    for v, d in factor.exponents:
        out *= x[v] ** d
    return float(out)


def partial_derivative(factor: Factor, i: int, order: int, x: np.ndarray) -> float:
    """d^order/dx_i^order of the monomial at x, for order in {1, 2}.

    Zero whenever the degree of x_i is below `order`.  The degenerate case
    x_i = 0 with a residual exponent of 0 contributes 0^0 = 1 (polynomial
    limit); a negative residual exponent never occurs because the
    coefficient k_i (k_i - 1) ... vanishes first.
    """
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    x = np.asarray(x, dtype=float)
    _check_point(factor, x)
    ki = factor.degree_of(i)
    if ki < order:
        return 0.0
    coeff = float(ki) if order == 1 else float(ki * (ki - 1))
    out = coeff * x[i] ** (ki - order)
    for v, d in factor.exponents:
        if v != i:
            out *= x[v] ** d
    return float(out)


def _check_point(factor: Factor, x: np.ndarray) -> None:
    if x.ndim != 1:
        raise ValueError(f"expected a 1-d point, got shape {x.shape}")
    if factor.exponents and factor.exponents[-1][0] >= x.shape[0]:
        raise ValueError(
            f"factor touches variable {factor.exponents[-1][0]} "
            f"but point has length {x.shape[0]}"
        )


@dataclass(frozen=True)
class Family:
    """A polynomial exponential family p(x) ~ h(x) exp(sum_k theta_k f_k(x)).

    h(x) = exp(-sum_i x_i^base_exponent); base_exponent = 0 encodes h = 1.
    Factors are stored in canonical order (lexicographic on dense exponent
    vectors) so factor indices are stable identities.
    """

    n: int
    d: int
    factors: tuple[Factor, ...]
    base_exponent: int = 0
    w: int = field(default=0)

    def __post_init__(self) -> None:
        if self.n <= 0:
            raise ValueError("need at least one variable")
        if self.d < 1:
            raise ValueError("degree bound must be >= 1")
        if self.base_exponent < 0:
            raise ValueError("base exponent must be >= 0")
        ordered = tuple(
            sorted(self.factors, key=lambda f: f.dense_exponents(self.n))
        )
        if len(set(ordered)) != len(ordered):
            raise ValueError("factor identities must be unique")
        max_sup = 0
        for f in ordered:
            if f.exponents and f.exponents[-1][0] >= self.n:
                raise ValueError(f"factor {f} touches a variable outside [0, {self.n})")
            if f.degree > self.d:
                raise ValueError(f"factor {f} exceeds degree bound {self.d}")
            max_sup = max(max_sup, len(f.support))
        w = self.w if self.w else max_sup
        if w != max_sup:
            raise ValueError(
                f"declared interaction order {self.w} != max support size {max_sup}"
            )
        object.__setattr__(self, "factors", ordered)
        object.__setattr__(self, "w", w)

    def factors_containing(self, i: int) -> tuple[int, ...]:
        """Indices of factors whose support contains variable i (the set K_i)."""
        if not 0 <= i < self.n:
            raise ValueError(f"variable {i} outside [0, {self.n})")
        return tuple(k for k, f in enumerate(self.factors) if f.degree_of(i) > 0)

    def index_of(self, factor: Factor) -> int:
        for k, f in enumerate(self.factors):
            if f == factor:
                return k
        raise KeyError(f"factor {factor} not in family")


def generate_family(
    n: int, d: int, w: int, base_exponent: int = 0
) -> Family:
    """All monomials with total degree in [1, d] and at most w variables."""
    if w < 1:
        raise ValueError("interaction order must be >= 1")
    factors = []
    for size in range(1, min(w, n, d) + 1):
        for sup in itertools.combinations(range(n), size):
            # degrees >= 1 on each support variable, total <= d
            for degs in _compositions(size, d):
                factors.append(Factor(tuple(zip(sup, degs))))
    return Family(n=n, d=d, factors=tuple(factors), base_exponent=base_exponent)


def _compositions(size: int, total: int) -> Iterable[tuple[int, ...]]:
    """All tuples of `size` positive integers summing to at most `total`."""
    if size == 1:
        for t in range(1, total + 1):
            yield (t,)
        return
    for first in range(1, total - size + 2):
        for rest in _compositions(size - 1, total - first):
            yield (first,) + rest


@dataclass(frozen=True)
class TailSpec:
    """Tail decay certificate: Pr(||x||_inf > s) <= exp(-decay_k * s^(d-1))."""

    decay_k: float
    C_t: int

    def __post_init__(self) -> None:
        if self.decay_k <= 0:
            raise ValueError("decay constant must be positive")
        if not isinstance(self.C_t, int) or isinstance(self.C_t, bool):
            raise ValueError("C_t must be an integer")
        if self.C_t < 1:
            raise ValueError("C_t must be >= 1")


@dataclass(frozen=True)
class Model:
    """A specific member of a Family: coefficients, l1 budget, tail spec."""

    family: Family
    theta_star: tuple[float, ...]
    B: int
    tail: TailSpec

    def __post_init__(self) -> None:
        theta = tuple(float(t) for t in self.theta_star)
        if len(theta) != len(self.family.factors):
            raise ValueError(
                f"theta has {len(theta)} entries for {len(self.family.factors)} factors"
            )
        if not isinstance(self.B, int) or isinstance(self.B, bool):
            raise ValueError("B must be an integer")
        if self.B <= 0:
            raise ValueError("B must be positive")
        object.__setattr__(self, "theta_star", theta)
        norms = group_l1_norms(self.family, np.asarray(theta))
        if norms.size and norms.max() > self.B + 1e-12:
            j = int(norms.argmax())
            raise ValueError(
                f"group l1 norm {norms[j]:.6g} at variable {j} exceeds B={self.B}"
            )
        d = self.family.d
        if d >= 2:
            lo = max((math.log(2.0) / self.tail.decay_k) ** (1.0 / (d - 1)), 1.0)
            if not (lo <= self.tail.C_t <= math.exp(self.family.n)):
                raise ValueError(
                    f"C_t={self.tail.C_t} outside [{lo:.4g}, e^n={math.exp(self.family.n):.4g}]"
                )

    @property
    def theta(self) -> np.ndarray:
        return np.asarray(self.theta_star, dtype=float)

    def nonzero_factors(self) -> tuple[int, ...]:
        return tuple(k for k, t in enumerate(self.theta_star) if t != 0.0)


@dataclass(frozen=True)
class FactorGraph:
    """Bipartite graph: variables [0, n) on one side, kept factors on the other.

    Edges are exactly the (variable, factor-index) pairs with the variable in
    the factor's support.
    """

    family: Family
    kept: tuple[int, ...]
    edges: frozenset[tuple[int, int]]

    @property
    def n(self) -> int:
        return self.family.n


def build_factor_graph(family: Family, kept: Iterable[int] | None = None) -> FactorGraph:
    """Graph over a subset of factor indices (all factors when kept is None)."""
    if kept is None:
        idx = tuple(range(len(family.factors)))
    else:
        idx = tuple(sorted(set(int(k) for k in kept)))
        for k in idx:
            if not 0 <= k < len(family.factors):
                raise KeyError(f"unknown factor index {k}")
    edges = frozenset(
        (i, k) for k in idx for i in family.factors[k].support
    )
    return FactorGraph(family=family, kept=idx, edges=edges)


def induced_subgraph(graph: FactorGraph, kept: Iterable[int]) -> FactorGraph:
    """Restrict the factor side (and edges) to `kept`; variables unchanged."""
    keep = set(int(k) for k in kept)
    for k in keep:
        if not 0 <= k < len(graph.family.factors):
            raise KeyError(f"unknown factor index {k}")
    idx = tuple(k for k in graph.kept if k in keep)
    edges = frozenset(e for e in graph.edges if e[1] in keep)
    return FactorGraph(family=graph.family, kept=idx, edges=edges)


@dataclass(frozen=True)
class StructureSet:
    """Maximal cliques of a factor graph together with their factor spans."""

    cliques: frozenset[frozenset[int]]
    spans: Mapping[frozenset[int], tuple[int, ...]]

    def maximal_factors(self) -> tuple[int, ...]:
        return tuple(sorted(k for span in self.spans.values() for k in span))

    def sorted_cliques(self) -> list[tuple[int, ...]]:
        return sorted(tuple(sorted(c)) for c in self.cliques)


def maximal_structure(graph: FactorGraph) -> StructureSet:
    """Maximal factors grouped by support.

    A factor is maximal iff no other kept factor's support strictly contains
    its support; factors with equal supports are all retained and share a
    clique, forming its span.
    """
    fam = graph.family
    sups = {k: frozenset(fam.factors[k].support) for k in graph.kept}
    maximal = [
        k
        for k in graph.kept
        if not any(sups[k] < sups[k2] for k2 in graph.kept if k2 != k)
    ]
    cliques = frozenset(sups[k] for k in maximal)
    spans = {
        c: tuple(sorted(k for k in maximal if sups[k] == c)) for c in cliques
    }
    return StructureSet(cliques=cliques, spans=spans)


def group_l1_norms(family: Family, theta: np.ndarray) -> np.ndarray:
    """g_j = sum_{k in K_j} |theta_k| for each variable j."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (len(family.factors),):
        raise ValueError(
            f"theta shape {theta.shape} does not match {len(family.factors)} factors"
        )
    g = np.zeros(family.n)
    for k, f in enumerate(family.factors):
        for v in f.support:
            g[v] += abs(theta[k])
    return g


# ---------------------------------------------------------------------------
# JSON round-trip
# ---------------------------------------------------------------------------

def family_to_dict(family: Family) -> dict:
    return {
        "n": family.n,
        "d": family.d,
        "w": family.w,
        "base_exponent": family.base_exponent,
        "factors": [
            {str(v): d for v, d in f.exponents} for f in family.factors
        ],
    }


def family_from_dict(doc: Mapping) -> Family:
    factors = tuple(
        Factor(tuple((int(v), int(d)) for v, d in fd.items()))
        for fd in doc["factors"]
    )
    return Family(
        n=int(doc["n"]),
        d=int(doc["d"]),
        factors=factors,
        base_exponent=int(doc.get("base_exponent", 0)),
        w=int(doc.get("w", 0)),
    )


def model_to_dict(model: Model) -> dict:
    doc = family_to_dict(model.family)
    doc["theta"] = list(model.theta_star)
    doc["B"] = model.B
    doc["tail"] = {"k": model.tail.decay_k, "C_t": model.tail.C_t}
    return doc


def model_from_dict(doc: Mapping) -> Model:
    family = family_from_dict(doc)
    tail = doc["tail"]
    return Model(
        family=family,
        theta_star=tuple(float(t) for t in doc["theta"]),
        B=int(doc["B"]),
        tail=TailSpec(decay_k=float(tail["k"]), C_t=int(tail["C_t"])),
    )


def save_model(model: Model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2)


def load_model(path) -> Model:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
