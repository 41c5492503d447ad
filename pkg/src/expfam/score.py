"""Local score-matching loss and its exact quadratic form in theta.

For a vertex i the local loss of a sample x is

    d^2/dx_i^2 log p_theta(x) + 1/2 (d/dx_i log p_theta(x))^2,

which is an exact quadratic c0 + b.theta + 1/2 theta^T H theta in the
coefficients theta restricted to the factors containing i.  Averaging over
a batch gives the empirical quadratic (Hhat, b, c0) that the constrained
solver minimizes; H is an average of outer products and therefore PSD.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .families import Family

__all__ = [
    "LocalQuadratic",
    "ScoreDelta",
    "local_loss",
    "assemble_quadratic",
    "quad_value_grad",
    "excess_loss",
    "score_error_field",
    "basis_derivative_columns",
    "log_base_derivatives",
]


@dataclass(frozen=True)
class LocalQuadratic:
    """Empirical local loss at `vertex` as an exact quadratic in theta_{K_i}."""

    vertex: int
    active: tuple[int, ...]
    H: np.ndarray
    b: np.ndarray
    c0: float

    def __post_init__(self) -> None:
        m = len(self.active)
        H = np.asarray(self.H, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if H.shape != (m, m):
            raise ValueError(f"H shape {H.shape}, expected ({m}, {m})")
        if b.shape != (m,):
            raise ValueError(f"b shape {b.shape}, expected ({m},)")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c0", float(self.c0))

    def to_json(self) -> str:
        return json.dumps(
            {
                "vertex": self.vertex,
                "active": list(self.active),
                "H": [float(v) for v in self.H.ravel()],
                "b": [float(v) for v in self.b],
                "c0": self.c0,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "LocalQuadratic":
        doc = json.loads(text)
        m = len(doc["active"])
        return cls(
            vertex=int(doc["vertex"]),
            active=tuple(int(k) for k in doc["active"]),
            H=np.asarray(doc["H"], dtype=float).reshape(m, m),
            b=np.asarray(doc["b"], dtype=float),
            c0=float(doc["c0"]),
        )


@dataclass(frozen=True)
class ScoreDelta:
    """A coefficient perturbation restricted to the factors of one vertex."""

    vertex: int
    active: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.active),):
            raise ValueError(f"delta shape {v.shape} for {len(self.active)} factors")
        if not np.all(np.isfinite(v)):
            raise ValueError("delta entries must be finite")
        object.__setattr__(self, "values", v)


def basis_derivative_columns(
    family: Family, i: int, X: np.ndarray, active: tuple[int, ...] | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """First and second x_i-derivatives of the active factors over a batch.

    X is (M, n); returns (D1, D2), each (M, |active|).  Default active set
    is K_i in family order.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != family.n:
        raise ValueError(f"batch has {X.shape[1]} columns, family has n={family.n}")
    if active is None:
        active = family.factors_containing(i)
    M = X.shape[0]
    D1 = np.empty((M, len(active)))
    D2 = np.empty((M, len(active)))
    for col, k in enumerate(active):
        f = family.factors[k]
        ki = f.degree_of(i)
        if ki == 0:
            raise ValueError(f"factor {k} does not contain variable {i}")
        rest = np.ones(M)
        for v, dv in f.exponents:
            if v != i:
                rest *= X[:, v] ** dv
        D1[:, col] = ki * X[:, i] ** (ki - 1) * rest
        if ki >= 2:
            D2[:, col] = ki * (ki - 1) * X[:, i] ** (ki - 2) * rest
        else:
            D2[:, col] = 0.0
    return D1, D2


def log_base_derivatives(family: Family, i: int, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(d/dx_i log h, d^2/dx_i^2 log h) columns for h = exp(-sum x^p)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    p = family.base_exponent
    if p == 0:
        z = np.zeros(X.shape[0])
        return z, z.copy()
    g1 = -p * X[:, i] ** (p - 1)
    if p >= 2:
        g2 = -p * (p - 1) * X[:, i] ** (p - 2)
    else:
        g2 = np.zeros(X.shape[0])
    return g1, g2


def local_loss(family: Family, theta: np.ndarray, i: int, x: np.ndarray) -> float:
    """The local loss of a single sample at vertex i."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (len(family.factors),):
        raise ValueError("theta must have one entry per family factor")
    x = np.asarray(x, dtype=float).reshape(1, -1)
    active = family.factors_containing(i)
    D1, D2 = basis_derivative_columns(family, i, x, active)
    g1, g2 = log_base_derivatives(family, i, x)
    th = theta[list(active)]
    score = g1[0] + D1[0] @ th
    curv = g2[0] + D2[0] @ th
    return float(curv + 0.5 * score**2)


def assemble_quadratic(
    family: Family,
    i: int,
    X: np.ndarray,
    active: tuple[int, ...] | None = None,
) -> LocalQuadratic:
    """Exact quadratic form of the batch-averaged local loss at vertex i.

    H_{k,k'} = mean d_i f_k d_i f_k';  b_k = mean [d_i^2 f_k + d_i log h d_i f_k];
    c0 = mean [d_i^2 log h + 1/2 (d_i log h)^2].
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if active is None:
        active = family.factors_containing(i)
    D1, D2 = basis_derivative_columns(family, i, X, active)
    g1, g2 = log_base_derivatives(family, i, X)
    M = X.shape[0]
    H = D1.T @ D1 / M
    H = 0.5 * (H + H.T)
    b = (D2 + g1[:, None] * D1).mean(axis=0)
    c0 = float((g2 + 0.5 * g1**2).mean())
    return LocalQuadratic(vertex=i, active=tuple(active), H=H, b=b, c0=c0)


def quad_value_grad(
    quad: LocalQuadratic, theta_active: np.ndarray
) -> tuple[float, np.ndarray]:
    """Value c0 + b.t + t.H.t/2 and gradient b + H.t at an active-set point."""
    t = np.asarray(theta_active, dtype=float)
    if t.shape != quad.b.shape:
        raise ValueError(f"theta shape {t.shape}, expected {quad.b.shape}")
    Ht = quad.H @ t
    value = quad.c0 + quad.b @ t + 0.5 * t @ Ht
    return float(value), quad.b + Ht


def excess_loss(quad: LocalQuadratic, delta: ScoreDelta) -> float:
    """Curvature term 1/2 delta^T H delta of the empirical loss."""
    if delta.values.shape != quad.b.shape:
        raise ValueError("delta size does not match the quadratic's active set")
    d = delta.values
    return float(0.5 * d @ quad.H @ d)


def score_error_field(
    family: Family, i: int, delta: ScoreDelta, x: np.ndarray
) -> float:
    """sum_k delta_k d_i f_k(x): the coordinate-i score error of perturbation delta."""
    vals = score_error_field_batch(family, i, delta, np.asarray(x, float).reshape(1, -1))
    return float(vals[0])


def score_error_field_batch(
    family: Family, i: int, delta: ScoreDelta, X: np.ndarray
) -> np.ndarray:
    D1, _ = basis_derivative_columns(family, i, X, delta.active)
    return D1 @ delta.values
