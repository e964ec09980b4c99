"""Generalized cross product in n dimensions and its matrix form.

The product a x_n b of two n-vectors is an n(n-1)/2 vector, defined
recursively from the planar determinant a1*b2 - a2*b1.  Arrays may carry
trailing axes (the component index is always axis 0), so the same code
acts on single vectors and on whole grids of Fourier wave vectors.

For n = 3 the result is (c3, -c2, c1) where c is the classical cross
product, i.e. a signed permutation of it with the same length.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def cross_dim(n: int) -> int:
    """Number of components of a x_n b."""
    return n * (n - 1) // 2


def cross_product(a, b) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    n = a.shape[0]
    if n < 2:
        raise ValueError("cross product needs n >= 2")
    if n == 2:
        return (a[0] * b[1] - a[1] * b[0])[None, ...]
    head = cross_product(a[:-1], b[:-1])
    tail = b[-1] * a[:-1] - a[-1] * b[:-1]
    return np.concatenate([head, tail], axis=0)


@dataclass(frozen=True)
class CrossMatrix:
    """The matrix [[a]]_n with [[a]]_n b = a x_n b."""

    a: np.ndarray
    matrix: np.ndarray

    def apply(self, b) -> np.ndarray:
        return self.matrix @ np.asarray(b)


def cross_matrix(a) -> CrossMatrix:
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if n < 2:
        raise ValueError("cross matrix needs n >= 2")
    cols = [cross_product(a, e) for e in np.eye(n)]
    return CrossMatrix(a=a.copy(), matrix=np.stack(cols, axis=1))


def cross_matrix_field(k: np.ndarray) -> np.ndarray:
    """Stack of [[k]]_n for k with shape (n, ...); output (n(n-1)/2, n, ...).

    Column j is k x_n e_j, so entries are linear in k and the construction
    works for complex-valued or gridded k as well.
    """
    k = np.asarray(k)
    n = k.shape[0]
    cols = []
    for j in range(n):
        e = np.zeros((n,) + (1,) * (k.ndim - 1))
        e[j] = 1.0
        cols.append(cross_product(k, np.broadcast_to(e, k.shape)))
    return np.stack(cols, axis=1)


def area_property_check(v, xi) -> float:
    """| |v x xi|^2 - (|v|^2 |xi|^2 - <v,xi>^2) |."""
    v = np.asarray(v, dtype=float)
    xi = np.asarray(xi, dtype=float)
    c = cross_product(v, xi)
    lhs = float(np.dot(c, c))
    rhs = float(np.dot(v, v) * np.dot(xi, xi) - np.dot(v, xi) ** 2)
    return abs(lhs - rhs)


def classical_to_generalized(c) -> np.ndarray:
    """Map a classical 3D cross product to the ordering used here."""
    c = np.asarray(c)
    return np.array([c[2], -c[1], c[0]])
