"""Part maps, induced first-order operators and their algebraic predicates.

A part map A sends an m x n matrix X (flattened row-major) to A[X] in R^N.
It induces the operator  u -> A[Du]  with coefficient matrices
A_i v = A[v (x) e_i].  This module decides ellipticity (real symbol
injective), C-ellipticity (complex symbol injective), cancellation,
Ornstein-type factorization and builds the almost complementary part
decomposition  X - L(A[X]) = gamma(X) G  in two dimensions.
"""
from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize, minimize_scalar

log = logging.getLogger(__name__)

RANK_RTOL = 1e-9


class NotCEllipticError(ValueError):
    """Raised when a construction needs C-ellipticity and it fails."""


# ---------------------------------------------------------------------------
# part maps


@dataclass(frozen=True)
class PartMap:
    m: int
    n: int
    N: int
    matrix: np.ndarray
    name: Optional[str] = None

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=float)
        if mat.shape != (self.N, self.m * self.n):
            raise ValueError(
                f"matrix shape {mat.shape} != ({self.N}, {self.m * self.n})")
        if not np.all(np.isfinite(mat)):
            raise ValueError("matrix has non-finite entries")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X)
        return self.matrix @ X.reshape(self.m * self.n)

    def apply_field(self, data: np.ndarray) -> np.ndarray:
        """Pointwise action on an array of shape (m, n, *grid)."""
        flat = data.reshape((self.m * self.n,) + data.shape[2:])
        return np.tensordot(self.matrix, flat, axes=(1, 0))

    def to_dict(self) -> dict:
        return {"m": self.m, "n": self.n, "N": self.N,
                "matrix": self.matrix.tolist(), "name": self.name}

    @classmethod
    def from_dict(cls, d: dict) -> "PartMap":
        mat = np.asarray(d["matrix"], dtype=float)
        n = int(d["n"])
        m = int(d.get("m", n))
        N = int(d.get("N", mat.shape[0]))
        return cls(m=m, n=n, N=N, matrix=mat, name=d.get("name"))

    @classmethod
    def from_json(cls, path) -> "PartMap":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _from_function(fn, n: int, name: str) -> PartMap:
    cols = []
    for k in range(n * n):
        E = np.zeros(n * n)
        E[k] = 1.0
        cols.append(np.asarray(fn(E.reshape(n, n)), dtype=float).reshape(-1))
    return PartMap(m=n, n=n, N=n * n, matrix=np.stack(cols, axis=1), name=name)


def _sym(X):
    return 0.5 * (X + X.T)


def _skew(X):
    return 0.5 * (X - X.T)


def _dev(X):
    n = X.shape[0]
    return X - np.trace(X) / n * np.eye(n)


CATALOGUE_NAMES = ("grad", "dev_grad", "sym", "dev_sym", "skew", "trace",
                   "skew_plus_trace", "identity", "dev", "zero")


def catalogue(name: str, n: int = 2, mu_c: float = 1.0,
              kappa: float = 1.0) -> PartMap:
    """Named part maps on n x n matrices.

    ``grad`` and ``identity`` are the same map (they induce the full
    gradient); likewise ``dev_grad`` and ``dev``.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    name, mu_c, kappa = _parse_name(name, mu_c, kappa)
    if name in ("grad", "identity"):
        fn = lambda X: X
    elif name in ("dev_grad", "dev"):
        fn = _dev
    elif name == "sym":
        fn = _sym
    elif name == "dev_sym":
        fn = lambda X: _dev(_sym(X))
    elif name == "skew":
        fn = _skew
    elif name == "trace":
        fn = lambda X: np.trace(X) / n * np.eye(n)
    elif name == "skew_plus_trace":
        if mu_c == 0 or kappa == 0:
            raise ValueError("skew_plus_trace needs mu_c != 0 and kappa != 0")
        fn = lambda X: mu_c * _skew(X) + kappa / n * np.trace(X) * np.eye(n)
    elif name == "zero":
        fn = lambda X: np.zeros_like(X)
    else:
        raise KeyError(f"unknown part map {name!r}")
    label = name
    if name == "skew_plus_trace":
        label = f"skew_plus_trace({mu_c:g},{kappa:g})"
    return _from_function(fn, n, label)


def _parse_name(name, mu_c, kappa):
    # accepts "skew_plus_trace(2,0.5)" as well as the bare name
    mt = re.fullmatch(r"\s*(\w+)\s*(?:\(([^)]*)\))?\s*", name)
    if not mt:
        raise KeyError(f"unknown part map {name!r}")
    base, args = mt.group(1), mt.group(2)
    if args is not None:
        if base != "skew_plus_trace":
            raise KeyError(f"{base!r} takes no parameters")
        parts = [s for s in args.split(",") if s.strip()]
        if len(parts) != 2:
            raise ValueError("skew_plus_trace(mu_c, kappa) needs two numbers")
        mu_c, kappa = float(parts[0]), float(parts[1])
    return base, mu_c, kappa


# ---------------------------------------------------------------------------
# induced operator and symbol


@dataclass(frozen=True)
class DiffOperator:
    coeffs: tuple
    gradient_coeffs: tuple
    source: PartMap

    @property
    def n(self) -> int:
        return self.source.n

    @property
    def m(self) -> int:
        return self.source.m

    @property
    def N(self) -> int:
        return self.source.N

    def stacked(self) -> np.ndarray:
        """[A_1 | ... | A_n], shape N x (n m)."""
        return np.hstack(self.coeffs)

    def norm(self) -> float:
        return float(np.linalg.norm(self.source.matrix, 2))


def _outer_flat(v, xi) -> np.ndarray:
    return np.outer(v, xi).reshape(-1)


def induce_operator(A: PartMap) -> DiffOperator:
    m, n = A.m, A.n
    coeffs, grads = [], []
    for i in range(n):
        e_i = np.eye(n)[i]
        Ei = np.stack([_outer_flat(np.eye(m)[j], e_i) for j in range(m)],
                      axis=1)
        grads.append(Ei)
        coeffs.append(A.matrix @ Ei)
    return DiffOperator(coeffs=tuple(coeffs), gradient_coeffs=tuple(grads),
                        source=A)


@dataclass(frozen=True)
class SymbolMap:
    xi: np.ndarray
    matrix: np.ndarray


def symbol(op: DiffOperator, xi) -> SymbolMap:
    xi = np.asarray(xi)
    if xi.shape != (op.n,):
        raise ValueError(f"xi must have length {op.n}, got shape {xi.shape}")
    mat = sum(xi[i] * op.coeffs[i] for i in range(op.n))
    return SymbolMap(xi=xi, matrix=np.asarray(mat))


def _symbol_batch(op: DiffOperator, xis: np.ndarray) -> np.ndarray:
    C = np.stack(op.coeffs)  # (n, N, m)
    return np.einsum("ki,iab->kab", xis, C)


def pure_tensor(op: DiffOperator, v, xi) -> np.ndarray:
    """v (x)_A xi = A[xi] v = A[v (x) xi]."""
    return op.source(np.outer(v, xi))


def pure_tensor_span_dim(op: DiffOperator) -> int:
    tensors = np.stack([pure_tensor(op, np.eye(op.m)[i], np.eye(op.n)[j])
                        for i in range(op.m) for j in range(op.n)], axis=1)
    return _rank(tensors)


def _rank(M: np.ndarray, rtol: float = RANK_RTOL) -> int:
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def _sigma_min(mats: np.ndarray) -> np.ndarray:
    """Smallest singular value of each N x m matrix (0 when N < m)."""
    s = np.linalg.svd(mats, compute_uv=False)
    m = mats.shape[-1]
    if s.shape[-1] < m:
        return np.zeros(mats.shape[:-2])
    return s[..., -1]


def _kernel_vector(M: np.ndarray) -> np.ndarray:
    _, _, vh = np.linalg.svd(M)
    return vh[-1].conj()


# ---------------------------------------------------------------------------
# ellipticity


@dataclass(frozen=True)
class EllipticityCertificate:
    verdict: str  # "Elliptic" | "NotElliptic"
    min_sigma: float
    tolerance: float  # absolute threshold on sigma_min
    xi_min: np.ndarray  # direction where min_sigma was attained
    witness: Optional[tuple] = None  # (xi, v) for NotElliptic

    @property
    def elliptic(self) -> bool:
        return self.verdict == "Elliptic"

    def witness_residual(self, op: DiffOperator) -> float:
        if self.witness is None:
            return 0.0
        xi, v = self.witness
        r = symbol(op, xi).matrix @ v
        return float(np.linalg.norm(r) / (np.linalg.norm(xi) * np.linalg.norm(v)))

    def to_dict(self) -> dict:
        d = {"verdict": self.verdict, "min_sigma": self.min_sigma,
             "tolerance": self.tolerance, "xi_min": self.xi_min.tolist()}
        if self.witness is not None:
            d["witness"] = {"xi": self.witness[0].tolist(),
                            "v": self.witness[1].tolist()}
        return d


def _fibonacci_sphere(k: int) -> np.ndarray:
    i = np.arange(k) + 0.5
    z = 1 - 2 * i / k
    r = np.sqrt(1 - z * z)
    phi = math.pi * (3 - math.sqrt(5)) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _sphere_samples(n: int, k: int, seed: int = 0) -> np.ndarray:
    if n == 3:
        return _fibonacci_sphere(k)
    g = np.random.default_rng(seed).standard_normal((k, n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    # coordinate axes and diagonals are cheap and often extremal
    extra = np.vstack([np.eye(n), np.ones((1, n)) / math.sqrt(n)])
    return np.vstack([extra, g])


def is_elliptic(op: DiffOperator, tol: float = 1e-8, samples: int = 10_000,
                seed: int = 0) -> EllipticityCertificate:
    n = op.n
    scale = op.norm()
    abs_tol = tol * scale if scale > 0 else tol
    if scale == 0:
        xi = np.eye(n)[0]
        return EllipticityCertificate("NotElliptic", 0.0, abs_tol, xi,
                                      witness=(xi, np.eye(op.m)[0]))

    def smin(xi):
        xi = np.asarray(xi, dtype=float)
        return float(_sigma_min(symbol(op, xi / np.linalg.norm(xi)).matrix[None])[0])

    if n == 2:
        theta = np.linspace(0.0, math.pi, 720, endpoint=False)
        xis = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        vals = _sigma_min(_symbol_batch(op, xis))
        k = int(np.argmin(vals))
        best_t, best = theta[k], float(vals[k])
        h = math.pi / 720
        res = minimize_scalar(lambda t: smin([math.cos(t), math.sin(t)]),
                              bounds=(best_t - h, best_t + h), method="bounded",
                              options={"xatol": 1e-12})
        if res.fun < best:
            best_t, best = float(res.x), float(res.fun)
        xi_min = np.array([math.cos(best_t), math.sin(best_t)])
    else:
        xis = _sphere_samples(n, max(samples, 10_000), seed)
        vals = _sigma_min(_symbol_batch(op, xis))
        k = int(np.argmin(vals))
        xi_min, best = xis[k], float(vals[k])
        res = minimize(smin, xi_min, method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000})
        if res.fun < best:
            xi_min, best = res.x / np.linalg.norm(res.x), float(res.fun)

    if best > abs_tol:
        return EllipticityCertificate("Elliptic", best, abs_tol, xi_min)
    v = _kernel_vector(symbol(op, xi_min).matrix)
    return EllipticityCertificate("NotElliptic", best, abs_tol, xi_min,
                                  witness=(xi_min, np.real(v)))


# ---------------------------------------------------------------------------
# C-ellipticity


@dataclass(frozen=True)
class CEllipticityCertificate:
    verdict: str  # "CElliptic" | "NotCElliptic"
    span_dim: int
    tolerance: float
    nullvector_witness: Optional[tuple] = None  # (xi, v), complex
    heuristic: bool = False

    @property
    def c_elliptic(self) -> bool:
        return self.verdict == "CElliptic"

    def parts(self):
        """(Re xi, Im xi, Re v, Im v) of the witness."""
        xi, v = self.nullvector_witness
        return np.real(xi), np.imag(xi), np.real(v), np.imag(v)

    def telephone_residual(self, op: DiffOperator) -> float:
        """Residual of the real form of A[xi]v = 0, relative to |xi||v|."""
        if self.nullvector_witness is None:
            return 0.0
        rx, ix, rv, iv = self.parts()
        Ar = symbol(op, rx).matrix
        Ai = symbol(op, ix).matrix
        r1 = Ar @ rv - Ai @ iv
        r2 = Ai @ rv + Ar @ iv
        xi, v = self.nullvector_witness
        den = np.linalg.norm(xi) * np.linalg.norm(v)
        return float(max(np.linalg.norm(r1), np.linalg.norm(r2)) / den)

    def to_dict(self) -> dict:
        d = {"verdict": self.verdict, "span_dim": self.span_dim,
             "tolerance": self.tolerance, "heuristic": self.heuristic}
        if self.nullvector_witness is not None:
            rx, ix, rv, iv = self.parts()
            d["witness"] = {"re_xi": rx.tolist(), "im_xi": ix.tolist(),
                            "re_v": rv.tolist(), "im_v": iv.tolist()}
        return d


def _normalize_witness(xi, v):
    k = int(np.argmax(np.abs(v) > 1e-8 * np.max(np.abs(v))))
    v = v / v[k]
    return np.asarray(xi, dtype=complex), v


def _pencil_witness(op: DiffOperator, abs_tol: float):
    """Complex (xi, v) with A[xi] v = 0 for n = 2, m = 2, or None."""
    A1, A2 = op.coeffs
    candidates = []
    M2 = A2.astype(complex)
    if _sigma_min(A2[None])[0] <= abs_tol:
        candidates.append(np.array([0.0, 1.0], dtype=complex))
    # det of rows (r, s) of A1 + t A2 is c0 + c1 t + c2 t^2
    best, best_norm = None, 0.0
    N = A1.shape[0]
    for r in range(N):
        for s in range(r + 1, N):
            a, b = A1[[r, s]], A2[[r, s]]
            c2 = b[0, 0] * b[1, 1] - b[0, 1] * b[1, 0]
            c1 = (a[0, 0] * b[1, 1] + b[0, 0] * a[1, 1]
                  - a[0, 1] * b[1, 0] - b[0, 1] * a[1, 0])
            c0 = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
            coef = np.array([c2, c1, c0])
            nrm = np.linalg.norm(coef)
            if nrm > best_norm:
                best, best_norm = coef, nrm
    if best is not None:
        coef = best
        while coef.size > 1 and abs(coef[0]) <= 1e-14 * best_norm:
            coef = coef[1:]
        if coef.size > 1:
            roots = sorted(np.roots(coef), key=lambda t: -t.imag)
            candidates += [np.array([1.0, t], dtype=complex) for t in roots]
    for xi in candidates:
        M = symbol(op, xi).matrix
        s = np.linalg.svd(M, compute_uv=False)
        if s[-1] <= abs_tol * np.linalg.norm(xi):
            return _normalize_witness(xi, _kernel_vector(M))
    return None


def _complex_search(op: DiffOperator, abs_tol: float, starts: int = 24,
                    seed: int = 0):
    """Randomized local minimization of sigma_min(A[xi]) over unit xi in C^n.

    Minimizes the smallest eigenvalue of A[xi]^H A[xi] / |xi|^2 with its
    analytic gradient in the real coordinates (Re xi, Im xi).
    """
    n = op.n
    C = np.stack(op.coeffs).astype(complex)
    rng = np.random.default_rng(seed)

    def f(z):
        xi = z[:n] + 1j * z[n:]
        s2 = float(z @ z)
        M = np.tensordot(xi, C, axes=1)
        w, V = np.linalg.eigh(M.conj().T @ M)
        lam, v = w[0], V[:, 0]
        Mv = M @ v
        t = np.array([np.vdot(Mv, C[k] @ v) for k in range(n)])
        glam = np.concatenate([2 * t.real, -2 * t.imag])
        return lam / s2, (glam * s2 - lam * 2 * z) / s2 ** 2

    best_val, best_xi = np.inf, None
    for _ in range(starts):
        z0 = rng.standard_normal(2 * n)
        res = minimize(f, z0, jac=True, method="L-BFGS-B",
                       options={"ftol": 1e-30, "gtol": 1e-14, "maxiter": 500})
        val = math.sqrt(max(res.fun, 0.0))
        if val < best_val:
            best_val = val
            best_xi = res.x[:n] + 1j * res.x[n:]
            best_xi = best_xi / np.linalg.norm(best_xi)
        if best_val <= abs_tol:
            break
    return best_val, best_xi


def is_c_elliptic(op: DiffOperator, tol: float = 1e-8) -> CEllipticityCertificate:
    span = pure_tensor_span_dim(op)
    ell = is_elliptic(op, tol)
    if not ell.elliptic:
        xi, v = ell.witness
        return CEllipticityCertificate(
            "NotCElliptic", span, ell.tolerance,
            nullvector_witness=(xi.astype(complex), v.astype(complex)),
            heuristic=op.n != 2)
    abs_tol = ell.tolerance
    if op.n == 2:
        if span in (3, 4):
            return CEllipticityCertificate("CElliptic", span, abs_tol)
        w = _pencil_witness(op, abs_tol) if op.m == 2 else None
        if w is None:
            val, xi = _complex_search(op, abs_tol)
            if val > abs_tol:
                raise RuntimeError("no complex nullvector located although the "
                                   f"pure tensor span has dimension {span}")
            w = _normalize_witness(xi, _kernel_vector(symbol(op, xi).matrix))
        return CEllipticityCertificate("NotCElliptic", span, abs_tol,
                                       nullvector_witness=w)
    # n >= 3: heuristic search, looser acceptance
    heur_tol = max(abs_tol, 1e-7 * op.norm())
    val, xi = _complex_search(op, heur_tol)
    if val <= heur_tol:
        w = _normalize_witness(xi, _kernel_vector(symbol(op, xi).matrix))
        return CEllipticityCertificate("NotCElliptic", span, heur_tol,
                                       nullvector_witness=w, heuristic=True)
    return CEllipticityCertificate("CElliptic", span, heur_tol, heuristic=True)


# ---------------------------------------------------------------------------
# cancellation


def is_cancelling(op: DiffOperator, tol: float = 1e-8, samples: int = 360) -> bool:
    """True iff the images A[xi](R^m), xi on the unit circle, meet only in 0."""
    if op.n != 2:
        raise ValueError("is_cancelling is implemented for n = 2")
    Q = np.eye(op.N)
    theta = np.linspace(0.0, math.pi, samples, endpoint=False)
    for t in theta:
        B = symbol(op, np.array([math.cos(t), math.sin(t)])).matrix
        U, s, _ = np.linalg.svd(B, full_matrices=False)
        r = int(np.sum(s > RANK_RTOL * s[0])) if s.size and s[0] > 0 else 0
        U = U[:, :r]
        R = Q - U @ (U.T @ Q)
        _, sr, vh = np.linalg.svd(R)
        sr = np.concatenate([sr, np.zeros(Q.shape[1] - sr.size)])
        keep = sr <= max(tol, RANK_RTOL)
        Q = Q @ vh[keep].T
        if Q.shape[1] == 0:
            return True
        Q, _ = np.linalg.qr(Q)
    return False


# ---------------------------------------------------------------------------
# factorization E_i = L A_i


def factorization_residual(op: DiffOperator):
    """Least-squares L with L [A_1|..|A_n] ~ [E_1|..|E_n] and its spectral residual."""
    A = op.stacked()
    E = np.hstack(op.gradient_coeffs)
    L = E @ np.linalg.pinv(A, rcond=RANK_RTOL)
    res = float(np.linalg.norm(L @ A - E, 2))
    return L, res


def factor_through(op: DiffOperator, tol: float = 1e-10):
    L, res = factorization_residual(op)
    return L if res <= tol else None


# ---------------------------------------------------------------------------
# almost complementary part


@dataclass(frozen=True)
class ACPDecomposition:
    L: np.ndarray  # (4, N), acts on A-values
    G: np.ndarray  # 2 x 2
    gamma: np.ndarray  # 4-vector on row-major X
    span_dim: int
    dependent_index: Optional[tuple] = None  # 1-based (i0, j0)
    coefficients: dict = field(default_factory=dict)  # a_ij, 1-based keys

    def residual(self, A: PartMap, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        rec = (self.L @ A(X)).reshape(2, 2)
        return X - rec - float(self.gamma @ X.reshape(-1)) * self.G

    def to_dict(self) -> dict:
        d = {"L": self.L.tolist(), "G": self.G.tolist(),
             "gamma": self.gamma.tolist(), "span_dim": self.span_dim}
        if self.dependent_index is not None:
            d["dependent_index"] = list(self.dependent_index)
            d["coefficients"] = {f"a{i}{j}": c
                                 for (i, j), c in self.coefficients.items()}
        return d


# (2,1) first, then the rest lexicographically
_ACP_ORDER = ((1, 0), (0, 0), (0, 1), (1, 1))


def almost_complementary(op: DiffOperator, tol: float = 1e-10) -> ACPDecomposition:
    if op.n != 2 or op.m != 2:
        raise ValueError("almost complementary part needs 2 x 2 matrices")
    cert = is_c_elliptic(op)
    if not cert.c_elliptic:
        raise NotCEllipticError(
            f"{op.source.name or 'operator'} is not C-elliptic; no almost "
            "complementary part exists")
    idx = [(i, j) for i in range(2) for j in range(2)]
    T = {ij: pure_tensor(op, np.eye(2)[ij[0]], np.eye(2)[ij[1]]) for ij in idx}
    E = {ij: np.outer(np.eye(2)[ij[0]], np.eye(2)[ij[1]]) for ij in idx}
    span = cert.span_dim

    if span == 4:
        G = np.eye(2)
        Tm = np.stack([T[ij] for ij in idx], axis=1)
        targets = np.stack([(E[ij] - G).reshape(-1) for ij in idx], axis=1)
        L = targets @ np.linalg.pinv(Tm)
        acp = ACPDecomposition(L=L, G=G, gamma=np.ones(4), span_dim=4)
    else:
        acp = None
        scale = max(np.linalg.norm(T[ij]) for ij in idx)
        for i0j0 in _ACP_ORDER:
            others = [ij for ij in idx if ij != i0j0]
            To = np.stack([T[ij] for ij in others], axis=1)
            if _rank(To) < 3:
                continue
            a, *_ = np.linalg.lstsq(To, T[i0j0], rcond=None)
            res = np.linalg.norm(To @ a - T[i0j0]) / scale
            if res > tol:
                continue
            G = E[i0j0] - sum(c * E[ij] for c, ij in zip(a, others))
            if abs(np.linalg.det(G)) < 1e-8:
                continue
            targets = np.stack([E[ij].reshape(-1) for ij in others], axis=1)
            # pinv sends the orthogonal complement of the span to zero
            L = targets @ np.linalg.pinv(To)
            gamma = E[i0j0].reshape(-1).astype(float)
            coeffs = {(ij[0] + 1, ij[1] + 1): float(c) for c, ij in zip(a, others)}
            acp = ACPDecomposition(L=L, G=G, gamma=gamma, span_dim=span,
                                   dependent_index=(i0j0[0] + 1, i0j0[1] + 1),
                                   coefficients=coeffs)
            break
        if acp is None:
            raise RuntimeError("no admissible dependency pattern found")

    _check_acp(acp, op.source)
    return acp


def _check_acp(acp: ACPDecomposition, A: PartMap, samples: int = 100,
               seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    Xs = list(np.eye(4).reshape(4, 2, 2)) + list(rng.standard_normal((samples, 2, 2)))
    worst = 0.0
    for X in Xs:
        r = np.linalg.norm(acp.residual(A, X)) / np.linalg.norm(X)
        worst = max(worst, r)
    if worst > 1e-10:
        raise RuntimeError(f"almost complementary part check failed: {worst:.3e}")
    return worst


def acp_check_residual(acp: ACPDecomposition, A: PartMap, samples: int = 100,
                       seed: int = 0) -> float:
    return _check_acp(acp, A, samples, seed)


# ---------------------------------------------------------------------------
# bundled classification


def classify(A: PartMap, tol: float = 1e-8) -> dict:
    op = induce_operator(A)
    ell = is_elliptic(op, tol)
    cel = is_c_elliptic(op, tol)
    out = {
        "operator": A.name,
        "n": A.n,
        "elliptic": ell.elliptic,
        "c_elliptic": cel.c_elliptic,
        "c_elliptic_heuristic": cel.heuristic,
        "span_dim": pure_tensor_span_dim(op),
        "ellipticity": ell.to_dict(),
        "c_ellipticity": cel.to_dict(),
    }
    if A.n == 2:
        out["cancelling"] = is_cancelling(op, tol)
    L, res = factorization_residual(op)
    out["factorizes"] = res <= 1e-10
    out["factorization_residual"] = res
    return out
