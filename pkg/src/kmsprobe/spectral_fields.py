"""Periodic-grid fields with spectral calculus.

Fields live on the torus [-L/2, L/2)^n sampled at N points per axis, the
origin sitting at index N/2.  Component axes come first in ``data``, the
n grid axes last.  All derivatives are Fourier multipliers i*k with the
Nyquist wavenumber set to zero, and the Laplacian is built from the same
multipliers, so discrete identities such as div curl = 0 or
Delta = grad div + [[grad]]^T curl hold to rounding error.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft
from scipy.integrate import cumulative_simpson

from .tensor_calculus import cross_dim, cross_matrix_field, cross_product

DEFAULT_GRID_MAX = 2 ** 25


class NonZeroMeanError(ValueError):
    pass


def grid_max() -> int:
    """Largest admissible number of grid points (env KMS_GRID_MAX)."""
    raw = os.environ.get("KMS_GRID_MAX")
    return int(float(raw)) if raw else DEFAULT_GRID_MAX


@dataclass(frozen=True)
class Grid:
    n: int
    N: int
    L: float = 2 * math.pi

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.N < 8 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two >= 8, got {self.N}")
        if self.L <= 0:
            raise ValueError("L must be positive")
        if self.N ** self.n > grid_max():
            raise MemoryError(
                f"{self.N}^{self.n} grid points exceed the cap {grid_max()} "
                "(raise KMS_GRID_MAX to allow it)")

    @property
    def h(self) -> float:
        return self.L / self.N

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.n

    @property
    def volume(self) -> float:
        return self.L ** self.n

    @property
    def cell(self) -> float:
        return self.h ** self.n

    def axis(self) -> np.ndarray:
        return (np.arange(self.N) - self.N // 2) * self.h

    def coords(self) -> list:
        """Sparse coordinate arrays x_1..x_n, broadcastable to the grid."""
        x = self.axis()
        out = []
        for j in range(self.n):
            s = [1] * self.n
            s[j] = self.N
            out.append(x.reshape(s))
        return out

    def radius(self) -> np.ndarray:
        r2 = sum(c * c for c in self.coords())
        return np.sqrt(r2)

    # Fourier side uses rfftn layout: full axes first, half last axis.
    def _kvec(self, j: int, nyquist: bool) -> np.ndarray:
        scale = 2 * math.pi / self.L
        if j == self.n - 1:
            k = np.arange(self.N // 2 + 1) * scale
            if not nyquist:
                k[-1] = 0.0
        else:
            k = sfft.fftfreq(self.N, 1.0 / self.N) * scale
            if not nyquist:
                k[self.N // 2] = 0.0
        s = [1] * self.n
        s[j] = k.size
        return k.reshape(s)

    def wavenumbers(self, nyquist: bool = False) -> list:
        """Physical wavenumbers 2 pi k / L per axis (Nyquist zeroed unless asked)."""
        return [self._kvec(j, nyquist) for j in range(self.n)]

    def k_squared(self, nyquist: bool = False) -> np.ndarray:
        return sum(k * k for k in self.wavenumbers(nyquist))

    @property
    def spectral_shape(self) -> tuple:
        return (self.N,) * (self.n - 1) + (self.N // 2 + 1,)


@dataclass(frozen=True)
class PeriodicField:
    grid: Grid
    shape: tuple
    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=float)
        want = tuple(self.shape) + self.grid.shape
        if d.shape != want:
            raise ValueError(f"data shape {d.shape} != {want}")
        if not np.all(np.isfinite(d)):
            raise ValueError("field has non-finite samples")
        object.__setattr__(self, "shape", tuple(self.shape))
        object.__setattr__(self, "data", d)

    @property
    def ncomp(self) -> int:
        return int(np.prod(self.shape)) if self.shape else 1

    def __add__(self, other):
        return PeriodicField(self.grid, self.shape, self.data + other.data)

    def __sub__(self, other):
        return PeriodicField(self.grid, self.shape, self.data - other.data)

    def scale(self, alpha: float) -> "PeriodicField":
        return PeriodicField(self.grid, self.shape, alpha * self.data)

    def component(self, *idx) -> "PeriodicField":
        return PeriodicField(self.grid, (), self.data[idx])

    def sup(self) -> float:
        return float(np.max(pointwise_norm(self)))

    def hat(self) -> np.ndarray:
        return _fwd(self.data, self.grid.n)


def _fwd(data: np.ndarray, n: int) -> np.ndarray:
    return sfft.rfftn(data, axes=tuple(range(-n, 0)))


def _inv(data_hat: np.ndarray, grid: Grid) -> np.ndarray:
    return sfft.irfftn(data_hat, s=grid.shape, axes=tuple(range(-grid.n, 0)))


def from_hat(grid: Grid, shape: tuple, data_hat: np.ndarray) -> PeriodicField:
    return PeriodicField(grid, shape, _inv(data_hat, grid))


def scalar(grid: Grid, values) -> PeriodicField:
    return PeriodicField(grid, (), np.broadcast_to(values, grid.shape))


def stack(fields, shape=None) -> PeriodicField:
    g = fields[0].grid
    data = np.stack([f.data for f in fields])
    if shape is not None:
        data = data.reshape(tuple(shape) + g.shape)
    return PeriodicField(g, tuple(shape) if shape else (len(fields),), data)


def roundtrip_error(f: PeriodicField) -> float:
    back = _inv(f.hat(), f.grid)
    return float(np.max(np.abs(back - f.data)))


# ---------------------------------------------------------------------------
# differential operators


def derivative(f: PeriodicField, axis: int) -> PeriodicField:
    g = f.grid
    if not 0 <= axis < g.n:
        raise ValueError(f"axis {axis} out of range for n={g.n}")
    k = g.wavenumbers()[axis]
    return from_hat(g, f.shape, 1j * k * f.hat())


def gradient(f: PeriodicField) -> PeriodicField:
    """Appends a derivative axis: (Du)_{..., j} = d_j u_{...}."""
    g = f.grid
    fh = f.hat()
    parts = [_inv(1j * k * fh, g) for k in g.wavenumbers()]
    data = np.stack(parts, axis=len(f.shape))
    return PeriodicField(g, f.shape + (g.n,), data)


def divergence(a: PeriodicField) -> PeriodicField:
    """Contracts the last component axis (row-wise for matrix fields)."""
    g = a.grid
    if not a.shape or a.shape[-1] != g.n:
        raise ValueError(f"last component axis must have length {g.n}")
    ah = a.hat()
    ks = g.wavenumbers()
    out = sum(1j * ks[j] * ah[(Ellipsis, j) + (slice(None),) * g.n]
              for j in range(g.n))
    return from_hat(g, a.shape[:-1], out)


def laplacian(f: PeriodicField) -> PeriodicField:
    g = f.grid
    return from_hat(g, f.shape, -g.k_squared() * f.hat())


def inverse_laplacian(f: PeriodicField) -> PeriodicField:
    """Mean-free solution of Delta u = f - mean(f)."""
    g = f.grid
    K2 = g.k_squared()
    safe = np.where(K2 == 0, 1.0, K2)
    uh = np.where(K2 == 0, 0.0, -f.hat() / safe)
    return from_hat(g, f.shape, uh)


def _ik(g: Grid) -> list:
    return [1j * k for k in g.wavenumbers()]


def _curl_hat(ah: np.ndarray, g: Grid) -> np.ndarray:
    ik = np.broadcast_arrays(*_ik(g))
    ik = np.stack(ik)
    # ah has component axis first (length n)
    return cross_product(ik, ah)


def curl_vec(a: PeriodicField) -> PeriodicField:
    """curl a = [[grad]]_n a, an n(n-1)/2 component field."""
    g = a.grid
    if a.shape != (g.n,):
        raise ValueError(f"curl needs a vector field of length {g.n}")
    return from_hat(g, (cross_dim(g.n),), _curl_hat(a.hat(), g))


def curl_matrix_field(P: PeriodicField) -> PeriodicField:
    """Row-wise curl of an m x n matrix field."""
    g = P.grid
    if len(P.shape) != 2 or P.shape[1] != g.n:
        raise ValueError(f"Curl needs an m x {g.n} matrix field")
    Ph = P.hat()
    rows = [_curl_hat(Ph[i], g) for i in range(P.shape[0])]
    return from_hat(g, (P.shape[0], cross_dim(g.n)), np.stack(rows))


def curl_transpose(c: PeriodicField) -> PeriodicField:
    """[[grad]]_n^T c for an n(n-1)/2 component field c."""
    g = c.grid
    if c.shape != (cross_dim(g.n),):
        raise ValueError("wrong number of components")
    ik = np.stack(np.broadcast_arrays(*_ik(g)))
    M = cross_matrix_field(ik)  # (d, n, *spec)
    out = np.einsum("dj...,d...->j...", M, c.hat())
    return from_hat(g, (g.n,), out)


@dataclass(frozen=True)
class HelmholtzParts:
    curl_free: PeriodicField
    div_free: PeriodicField
    mean: np.ndarray

    def reconstruct(self) -> PeriodicField:
        g = self.curl_free.grid
        m = self.mean.reshape(self.mean.shape + (1,) * g.n)
        return PeriodicField(g, self.curl_free.shape,
                             self.curl_free.data + self.div_free.data + m)


def helmholtz(a: PeriodicField) -> HelmholtzParts:
    """Fourier projection onto gradients (k k^T / |k|^2) and its complement.

    The zero mode goes to ``mean``.  Modes whose differentiating
    wavenumber vanishes (Nyquist lines) carry no derivative and are kept
    with the divergence-free part.
    """
    g = a.grid
    if a.shape != (g.n,):
        raise ValueError(f"helmholtz needs a vector field of length {g.n}")
    ah = a.hat()
    zero = (slice(None),) + (0,) * g.n
    mean = np.real(ah[zero]) / g.N ** g.n
    ah = ah.copy()
    ah[zero] = 0.0
    ks = np.stack(np.broadcast_arrays(*g.wavenumbers()))
    K2 = g.k_squared()
    safe = np.where(K2 == 0, 1.0, K2)
    kdota = np.sum(ks * ah, axis=0)
    curl_hat = np.where(K2 == 0, 0.0, ks * kdota / safe)
    return HelmholtzParts(curl_free=from_hat(g, a.shape, curl_hat),
                          div_free=from_hat(g, a.shape, ah - curl_hat),
                          mean=mean)


def laplacian_decomposition_check(a: PeriodicField) -> float:
    """max |Delta a - grad div a - [[grad]]^T curl a|."""
    g = a.grid
    lhs = laplacian(a)
    gd = gradient(divergence(a))
    ct = curl_transpose(curl_vec(a))
    return float(np.max(np.abs(lhs.data - gd.data - ct.data)))


def riesz_potential(f: PeriodicField, s: float) -> PeriodicField:
    """Periodic Riesz potential: multiplier |k|^{-s} on nonzero modes."""
    g = f.grid
    if not 0 < s < g.n:
        raise ValueError(f"s must lie in (0, {g.n})")
    fh = f.hat()
    zero = (Ellipsis,) + (0,) * g.n
    scale = np.max(np.abs(fh)) if fh.size else 0.0
    if np.max(np.abs(fh[zero])) > 1e-12 * max(scale, 1e-300) and scale > 0:
        raise NonZeroMeanError("Riesz potential needs a mean-free field")
    K = np.sqrt(g.k_squared(nyquist=True))
    mult = np.where(K == 0, 0.0, np.power(np.where(K == 0, 1.0, K), -s))
    return from_hat(g, f.shape, mult * fh)


# ---------------------------------------------------------------------------
# norms


def pointwise_norm(f: PeriodicField) -> np.ndarray:
    if not f.shape:
        return np.abs(f.data)
    flat = f.data.reshape((-1,) + f.grid.shape)
    return np.sqrt(np.sum(flat * flat, axis=0))


def lp_norm(f: PeriodicField, p: float) -> float:
    """Rectangle-rule L^p norm, Frobenius pointwise for vector/matrix fields."""
    if p < 1:
        raise ValueError("p must be >= 1")
    a = pointwise_norm(f)
    if math.isinf(p):
        return float(np.max(a))
    if p == 1:
        return float(np.sum(a) * f.grid.cell)
    if p == 2:
        return float(math.sqrt(np.sum(a * a) * f.grid.cell))
    return float((np.sum(a ** p) * f.grid.cell) ** (1.0 / p))


def boundary_leakage(f: PeriodicField, width: int = 2) -> float:
    """sup over the outer shell of the torus divided by the global sup."""
    a = pointwise_norm(f)
    top = np.max(a)
    if top == 0:
        return 0.0
    mask = np.zeros(f.grid.shape, dtype=bool)
    for j in range(f.grid.n):
        idx = [slice(None)] * f.grid.n
        idx[j] = np.r_[0:width, f.grid.N - width:f.grid.N]
        mask[tuple(idx)] = True
    return float(np.max(a[mask]) / top)


# ---------------------------------------------------------------------------
# bumps, cutoffs and random fields


def bump(t) -> np.ndarray:
    """exp(-1/(1-t^2)) on |t| < 1, zero elsewhere."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


def mollifier(grid: Grid, eps: float) -> PeriodicField:
    """rho_eps centered at the origin, unit mass under the rectangle rule."""
    rho = bump(grid.radius() / eps)
    mass = np.sum(rho) * grid.cell
    if mass == 0:
        raise ValueError("eps too small for the grid")
    return PeriodicField(grid, (), rho / mass)


class _Smoothstep:
    """S(t) = int_0^t b / int_0^1 b with b(s) = bump(2s-1); tabulated."""

    def __init__(self, samples: int = 200_001):
        s = np.linspace(0.0, 1.0, samples)
        b = bump(2 * s - 1)
        cum = cumulative_simpson(b, x=s, initial=0.0)
        self.Z = cum[-1]
        self.s = s
        self.S = cum / self.Z

    def value(self, t):
        t = np.clip(t, 0.0, 1.0)
        return np.interp(t, self.s, self.S)

    def d1(self, t):
        return bump(2 * np.asarray(t, dtype=float) - 1) / self.Z

    def d2(self, t):
        t = np.asarray(t, dtype=float)
        u = 2 * t - 1
        out = np.zeros_like(u)
        inside = np.abs(u) < 1
        ui = u[inside]
        # d/dt exp(-1/(1-u^2)) with du/dt = 2
        out[inside] = (np.exp(-1.0 / (1.0 - ui ** 2))
                       * (-2 * ui / (1 - ui ** 2) ** 2) * 2)
        return out / self.Z


_SMOOTHSTEP = None


def _smoothstep() -> _Smoothstep:
    global _SMOOTHSTEP
    if _SMOOTHSTEP is None:
        _SMOOTHSTEP = _Smoothstep()
    return _SMOOTHSTEP


def cutoff(r, R: float, order: int = 0) -> np.ndarray:
    """phi_R(r) = 1 - S((r-R)/R): 1 on [0,R], 0 beyond 2R; radial derivatives."""
    S = _smoothstep()
    t = (np.asarray(r, dtype=float) - R) / R
    if order == 0:
        return 1.0 - S.value(t)
    if order == 1:
        return -S.d1(t) / R
    if order == 2:
        return -S.d2(t) / R ** 2
    raise ValueError("order must be 0, 1 or 2")


def cutoff_constants(R: float = 1.0, samples: int = 100_001) -> tuple:
    """(max |phi'| R, max |phi''| R^2) for the cutoff."""
    r = np.linspace(R, 2 * R, samples)
    return (float(np.max(np.abs(cutoff(r, R, 1))) * R),
            float(np.max(np.abs(cutoff(r, R, 2))) * R ** 2))


def random_field(grid: Grid, shape: tuple = (), seed: int = 0,
                 kmax: int | None = None, decay: float | None = None,
                 mask_radius: float | None = None) -> PeriodicField:
    """Seeded band-limited field with Gaussian coefficients ~ |k|^-decay.

    ``kmax`` is an integer mode cutoff (default N/4); the zero mode and
    Nyquist lines are left empty.  With ``mask_radius`` the field is
    multiplied by bump(|x|/mask_radius) to imitate compact support.
    """
    rng = np.random.default_rng(seed)
    decay = grid.n + 1 if decay is None else decay
    kmax = grid.N // 4 if kmax is None else kmax
    ks = grid.wavenumbers()
    kint = np.sqrt(sum((k * grid.L / (2 * math.pi)) ** 2 for k in ks))
    amp = np.where((kint > 0) & (kint <= kmax),
                   np.power(np.where(kint > 0, kint, 1.0), -float(decay)), 0.0)
    # Nyquist lines stay empty
    nyq = grid.wavenumbers(nyquist=True)
    for kz, kn in zip(ks, nyq):
        amp = np.where((kz == 0) & (kn != 0), 0.0, amp)
    sshape = tuple(shape) + grid.spectral_shape
    coef = (rng.standard_normal(sshape) + 1j * rng.standard_normal(sshape)) * amp
    data = _inv(coef, grid) * grid.N ** grid.n
    f = PeriodicField(grid, tuple(shape), data)
    # re-project through rfft so the field is exactly representable
    f = from_hat(grid, f.shape, f.hat())
    if mask_radius is not None:
        w = bump(grid.radius() / mask_radius)
        f = PeriodicField(grid, f.shape, f.data * w)
    return f


def mode(grid: Grid, kvec, kind: str = "sin") -> PeriodicField:
    """sin or cos of 2 pi <k, x> / L for an integer vector k."""
    phase = sum(2 * math.pi * kj / grid.L * x for kj, x in zip(kvec, grid.coords()))
    phase = np.broadcast_to(phase, grid.shape)
    return PeriodicField(grid, (), np.sin(phase) if kind == "sin" else np.cos(phase))


# ---------------------------------------------------------------------------
# field generators


def _centered_hat(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Continuous Fourier transform approximation of a field centered at N/2."""
    return _fwd(np.fft.ifftshift(f), grid.n) * grid.cell


def _from_centered_hat(fh: np.ndarray, grid: Grid) -> np.ndarray:
    return np.fft.fftshift(_inv(fh, grid)) / grid.cell


def _fundamental_problem(grid: Grid, eps: float, R: float, dim: int):
    """Fourier data of rho_eps * (phi_R Phi) via the Poisson equation it solves.

    Phi is log(r/R)/(2 pi) for dim 2 and 1/r for dim 3.  Away from the origin
    Delta(phi_R Phi) equals the smooth annulus term
    g = 2 phi' Phi' + Phi (phi'' + (dim-1) phi'/r), and at the origin it
    has the point mass c0 delta with c0 = 1 (dim 2) or -4 pi (dim 3).
    Returns (hat of the potential, hat of its Laplacian), centered transforms.
    """
    if grid.n != dim:
        raise ValueError(f"grid dimension must be {dim}")
    if not 0 < eps < R < grid.L / 4:
        raise ValueError("need 0 < eps < R < L/4")
    r = grid.radius()
    rs = np.where(r == 0, 1.0, r)
    p1 = cutoff(r, R, 1)
    p2 = cutoff(r, R, 2)
    if dim == 2:
        Phi = np.log(rs / R) / (2 * math.pi)
        dPhi = 1.0 / (2 * math.pi * rs)
        c0 = 1.0
    else:
        Phi = 1.0 / rs
        dPhi = -1.0 / rs ** 2
        c0 = -4 * math.pi
    annulus = (r >= R) & (r <= 2 * R)
    g = np.where(annulus, 2 * p1 * dPhi + Phi * (p2 + (dim - 1) * p1 / rs), 0.0)
    rho_h = _centered_hat(mollifier(grid, eps).data, grid)
    src_h = rho_h * (c0 + _centered_hat(g, grid))
    K2 = grid.k_squared()
    safe = np.where(K2 == 0, 1.0, K2)
    f_h = np.where(K2 == 0, 0.0, -src_h / safe)
    lap_h = np.where(K2 == 0, 0.0, src_h)
    return f_h, lap_h


def _fix_constant(f: np.ndarray, grid: Grid, radius: float) -> np.ndarray:
    far = grid.radius() > radius
    return f - np.mean(f[far])


def gen_mollified_log(grid: Grid, eps: float, R: float) -> PeriodicField:
    """f = rho_eps * (phi_R log(|x|/R) / 2pi), centered at the origin.

    The shift by log R changes log|x|/2pi only by a constant inside the
    cutoff, so f still has Delta f ~ delta near the origin.
    """
    f_h, _ = _fundamental_problem(grid, eps, R, 2)
    f = _from_centered_hat(f_h, grid)
    f = _fix_constant(f, grid, 2 * R + eps + 2 * grid.h)
    return PeriodicField(grid, (), f)


def blowup3d_potential(grid: Grid, eps: float, R: float) -> PeriodicField:
    """g = rho_eps * (phi_R / |x|) on the 3-torus."""
    f_h, _ = _fundamental_problem(grid, eps, R, 3)
    g = _from_centered_hat(f_h, grid)
    g = _fix_constant(g, grid, 2 * R + eps + 2 * grid.h)
    return PeriodicField(grid, (), g)


def gen_blowup3d(grid: Grid, eps: float, R: float) -> PeriodicField:
    """f = grad(rho_eps * (phi_R / |x|))."""
    return gradient(blowup3d_potential(grid, eps, R))


def gen_example12_field(f: PeriodicField) -> PeriodicField:
    """P_f = [[d1 f, d2 f], [-d2 f, d1 f]]."""
    if f.grid.n != 2 or f.shape != ():
        raise ValueError("needs a scalar field on a 2D grid")
    d = gradient(f).data
    P = np.stack([np.stack([d[0], d[1]]), np.stack([-d[1], d[0]])])
    return PeriodicField(f.grid, (2, 2), P)


def compose_linear(f: PeriodicField, M: np.ndarray) -> PeriodicField:
    """x -> f(M x) with periodic wrap.

    Integer M maps grid points to grid points and is applied by exact
    index gathering; otherwise the trigonometric interpolant of f is
    evaluated at the mapped points.
    """
    g = f.grid
    M = np.asarray(M, dtype=float)
    if M.shape != (g.n, g.n):
        raise ValueError("M must be n x n")
    idx = np.indices(g.shape).reshape(g.n, -1) - g.N // 2
    if np.allclose(M, np.round(M), atol=1e-14):
        Mi = np.round(M).astype(np.int64)
        tgt = (Mi @ idx + g.N // 2) % g.N
        flat = f.data.reshape(f.shape + (-1,))
        lin = np.ravel_multi_index(tuple(tgt), g.shape)
        data = flat[..., lin].reshape(f.shape + g.shape)
        return PeriodicField(g, f.shape, data)
    if g.n != 2:
        raise NotImplementedError("non-integer maps are supported for n = 2")
    y = (M @ idx) * g.h  # physical mapped coordinates
    return PeriodicField(g, f.shape, _trig_eval_2d(f, y))


def _trig_eval_2d(f: PeriodicField, y: np.ndarray, chunk: int = 4096) -> np.ndarray:
    g = f.grid
    N = g.N
    kk = sfft.fftfreq(N, 1.0 / N) * 2 * math.pi / g.L
    kk[N // 2] = 0.0  # Nyquist dropped, consistent with the derivatives
    # f(x) = sum_k c_k exp(i k (x - x0)) with x0 = -L/2 the first sample
    x0 = -g.L / 2
    comps = f.data.reshape((-1,) + g.shape)
    out = np.empty((comps.shape[0], y.shape[1]))
    for c in range(comps.shape[0]):
        C = np.fft.fft2(comps[c]) / N ** 2
        C[N // 2, :] = 0.0
        C[:, N // 2] = 0.0
        for s in range(0, y.shape[1], chunk):
            y1 = y[0, s:s + chunk] - x0
            y2 = y[1, s:s + chunk] - x0
            E1 = np.exp(1j * np.outer(y1, kk))
            E2 = np.exp(1j * np.outer(y2, kk))
            out[c, s:s + chunk] = np.real(np.sum((E1 @ C) * E2, axis=1))
    return out.reshape(f.shape + g.shape)


def gen_nullvector_field(witness, f: PeriodicField) -> PeriodicField:
    """Matrix field built from a complex nullvector (xi, v) and scalar f.

    P(x) = Re v (x) Re xi d1f(y) - Im v (x) Im xi d1f(y)
           + Re v (x) Im xi d2f(y) + Im v (x) Re xi d2f(y),
    with y = (<x, Re xi>, <x, Im xi>).
    """
    if f.grid.n != 2 or f.shape != ():
        raise ValueError("needs a scalar field on a 2D grid")
    xi, v = witness
    rx, ix = np.real(xi), np.imag(xi)
    rv, iv = np.real(v), np.imag(v)
    M = np.stack([rx, ix])
    if abs(np.linalg.det(M)) < 1e-12 * max(np.linalg.norm(M) ** 2, 1e-300):
        raise ValueError("Re xi and Im xi must be linearly independent")
    df = gradient(f)
    d1 = compose_linear(df.component(0), M).data
    d2 = compose_linear(df.component(1), M).data
    P = (np.einsum("a,b->ab", rv, rx)[..., None, None] * d1
         - np.einsum("a,b->ab", iv, ix)[..., None, None] * d1
         + np.einsum("a,b->ab", rv, ix)[..., None, None] * d2
         + np.einsum("a,b->ab", iv, rx)[..., None, None] * d2)
    return PeriodicField(f.grid, (2, 2), P)


def nullvector_alpha(witness) -> float:
    xi, _ = witness
    return float(np.linalg.det(np.stack([np.real(xi), np.imag(xi)])))


# ---------------------------------------------------------------------------
# files


def _shape_token(shape: tuple) -> str:
    return "x".join(str(s) for s in shape) if shape else "scalar"


def _parse_shape(tok: str) -> tuple:
    tok = tok.strip()
    if tok == "scalar":
        return ()
    return tuple(int(s) for s in tok.split("x"))


def write_kmsfield(path, f: PeriodicField) -> None:
    g = f.grid
    header = (f"KMSFIELD v1; {g.n}; {g.N}; {g.L!r}; {_shape_token(f.shape)};\n")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(f.data, dtype="<f8").tobytes())


def read_kmsfield(path) -> PeriodicField:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").strip()
        raw = fh.read()
    parts = [s.strip() for s in header.split(";")]
    if len(parts) < 5 or parts[0] != "KMSFIELD v1":
        raise ValueError(f"not a KMSFIELD v1 file: {header!r}")
    n, N, L = int(parts[1]), int(parts[2]), float(parts[3])
    shape = _parse_shape(parts[4])
    grid = Grid(n, N, L)
    data = np.frombuffer(raw, dtype="<f8")
    want = int(np.prod(shape)) * N ** n if shape else N ** n
    if data.size != want:
        raise ValueError(f"expected {want} values, found {data.size}")
    return PeriodicField(grid, shape, data.reshape(shape + grid.shape).copy())


def write_csv_slice(path, f: PeriodicField) -> None:
    """Write a 2D scalar field as rows x1, x2, value."""
    if f.grid.n != 2 or f.shape != ():
        raise ValueError("CSV export supports 2D scalar fields")
    x = f.grid.axis()
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    arr = np.column_stack([X1.ravel(), X2.ravel(), f.data.ravel()])
    np.savetxt(path, arr, delimiter=",", header="x1,x2,value", comments="",
               fmt="%.17g")
