"""Numerical probing of Korn-Maxwell-Sobolev type inequalities.

    ||P||_{q}  <=  c ( ||A[P]||_{q} + ||Curl P||_{p} )

Critical mode uses q = p* = np/(n-p); subcritical mode measures mean
values over a ball B_r with the factor r on the Curl term.  The harness
predicts validity from the algebraic predicates of the part map, evaluates
quotients on random and on designed fields, follows blow-up families and
estimates constants by a seeded ascent.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import operator_algebra as oa
from . import spectral_fields as sf

log = logging.getLogger(__name__)

CRITICAL = "critical"
SUBCRITICAL = "subcritical"

HOLDS = "Holds"
FAILS = "Fails"
UNSUPPORTED = "Unsupported"

FAMILIES = ("mollified-log", "nullvector", "blowup3d", "kernel-wave")


class InvalidConstellation(ValueError):
    pass


class ZeroDenominator(ArithmeticError):
    """The field lies in the joint kernel of A and Curl."""


class SupportViolation(ValueError):
    pass


def sobolev_conjugate(p: float, n: int) -> float:
    if p >= n:
        return math.inf
    return n * p / (n - p)


@dataclass(frozen=True)
class KMSConfig:
    part_map: oa.PartMap
    p: float
    n: int
    mode: str = CRITICAL
    q: Optional[float] = None
    r: Optional[float] = None
    grid_N: Optional[int] = None
    L: float = 2 * math.pi
    blowup_ratio: float = 3.0

    def __post_init__(self):
        if self.part_map.n != self.n or self.part_map.m != self.n:
            raise InvalidConstellation(
                f"part map acts on {self.part_map.m}x{self.part_map.n} "
                f"matrices, expected {self.n}x{self.n}")
        if self.n < 2:
            raise InvalidConstellation("n must be >= 2")
        if not self.p >= 1:
            raise InvalidConstellation("p must be >= 1")
        if self.mode == CRITICAL:
            if self.q is not None and self.p < self.n and \
                    not math.isclose(self.q, self.p_star):
                raise InvalidConstellation("critical mode fixes q = p*")
        elif self.mode == SUBCRITICAL:
            if self.q is None or not self.q >= 1:
                raise InvalidConstellation("subcritical mode needs q >= 1")
            if not self.q < self.p_star:
                raise InvalidConstellation(
                    f"subcritical mode needs q < p* = {self.p_star:g}")
            if self.r is None or not self.r > 0:
                raise InvalidConstellation("subcritical mode needs r > 0")
        else:
            raise InvalidConstellation(f"unknown mode {self.mode!r}")

    @property
    def p_star(self) -> float:
        return sobolev_conjugate(self.p, self.n)

    @property
    def supported(self) -> bool:
        return self.mode == SUBCRITICAL or self.p < self.n

    @property
    def lhs_exponent(self) -> float:
        """Exponent on P and A[P]; falls back to p when p* is undefined."""
        if self.mode == SUBCRITICAL:
            return float(self.q)
        return self.p_star if self.p < self.n else float(self.p)

    def grid(self) -> sf.Grid:
        N = self.grid_N or (256 if self.n == 2 else 64)
        return sf.Grid(self.n, N, self.L)

    def to_dict(self) -> dict:
        return {"operator": self.part_map.name, "n": self.n, "p": self.p,
                "q": self.lhs_exponent if self.supported else None,
                "mode": self.mode, "r": self.r,
                "grid": self.grid_N or (256 if self.n == 2 else 64),
                "L": self.L}


# ---------------------------------------------------------------------------
# quotients


def _check_field(P: sf.PeriodicField, cfg: KMSConfig):
    if P.grid.n != cfg.n or P.shape != (cfg.n, cfg.n):
        raise ValueError(f"expected an {cfg.n}x{cfg.n} matrix field on an "
                         f"{cfg.n}D grid, got {P.shape} on {P.grid.n}D")


def _apply(cfg: KMSConfig, P: sf.PeriodicField) -> sf.PeriodicField:
    return sf.PeriodicField(P.grid, (cfg.part_map.N,),
                            cfg.part_map.apply_field(P.data))


def kms_parts(P: sf.PeriodicField, cfg: KMSConfig) -> tuple:
    """(||P||_q, ||A[P]||_q, ||Curl P||_p) on the whole torus."""
    _check_field(P, cfg)
    q = cfg.lhs_exponent
    return (sf.lp_norm(P, q), sf.lp_norm(_apply(cfg, P), q),
            sf.lp_norm(sf.curl_matrix_field(P), cfg.p))


def _ratio(num: float, den: float) -> float:
    if den <= 1e-13 * num or den == 0.0:
        raise ZeroDenominator(
            f"denominator {den:.3e} vanishes relative to numerator {num:.3e}")
    return num / den


def kms_quotient(P: sf.PeriodicField, cfg: KMSConfig) -> float:
    num, a, c = kms_parts(P, cfg)
    return _ratio(num, a + c)


def subcritical_quotient(P: sf.PeriodicField, cfg: KMSConfig) -> float:
    if cfg.mode != SUBCRITICAL:
        raise InvalidConstellation("subcritical_quotient needs subcritical mode")
    _check_field(P, cfg)
    r = cfg.r
    mag = sf.pointwise_norm(P)
    top = float(np.max(mag))
    outside = P.grid.radius() > r
    if np.any(outside) and float(np.max(mag[outside])) > 1e-10 * top:
        raise SupportViolation(f"field does not vanish outside B_{r:g}")
    vol = math.pi ** (cfg.n / 2) / math.gamma(cfg.n / 2 + 1) * r ** cfg.n
    q, p = cfg.q, cfg.p

    def mean_norm(F, s):
        return sf.lp_norm(F, s) / vol ** (1.0 / s)

    num = mean_norm(P, q)
    den = mean_norm(_apply(cfg, P), q) + r * mean_norm(sf.curl_matrix_field(P), p)
    return _ratio(num, den)


def quotient(P: sf.PeriodicField, cfg: KMSConfig) -> float:
    if cfg.mode == SUBCRITICAL:
        return subcritical_quotient(P, cfg)
    return kms_quotient(P, cfg)


# ---------------------------------------------------------------------------
# prediction


@dataclass(frozen=True)
class Prediction:
    verdict: str
    reason: str
    row: str

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "reason": self.reason, "row": self.row}


@dataclass
class Algebra:
    """Lazily computed predicates of the induced operator."""

    op: oa.DiffOperator
    _cache: dict = field(default_factory=dict)

    @classmethod
    def of(cls, A: oa.PartMap) -> "Algebra":
        return cls(oa.induce_operator(A))

    def elliptic(self) -> oa.EllipticityCertificate:
        if "e" not in self._cache:
            self._cache["e"] = oa.is_elliptic(self.op)
        return self._cache["e"]

    def c_elliptic(self) -> oa.CEllipticityCertificate:
        if "c" not in self._cache:
            self._cache["c"] = oa.is_c_elliptic(self.op)
        return self._cache["c"]

    def factorizes(self) -> bool:
        if "f" not in self._cache:
            self._cache["f"] = oa.factor_through(self.op) is not None
        return self._cache["f"]


def predict(cfg: KMSConfig, algebra: Optional[Algebra] = None) -> Prediction:
    alg = algebra or Algebra.of(cfg.part_map)
    n, p = cfg.n, cfg.p

    def by(flag: bool, row: str, what: str) -> Prediction:
        verdict = HOLDS if flag else FAILS
        state = "is" if flag else "is not"
        return Prediction(verdict, f"{row}: valid iff {what}; the operator "
                                   f"{state} {what}", row)

    if cfg.mode == CRITICAL:
        if p >= n:
            return Prediction(UNSUPPORTED,
                              f"critical mode requires 1 <= p < n (p={p:g}, n={n})",
                              "critical-unsupported")
        if n >= 3:
            return by(alg.elliptic().elliptic, "critical n>=3, 1<=p<n", "elliptic")
        if p > 1:
            return by(alg.elliptic().elliptic, "critical n=2, 1<p<2", "elliptic")
        return by(alg.c_elliptic().c_elliptic, "critical n=2, p=1", "C-elliptic")
    if cfg.q == 1:
        return by(alg.factorizes(), "subcritical q=1",
                  "E_i = L A_i for a linear L")
    return by(alg.elliptic().elliptic, "subcritical q>1", "elliptic")


# ---------------------------------------------------------------------------
# designed families


# the widest family member is supported in B_{2R + eps0} = B_{2.85 R}, which
# stays inside the torus half-width for R = 0.17 L
FAMILY_RADIUS = 0.17


def family_radius(cfg: KMSConfig, grid: sf.Grid) -> float:
    R = FAMILY_RADIUS * grid.L
    if cfg.mode == SUBCRITICAL:
        R = min(R, 0.45 * cfg.r)
    return R


def _support_radius(cfg: KMSConfig, grid: sf.Grid) -> float:
    rad = 0.2 * grid.L
    if cfg.mode == SUBCRITICAL:
        rad = min(rad, cfg.r)
    return rad


def _family_field(family: str, cfg: KMSConfig, grid: sf.Grid, eps: float,
                  alg: Algebra):
    """Returns (P, extras) for one member of a family."""
    n = cfg.n
    if family == "mollified-log":
        f = sf.gen_mollified_log(grid, eps, family_radius(cfg, grid))
        return sf.gen_example12_field(f), {}
    if family == "nullvector":
        w = alg.c_elliptic().nullvector_witness
        f = sf.gen_mollified_log(grid, eps, family_radius(cfg, grid))
        return sf.gen_nullvector_field(w, f), {}
    if family == "blowup3d":
        g = sf.blowup3d_potential(grid, eps, family_radius(cfg, grid))
        f = sf.gradient(g)
        P = np.zeros((n, n) + grid.shape)
        P[0] = f.data
        extras = {"laplacian_l1": sf.lp_norm(sf.laplacian(g), 1),
                  "gradient_l32": sf.lp_norm(f, 1.5)}
        return sf.PeriodicField(grid, (n, n), P), extras
    if family == "kernel-wave":
        # P = v (x) grad psi, psi = eps chi sin(<xi,x>/eps), gradient in
        # closed form so the support of P is exactly that of chi
        xi, v = alg.elliptic().witness
        xi = xi / np.linalg.norm(xi)
        v = v / np.linalg.norm(v)
        rho = 0.9 * _support_radius(cfg, grid)
        x = grid.coords()
        r = grid.radius()
        t = r / rho
        chi = sf.bump(t)
        inside = t < 1
        dchi = np.zeros_like(t)
        ti = t[inside]
        dchi[inside] = chi[inside] * (-2 * ti / (1 - ti ** 2) ** 2) / rho
        rs = np.where(r == 0, 1.0, r)
        phase = sum(xi[j] * x[j] for j in range(n)) / eps
        grad = np.stack([np.broadcast_to(
            chi * np.cos(phase) * xi[j] + eps * np.sin(phase) * dchi * x[j] / rs,
            grid.shape) for j in range(n)])
        if cfg.mode == CRITICAL:
            # no support constraint: the spectral gradient keeps Curl P = 0
            psi = chi * eps * np.sin(phase)
            grad = sf.gradient(sf.PeriodicField(grid, (), psi)).data
        P = np.einsum("a,b...->ab...", v, grad)
        return sf.PeriodicField(grid, (n, n), P), {}
    raise ValueError(f"unknown family {family!r}; choose from {FAMILIES}")


def _check_family(family: str, cfg: KMSConfig, alg: Algebra):
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; choose from {FAMILIES}")
    if family in ("mollified-log", "nullvector") and cfg.n != 2:
        raise ValueError(f"family {family} needs n = 2")
    if family == "blowup3d" and cfg.n != 3:
        raise ValueError("family blowup3d needs n = 3")
    if family == "nullvector":
        if alg.c_elliptic().c_elliptic:
            raise ValueError(f"{cfg.part_map.name} has no complex nullvector")
        w = alg.c_elliptic().nullvector_witness
        if abs(sf.nullvector_alpha(w)) < 1e-12:
            raise ValueError("the available nullvector is real; use kernel-wave")
    if family == "kernel-wave" and alg.elliptic().elliptic:
        raise ValueError(f"{cfg.part_map.name} is elliptic; kernel-wave "
                         "needs a real symbol kernel")


def default_eps0(family: str, cfg: KMSConfig, grid: sf.Grid, steps: int) -> float:
    if family == "kernel-wave":
        # start at a quarter of the support radius unless the finest
        # oscillation would pass half the Nyquist wavenumber
        kmax = grid.N / 4 * 2 * math.pi / grid.L
        return max(0.25 * 0.9 * _support_radius(cfg, grid),
                   2 ** (steps - 1) / kmax)
    return 0.85 * family_radius(cfg, grid)


@dataclass
class BlowupResult:
    family: str
    epsilons: list
    quotients: list  # None where the denominator vanished
    slope: Optional[float]
    ratio: Optional[float]
    verdict: str  # Fails | BoundedSoFar
    zero_denominator: bool = False
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["eps", "quotient"])
        for e, q in zip(self.epsilons, self.quotients):
            w.writerow([repr(e), "" if q is None else repr(q)])
        return buf.getvalue()


def blowup_probe(cfg: KMSConfig, family: str, steps: int = 6,
                 eps0: Optional[float] = None,
                 algebra: Optional[Algebra] = None) -> BlowupResult:
    alg = algebra or Algebra.of(cfg.part_map)
    _check_family(family, cfg, alg)
    grid = cfg.grid()
    e0 = eps0 if eps0 is not None else default_eps0(family, cfg, grid, steps)
    eps = [e0 * 2.0 ** (-k) for k in range(steps)]
    quots, extras = [], {}
    zero = False
    for e in eps:
        P, ex = _family_field(family, cfg, grid, e, alg)
        for key, val in ex.items():
            extras.setdefault(key, []).append(val)
        try:
            quots.append(quotient(P, cfg))
        except ZeroDenominator:
            zero = True
            quots.append(None)
        log.info("family %s eps=%.4g quotient=%s", family, e, quots[-1])
    good = [(e, q) for e, q in zip(eps, quots) if q is not None]
    slope = ratio = None
    if len(good) >= 2:
        x = np.log([1.0 / e for e, _ in good])
        y = np.array([q for _, q in good])
        slope = float(np.polyfit(x, y, 1)[0])
    if quots and quots[0] is not None and quots[-1] is not None:
        ratio = quots[-1] / quots[0]
    fails = zero or (ratio is not None and ratio >= cfg.blowup_ratio
                     and slope is not None and slope > 0)
    return BlowupResult(family, eps, quots, slope, ratio,
                        FAILS if fails else "BoundedSoFar", zero, extras)


# ---------------------------------------------------------------------------
# constant estimation


def _trial_field(cfg: KMSConfig, grid: sf.Grid, seed, kmax: int = 6):
    shape = (cfg.n, cfg.n)
    if cfg.mode == SUBCRITICAL:
        return sf.random_field(grid, shape, seed=seed, kmax=kmax,
                               mask_radius=_support_radius(cfg, grid))
    return sf.random_field(grid, shape, seed=seed, kmax=kmax)


def _rowwise_helmholtz(P: sf.PeriodicField):
    parts = [sf.helmholtz(sf.PeriodicField(P.grid, (P.shape[1],), P.data[i]))
             for i in range(P.shape[0])]
    cf = np.stack([h.curl_free.data for h in parts])
    df = np.stack([h.div_free.data for h in parts])
    return (sf.PeriodicField(P.grid, P.shape, cf),
            sf.PeriodicField(P.grid, P.shape, df))


@dataclass
class ConstantEstimate:
    value: float
    field_id: str
    iterations: int
    history: list
    warning: Optional[str] = None

    def to_dict(self) -> dict:
        return asdict(self)


def estimate_constant(cfg: KMSConfig, iters: int = 50, seed: int = 0,
                      dims: int = 6, kmax: int = 6) -> ConstantEstimate:
    """Best-so-far ascent of the quotient over mean-free band-limited fields.

    Each iteration draws ``dims`` random directions (seeded by the iteration
    index), forms central finite-difference slopes along them, steps along
    the resulting gradient estimate and keeps the step only if it improves.
    """
    warning = None
    pred = predict(cfg)
    if pred.verdict != HOLDS:
        warning = f"prediction is {pred.verdict}; estimate is not a constant"
    grid = cfg.grid()

    def Q(P):
        try:
            return quotient(P, cfg)
        except ZeroDenominator:
            return math.inf

    def unit(P):
        return P.scale(1.0 / sf.lp_norm(P, 2))

    P0 = unit(_trial_field(cfg, grid, seed, kmax))
    cands = [("random", P0)]
    if cfg.mode == CRITICAL:
        cf, df = _rowwise_helmholtz(P0)
        cands += [("curl_free", unit(cf)), ("div_free", unit(df))]
    vals = [Q(P) for _, P in cands]
    k = int(np.argmax(vals))
    best_id, P, best = cands[k][0], cands[k][1], vals[k]
    history = [best]
    step = 0.5
    for it in range(iters):
        if math.isinf(best):
            break
        rng = np.random.default_rng([seed, it])
        dirs = [unit(_trial_field(cfg, grid, int(rng.integers(2 ** 31)), kmax))
                for _ in range(dims)]
        h = 1e-4
        grads = [(Q(P + D.scale(h)) - Q(P - D.scale(h))) / (2 * h) for D in dirs]
        gnorm = math.sqrt(sum(g * g for g in grads))
        if gnorm > 0 and all(math.isfinite(g) for g in grads):
            move = dirs[0].scale(grads[0] / gnorm)
            for g, D in zip(grads[1:], dirs[1:]):
                move = move + D.scale(g / gnorm)
            trial = unit(P + move.scale(step))
            qt = Q(trial)
            if qt > best:
                P, best, best_id = trial, qt, f"ascent-{it}"
                step = min(step * 1.5, 2.0)
            else:
                step *= 0.5
        history.append(best)
    return ConstantEstimate(best, best_id, iters, history, warning)


# ---------------------------------------------------------------------------
# reports


@dataclass
class KMSReport:
    config: dict
    prediction: Prediction
    quotients: list = field(default_factory=list)
    blowup: Optional[BlowupResult] = None
    blowup_slope: Optional[float] = None
    best_constant_estimate: Optional[float] = None
    verdict_consistent: bool = True
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "prediction": self.prediction.to_dict(),
            "quotients": self.quotients,
            "blowup": None if self.blowup is None else {
                "family": self.blowup.family,
                "epsilons": self.blowup.epsilons,
                "quotients": self.blowup.quotients,
                "slope": self.blowup.slope,
                "ratio": self.blowup.ratio,
                "verdict": self.blowup.verdict,
                "zero_denominator": self.blowup.zero_denominator,
                "extras": self.blowup.extras,
            },
            "blowup_slope": self.blowup_slope,
            "constant_estimate": self.best_constant_estimate,
            "verdict_consistent": self.verdict_consistent,
            "notes": self.notes,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), allow_nan=False, **kw)


def matching_family(cfg: KMSConfig, pred: Prediction, alg: Algebra) -> Optional[str]:
    """The designed family for a configuration, or None."""
    ell = alg.elliptic().elliptic
    if pred.verdict == FAILS:
        if not ell:
            return "kernel-wave"
        if cfg.mode == CRITICAL and cfg.n == 2:
            return "nullvector"
        return None  # subcritical q=1 failure of factorization: no family
    if pred.verdict == HOLDS and cfg.mode == CRITICAL:
        return "mollified-log" if cfg.n == 2 else "blowup3d"
    return None


def verify(cfg: KMSConfig, trials: int = 4, seed: int = 0, steps: int = 6,
           estimate_iters: int = 0) -> KMSReport:
    alg = Algebra.of(cfg.part_map)
    pred = predict(cfg, alg)
    report = KMSReport(config=cfg.to_dict(), prediction=pred)
    if pred.verdict == UNSUPPORTED:
        report.notes.append("constellation outside the supported table")
        return report
    if trials <= 0:
        report.notes.append("no trials requested")
        return report
    grid = cfg.grid()
    zero_seen = False
    for i in range(trials):
        P = _trial_field(cfg, grid, seed + i)
        try:
            q = quotient(P, cfg)
            report.quotients.append({"field": f"random-{seed + i}", "quotient": q})
        except ZeroDenominator:
            zero_seen = True
            report.quotients.append({"field": f"random-{seed + i}",
                                     "quotient": None,
                                     "status": "ZeroDenominator"})
    fam = matching_family(cfg, pred, alg)
    if fam is not None:
        res = blowup_probe(cfg, fam, steps, algebra=alg)
        report.blowup = res
        report.blowup_slope = res.slope
        zero_seen = zero_seen or res.zero_denominator
    finite = [d["quotient"] for d in report.quotients if d["quotient"] is not None]
    if report.blowup is not None:
        finite += [q for q in report.blowup.quotients if q is not None]
    report.best_constant_estimate = max(finite) if finite else None
    if estimate_iters > 0:
        est = estimate_constant(cfg, estimate_iters, seed)
        if math.isfinite(est.value):
            report.best_constant_estimate = max(report.best_constant_estimate or 0.0,
                                                est.value)

    if pred.verdict == HOLDS:
        bad = zero_seen or (report.blowup is not None
                            and report.blowup.verdict == FAILS)
        report.verdict_consistent = not bad
        if bad:
            report.notes.append("evidence of failure under a Holds prediction")
    else:
        if report.blowup is None:
            report.notes.append("no designed family for this row; random "
                                "fields cannot refute a Fails prediction")
            report.verdict_consistent = True
        else:
            growing = report.blowup.slope is not None and report.blowup.slope > 0
            report.verdict_consistent = bool(zero_seen or growing
                                             or report.blowup.verdict == FAILS)
            if report.blowup.verdict != FAILS and growing:
                report.notes.append("quotient grows along the family but below "
                                    "the blow-up ratio threshold")
            if not report.verdict_consistent:
                report.notes.append("designed family shows no growth")
    return report


def acp_curl_identity_residual(P: sf.PeriodicField, A: oa.PartMap,
                               acp: oa.ACPDecomposition) -> float:
    """max |G^-1 Curl P - (-d2 gamma(P), d1 gamma(P)) - G^-1 Curl(L(A[P]))|."""
    grid = P.grid
    Gi = np.linalg.inv(acp.G)
    flat = P.data.reshape((4,) + grid.shape)
    gam = sf.PeriodicField(grid, (), np.tensordot(acp.gamma, flat, axes=1))
    AP = A.apply_field(P.data)
    LAP = sf.PeriodicField(grid, (2, 2),
                           np.tensordot(acp.L, AP, axes=1).reshape((2, 2) + grid.shape))
    cP = sf.curl_matrix_field(P).data[:, 0]
    cL = sf.curl_matrix_field(LAP).data[:, 0]
    frak = np.tensordot(Gi, cP, axes=1)
    dg = sf.gradient(gam).data
    rhs = np.tensordot(Gi, cL, axes=1)
    lhs = frak - np.stack([-dg[1], dg[0]])
    return float(np.max(np.abs(lhs - rhs)))
