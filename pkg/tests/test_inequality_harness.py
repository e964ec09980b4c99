import json
import math

import numpy as np
import pytest

from kmsprobe import inequality_harness as ih
from kmsprobe import operator_algebra as oa
from kmsprobe import spectral_fields as sf


def cfg_of(name, p=1.0, n=2, **kw):
    return ih.KMSConfig(oa.catalogue(name, n), p, n, **kw)


@pytest.fixture(scope="module")
def g2():
    return sf.Grid(2, 256)


# --- configuration ----------------------------------------------------------------

def test_sobolev_conjugate():
    assert ih.sobolev_conjugate(1, 2) == 2
    assert ih.sobolev_conjugate(1, 3) == 1.5
    assert ih.sobolev_conjugate(2, 3) == 6


def test_config_validation():
    with pytest.raises(ih.InvalidConstellation):
        ih.KMSConfig(oa.catalogue("sym", 3), 1.0, 2)
    with pytest.raises(ih.InvalidConstellation):
        cfg_of("sym", p=0.5)
    with pytest.raises(ih.InvalidConstellation):
        cfg_of("sym", mode=ih.SUBCRITICAL, q=2.0, r=1.0)  # q must be < p* = 2
    with pytest.raises(ih.InvalidConstellation):
        cfg_of("sym", mode=ih.SUBCRITICAL, q=1.0)
    with pytest.raises(ih.InvalidConstellation):
        cfg_of("sym", mode="bogus")
    assert not cfg_of("sym", p=2.5).supported
    assert cfg_of("sym", p=2.5, mode=ih.SUBCRITICAL, q=7.0, r=1.0).supported


# --- quotients ---------------------------------------------------------------------

@pytest.mark.parametrize("dim", [2, 3])
def test_quotient_zero_homogeneous(dim):
    cfg = cfg_of("sym", n=dim)
    P = sf.random_field(cfg.grid(), (dim, dim), seed=1)
    q = ih.kms_quotient(P, cfg)
    for a in (1e-3, 1.0, 1e3):
        assert ih.kms_quotient(P.scale(a), cfg) == pytest.approx(q, rel=1e-12)


def test_gradient_fields_reduce_to_korn(g2):
    cfg = cfg_of("sym")
    u = sf.random_field(g2, (2,), seed=2)
    Du = sf.gradient(u)
    num, a, c = ih.kms_parts(Du, cfg)
    assert c <= 1e-10 * num
    assert ih.kms_quotient(Du, cfg) == pytest.approx(num / a, rel=1e-9)


def test_conformal_field_quotient(g2):
    cfg = cfg_of("dev_sym")
    f = sf.random_field(g2, (), seed=3, mask_radius=2.0)
    P = sf.gen_example12_field(f)
    want = sf.lp_norm(P, 2) / sf.lp_norm(sf.laplacian(f), 1)
    assert ih.kms_quotient(P, cfg) == pytest.approx(want, rel=1e-9)


def test_joint_kernel_is_zero_denominator(g2):
    # the zero map kills A[P] and gradients have no Curl
    cfg = cfg_of("zero")
    Du = sf.gradient(sf.random_field(g2, (2,), seed=4))
    with pytest.raises(ih.ZeroDenominator):
        ih.kms_quotient(Du, cfg)


def test_shape_mismatch(g2):
    with pytest.raises(ValueError):
        ih.kms_quotient(sf.random_field(g2, (2,), seed=0), cfg_of("sym"))


def _bumped(grid, lam, r):
    # P(x) = bump(|x| / r) M(x) evaluated at x / lam
    x = [c / lam for c in grid.coords()]
    w = sf.bump(np.sqrt(x[0] ** 2 + x[1] ** 2) / r)
    M = [[np.sin(x[0]) + 0.3, x[1] * x[0]], [np.cos(2 * x[1]), x[0] - x[1] ** 2]]
    data = np.stack([np.stack(np.broadcast_arrays(*row)) for row in M]) * w
    return sf.PeriodicField(grid, (2, 2), data)


@pytest.mark.parametrize("name", ["sym", "dev_sym"])
def test_subcritical_scaling_invariance(name, g2):
    lam = 1.5
    base = cfg_of(name, p=2.0, mode=ih.SUBCRITICAL, q=1.5, r=1.0)
    big = cfg_of(name, p=2.0, mode=ih.SUBCRITICAL, q=1.5, r=lam)
    q1 = ih.subcritical_quotient(_bumped(g2, 1.0, 1.0), base)
    q2 = ih.subcritical_quotient(_bumped(g2, lam, 1.0), big)
    assert abs(q1 - q2) <= 1e-6


def test_subcritical_identity_at_most_one(g2):
    cfg = cfg_of("identity", mode=ih.SUBCRITICAL, q=1.0, r=1.0)
    for seed in range(4):
        P = sf.random_field(g2, (2, 2), seed=seed, mask_radius=1.0)
        assert ih.subcritical_quotient(P, cfg) <= 1 + 1e-12


def test_subcritical_conformal_field_finite(g2):
    # f = bump(|x|) sin(x1 + 2 x2) with its gradient in closed form, so
    # P_f is supported exactly in the unit ball
    cfg = cfg_of("dev_sym", mode=ih.SUBCRITICAL, q=1.0, r=1.0)
    x1, x2 = (np.broadcast_to(c, g2.shape) for c in g2.coords())
    r = g2.radius()
    w = sf.bump(r)
    inside = r < 1
    dw = np.zeros_like(r)
    dw[inside] = w[inside] * -2 * r[inside] / (1 - r[inside] ** 2) ** 2
    rs = np.where(r == 0, 1.0, r)
    h, dh = np.sin(x1 + 2 * x2), np.cos(x1 + 2 * x2)
    d1 = dh * w + h * dw * x1 / rs
    d2 = 2 * dh * w + h * dw * x2 / rs
    P = sf.PeriodicField(g2, (2, 2), np.stack([np.stack([d1, d2]), np.stack([-d2, d1])]))
    q = ih.subcritical_quotient(P, cfg)
    assert math.isfinite(q) and q > 0


def test_support_violation(g2):
    cfg = cfg_of("sym", mode=ih.SUBCRITICAL, q=1.0, r=1.0)
    P = sf.random_field(g2, (2, 2), seed=6, mask_radius=2.0)
    with pytest.raises(ih.SupportViolation):
        ih.subcritical_quotient(P, cfg)
    with pytest.raises(ih.InvalidConstellation):
        ih.subcritical_quotient(P, cfg_of("sym"))


# --- prediction --------------------------------------------------------------------

TABLE = [
    # (name, n, p, q, verdict)
    ("sym", 2, 1.0, None, ih.HOLDS),
    ("dev_sym", 2, 1.0, None, ih.FAILS),
    ("skew_plus_trace(1,1)", 2, 1.0, None, ih.FAILS),
    ("skew_plus_trace(1,1)", 3, 1.0, None, ih.HOLDS),
    ("dev_sym", 2, 1.5, None, ih.HOLDS),
    ("trace", 2, 1.5, None, ih.FAILS),
    ("dev_sym", 3, 1.0, None, ih.HOLDS),
    ("skew", 3, 2.0, None, ih.FAILS),
    ("sym", 2, 2.0, None, ih.UNSUPPORTED),
    ("sym", 3, 3.5, None, ih.UNSUPPORTED),
    ("identity", 2, 1.0, 1.0, ih.HOLDS),
    ("sym", 2, 1.0, 1.0, ih.FAILS),
    ("grad", 3, 1.0, 1.0, ih.HOLDS),
    ("dev_sym", 2, 1.0, 1.5, ih.HOLDS),
    ("trace", 2, 1.0, 1.5, ih.FAILS),
    ("sym", 2, 3.0, 10.0, ih.HOLDS),
]


@pytest.mark.parametrize("name,n,p,q,want", TABLE)
def test_prediction_table(name, n, p, q, want):
    kw = {} if q is None else {"mode": ih.SUBCRITICAL, "q": q, "r": 1.0}
    pred = ih.predict(cfg_of(name, p=p, n=n, **kw))
    assert pred.verdict == want
    assert pred.reason and pred.row


# --- blow-up probes ----------------------------------------------------------------

def test_probe_family_errors():
    with pytest.raises(ValueError, match="no complex nullvector"):
        ih.blowup_probe(cfg_of("sym"), "nullvector")
    with pytest.raises(ValueError):
        ih.blowup_probe(cfg_of("sym"), "blowup3d")
    with pytest.raises(ValueError):
        ih.blowup_probe(cfg_of("sym", n=3), "mollified-log")
    with pytest.raises(ValueError):
        ih.blowup_probe(cfg_of("sym"), "kernel-wave")
    with pytest.raises(ValueError):
        ih.blowup_probe(cfg_of("sym"), "nosuch")


def test_probe_nullvector_grows():
    res = ih.blowup_probe(cfg_of("dev_sym", grid_N=128), "nullvector", steps=4)
    assert len(res.quotients) == 4 and res.slope > 0
    rows = res.to_csv().strip().splitlines()
    assert rows[0] == "eps,quotient" and len(rows) == 5


def test_probe_kernel_wave_zero_denominator():
    res = ih.blowup_probe(cfg_of("zero", grid_N=64), "kernel-wave", steps=3)
    assert res.zero_denominator and res.verdict == ih.FAILS


def test_probe_kernel_wave_trace_grows():
    res = ih.blowup_probe(cfg_of("trace", grid_N=128), "kernel-wave", steps=4)
    assert res.slope > 0


def test_probe_epsilons_halve():
    res = ih.blowup_probe(cfg_of("sym", grid_N=64), "mollified-log", steps=3, eps0=0.5)
    assert res.epsilons == [0.5, 0.25, 0.125]
    json.dumps(res.to_dict())


# --- constant estimation ------------------------------------------------------------

def test_estimate_identity_tends_to_one():
    est = ih.estimate_constant(cfg_of("identity", grid_N=64), iters=10)
    assert abs(est.value - 1.0) <= 1e-3
    assert est.warning is None


def test_estimate_sym_corridor():
    est = ih.estimate_constant(cfg_of("sym", p=1.0, grid_N=64), iters=20)
    assert 1.0 <= est.value <= 10.0


def test_estimate_sym_p2_corridor():
    # p = n has no conjugate exponent; the estimate falls back to q = p
    est = ih.estimate_constant(cfg_of("sym", p=2.0, grid_N=64), iters=20)
    assert 1.0 <= est.value <= 10.0
    assert est.warning is not None


def test_estimate_monotone():
    cfg = cfg_of("dev_grad", grid_N=64)
    short = ih.estimate_constant(cfg, iters=8, seed=3)
    long = ih.estimate_constant(cfg, iters=16, seed=3)
    assert long.value >= short.value
    assert all(b >= a for a, b in zip(long.history, long.history[1:]))
    assert long.history[:len(short.history)] == short.history


def test_estimate_warns_on_fails():
    est = ih.estimate_constant(cfg_of("dev_sym", grid_N=64), iters=2)
    assert est.warning is not None


# --- verify ----------------------------------------------------------------------

def test_verify_unsupported():
    rep = ih.verify(cfg_of("sym", p=2.0))
    assert rep.prediction.verdict == ih.UNSUPPORTED
    assert rep.quotients == [] and rep.blowup is None


def test_verify_zero_trials():
    rep = ih.verify(cfg_of("dev_sym"), trials=0)
    assert rep.prediction.verdict == ih.FAILS
    assert rep.quotients == [] and rep.blowup is None


def test_verify_report_json():
    rep = ih.verify(cfg_of("dev_sym", grid_N=128), trials=2, steps=4)
    d = json.loads(rep.to_json())
    assert set(d) >= {"config", "prediction", "quotients", "blowup",
                      "constant_estimate", "verdict_consistent"}
    assert d["blowup"]["family"] == "nullvector"
    assert d["verdict_consistent"] is True
    assert all(q["quotient"] >= 0 for q in d["quotients"])


def test_verify_deterministic():
    a = ih.verify(cfg_of("sym", grid_N=64), trials=2, steps=3).to_json()
    b = ih.verify(cfg_of("sym", grid_N=64), trials=2, steps=3).to_json()
    assert a == b


# --- the ACP pipeline identity --------------------------------------------------

@pytest.mark.parametrize("name", ["sym", "grad", "dev_grad"])
def test_acp_curl_identity(name, g2):
    A = oa.catalogue(name, 2)
    acp = oa.almost_complementary(oa.induce_operator(A))
    P = sf.random_field(g2, (2, 2), seed=7)
    assert ih.acp_curl_identity_residual(P, A, acp) <= 1e-9
