"""Command line front end.

Every invocation prints exactly one JSON document on stdout (or writes it
to --out); logs go to stderr.  Exit codes: 0 success, 2 bad arguments,
3 prediction and numerical evidence disagree.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from datetime import datetime, timezone

import numpy as np

from . import inequality_harness as ih
from . import operator_algebra as oa
from . import spectral_fields as sf

log = logging.getLogger("kmsprobe")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INCONSISTENT = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _clean(obj):
    """Make numpy scalars/arrays JSON friendly; non-finite floats -> None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v + 0.0 if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _emit(doc: dict, out_path=None):
    text = json.dumps(_clean(doc), indent=2, sort_keys=True, allow_nan=False)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _part_map(args) -> oa.PartMap:
    if getattr(args, "matrix", None):
        try:
            A = oa.PartMap.from_json(args.matrix)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"cannot read part map from {args.matrix}: {exc}")
        if A.n != args.n:
            raise UsageError(f"matrix file is for n={A.n}, --n is {args.n}")
        return A
    if not args.op:
        raise UsageError("give --op NAME or --matrix FILE")
    try:
        return oa.catalogue(args.op, args.n)
    except (KeyError, ValueError) as exc:
        raise UsageError(str(exc.args[0]) if exc.args else str(exc))


# ---------------------------------------------------------------------------
# subcommands


def cmd_classify(args):
    A = _part_map(args)
    return oa.classify(A, args.tol), EXIT_OK


def cmd_acp(args):
    if args.n != 2:
        raise UsageError("acp is defined for n = 2")
    A = _part_map(args)
    op = oa.induce_operator(A)
    try:
        acp = oa.almost_complementary(op, args.tol)
    except oa.NotCEllipticError as exc:
        raise UsageError(f"NotCElliptic: {exc}")
    res = oa.acp_check_residual(acp, A, samples=100, seed=args.seed)
    out = acp.to_dict()
    out["operator"] = A.name
    out["verification_residual"] = res
    return out, EXIT_OK


def _config(args) -> ih.KMSConfig:
    A = _part_map(args)
    mode = args.mode or (ih.SUBCRITICAL if args.q is not None else ih.CRITICAL)
    r = args.r
    if mode == ih.SUBCRITICAL and r is None:
        r = 1.0
    try:
        cfg = ih.KMSConfig(part_map=A, p=args.p, n=args.n, mode=mode,
                           q=args.q if mode == ih.SUBCRITICAL else None,
                           r=r if mode == ih.SUBCRITICAL else None,
                           grid_N=args.grid)
        cfg.grid()
    except (ih.InvalidConstellation, ValueError, MemoryError) as exc:
        raise UsageError(str(exc))
    if not cfg.supported:
        raise UsageError(f"critical mode needs 1 <= p < n (got p={args.p:g}, "
                         f"n={args.n})")
    return cfg


def cmd_verify(args):
    cfg = _config(args)
    rep = ih.verify(cfg, trials=args.trials, seed=args.seed, steps=args.steps,
                    estimate_iters=args.estimate_iters)
    code = EXIT_OK if rep.verdict_consistent else EXIT_INCONSISTENT
    return rep.to_dict(), code


def cmd_probe(args):
    if args.n is None:
        args.n = 3 if args.family == "blowup3d" else 2
    cfg = _config(args)
    try:
        res = ih.blowup_probe(cfg, args.family, steps=args.steps, eps0=args.eps0)
    except ValueError as exc:
        raise UsageError(str(exc))
    text = res.to_csv()
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(text)
    out = {"config": cfg.to_dict(), "family": res.family,
           "epsilons": res.epsilons, "quotients": res.quotients,
           "slope": res.slope, "ratio": res.ratio, "verdict": res.verdict,
           "zero_denominator": res.zero_denominator, "extras": res.extras,
           "csv": text, "csv_rows": len(res.epsilons)}
    return out, EXIT_OK


def cmd_catalog(args):
    rows = []
    for name in oa.CATALOGUE_NAMES:
        A = oa.catalogue(name, args.n)
        c = oa.classify(A, args.tol)
        rows.append({"name": A.name, "elliptic": c["elliptic"],
                     "c_elliptic": c["c_elliptic"],
                     "c_elliptic_heuristic": c["c_elliptic_heuristic"],
                     "span_dim": c["span_dim"],
                     "cancelling": c.get("cancelling"),
                     "factorizes": c["factorizes"]})
    return {"n": args.n, "operators": rows}, EXIT_OK


def cmd_field_dump(args):
    gen = args.gen
    n = args.n or (3 if gen == "blowup3d" else 2)
    try:
        grid = sf.Grid(n, args.grid, args.L)
    except (ValueError, MemoryError) as exc:
        raise UsageError(str(exc))
    R = args.R if args.R is not None else ih.FAMILY_RADIUS * grid.L
    eps = args.eps if args.eps is not None else 0.25 * R
    try:
        if gen == "mollified-log":
            f = sf.gen_mollified_log(grid, eps, R)
        elif gen == "example12":
            f = sf.gen_example12_field(sf.gen_mollified_log(grid, eps, R))
        elif gen == "nullvector":
            args.n = n
            A = _part_map(args)
            cert = oa.is_c_elliptic(oa.induce_operator(A))
            if cert.c_elliptic:
                raise UsageError(f"{A.name} has no complex nullvector")
            f = sf.gen_nullvector_field(cert.nullvector_witness,
                                        sf.gen_mollified_log(grid, eps, R))
        elif gen == "blowup3d":
            f = sf.gen_blowup3d(grid, eps, R)
        elif gen == "random":
            f = sf.random_field(grid, (n, n), seed=args.seed)
        else:
            raise UsageError(f"unknown generator {gen!r}")
    except ValueError as exc:
        raise UsageError(str(exc))
    sf.write_kmsfield(args.field_out, f)
    with open(args.field_out, "rb") as fh:
        digest = hashlib.sha256(fh.read()).hexdigest()
    back = sf.read_kmsfield(args.field_out)
    return {"generator": gen, "path": args.field_out, "n": n, "N": grid.N,
            "L": grid.L, "shape": list(f.shape), "sha256": digest,
            "roundtrip_max_error": float(np.max(np.abs(back.data - f.data)))}, EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_op(p, n_default=2):
    p.add_argument("--op", help="catalogue name, e.g. sym or skew_plus_trace(1,1)")
    p.add_argument("--matrix", help="JSON part map file {m,n,N,matrix,name}")
    p.add_argument("--n", type=int, default=n_default)


def _add_kms(p):
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--q", type=float)
    p.add_argument("--r", type=float)
    p.add_argument("--mode", choices=[ih.CRITICAL, ih.SUBCRITICAL])
    p.add_argument("--grid", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="kmsprobe", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="key = value file with default options")
    ap.add_argument("--out", help="write the JSON document here")
    ap.add_argument("--log-level", default="WARNING")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("classify")
    _add_op(p)
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("acp")
    _add_op(p)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_acp)

    p = sub.add_parser("verify")
    _add_op(p)
    _add_kms(p)
    p.add_argument("--trials", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=6)
    p.add_argument("--estimate-iters", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("probe")
    _add_op(p, n_default=None)
    _add_kms(p)
    p.add_argument("--family", required=True, choices=list(ih.FAMILIES))
    p.add_argument("--steps", type=int, default=6)
    p.add_argument("--eps0", type=float)
    p.add_argument("--csv", help="also write the (eps, quotient) CSV here")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("catalog")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_catalog)

    p = sub.add_parser("field-dump")
    p.add_argument("--gen", required=True,
                   choices=["example12", "mollified-log", "nullvector",
                            "blowup3d", "random"])
    p.add_argument("--op", default="dev_sym")
    p.add_argument("--matrix")
    p.add_argument("--n", type=int)
    p.add_argument("--grid", type=int, default=128)
    p.add_argument("--L", type=float, default=2 * math.pi)
    p.add_argument("--eps", type=float)
    p.add_argument("--R", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--field-out", default="field.kmsfield")
    p.set_defaults(func=cmd_field_dump)
    return ap


def read_config(path) -> list:
    """Turn 'key = value' lines into command line tokens."""
    tokens = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"bad config line: {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            tokens += ["--" + key.replace("_", "-"), value]
    return tokens


def _splice_config(argv: list) -> list:
    """Insert config tokens right after the subcommand so flags override them."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise UsageError("--config needs a file")
    path = argv[i + 1]
    rest = argv[:i] + argv[i + 2:]
    try:
        extra = read_config(path)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}")
    cmds = {"classify", "acp", "verify", "probe", "catalog", "field-dump"}
    for j, tok in enumerate(rest):
        if tok in cmds:
            return rest[:j + 1] + extra + rest[j + 1:]
    return rest


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    out_path = None
    if "--out" in argv and argv.index("--out") + 1 < len(argv):
        out_path = argv[argv.index("--out") + 1]
    stamp = datetime.now(timezone.utc).isoformat()
    try:
        argv = _splice_config(argv)
        args = build_parser().parse_args(argv)
        logging.basicConfig(stream=sys.stderr, level=args.log_level.upper(),
                            format="%(levelname)s %(name)s: %(message)s")
        if not args.command:
            raise UsageError("missing subcommand")
        result, code = args.func(args)
    except UsageError as exc:
        print(f"kmsprobe: error: {exc}", file=sys.stderr)
        _emit({"error": str(exc), "exit_code": EXIT_USAGE, "timestamp": stamp},
              out_path)
        return EXIT_USAGE
    _emit({"command": args.command, "result": result, "exit_code": code,
           "timestamp": stamp}, out_path)
    return code


if __name__ == "__main__":
    sys.exit(main())
