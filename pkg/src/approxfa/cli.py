"""Command-line front end.

Subcommands ``generate``, ``fit``, ``compare`` and ``check``. Exit codes:

====  =========================================================
0     success (converged, or report written)
2     usage error
3     ``max_iters`` reached before any stopping tolerance
4     input matrix unreadable, asymmetric or not positive definite
5     infeasible zero pattern or exact model
====  =========================================================

Every fit/compare output gets a ``<file>.manifest.json`` sidecar from
which the run can be repeated with :func:`replay`.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import InfeasibleModelError, InfeasiblePatternError, MatrixParseError, NotPSDError, StructureError
from .matrix_io import RunManifest, manifest_path_for, read_cov, read_matrix, sha256_file, write_matrix
from .models import GeneratorSpec, exact_fa_check, exact_fa_realization, generate_sigma, stationary_structure_check
from .params import FactorParams
from .solvers import ENGINES, SingularPattern, SolverConfig, default_init, run

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MAX_ITERS = 3
EXIT_BAD_MATRIX = 4
EXIT_INFEASIBLE = 5

log = logging.getLogger("approxfa")


class _Fail(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _nonneg_float(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative number, got {text}")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="approxfa", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="draw a synthetic target A A^T + diag(d)")
    g.add_argument("--n", type=_positive_int, required=True)
    g.add_argument("--m", type=_positive_int, required=True)
    g.add_argument("--c", type=_nonneg_float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", type=Path, required=True, help="output directory")

    def solver_args(sp):
        sp.add_argument("--sigma", type=Path, required=True, help="target covariance CSV")
        sp.add_argument("--k", type=_positive_int, required=True)
        sp.add_argument("--max-iters", type=_positive_int, default=1000)
        sp.add_argument("--div-tol", type=float, default=1e-12)
        sp.add_argument("--residual-tol", type=float, default=1e-12)
        sp.add_argument("--seed", type=int, default=0, help="seed of the random start")
        sp.add_argument("--init-h", type=Path, help="starting loadings CSV (n x k)")
        sp.add_argument("--init-d", type=Path, help="starting noise variances CSV (n x 1)")

    f = sub.add_parser("fit", help="fit one engine and write its convergence trace")
    solver_args(f)
    f.add_argument("--engine", choices=ENGINES, default="alt")
    f.add_argument("--n2", type=_positive_int, help="trailing zero noise entries (singular engine)")
    f.add_argument("--record-every", type=_positive_int, default=1)
    f.add_argument("--trace", type=Path, required=True)

    c = sub.add_parser("compare", help="run several engines from one starting point")
    solver_args(c)
    c.add_argument("--engines", default="alt,em")
    c.add_argument("--out", type=Path, required=True, help="comparison CSV")

    k = sub.add_parser("check", help="exactness and stationarity reports")
    k.add_argument("--sigma", type=Path, required=True)
    k.add_argument("--n2", type=_positive_int, required=True)
    k.add_argument("--h", type=Path, help="loadings to test for stationary structure")
    k.add_argument("--d", type=Path, help="noise variances matching --h")
    k.add_argument("--realize", type=_positive_int, metavar="K",
                   help="build an exact K-factor realization into --out-prefix")
    k.add_argument("--out-prefix", type=Path)
    return p


# ------------------------------------------------------------------ helpers


def _load_sigma(path):
    try:
        S = read_cov(path)
    except MatrixParseError as exc:
        raise _Fail(EXIT_BAD_MATRIX, str(exc)) from exc
    except (OSError, ValueError) as exc:
        raise _Fail(EXIT_BAD_MATRIX, f"{path}: {exc}") from exc
    if not S.pd:
        eig = np.linalg.eigvalsh(S.entries)
        raise _Fail(
            EXIT_BAD_MATRIX,
            f"{path}: not positive definite; eigenvalues range "
            f"[{eig[0]:.6g}, {eig[-1]:.6g}], {int(np.sum(eig <= 0))} nonpositive",
        )
    return S


def _initial(args, S):
    if (args.init_h is None) != (args.init_d is None):
        raise _Fail(EXIT_USAGE, "--init-h and --init-d must be given together")
    if args.init_h is not None:
        H = read_matrix(args.init_h)
        D = read_matrix(args.init_d).reshape(-1)
        if H.shape != (S.dim, args.k) or D.shape != (S.dim,):
            raise _Fail(EXIT_USAGE, f"starting point must be {S.dim}x{args.k} and {S.dim}x1")
        return FactorParams(H, D)
    if args.k >= S.dim:
        raise _Fail(EXIT_USAGE, f"--k must be smaller than n={S.dim}")
    return default_init(S, args.k, args.seed)


def _config(args, record_every=1):
    try:
        return SolverConfig(args.max_iters, args.div_tol, args.residual_tol, record_every)
    except ValueError as exc:
        raise _Fail(EXIT_USAGE, str(exc)) from exc


def _config_dict(cfg):
    return {"max_iters": cfg.max_iters, "div_tol": cfg.div_tol,
            "residual_tol": cfg.residual_tol, "record_every": cfg.record_every}


def _inputs(args):
    out = {"sigma": str(args.sigma)}
    if args.init_h is not None:
        out.update(init_h=str(args.init_h), init_d=str(args.init_d))
    return out


# ----------------------------------------------------------------- commands


def cmd_generate(args, argv):
    try:
        spec = GeneratorSpec(args.n, args.m, args.c, args.seed)
    except ValueError as exc:
        raise _Fail(EXIT_USAGE, str(exc)) from exc
    S, (A, d) = generate_sigma(spec)
    args.out.mkdir(parents=True, exist_ok=True)
    outputs = {"sigma": args.out / "sigma.csv", "A": args.out / "A.csv", "d": args.out / "d.csv"}
    write_matrix(S.entries, outputs["sigma"])
    write_matrix(A, outputs["A"])
    write_matrix(d, outputs["d"])
    eig = np.linalg.eigvalsh(S.entries)
    print(f"positive definite: {'yes' if S.pd else 'no (semidefinite only)'}")
    print(f"eigenvalues: [{eig[0]:.6g}, {eig[-1]:.6g}]")
    RunManifest(
        command="generate", argv=argv, seed=args.seed,
        config={"n": args.n, "m": args.m, "c": args.c},
        outputs={k: str(v) for k, v in outputs.items()},
    ).add_checksums().save(args.out / "manifest.json")
    return EXIT_OK


def _sidecars(trace_path):
    stem = str(trace_path)
    stem = stem[:-4] if stem.endswith(".csv") else stem
    return Path(stem + ".H.csv"), Path(stem + ".D.csv")


def cmd_fit(args, argv):
    S = _load_sigma(args.sigma)
    init = _initial(args, S)
    cfg = _config(args, args.record_every)
    pattern = None
    if args.engine == "singular":
        if args.n2 is None:
            raise _Fail(EXIT_USAGE, "--engine singular needs --n2")
        if args.n2 >= S.dim:
            raise _Fail(EXIT_USAGE, f"--n2 must be smaller than n={S.dim}")
        pattern = SingularPattern(S.dim - args.n2, args.n2)
        try:
            pattern.check_k(args.k)
        except InfeasiblePatternError as exc:
            raise _Fail(EXIT_INFEASIBLE, str(exc)) from exc
    elif args.n2 is not None:
        raise _Fail(EXIT_USAGE, "--n2 applies only to the singular engine")
    try:
        trace = run(args.engine, S, init, cfg, pattern)
    except StructureError as exc:
        raise _Fail(EXIT_INFEASIBLE, str(exc)) from exc
    trace.to_csv(args.trace)
    h_path, d_path = _sidecars(args.trace)
    write_matrix(trace.params.H, h_path)
    write_matrix(trace.params.D, d_path)
    manifest = RunManifest(
        command="fit", argv=argv, inputs=_inputs(args), engines=[args.engine], k=args.k,
        split=None if pattern is None else [pattern.n1, pattern.n2],
        config=_config_dict(cfg), seed=args.seed,
        outputs={"trace": str(args.trace), "H": str(h_path), "D": str(d_path)},
    )
    manifest.add_checksums().save(manifest_path_for(args.trace))
    print(f"{args.engine}: {trace.reason} after {trace.n_iter} iterations, "
          f"divergence {trace.divergence[-1]:.6g}, L2 {trace.final_l2:.6g}")
    return EXIT_OK if trace.converged else EXIT_MAX_ITERS


def _fmt(v):
    return f"{v:.17g}"


def cmd_compare(args, argv):
    engines = [e.strip() for e in args.engines.split(",") if e.strip()]
    bad = [e for e in engines if e not in ENGINES or e == "singular"]
    if len(engines) < 2 or bad:
        raise _Fail(EXIT_USAGE, f"--engines needs two or more of alt,lpd,hh,em; got {args.engines}")
    S = _load_sigma(args.sigma)
    init = _initial(args, S)
    cfg = _config(args)
    traces = {e: run(e, S, init, cfg) for e in engines}
    n_rows = max(len(t.iters) for t in traces.values())
    header = ["iter"] + [f"{col}_{e}" for e in engines for col in ("divergence", "l2")]
    with open(args.out, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(n_rows):
            fields = [str(i + 1)]
            for e in engines:
                t = traces[e]
                if i < len(t.iters):
                    div = t.as_array()[i, 1]
                    fields += [_fmt(div), _fmt(t.l2[i])]
                else:
                    fields += ["", ""]
            fh.write(",".join(fields) + "\n")
    RunManifest(
        command="compare", argv=argv, inputs=_inputs(args), engines=engines, k=args.k,
        config=_config_dict(cfg), seed=args.seed, outputs={"comparison": str(args.out)},
    ).add_checksums().save(manifest_path_for(args.out))
    ref = engines[0]
    parts = []
    for e in engines[1:]:
        parts.append(
            f"{ref}/{e} divergence ratio {_ratio(traces[ref].final_divergence, traces[e].final_divergence)}, "
            f"L2 ratio {_ratio(traces[ref].final_l2, traces[e].final_l2)}"
        )
    print("final: " + "; ".join(parts))
    return EXIT_OK if all(t.converged for t in traces.values()) else EXIT_MAX_ITERS


def _ratio(a, b):
    if b == 0:
        return "1" if a == 0 else "inf"
    return f"{a / b:.6g}"


def cmd_check(args, argv):
    S = _load_sigma(args.sigma)
    if args.n2 >= S.dim:
        raise _Fail(EXIT_USAGE, f"--n2 must be smaller than n={S.dim}")
    split = SingularPattern(S.dim - args.n2, args.n2)
    exact, off = exact_fa_check(S, split)
    print(f"exact factor model with D2 = 0: {'yes' if exact else 'no'}")
    print(f"off-diagonal norm of conditional covariance: {off:.6g}")
    code = EXIT_OK
    if args.realize is not None:
        try:
            params = exact_fa_realization(S, split, args.realize)
        except (InfeasibleModelError, StructureError) as exc:
            print(f"realization: infeasible ({exc})")
            code = EXIT_INFEASIBLE
        else:
            prefix = str(args.out_prefix or "realization")
            write_matrix(params.H, prefix + ".H.csv")
            write_matrix(params.D, prefix + ".D.csv")
            print(f"realization written to {prefix}.H.csv, {prefix}.D.csv")
    if (args.h is None) != (args.d is None):
        raise _Fail(EXIT_USAGE, "--h and --d must be given together")
    if args.h is not None:
        params = FactorParams(read_matrix(args.h), read_matrix(args.d).reshape(-1))
        try:
            rep = stationary_structure_check(S, params, split)
        except StructureError as exc:
            raise _Fail(EXIT_INFEASIBLE, str(exc)) from exc
        for name in ("d2_norm", "s22_residual", "s12_residual",
                     "reduced_h_residual", "reduced_d_residual"):
            print(f"{name}: {getattr(rep, name):.6g}")
    return code


COMMANDS = {"generate": cmd_generate, "fit": cmd_fit, "compare": cmd_compare, "check": cmd_check}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, argv)
    except _Fail as exc:
        print(f"approxfa {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except NotPSDError as exc:
        print(f"approxfa {args.command}: {exc}", file=sys.stderr)
        return EXIT_BAD_MATRIX


_OUT_FLAGS = ("--trace", "--out", "--out-prefix")


def _output_anchor(argv):
    for i, tok in enumerate(argv[:-1]):
        if tok in _OUT_FLAGS:
            return Path(argv[i + 1]).parent
    raise ValueError("recorded command has no output flag")


def _retarget(argv, outdir):
    """Copy of ``argv`` with the output path moved into ``outdir``."""
    new = list(argv)
    for i, tok in enumerate(new[:-1]):
        if tok in _OUT_FLAGS:
            new[i + 1] = str(Path(outdir) / Path(new[i + 1]).name)
    return new


def replay(manifest_path, outdir):
    """Repeat the run recorded in a manifest, writing outputs into ``outdir``.

    Returns ``(exit_code, mismatches)`` where ``mismatches`` lists output
    roles whose checksum differs from the recorded one. Inputs are
    verified against their recorded checksums first.
    """
    m = RunManifest.load(manifest_path)
    for role, path in m.inputs.items():
        if sha256_file(path) != m.checksums[role]:
            raise ValueError(f"input {role} ({path}) changed since the recorded run")
    Path(outdir).mkdir(parents=True, exist_ok=True)
    anchor = _output_anchor(m.argv)
    code = main(_retarget(m.argv, outdir))
    mismatches = []
    for role, path in m.outputs.items():
        fresh = Path(outdir) / Path(path).relative_to(anchor)
        if not fresh.exists() or sha256_file(fresh) != m.checksums[role]:
            mismatches.append(role)
    return code, mismatches


if __name__ == "__main__":
    sys.exit(main())
