"""Command-line entry point.

Exit codes: 0 success, 1 I/O or parse failure, 2 invalid input,
3 fit did not converge (the result document is still written).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .countsio import CountsFormatError, format_counts, parse_counts
from .distributions import FAMILIES, family_pmf
from .estimation import SumDataset, fit_mle, resolve_family
from .exceptions import ExchbinError, RankDeficiencyError
from .gof import expected_counts, pearson_test
from .semiparametric import fit_semiparametric, make_basis
from .simulation import (
    COMPARISON_FAMILIES, GENERATORS, MC_COLUMNS, SUMMARY_COLUMNS, Scenario, gen_sums,
    default_grid, rows_to_csv, run_mc_study, summarize,
)

SCHEMA_VERSION = "1.0"
EXIT_OK, EXIT_IO, EXIT_INVALID, EXIT_NONCONVERGED = 0, 1, 2, 3

log = logging.getLogger("exchbin")

PARAM_FLAGS = ("p", "q", "gamma", "alpha", "beta", "mu")


class UsageError(Exception):
    pass


def _seed(text: str) -> int:
    val = int(text)
    if not 0 <= val < 2**64:
        raise argparse.ArgumentTypeError("seed must be a decimal 64-bit unsigned integer")
    return val


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if np.isfinite(x) else None


def _digest(raw: bytes) -> str:
    return "sha256:" + hashlib.sha256(raw).hexdigest()


def _read_input(path: str) -> bytes:
    if path == "-":
        return sys.stdin.buffer.read()
    return Path(path).read_bytes()


def _load(args) -> tuple[SumDataset, bytes]:
    raw = _read_input(args.data)
    return parse_counts(raw.decode("utf-8"), tally=args.tally), raw


def _emit(doc: dict, out: str | None):
    text = json.dumps(doc, indent=2, allow_nan=False) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------


def cmd_pmf(args) -> int:
    cls = FAMILIES[resolve_family(args.family)]
    given = {k: getattr(args, k) for k in PARAM_FLAGS if getattr(args, k) is not None}
    missing = [n for n in cls.param_names if n not in given]
    extra = sorted(set(given) - set(cls.param_names))
    if missing or extra:
        raise UsageError(f"family {cls.name} takes --{' --'.join(cls.param_names)}"
                         + (f"; missing {missing}" if missing else "")
                         + (f"; unexpected {extra}" if extra else ""))
    spec = cls(*(given[n] for n in cls.param_names))
    pmf = family_pmf(spec, args.m)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["s", "mass"])
    for s, v in enumerate(pmf.mass):
        w.writerow([s, repr(float(v))])
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


def fit_document(family: str, data: SumDataset, raw: bytes, gof: bool = False,
                 df_policy: str = "cells") -> tuple[dict, bool]:
    fit = fit_mle(family, data)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "fit",
        "input_digest": _digest(raw),
        "family": fit.family,
        "params": fit.spec.as_dict(),
        "p_hat": _num(fit.p_hat),
        "rho_hat": _num(fit.rho_hat),
        "se_p": _num(fit.se_p),
        "se_rho": _num(fit.se_rho),
        "loglik": _num(fit.loglik),
        "gof": None,
        "convergence": {"converged": bool(fit.converged), "iterations": int(fit.iterations),
                        "grad_norm": _num(fit.grad_norm)},
    }
    if gof:
        if data.cluster_sizes.size != 1:
            raise UsageError("--gof needs a single cluster size")
        m = int(data.cluster_sizes[0])
        exp = expected_counts(fit.spec, data, m)
        report = pearson_test(data.counts_for(m), exp, df_policy=df_policy,
                              n_params=len(fit.spec.param_names), family=fit.family)
        doc["gof"] = report.as_dict()
    return doc, fit.converged


def cmd_fit(args) -> int:
    data, raw = _load(args)
    doc, converged = fit_document(args.family, data, raw, args.gof, args.df_policy)
    _emit(doc, args.out)
    return EXIT_OK if converged else EXIT_NONCONVERGED


def cmd_simulate(args) -> int:
    sc = Scenario(args.p, args.rho, args.m, args.n, 1, args.seed, args.generator)
    sums = gen_sums(sc, sc.rng(0))
    sys.stdout.write(format_counts(SumDataset.from_sums(args.m, sums)))
    return EXIT_OK


def _read_grid(args) -> list[Scenario]:
    if args.grid == "default":
        return default_grid(args.m, args.n, args.B, args.seed, args.generator)
    text = Path(args.grid).read_text(encoding="utf-8")
    out = []
    for lineno, row in enumerate(csv.DictReader(io.StringIO(text)), start=2):
        try:
            out.append(Scenario(float(row["p"]), float(row["rho"]),
                                int(row.get("m") or args.m), int(row.get("n") or args.n),
                                args.B, args.seed, row.get("generator") or args.generator))
        except (KeyError, ValueError) as exc:
            raise UsageError(f"grid line {lineno}: {exc}") from None
    if not out:
        raise UsageError("grid file has no scenarios")
    return out


def cmd_mc_study(args) -> int:
    scenarios = _read_grid(args)
    families = tuple(resolve_family(f) for f in args.families.split(","))
    rows = run_mc_study(scenarios, families, workers=args.workers)
    failed = sum(not r.converged for r in rows)
    if failed:
        log.warning("%d of %d fits did not converge", failed, len(rows))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "raw.csv").write_text(rows_to_csv(rows, MC_COLUMNS), encoding="utf-8")
    (out / "summary.csv").write_text(rows_to_csv(summarize(rows), SUMMARY_COLUMNS), encoding="utf-8")
    return EXIT_OK


def semiparam_document(family, data: SumDataset, raw: bytes, knots="none", basis="bspline"):
    fit = fit_semiparametric(family, data, knots=knots, kind=basis)
    names = ("eta1", "eta2") if fit.family == "bb" else ("eta3", "eta4")
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "semiparam",
        "input_digest": _digest(raw),
        "family": fit.family,
        "params": {names[0]: [float(v) for v in fit.eta[0]], names[1]: [float(v) for v in fit.eta[1]]},
        "p_hat": None,
        "rho_hat": None,
        "se_p": None,
        "se_rho": None,
        "loglik": _num(fit.loglik),
        "gof": None,
        "convergence": {"converged": bool(fit.converged), "iterations": int(fit.iterations),
                        "grad_norm": _num(fit.grad_norm)},
        "deviance": float(fit.deviance),
        "basis": {"kind": fit.basis.kind, "interior_knots": list(fit.basis.interior_knots),
                  "boundary": list(fit.basis.boundary)},
        "curve": [{k: _num(v) if k != "m" else v for k, v in row.items()} for row in fit.curve],
    }
    if data.cluster_sizes.size == 1:
        doc["p_hat"] = doc["curve"][0]["p_hat"]
        doc["rho_hat"] = doc["curve"][0]["rho_hat"]
        doc["se_p"] = doc["curve"][0]["se_p"]
        doc["se_rho"] = doc["curve"][0]["se_rho"]
    return doc, fit


CURVE_COLUMNS = ("m", "p_hat", "rho_hat", "se_p", "se_rho")


def cmd_semiparam(args) -> int:
    data, raw = _load(args)
    knots = args.knots
    if knots not in ("none", "median"):
        try:
            knots = [float(k) for k in knots.split(",")]
        except ValueError:
            raise UsageError(f"--knots must be none, median or a comma list, got {knots!r}") from None
    doc, fit = semiparam_document(args.family, data, raw, knots, args.basis)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _emit(doc, str(out / "result.json"))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for row in doc["curve"]:
            w.writerow(["" if row[c] is None else repr(row[c]) if isinstance(row[c], float) else row[c]
                        for c in CURVE_COLUMNS])
        (out / "curve.csv").write_text(buf.getvalue(), encoding="utf-8")
    _emit(doc, None)
    return EXIT_OK if fit.converged else EXIT_NONCONVERGED


# --------------------------------------------------------------------------


MC_HELP = f"""\
Writes OUT/raw.csv with columns {','.join(MC_COLUMNS)}
(one row per scenario, family and replicate) and OUT/summary.csv with columns
{','.join(SUMMARY_COLUMNS)}.
Summaries use converged replicates only; bias is mean minus the true value.
A grid file is a CSV with columns p,rho and optional m,n,generator.
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="exchbin", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    fams = sorted(FAMILIES)
    p = sub.add_parser("pmf", help="print the pmf of a family as s,mass rows")
    p.add_argument("--family", required=True, choices=fams)
    for name in PARAM_FLAGS:
        p.add_argument(f"--{name}", type=float)
    p.add_argument("-m", type=int, required=True)
    p.set_defaults(func=cmd_pmf)

    def data_args(sp):
        sp.add_argument("--data", required=True, help="m,s,count CSV ('-' for stdin)")
        sp.add_argument("--tally", action="store_true", help="input has one m,s row per cluster")

    p = sub.add_parser("fit", help="maximum-likelihood fit with optional chi-square test")
    p.add_argument("--family", required=True, choices=fams)
    data_args(p)
    p.add_argument("--gof", action="store_true")
    p.add_argument("--df-policy", choices=("cells", "params"), default="cells",
                   help="cells: df = cells - 1 (default); params: also subtract fitted parameters")
    p.add_argument("--out", help="write the JSON document here instead of stdout")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="simulate cluster sums as m,s,count CSV")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("-m", type=int, required=True)
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--generator", choices=GENERATORS, default="gaussian-threshold")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("mc-study", help="Monte Carlo comparison of estimators",
                       description=MC_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--grid", default="default", help="'default' (5 p x 4 rho values) or a CSV path")
    p.add_argument("--B", type=int, default=200, help="replicates per scenario (1000 for a full-scale study)")
    p.add_argument("-n", type=int, default=100)
    p.add_argument("-m", type=int, default=10)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--generator", choices=GENERATORS, default="gaussian-threshold")
    p.add_argument("--families", default=",".join(COMPARISON_FAMILIES))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mc_study)

    p = sub.add_parser("semiparam", help="cluster-size dependent fit")
    p.add_argument("--family", required=True, choices=("bb", "lapgam"))
    data_args(p)
    p.add_argument("--knots", default="none", help="none, median, or comma-separated interior knots")
    p.add_argument("--basis", choices=("bspline", "intercept", "quadratic"), default="bspline")
    p.add_argument("--out", help="directory for result.json and curve.csv")
    p.set_defaults(func=cmd_semiparam)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, CountsFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, RankDeficiencyError, ExchbinError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
