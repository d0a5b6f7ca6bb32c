"""Command line front-end: ``metcur <command> --space ... --current ...``.

Exit codes: 0 success, 2 bad input, 3 failed mathematical precondition,
4 tolerance not met.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .errors import InputError, MetcurError
from .io import FIXTURES, dump, read_current, read_functions, read_space

log = logging.getLogger("metcur")

COMMANDS = ("mass", "decompose", "approx-normal", "represent", "renorm", "pseudodual", "validate")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InputError(message)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--space", required=True, help=f"space JSON file or fixture:NAME ({', '.join(FIXTURES)})")
    common.add_argument("--current", help="current JSON file or fixture:NAME")
    common.add_argument("--fragments", help="representation JSON file (validate)")
    common.add_argument("--functions", help="function dictionary JSON file")
    common.add_argument("--eps", type=float, default=None)
    common.add_argument("--eta", type=float, default=0.9)
    common.add_argument("--delta", type=float, default=None)
    common.add_argument("--tol", type=float, default=1e-9)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--quiet", action="store_true", help="print only the report")
    common.add_argument("--out", help="directory for report.json and CSV series")

    p = _Parser(prog="metcur", description="Finite metric currents and Alberti representations")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    sub.add_parser("mass", parents=[common], help="certified mass bounds with witnesses")
    d = sub.add_parser("decompose", parents=[common], help="Alberti representations along efficient tuples")
    d.add_argument("--cone", type=float, nargs="+", help="axis of a target cone (length k)")
    d.add_argument("--alpha", type=float, default=math.pi / 4)
    a = sub.add_parser("approx-normal", parents=[common], help="approximation by normal currents")
    a.add_argument("--max-iter", type=int, default=3)
    sub.add_parser("represent", parents=[common], help="coefficients over a pseudodual basis")
    r = sub.add_parser("renorm", parents=[common], help="strictly convex renorming")
    r.add_argument("--M", type=int, default=None)
    sub.add_parser("pseudodual", parents=[common], help="pseudodual derivations and functions")
    sub.add_parser("validate", parents=[common], help="metric, current axioms and representation checks")
    return p


def _need_current(args, X, mu):
    if not args.current:
        raise InputError("--current is required for this command")
    return read_current(args.current, X, mu)


def _fdict(args, X):
    from .space import FnDict

    if args.functions:
        return read_functions(args.functions, X)
    return FnDict.standard(X, n_dist=0 if X.coords is not None else None)


def cmd_mass(args, X, mu):
    from .currents import mass_estimate

    T = _need_current(args, X, mu)
    me = mass_estimate(T, eta=args.eta, fdict=_fdict(args, X))
    return me.to_json(), {}


def cmd_decompose(args, X, mu):
    from .alberti import current_to_alberti

    T = _need_current(args, X, mu)
    cone = None
    if args.cone is not None:
        if len(args.cone) != T.k:
            raise InputError(f"cone axis has dimension {len(args.cone)}, the current has degree {T.k}")
        cone = np.asarray(args.cone, dtype=float)
    eta = args.eta
    delta = args.delta if args.delta is not None else eta / (2 * max(T.k, 1))
    res = current_to_alberti(T, eta=eta, delta=delta, cone=cone, fdict=_fdict(args, X), alpha=None,
                             tol=args.tol)
    out = res.to_json()
    out["coverage_defect"] = res.uncovered
    out["coverage_ok"] = res.coverage_ok
    if cone is not None:
        out["cone"] = {"axis": cone.tolist(), "alpha": args.alpha}
    return out, {}


def _dictionaries(args, X, n_iter):
    if args.functions:
        return [read_functions(args.functions, X).values]
    if X.coords is None:
        raise InputError("approx-normal without --functions needs coordinates")
    out = []
    lo, hi = X.coords.min(0), X.coords.max(0)
    for j in range(n_iter):
        s = 2.0 ** -(j + 4)
        rows = [np.ones(X.n)]
        for dim in range(X.coords.shape[1]):
            span = max(hi[dim] - lo[dim], 1e-12)
            for c in np.arange(lo[dim], hi[dim] + 1e-12, s * span):
                rows.append(np.maximum(0.0, 1.0 - np.abs(X.coords[:, dim] - c) / (s * span)))
        out.append(np.array(rows))
    return out


def cmd_approx_normal(args, X, mu):
    from .approx import approximate_by_normal

    T = _need_current(args, X, mu)
    eps = args.eps if args.eps is not None else 1e-3
    rep = approximate_by_normal(T, _dictionaries(args, X, args.max_iter), eps=eps)
    series = {"errors.csv": [("n", "e_n", "fit_residual")] +
              [(i + 1, e, f) for i, (e, f) in enumerate(zip(rep.errors, rep.fit_residuals))]}
    return rep.to_json(), series


def _basis_of(T):
    from .currents import FragmentCurrent, Precurrent, der_of_current

    if isinstance(T, Precurrent):
        return T.xi.basis
    if isinstance(T, FragmentCurrent):
        D, _ = der_of_current(T, T.mass())
        return [D]
    raise InputError("pseudodual needs a precurrent or a fragment current")


def cmd_pseudodual(args, X, mu):
    from .derivations import pseudodual_basis

    T = _need_current(args, X, mu)
    fd = _fdict(args, X)
    eps = args.eps if args.eps is not None else 0.5
    pd = pseudodual_basis(_basis_of(T), fd, eps=eps)
    rep = pd.report(fd)
    rep["pieces_detail"] = [{"set": np.flatnonzero(pc.mask).tolist(), "g": pc.g.tolist()} for pc in pd.pieces]
    return rep, {}


def cmd_represent(args, X, mu):
    from .currents import Precurrent
    from .derivations import pseudodual_basis
    from .exterior import represent_current

    T = _need_current(args, X, mu)
    if not isinstance(T, Precurrent):
        raise InputError("represent needs a precurrent")
    fd = _fdict(args, X)
    pd = pseudodual_basis(T.xi.basis, fd, eps=args.eps if args.eps is not None else 0.5)
    rep = represent_current(T, pd, fdict=fd)
    out = {"report": rep.report, "xi": rep.xi.to_json(), "mass": rep.mass.tolist()}
    rows = [("point",) + tuple("^".join(map(str, a)) for a in rep.xi.coeffs)]
    for x in range(X.n):
        rows.append((x,) + tuple(float(v[x]) for v in rep.xi.coeffs.values()))
    return out, {"lambda.csv": rows}


def cmd_renorm(args, X, mu):
    from .renorm import GeneratingSet, renorm_distance

    fd = _fdict(args, X)
    eps = args.eps if args.eps is not None else 0.1
    R = renorm_distance(X, GeneratingSet(fd, args.M), eps)
    return R.to_json(), {}


def cmd_validate(args, X, mu):
    from .currents import check_axioms, is_normal
    from .space import validate_metric

    out = {"metric": bool(validate_metric(X.dist)), "n": X.n}
    if args.current:
        T = read_current(args.current, X, mu)
        ax = check_axioms(T, fdict=_fdict(args, X), rng=np.random.default_rng(args.seed))
        out["axioms"] = ax
        if T.k >= 1:
            out["normal"] = is_normal(T, rng=np.random.default_rng(args.seed)).to_json()
    if args.fragments:
        from .alberti import AlbertiRep, validate
        from .io import load_json

        rep = AlbertiRep.from_json(X, load_json(args.fragments))
        target = mu if mu is not None else rep.pushforward()
        out["representation"] = validate(rep, target, tol=args.tol)
    return out, {}


HANDLERS = {
    "mass": cmd_mass,
    "decompose": cmd_decompose,
    "approx-normal": cmd_approx_normal,
    "represent": cmd_represent,
    "renorm": cmd_renorm,
    "pseudodual": cmd_pseudodual,
    "validate": cmd_validate,
}


def _write(args, report, series):
    text = dump(report)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(text + "\n")
        for name, rows in series.items():
            with open(out / name, "w", newline="") as fh:
                csv.writer(fh).writerows(rows)
        if not args.quiet:
            log.info("wrote %s", out)
    print(text)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        args = build_parser().parse_args(argv)
        if not args.quiet:
            log.setLevel(logging.INFO)
        np.random.seed(args.seed)
        X, mu = read_space(args.space)
        report, series = HANDLERS[args.command](args, X, mu)
        _write(args, report, series)
    except MetcurError as exc:
        print(f"metcur: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
