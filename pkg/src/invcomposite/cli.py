"""Command line: ``analyze``, ``simulate`` and ``wchi2`` subcommands with JSON output."""

import argparse
import dataclasses
import json
import sys

from . import covadj, jsonio, montecarlo
from .analysis import report
from .dataset import CIMethod, DesignSpec, load_csv
from .errors import InvCompositeError, InvalidSpec
from .wchi2 import WeightedChiSq


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as validation errors (exit 2)."""

    def error(self, message):
        raise InvalidSpec(f"usage: {message}")


def _names(text):
    return [c.strip() for c in text.split(",") if c.strip()] if text else []


def _floats(text):
    try:
        return [float(v) for v in _names(text)]
    except ValueError:
        raise InvalidSpec("expected comma-separated numbers", value=text) from None


def _r_value(text):
    if text == covadj.OPT:
        return text
    try:
        return float(text)
    except ValueError:
        raise InvalidSpec("--r must be a number or 'opt'", value=text) from None


def build_parser():
    p = _Parser(prog="invcomposite", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="fit, test and interval for one CSV study")
    a.add_argument("--data", required=True)
    a.add_argument("--treatment", required=True)
    a.add_argument("--outcomes", required=True, help="comma-separated outcome columns")
    a.add_argument("--covariates", help="comma-separated covariate columns")
    a.add_argument("--stratum")
    a.add_argument("--weights", help="known inverse-probability weights column")
    a.add_argument("--design", required=True, choices=["cre", "sre-reg", "sre-strat", "obs"])
    a.add_argument("--adjust", action="store_true", help="covariate-adjusted estimator")
    a.add_argument("--alpha", type=float, default=0.05)
    a.add_argument("--ci", default="auto", choices=[m.value for m in CIMethod])
    a.add_argument("--eta", type=float, help="pre-test level for two-step intervals")
    a.add_argument("--inverse-logistic", action="store_true")
    a.add_argument("--r", default="0", help="SRE-adjusted weight r (number or 'opt')")
    a.add_argument("--seed", type=int, default=0, help="seed for bootstrap and MC fallbacks")
    a.add_argument("--out")

    s = sub.add_parser("simulate", help="run a Monte Carlo study from a TOML spec")
    s.add_argument("--spec", required=True)
    s.add_argument("--reps", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--records", action="store_true", help="include per-replicate records")
    s.add_argument("--out")

    w = sub.add_parser("wchi2", help="evaluate a weighted chi-square law")
    w.add_argument("--lambdas", required=True)
    g = w.add_mutually_exclusive_group(required=True)
    g.add_argument("--cdf", type=float, metavar="T")
    g.add_argument("--quantile", type=float, metavar="P")
    return p


def _emit(payload, out):
    text = jsonio.dumps(payload)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_analyze(args):
    roles = {"treatment": args.treatment, "outcomes": _names(args.outcomes),
             "covariates": _names(args.covariates), "stratum": args.stratum,
             "weights": args.weights}
    data = load_csv(args.data, roles)
    spec = DesignSpec(args.design, adjust_covariates=args.adjust, alpha=args.alpha,
                      ci_method=args.ci, eta=args.eta,
                      inverse_logistic=args.inverse_logistic, r=_r_value(args.r))
    _emit(report(data, spec, seed=args.seed), args.out)


def cmd_simulate(args):
    dgp, study = montecarlo.load_config(args.spec)
    if args.seed is not None:
        dgp = dataclasses.replace(dgp, seed=args.seed)
    summary = montecarlo.run_study(dgp, study, reps=args.reps, workers=args.workers)
    payload = {"schema_version": "1.0", "dgp": dgp.to_dict(), "study": study.to_dict(),
               "summary": summary.to_dict()}
    if args.records:
        payload["records"] = summary.records
    _emit(payload, args.out)


def cmd_wchi2(args):
    law = WeightedChiSq(_floats(args.lambdas))
    if args.cdf is not None:
        value = law.cdf(args.cdf)
    else:
        if not 0 < args.quantile < 1:
            raise InvalidSpec("quantile level must lie in (0, 1)", p=args.quantile)
        value = law.quantile(args.quantile)
    sys.stdout.write(format(float(value), ".17g") + "\n")


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "wchi2": cmd_wchi2}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args)
    except InvCompositeError as exc:
        sys.stderr.write(json.dumps(exc.to_dict(), default=str) + "\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(json.dumps({"error": "InputError", "message": str(exc)}) + "\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
