"""Run one or more TOML study configs and print a compact summary table.

    python3 scripts/run_study.py scripts/configs/*.toml --reps 500
"""

import argparse
import json
import time

from invcomposite import montecarlo as mc


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("configs", nargs="+")
    ap.add_argument("--reps", type=int, help="override the replication count")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--json", action="store_true", help="print full summaries as JSON")
    args = ap.parse_args()
    for path in args.configs:
        dgp, study = mc.load_config(path)
        t0 = time.perf_counter()
        s = mc.run_study(dgp, study, reps=args.reps, workers=args.workers)
        elapsed = time.perf_counter() - t0
        if args.json:
            print(json.dumps({"config": path, **s.to_dict()}, indent=2))
            continue
        cover = " ".join(f"{m}={c['rate']:.3f}" for m, c in s.coverage.items())
        ks = "" if s.ks_pit is None else f" ks_pit={s.ks_pit:.4f}"
        print(f"{path}: reps={s.replications} failures={s.failures} "
              f"reject={s.rejection_rate:.4f}+-{s.rejection_se:.4f} "
              f"n*var(tau_c)={s.n_var_tau_c:.4g} {cover}{ks} [{elapsed:.1f}s]")


if __name__ == "__main__":
    main()
