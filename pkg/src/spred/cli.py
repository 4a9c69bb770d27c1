"""Command-line entry point.

Subcommands: gen-demos, train, eval, analyze (variance-gap | limits |
decay | taylor | weights | compare), verify.  Unknown flags or subcommands
exit with status 2 (argparse usage error); validation failures exit 1.
"""

import argparse
import sys

import numpy as np


def _cmd_gen_demos(args):
    from . import envs

    spec = envs.get_spec(args.env)
    episodes, rate = envs.generate_demos(spec, args.quality, args.episodes,
                                         args.seed)
    envs.save_demos(args.out, spec, episodes, rate)
    print(f"wrote {sum(len(e) for e in episodes)} transitions "
          f"({args.episodes} episodes, success rate {rate:.3f}) to {args.out}")
    return 0


def _cmd_train(args):
    from . import harness

    try:
        config = harness.RunConfig.load(args.config)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 1
    if args.out_dir:
        config.out_dir = args.out_dir
    if args.seed is not None:
        config.seed = args.seed
    out = harness.run_training(config)
    print(f"run complete; artifacts in {out}")
    return 0


def _cmd_eval(args):
    from . import harness

    rate = harness.run_eval(args.checkpoint, episodes=args.episodes,
                            seed=args.seed, out_csv=args.out)
    print(f"success_rate {rate}")
    return 0


def _cmd_verify(_args):
    from .verification import run_verification

    return 1 if run_verification() else 0


def _cmd_analyze(args):
    from . import analysis

    if args.analysis == "variance-gap":
        table = analysis.variance_gap_experiment(
            args.checkpoint, args.demos, n_resamples=args.resamples,
            batch=args.batch, rng=args.seed, out_csv=args.out)
        for mode, var in table.items():
            print(f"{mode} {var}")
    elif args.analysis == "limits":
        rows = analysis.limit_behavior_table(out_csv=args.out)
        failures = analysis.check_limit_rows(rows)
        for f in failures:
            print(f"FAIL {f}")
        print(f"{len(rows)} grid rows, {len(failures)} limit failures")
        return 1 if failures else 0
    elif args.analysis == "decay":
        rows = analysis.suboptimal_decay_sim(steps=args.steps,
                                             delta=args.delta,
                                             out_csv=args.out)
        last = rows[-1]
        print(f"final p_p {last['p_p']} p_e {last['p_e']}")
    elif args.analysis == "taylor":
        _, max_dev = analysis.taylor_agreement(out_csv=args.out)
        print(f"max deviation {max_dev}")
    elif args.analysis == "weights":
        log = analysis.WeightLog.load(args.log)
        rows = analysis.weight_evolution_report(log, out_csv=args.out,
                                                out_svg=args.svg)
        first, last = rows[0], rows[-1]
        print(f"{len(rows)} records; fraction<0.1 first {first['lt_0.1']:.3f} "
              f"last {last['lt_0.1']:.3f}")
    elif args.analysis == "compare":
        runs = {}
        for spec_arg in args.run:
            mode, _, paths = spec_arg.partition("=")
            if not paths:
                print(f"error: --run expects MODE=path[,path...], got "
                      f"{spec_arg!r}", file=sys.stderr)
                return 1
            runs[mode] = paths.split(",")
        rows = analysis.gaussian_vs_nonpara_compare(runs, out_csv=args.out)
        for r in rows:
            print(f"{r['mode']} final {r['final_mean']:.3f}±{r['final_std']:.3f} "
                  f"auc {r['auc_mean']:.1f}±{r['auc_std']:.1f}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="spred",
        description="Desk-scale laboratory for uncertainty-weighted "
                    "behaviour cloning with ensemble-critic TD3 and HER.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-demos", help="generate a demonstration file")
    g.add_argument("--env", required=True)
    g.add_argument("--quality", required=True,
                   choices=("expert", "suboptimal", "severe", "mixed-1pct"))
    g.add_argument("--episodes", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=_cmd_gen_demos)

    t = sub.add_parser("train", help="run one training configuration")
    t.add_argument("--config", required=True, help="RunConfig JSON file")
    t.add_argument("--out-dir", default="", help="override output directory")
    t.add_argument("--seed", type=int, default=None, help="override seed")
    t.set_defaults(fn=_cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint greedily")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--episodes", type=int, default=25)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", default="", help="optional one-row CSV")
    e.set_defaults(fn=_cmd_eval)

    v = sub.add_parser("verify", help="run the invariant suite")
    v.set_defaults(fn=_cmd_verify)

    a = sub.add_parser("analyze", help="theory/figure-level analyses")
    asub = a.add_subparsers(dest="analysis", required=True)

    vg = asub.add_parser("variance-gap",
                         help="BC-gradient variance per weighting mode")
    vg.add_argument("--checkpoint", required=True)
    vg.add_argument("--demos", required=True)
    vg.add_argument("--resamples", type=int, default=200)
    vg.add_argument("--batch", type=int, default=0,
                    help="demo batch size (0: from checkpoint config)")
    vg.add_argument("--seed", type=int, default=0)
    vg.add_argument("--out", default="", help="CSV output path")
    vg.set_defaults(fn=_cmd_analyze)

    li = asub.add_parser("limits", help="weight limit-behaviour table")
    li.add_argument("--out", default="")
    li.set_defaults(fn=_cmd_analyze)

    de = asub.add_parser("decay", help="suboptimal-demo weight decay")
    de.add_argument("--steps", type=int, default=40)
    de.add_argument("--delta", type=float, default=1.0)
    de.add_argument("--out", default="")
    de.set_defaults(fn=_cmd_analyze)

    ta = asub.add_parser("taylor", help="Taylor agreement of the two weights")
    ta.add_argument("--out", default="")
    ta.set_defaults(fn=_cmd_analyze)

    we = asub.add_parser("weights", help="weight-evolution report")
    we.add_argument("--log", required=True, help="weights.jsonl from a run")
    we.add_argument("--out", default="", help="binned CSV path")
    we.add_argument("--svg", default="", help="SVG chart path")
    we.set_defaults(fn=_cmd_analyze)

    cp = asub.add_parser("compare", help="aggregate runs per weighting mode")
    cp.add_argument("--run", action="append", required=True,
                    metavar="MODE=metrics.csv[,metrics.csv...]")
    cp.add_argument("--out", default="")
    cp.set_defaults(fn=_cmd_analyze)

    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    np.seterr(over="warn")
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
