"""``qreps`` command line: train, bias-study, action-gap, check, plot."""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .checks import report_json, run_checks
from .config import ENV_NAMES, ConfigError, RunConfig, resolve
from .plot import SchemaError, plot_curves, render_svg
from .records import write_csv
from .studies import BIAS_ETAS, GAP_ALPHAS, GAP_ITERATIONS, action_gap_study, bias_rows, summarize, sweep

__all__ = ["main", "build_parser"]


def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _run_flags(p: argparse.ArgumentParser, env_default=None) -> None:
    p.add_argument("--env", choices=ENV_NAMES, default=env_default)
    p.add_argument("--eta", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--beta-prime", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--inner-steps", type=int)
    p.add_argument("--episodes", type=int, help="total episodes; one policy update per episodes_per_update")
    p.add_argument("--horizon", type=int)
    p.add_argument("--seeds", help="A..B inclusive, or a comma list")
    p.add_argument("--loss", choices=("elbe", "selbe", "exact"))
    p.add_argument("--learner", choices=("sgd", "adam-like"))
    p.add_argument("--sampler", choices=("eg", "br", "uniform"))
    p.add_argument("--batch-size", type=int)
    p.add_argument("--grad-mode", choices=("sampled", "exact"))
    p.add_argument("--warm-start", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="output path")
    p.add_argument("--config", help="flat key = value file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qreps", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="sample-based Q-REPS over a seed range, one CSV row per iteration")
    _run_flags(p)
    p.add_argument("--exact-baseline", action="store_const", const=True, default=None, help="also run Q-REPS*")
    p.add_argument("--plot", help="also render the curves to this SVG")

    p = sub.add_parser("bias-study", help="empirical vs exact loss over an eta grid")
    _run_flags(p, env_default="two-state-stochastic")
    p.add_argument("--eta-grid", type=_floats, default=BIAS_ETAS)
    p.add_argument("--n-grid", type=lambda s: tuple(int(v) for v in _floats(s)), default=(100,))

    p = sub.add_parser("action-gap", help="final action gap at x0 over an alpha grid")
    _run_flags(p, env_default="two-state-stochastic")
    p.add_argument("--alpha-grid", type=_floats, default=GAP_ALPHAS)
    p.add_argument("--state", type=int, default=0)
    p.add_argument("--exact-only", action="store_true")

    p = sub.add_parser("check", help="self-check battery; nonzero exit on failure")
    p.add_argument("--out", help="write the JSON report here as well")
    p.add_argument("--only", nargs="*", help="run only these named checks")
    p.add_argument("--fail-fast", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-grad-fault", type=float, default=0.0, help=argparse.SUPPRESS)

    p = sub.add_parser("plot", help="render run CSVs to SVG")
    p.add_argument("csv", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--title")
    return parser


_FLAG_KEYS = (
    "env",
    "eta",
    "alpha",
    "beta",
    "beta_prime",
    "gamma",
    "inner_steps",
    "episodes",
    "horizon",
    "seeds",
    "loss",
    "learner",
    "sampler",
    "batch_size",
    "grad_mode",
    "warm_start",
    "exact_baseline",
    "out",
)


def _config(args) -> RunConfig:
    flags = {k: getattr(args, k, None) for k in _FLAG_KEYS}
    return resolve(config_file=args.config, flags=flags)


def _print_summary(records, stream=None) -> None:
    stream = stream or sys.stdout
    for alg, (its, mean, std) in summarize(records).items():
        print(f"# {alg}: mean +/- sd of normalized return over {sum(r.algorithm == alg for r in records)} seeds", file=stream)
        for it, m, s in zip(its, mean, std):
            print(f"{alg} iter {it:4d}  {m:.4f} +/- {s:.4f}", file=stream)


def _report_incomplete(records) -> int:
    bad = [r for r in records if not r.complete]
    for r in bad:
        print(f"warning: {r.algorithm} seed {r.seed} stopped early: {r.error}", file=sys.stderr)
    return 1 if bad else 0


def cmd_train(args) -> int:
    cfg = _config(args)
    out = Path(cfg.out or f"{cfg.env}.csv")
    try:
        records = sweep(cfg, workers=args.workers, out=out)
    except KeyboardInterrupt:
        print(f"interrupted; completed seeds are in {out}", file=sys.stderr)
        return 130
    _print_summary(records)
    print(f"wrote {out}")
    if args.plot:
        render_svg(out, args.plot, title=cfg.env)
        print(f"wrote {args.plot}")
    return _report_incomplete(records)


def cmd_bias_study(args) -> int:
    cfg = _config(args)
    out = Path(cfg.out or "bias-study")
    out.mkdir(parents=True, exist_ok=True)
    rows = bias_rows(cfg.env, args.eta_grid, alpha=cfg.alpha, horizon=cfg.horizon, gamma=cfg.gamma)
    with (out / "bias.csv").open("w", newline="") as fh:
        fh.write(f"# env={cfg.env} alpha={cfg.alpha} eta grid={','.join(map(str, args.eta_grid))} (chosen grid)\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("eta", "min_gap", "bias_at_lbe_min"))
        w.writerows(rows)
    print("eta  expectation-ELBE minus LBE (gap of minima, at the LBE minimizer)")
    for eta, gap, at_min in rows:
        print(f"{eta:6g}  {gap:.6g}  {at_min:.6g}")
    paths, labels, status = [], [], 0
    for eta in args.eta_grid:
        for n in args.n_grid:
            c = replace(cfg, eta=eta, batch_size=n, exact_baseline=True)
            path = out / f"curves_eta{eta:g}_n{n}.csv"
            records = sweep(c, workers=args.workers, out=path)
            status |= _report_incomplete(records)
            paths.append(path)
            labels.append(f"eta={eta:g} N={n}")
            for alg, (_, mean, std) in summarize(records).items():
                print(f"eta={eta:g} N={n} {alg}: final {mean[-1]:.4f} +/- {std[-1]:.4f}")
    render_svg(paths, out / "bias-study.svg", title=f"{cfg.env}: eta sweep", labels=labels)
    print(f"wrote {out}")
    return status


def cmd_action_gap(args) -> int:
    if args.episodes is None:
        args.episodes = GAP_ITERATIONS
    cfg = _config(args)
    out = Path(cfg.out or "action-gap")
    out.mkdir(parents=True, exist_ok=True)
    gaps, recs, slope = action_gap_study(cfg, args.alpha_grid, empirical=not args.exact_only, state=args.state)
    with (out / "action_gap.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("alpha", "algorithm", "seed", "iteration", "action_gap"))
        for g in gaps:
            for k, gap in enumerate(g.gaps, 1):
                w.writerow((g.alpha, g.algorithm, g.seed, k, repr(gap)))
    for alpha in args.alpha_grid:
        write_csv([r for a, r in recs if a == alpha], out / f"curves_alpha{alpha:g}.csv")
    exact = [g for g in gaps if g.algorithm == "qreps-exact"]
    print("alpha  final gap (Q-REPS*)  final gap (Q-REPS, mean over seeds)")
    curves = {"qreps-exact": (np.array(args.alpha_grid), np.array([g.final for g in exact]), np.zeros(len(exact)))}
    for alpha, g in zip(args.alpha_grid, exact):
        emp = [h.final for h in gaps if h.algorithm == "qreps" and h.alpha == alpha]
        tail = f"{np.mean(emp):.6g}" if emp else "-"
        print(f"{alpha:6g}  {g.final:.6g}  {tail}")
    print(f"log-log slope of the exact gap: {slope:.4f}")
    plot_curves(curves, out / "action-gap.svg", title=f"{cfg.env}: action gap at x{args.state}", xlabel="alpha", ylabel="action gap", log=True)
    print(f"wrote {out}")
    return 0


def cmd_check(args) -> int:
    results = run_checks(args.only, seed=args.seed, grad_fault=args.inject_grad_fault, fail_fast=args.fail_fast)
    report = report_json(results)
    for r in results:
        mark = "PASS" if r.passed else "FAIL"
        print(f"{mark} {r.name} (criterion {r.criterion}): worst {r.worst:.3g} vs {r.tolerance:.3g} {r.detail}".rstrip(), file=sys.stderr)
    print(report)
    if args.out:
        Path(args.out).write_text(report + "\n")
    return 0 if all(r.passed for r in results) else 1


def cmd_plot(args) -> int:
    labels = [Path(c).stem for c in args.csv] if len(args.csv) > 1 else None
    render_svg(args.csv, args.out, title=args.title, labels=labels)
    print(f"wrote {args.out}")
    return 0


_COMMANDS = {
    "train": cmd_train,
    "bias-study": cmd_bias_study,
    "action-gap": cmd_action_gap,
    "check": cmd_check,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, SchemaError, FileNotFoundError) as exc:
        print(f"qreps {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
