"""Command-line entry point: ``mlp-factor <subcommand> [options]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import RunConfig, load_config, render_config
from .errors import FactorPipelineError
from .mlp import TrainConfig
from .panel import add_months, month_index
from .pipeline import STAGES, Pipeline, load_inputs
from .synthetic import SyntheticSpec, generate


def synthetic_config(spec: SyntheticSpec, roster=("ols", "pcr", "fw1", "fw2")) -> RunConfig:
    """A run configuration sized for a generated panel.

    The last ~28% of months are predicted in yearly steps, preceded by a
    five-year validation window.  Training uses a faster learning rate and
    longer patience than the defaults because the synthetic panels are short.
    """
    end = add_months(spec.start, spec.n_months - 1)
    n_test = max(12, round(0.28 * spec.n_months))
    val_len = max(12, min(60, spec.n_months // 5))
    first_pred = add_months(end, -(n_test - 1))
    initial_train_end = add_months(first_pred, -(val_len + 1))
    train_start = add_months(spec.start, 1)
    if month_index(initial_train_end) < month_index(train_start) + 24:
        raise ValueError("panel too short for a synthetic run; use n_months >= 120")
    periods = {"full": end}
    if n_test > 24:
        periods["short"] = add_months(end, -12)
    return RunConfig(
        train_start=train_start, initial_train_end=initial_train_end, val_len=val_len,
        step=12, periods=periods, roster=tuple(roster), pyramid_mode="formula",
        train=TrainConfig(learning_rate=0.01, patience=30, max_epochs=500),
        seed=spec.seed)


def _cmd_synth(args) -> int:
    spec = SyntheticSpec(n_stocks=args.n_stocks, n_factors=args.n_factors,
                         n_months=args.n_months, nonlinearity=args.nonlinearity,
                         beta_scale=args.beta_scale, missing_frac=args.missing_frac,
                         protect_last_months=args.n_months // 2,
                         seed=args.seed if args.seed is not None else 0)
    out = Path(args.out or "synthetic")
    data = generate(spec)
    paths = data.write_csvs(out)
    cfg = synthetic_config(spec)
    text = render_config(cfg, {k: p.name for k, p in paths.items()})
    (out / "config.ini").write_text(text, encoding="utf-8")
    print(f"wrote {', '.join(sorted(p.name for p in paths.values()))} and config.ini to {out}")
    return 0


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    return cfg.with_overrides(seed=args.seed, period=args.period, out=args.out)


def _cmd_ingest_check(args) -> int:
    inputs = load_inputs(_load(args))
    print(f"months {inputs.months[0]}..{inputs.months[-1]} ({len(inputs.months)}), "
          f"universe {len(inputs.stocks)} stocks, {len(inputs.factor_names)} factors, "
          f"{len(inputs.plan.iterations)} iterations")
    return 0


def _cmd_stage(args) -> int:
    cfg = _load(args)
    if args.command == "train" and args.model:
        cfg_models = [m.strip() for m in args.model.split(",") if m.strip()]
    else:
        cfg_models = None
    pipe = Pipeline(cfg, jobs=args.jobs)
    stages = STAGES if args.command == "run" else (args.command,)
    for stage in stages:
        kwargs = {}
        if stage == "train" and args.command == "train":
            kwargs = {"models": cfg_models,
                      "stocks": [s.strip() for s in args.stocks.split(",")] if args.stocks
                      else None}
        pipe.run_stage(stage, **kwargs)
        for notice in pipe.notices:
            print(f"notice: {notice}")
        pipe.notices.clear()
    print(f"artifacts in {pipe.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mlp-factor", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="INI run configuration")
    common.add_argument("--period", help="restrict to one period label, e.g. 2112")
    common.add_argument("--seed", type=int, help="override the global seed")
    common.add_argument("--out", help="output directory (overrides [run] out)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for training")

    p = sub.add_parser("ingest-check", parents=[common], help="parse and filter inputs")
    p.set_defaults(func=_cmd_ingest_check)
    for name in STAGES + ("run",):
        p = sub.add_parser(name, parents=[common],
                           help="all stages" if name == "run" else f"{name} stage")
        if name == "train":
            p.add_argument("--model", help="comma-separated subset of the roster")
            p.add_argument("--stocks", help="comma-separated subset of the universe")
        p.set_defaults(func=_cmd_stage)

    p = sub.add_parser("synth", help="write a synthetic panel and a matching config")
    p.add_argument("--out", help="output directory (default ./synthetic)")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-stocks", type=int, default=20)
    p.add_argument("--n-factors", type=int, default=10)
    p.add_argument("--n-months", type=int, default=300)
    p.add_argument("--nonlinearity", choices=("none", "relu_mixture"), default="relu_mixture")
    p.add_argument("--beta-scale", type=float, default=0.005)
    p.add_argument("--missing-frac", type=float, default=0.0)
    p.set_defaults(func=_cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FactorPipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
