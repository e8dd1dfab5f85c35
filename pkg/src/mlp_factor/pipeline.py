"""Stage driver: ingest, split, train, evaluate, dm, importance, backtest, report.

Every stage reloads and re-filters the inputs (cheap and deterministic) and
reads upstream artifacts from the output directory, so stages can run
independently.  ``run.json`` records the config hash, the completed stages
and a digest of every artifact; per-stage wall times go to ``timings.json``
so that the manifest itself stays byte-reproducible.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .backtest import (
    apply_costs,
    buy_and_hold,
    generate_signals,
    metric_report,
    portfolio_breakdown,
    wealth_path,
    write_report,
)
from .config import RunConfig, parse_model
from .errors import (
    ConfigError,
    DegenerateDMError,
    FactorPipelineError,
    PanelError,
    ParseError,
    StageError,
    StaleArtifactError,
)
from .evaluation import (
    PredictionSet,
    dm_test,
    importance_ranking,
    oos_r2,
    permutation_importance,
    stock_metrics,
)
from .linear import fit_ols, fit_pcr, fit_pls, load_linear, predict_linear, save_linear
from .mlp import PyramidSpec, init_network, load_network, pyramid_widths, save_network, train
from .panel import (
    DateRange,
    Panel,
    add_months,
    ColumnStats,
    filter_factors,
    filter_universe,
    fit_column_stats,
    load_panel,
    month_index,
)
from .splits import SplitPlan, build_split_plan

STAGES = ("split", "train", "evaluate", "dm", "importance", "backtest", "report")
_REQUIRES = {"train": "split", "evaluate": "train", "dm": "train", "importance": "train",
             "backtest": "train", "report": "backtest"}
MANIFEST = "run.json"
TIMINGS = "timings.json"
MARKER = "INCOMPLETE"


# -- inputs ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Inputs:
    """Filtered inputs on a common monthly grid."""

    months: tuple
    stocks: tuple
    excess: np.ndarray  # months x stocks, NaN for missing
    factor_names: tuple
    factors: np.ndarray  # months x factors, raw
    marketcap: Optional[Panel]
    plan: SplitPlan

    def row(self, month: str) -> int:
        return month_index(month) - month_index(self.months[0])

    def rows(self, rng: DateRange) -> np.ndarray:
        return np.arange(self.row(rng.start), self.row(rng.end) + 1)


def load_inputs(cfg: RunConfig) -> Inputs:
    """Parse the CSVs, align them, build the split plan and apply the filters."""
    for kind in ("returns", "factors"):
        if not cfg.data.get(kind):
            raise ConfigError(f"[data] {kind} path is required")
    returns = load_panel(cfg.data["returns"], "returns")
    factors = load_panel(cfg.data["factors"], "factors")
    rf = load_panel(cfg.data["riskfree"], "riskfree") if cfg.data.get("riskfree") else None
    caps = load_panel(cfg.data["marketcap"], "marketcap") if cfg.data.get("marketcap") else None
    if rf is not None and len(rf.columns) != 1:
        raise ParseError("risk-free file must have exactly one value column",
                         path=cfg.data["riskfree"], row=1)

    spans = [returns.span, factors.span] + ([rf.span] if rf is not None else [])
    start = max((s.start for s in spans), key=month_index)
    end = min((s.end for s in spans), key=month_index)
    if month_index(start) > month_index(end):
        raise PanelError("returns, factors and risk-free files share no months")
    grid = DateRange(start, end)
    returns, factors = returns.slice(grid), factors.slice(grid)
    excess = returns.values.copy()
    if rf is not None:
        rf_col = rf.slice(grid).values[:, 0]
        if np.isnan(rf_col).any():
            raise PanelError("risk-free series has missing months inside the data range")
        excess = excess - rf_col[:, None]

    plan = build_split_plan(cfg.train_start, cfg.initial_train_end, cfg.val_len, cfg.step,
                            cfg.test_end)
    first_target = month_index(plan.iterations[0].train.start)
    if first_target - 1 < month_index(grid.start):
        raise PanelError(f"train_start {cfg.train_start} needs factors from "
                         f"{add_months(cfg.train_start, -1)}, data start at {grid.start}")
    if month_index(cfg.test_end) > month_index(grid.end):
        raise PanelError(f"test period ends {cfg.test_end} but data end at {grid.end}")

    first_pred = plan.iterations[0].predict.start
    train_window = DateRange(plan.iterations[0].train.start, add_months(first_pred, -1))
    test_window = plan.test_range
    excess_panel = Panel(returns.dates, returns.columns, excess, "returns")
    universe = filter_universe(excess_panel, train_window, test_window, cfg.filter)
    lagged = DateRange(add_months(train_window.start, -1), add_months(train_window.end, -1))
    kept_factors = filter_factors(factors, lagged, cfg.filter)
    return Inputs(tuple(returns.dates), tuple(universe.columns), universe.values,
                  tuple(kept_factors.columns), kept_factors.values, caps, plan)


# -- fitting -----------------------------------------------------------------

def task_seed(seed: int, stock: str, iteration: int, model: str) -> np.random.SeedSequence:
    """Seed material that depends only on the task identity."""
    return np.random.SeedSequence([seed, zlib.crc32(stock.encode()), iteration,
                                   zlib.crc32(model.encode())])


def model_widths(cfg: RunConfig, model: str, n_inputs: int) -> list[int]:
    _, depth, override = parse_model(model)
    spec = PyramidSpec(n_inputs, 1, depth, override or cfg.pyramid_mode, cfg.rounding)
    return [n_inputs] + pyramid_widths(spec) + [1]


@dataclass(frozen=True, eq=False)
class FittedModel:
    """A trained model with the transforms needed to predict from raw factors."""

    name: str
    stats: ColumnStats
    target_mean: float
    target_std: float
    net: object = None
    linear: object = None

    def predict_raw(self, X_raw: np.ndarray) -> np.ndarray:
        Z = self.stats.apply(np.asarray(X_raw, dtype=np.float64))
        if self.linear is not None:
            return predict_linear(self.linear, Z)
        return self.target_mean + self.target_std * self.net.predict(Z)


def fit_task(cfg: RunConfig, inputs: Inputs, stock: str, iteration: int, model: str,
             config_hash: str = "", path=None) -> tuple[FittedModel, np.ndarray]:
    """Fit one (stock, iteration, model) and predict its window.

    ``iteration`` is the 1-based index used in splits.csv.

    Factors from month ``m-1`` predict the excess return of month ``m``.
    Standardization statistics come from the factor rows feeding the
    training targets.  Missing training targets are filled with the training
    mean; validation months without a return are dropped.
    """
    it = inputs.plan.iterations[iteration - 1]
    i = inputs.stocks.index(stock)
    tr, va, pr = (inputs.rows(it.train), inputs.rows(it.validation), inputs.rows(it.predict))
    F = inputs.factors
    stats = fit_column_stats(F[tr - 1], inputs.factor_names)
    Xtr, Xva = stats.apply(F[tr - 1]), stats.apply(F[va - 1])
    y = inputs.excess[:, i]
    ytr = y[tr].copy()
    observed = ~np.isnan(ytr)
    ytr[~observed] = ytr[observed].mean()
    keep = ~np.isnan(y[va])
    Xva, yva = Xva[keep], y[va][keep]

    family = parse_model(model)[0]
    meta = {"stock": stock, "iteration": iteration, "model_name": model,
            "factor_stats": stats.to_dict()}
    if family != "mlp":
        X = np.vstack([Xtr, Xva])
        yy = np.concatenate([ytr, yva])
        if family == "ols":
            lin = fit_ols(X, yy)
        elif family == "pcr":
            lin = fit_pcr(X, yy, cfg.variance_threshold)
        else:
            lin = fit_pls(X, yy, cfg.variance_threshold)
        fitted = FittedModel(model, stats, 0.0, 1.0, linear=lin)
        if path is not None:
            save_linear(lin, path, config_hash, **meta)
    else:
        # targets are standardized on the training window so that the
        # learning rate and L1 strength act on a unit scale
        ym = float(ytr.mean())
        ys = float(ytr.std(ddof=1)) if len(ytr) > 1 else 0.0
        ys = ys if ys > 0 else 1.0
        init_state, shuffle_state = task_seed(cfg.seed, stock, iteration, model).generate_state(2)
        net = init_network(model_widths(cfg, model, F.shape[1]), int(init_state),
                           cfg.batchnorm, cfg.train.batchnorm_momentum)
        tcfg = cfg.train.with_seed(int(shuffle_state))
        result = train(net, Xtr, (ytr - ym) / ys, Xva, (yva - ym) / ys, tcfg)
        fitted = FittedModel(model, stats, ym, ys, net=net)
        if path is not None:
            save_network(net, path, config_hash, target_mean=ym, target_std=ys,
                         best_epoch=result.best_epoch,
                         numeric_failure=result.numeric_failure, **meta)
    return fitted, fitted.predict_raw(F[pr - 1])


def load_fitted(path, config_hash: Optional[str] = None) -> FittedModel:
    from .params_io import load_arrays
    meta, _ = load_arrays(path)
    if config_hash is not None and meta.get("config_hash") != config_hash:
        raise StaleArtifactError(f"{path} was produced under a different configuration")
    stats = ColumnStats.from_dict(meta["factor_stats"])
    if meta["format"].startswith("mlp_factor.linear"):
        return FittedModel(meta["model_name"], stats, 0.0, 1.0, linear=load_linear(path))
    return FittedModel(meta["model_name"], stats, float(meta["target_mean"]),
                       float(meta["target_std"]), net=load_network(path))


# worker-side state, installed once per process
_WORKER: dict = {}


def _init_worker(cfg, inputs, config_hash, model_dir):
    _WORKER.update(cfg=cfg, inputs=inputs, config_hash=config_hash, model_dir=model_dir)


def _run_task(task):
    stock, iteration, model = task
    w = _WORKER
    path = Path(w["model_dir"]) / f"model_{stock}_{iteration}_{model}.params"
    _, pred = fit_task(w["cfg"], w["inputs"], stock, iteration, model, w["config_hash"], path)
    return stock, iteration, model, pred


# -- the driver --------------------------------------------------------------

class Pipeline:
    def __init__(self, cfg: RunConfig, out=None, jobs: int = 1):
        out = out if out is not None else cfg.out
        if not out:
            raise ConfigError("no output directory given (--out or [run] out)")
        self.cfg = cfg
        self.out = Path(out)
        self.jobs = max(1, int(jobs))
        self.config_hash = cfg.config_hash()
        self._inputs = None
        self.notices: list[str] = []

    # -- bookkeeping
    @property
    def inputs(self) -> Inputs:
        if self._inputs is None:
            self._inputs = load_inputs(self.cfg)
        return self._inputs

    def _read_manifest(self) -> Optional[dict]:
        path = self.out / MANIFEST
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def _write_manifest(self, manifest: dict) -> None:
        manifest["artifacts"] = self._artifact_digests()
        text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        (self.out / MANIFEST).write_text(text, encoding="utf-8")

    def _artifact_digests(self) -> dict:
        skip = {MANIFEST, TIMINGS, MARKER}
        digests = {}
        for p in sorted(self.out.rglob("*")):
            rel = p.relative_to(self.out).as_posix()
            if p.is_file() and rel not in skip:
                digests[rel] = hashlib.sha256(p.read_bytes()).hexdigest()
        return digests

    def _fresh_manifest(self) -> dict:
        inp = self.inputs
        return {
            "version": __version__,
            "config_hash": self.config_hash,
            "seed": self.cfg.seed,
            "roster": list(self.cfg.roster),
            "periods": dict(self.cfg.sorted_periods()),
            "universe": list(inp.stocks),
            "factors": list(inp.factor_names),
            "n_iterations": len(inp.plan.iterations),
            "stages": [],
        }

    def _check_upstream(self, stage: str) -> dict:
        manifest = self._read_manifest()
        if manifest is None:
            raise StageError(stage, FileNotFoundError(
                f"{self.out / MANIFEST} missing; run the {_REQUIRES[stage]} stage first"))
        if manifest.get("config_hash") != self.config_hash:
            raise StaleArtifactError(
                f"artifacts in {self.out} were produced under config hash "
                f"{manifest.get('config_hash', '?')[:12]}, current is {self.config_hash[:12]}")
        need = _REQUIRES[stage]
        if need not in manifest.get("stages", []):
            raise StageError(stage, RuntimeError(f"run the {need} stage first"))
        return manifest

    def _record_timing(self, stage: str, seconds: float) -> None:
        path = self.out / TIMINGS
        timings = json.loads(path.read_text()) if path.exists() else {}
        timings[stage] = round(seconds, 3)
        path.write_text(json.dumps(timings, indent=2, sort_keys=True) + "\n")

    def run_stage(self, stage: str, **kwargs):
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        self.out.mkdir(parents=True, exist_ok=True)
        marker = self.out / MARKER
        t0 = time.perf_counter()
        try:
            if stage == "split":
                manifest = self._fresh_manifest()
                previous = self._read_manifest()
                if previous and previous.get("config_hash") == self.config_hash:
                    manifest["stages"] = previous.get("stages", [])
            else:
                manifest = self._check_upstream(stage)
            # only mark the directory once the stage is about to write into it
            marker.write_text(f"{stage}\n")
            complete = getattr(self, "_stage_" + stage)(**kwargs)
        except (StaleArtifactError, StageError):
            raise
        except (FactorPipelineError, OSError, ValueError) as exc:
            raise StageError(stage, exc) from exc
        done = [s for s in manifest["stages"] if s != stage]
        if complete is not False:
            done.append(stage)
        manifest["stages"] = sorted(done, key=STAGES.index)
        self._write_manifest(manifest)
        self._record_timing(stage, time.perf_counter() - t0)
        marker.unlink()

    def run(self) -> None:
        for stage in STAGES:
            self.run_stage(stage)

    # -- stages
    def _stage_split(self):
        self.inputs.plan.to_csv(self.out / "splits.csv")

    def _stage_train(self, models: Optional[Sequence[str]] = None,
                     stocks: Optional[Sequence[str]] = None) -> bool:
        """Fit the requested slice of tasks; True once every prediction file exists."""
        inp = self.inputs
        on_disk = SplitPlan.from_csv(self.out / "splits.csv")
        if on_disk.to_csv_text() != inp.plan.to_csv_text():
            raise StaleArtifactError("splits.csv does not match the configured split plan")
        models = list(models or self.cfg.roster)
        stocks = list(stocks or inp.stocks)
        for m in models:
            if m not in self.cfg.roster:
                raise ConfigError(f"model {m!r} is not in the roster")
        for s in stocks:
            if s not in inp.stocks:
                raise ConfigError(f"stock {s!r} is not in the filtered universe")
        model_dir = self.out / "models"
        model_dir.mkdir(exist_ok=True)
        tasks = [(s, it.index, m) for m in models for s in stocks
                 for it in inp.plan.iterations]
        args = (self.cfg, inp, self.config_hash, str(model_dir))
        if self.jobs == 1:
            _init_worker(*args)
            results = [_run_task(t) for t in tasks]
        else:
            with ProcessPoolExecutor(self.jobs, initializer=_init_worker, initargs=args) as ex:
                results = list(ex.map(_run_task, tasks, chunksize=1))
        results.sort(key=lambda r: (r[2], r[0], r[1]))

        months = inp.plan.predict_months()
        pred_rows = np.array([inp.row(m) for m in months])
        first_train = inp.rows(inp.plan.iterations[0].train)
        by_key = {(m, s): {} for m in models for s in stocks}
        for s, k, m, pred in results:
            by_key[(m, s)][k] = pred
        for (m, s), parts in by_key.items():
            i = inp.stocks.index(s)
            pred = np.concatenate([parts[k] for k in sorted(parts)])
            realized = inp.excess[pred_rows, i]
            train_mean = float(np.nanmean(inp.excess[first_train, i]))
            pdir = self.out / "predictions" / m
            pdir.mkdir(parents=True, exist_ok=True)
            PredictionSet((s,), tuple(months), pred[:, None], realized[:, None],
                          [train_mean]).to_csv(pdir / f"{s}.csv")
        return all((self.out / "predictions" / m / f"{s}.csv").exists()
                   for m in self.cfg.roster for s in inp.stocks)

    def load_predictions(self, model: str) -> PredictionSet:
        parts = []
        for s in self.inputs.stocks:
            path = self.out / "predictions" / model / f"{s}.csv"
            if not path.exists():
                raise StageError("train", FileNotFoundError(f"{path} missing; train {model} "
                                                            f"for {s} first"))
            parts.append(PredictionSet.from_csv(path))
        return PredictionSet.concat_stocks(parts)

    def period_range(self, label: str) -> DateRange:
        return DateRange(self.inputs.plan.iterations[0].predict.start, self.cfg.periods[label])

    def _stage_evaluate(self):
        rows = []
        summary = []
        for model in self.cfg.roster:
            preds = self.load_predictions(model)
            for label, _ in self.cfg.sorted_periods():
                sub = preds.slice(self.period_range(label))
                per_stock = stock_metrics(sub)
                for stock, r2, err in per_stock:
                    rows.append((stock, model, label, r2, err))
                r2s = np.array([r[1] for r in per_stock])
                pooled = oos_r2(sub.realized, sub.predicted,
                                np.broadcast_to(sub.train_mean, sub.realized.shape))
                summary.append((model, label, float(r2s.mean()), float(np.median(r2s)),
                                pooled, float(np.mean([r[2] for r in per_stock]))))
        rows.sort(key=lambda r: (r[0], r[1], r[2]))
        _write_csv(self.out / "metrics.csv", ("stock", "model", "period", "oos_r2", "mse"),
                   [(s, m, p, repr(r2), repr(e)) for s, m, p, r2, e in rows])
        summary.sort(key=lambda r: (r[0], r[1]))
        _write_csv(self.out / "metrics_summary.csv",
                   ("model", "period", "mean_oos_r2", "median_oos_r2", "pooled_oos_r2",
                    "mean_mse"),
                   [(m, p) + tuple(repr(v) for v in vals) for m, p, *vals in summary])

    def _stage_dm(self):
        roster = list(self.cfg.roster)
        path = self.out / "dm_matrix.csv"
        if len(roster) < 2:
            if path.exists():
                path.unlink()
            self.notices.append("DM matrix omitted: the roster has a single model")
            return
        errors = {m: self.load_predictions(m) for m in roster}
        rows = []
        for label, _ in self.cfg.sorted_periods():
            rng = self.period_range(label)
            ae = {m: p.slice(rng).abs_errors() for m, p in errors.items()}
            for a in range(len(roster)):
                for b in range(a):
                    m, n = roster[a], roster[b]
                    try:
                        res = dm_test(ae[m], ae[n], self.cfg.dm_hac_lags)
                    except DegenerateDMError:
                        self.notices.append(f"DM {m} vs {n} ({label}) undefined: "
                                            f"identical loss differentials")
                        rows.append((label, m, n, "", ""))
                        continue
                    rows.append((label, m, n, repr(res.statistic), repr(res.p_value)))
        _write_csv(path, ("period", "model_m", "model_n", "statistic", "p_value"), rows)

    def _stage_importance(self):
        inp = self.inputs
        plan = inp.plan
        for model in self.cfg.roster:
            fitted = {}
            for s in inp.stocks:
                for it in plan.iterations:
                    path = self.out / "models" / f"model_{s}_{it.index}_{model}.params"
                    if not path.exists():
                        raise StageError("importance", FileNotFoundError(f"{path} missing"))
                    fitted[(s, it.index)] = load_fitted(path, self.config_hash)
            for label, _ in self.cfg.sorted_periods():
                rng = self.period_range(label)
                months = [m for m in plan.predict_months() if m in rng]
                rows = np.array([inp.row(m) for m in months])
                X = inp.factors[rows - 1]
                y = inp.excess[rows]
                spans = []
                for it in plan.iterations:
                    sel = [t for t, m in enumerate(months) if m in it.predict]
                    if sel:
                        spans.append((it.index, np.array(sel)))

                def predict(Xp, spans=spans):
                    out = np.empty((Xp.shape[0], len(inp.stocks)))
                    for k, sel in spans:
                        for i, s in enumerate(inp.stocks):
                            out[sel, i] = fitted[(s, k)].predict_raw(Xp[sel])
                    return out

                scores = {}
                for j, name in enumerate(inp.factor_names):
                    seed = [self.cfg.seed, zlib.crc32(model.encode()),
                            zlib.crc32(label.encode()), j]
                    scores[name] = permutation_importance(
                        predict, X, y, j, seed, self.cfg.importance_repeats)
                ranked = importance_ranking(scores)
                _write_csv(self.out / f"importance_{model}_{label}.csv",
                           ("feature", "importance", "rank"),
                           [(n, repr(scores[n]), r + 1) for r, n in enumerate(ranked)])

    def _stage_backtest(self):
        inp = self.inputs
        if "value" in self.cfg.weightings and inp.marketcap is None:
            raise ConfigError("value weighting needs [data] marketcap")
        caps = inp.marketcap.select(list(inp.stocks)) if inp.marketcap is not None else None
        for label, _ in self.cfg.sorted_periods():
            rng = self.period_range(label)
            curves = {}
            for model in self.cfg.roster:
                preds = self.load_predictions(model).slice(rng)
                ledger = apply_costs(generate_signals(preds, preds), self.cfg.cost_bp,
                                     self.cfg.tc_mode)
                for w in self.cfg.weightings:
                    gross, cost, net = portfolio_breakdown(ledger, w, caps)
                    self._write_backtest(model, w, label, preds.months, gross, cost, net)
                    curves[(w, model)] = wealth_path(net) - 1.0
            base = self.load_predictions(self.cfg.roster[0]).slice(rng)
            for w in self.cfg.weightings:
                series = buy_and_hold(base, w, caps).values
                self._write_backtest("buy-and-hold", w, label, base.months, series,
                                     np.zeros_like(series), series)
                curves[(w, "buy-and-hold")] = wealth_path(series) - 1.0
                names = list(self.cfg.roster) + ["buy-and-hold"]
                table = [[m] + [repr(float(curves[(w, n)][t])) for n in names]
                         for t, m in enumerate(base.months)]
                _write_csv(self.out / f"cumret_{w}_{label}.csv", ["month"] + names, table)
                if self.cfg.svg:
                    svg = render_svg(base.months, {n: curves[(w, n)] for n in names},
                                     f"Cumulative excess return, {w} weighting, {label}")
                    (self.out / f"cumret_{w}_{label}.svg").write_text(svg, encoding="utf-8")

    def _write_backtest(self, model, weighting, label, months, gross, cost, net):
        wealth = wealth_path(net)
        rows = [(m, repr(float(g)), repr(float(c)), repr(float(n)), repr(float(v)))
                for m, g, c, n, v in zip(months, gross, cost, net, wealth)]
        _write_csv(self.out / f"backtest_{model}_{weighting}_{label}.csv",
                   ("month", "gross", "cost", "net", "wealth"), rows)

    def _stage_report(self):
        reports = []
        names = list(self.cfg.roster) + ["buy-and-hold"]
        for label, _ in self.cfg.sorted_periods():
            rng = self.period_range(label)
            for w in self.cfg.weightings:
                for model in names:
                    path = self.out / f"backtest_{model}_{w}_{label}.csv"
                    net = read_backtest_net(path)
                    preds = (None if model == "buy-and-hold"
                             else self.load_predictions(model).slice(rng))
                    reports.append(metric_report(model, w, label, net, preds))
        write_report(reports, self.out / "report.csv")
        for w in self.cfg.weightings:
            write_report([r for r in reports if r.weighting == w],
                         self.out / f"report_{w}.csv")


def read_backtest_net(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise StageError("backtest", FileNotFoundError(f"{path} missing"))
    with open(path, newline="", encoding="utf-8") as fh:
        return np.array([float(r["net"]) for r in csv.DictReader(fh)])


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
            "#e377c2", "#17becf", "#bcbd22", "#7f7f7f", "#000000")


def render_svg(months: Sequence[str], curves: dict, title: str,
               width: int = 800, height: int = 420) -> str:
    """Static line chart of cumulative returns, one polyline per series."""
    left, right, top, bottom = 60, 150, 30, 40
    pw, ph = width - left - right, height - top - bottom
    values = np.concatenate([np.asarray(v, float) for v in curves.values()])
    lo, hi = float(min(values.min(), 0.0)), float(max(values.max(), 0.0))
    if hi - lo < 1e-12:
        hi = lo + 1.0
    n = max(len(months) - 1, 1)

    def xy(t, v):
        return left + pw * t / n, top + ph * (hi - v) / (hi - lo)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'font-family="sans-serif" font-size="11">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{left}" y="18" font-size="13">{title}</text>']
    _, y0 = xy(0, 0.0)
    parts.append(f'<line x1="{left}" y1="{y0:.2f}" x2="{left + pw}" y2="{y0:.2f}" '
                 f'stroke="#999" stroke-dasharray="4 3"/>')
    parts.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" '
                 f'stroke="#333"/>')
    for v in (lo, hi):
        _, yv = xy(0, v)
        parts.append(f'<text x="{left - 5}" y="{yv + 4:.2f}" text-anchor="end">{v:.2f}</text>')
    parts.append(f'<text x="{left}" y="{height - 15}">{months[0]}</text>')
    parts.append(f'<text x="{left + pw}" y="{height - 15}" text-anchor="end">'
                 f'{months[-1]}</text>')
    for k, (name, curve) in enumerate(curves.items()):
        colour = _PALETTE[k % len(_PALETTE)]
        pts = " ".join("{:.2f},{:.2f}".format(*xy(t, float(v))) for t, v in enumerate(curve))
        parts.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" '
                     f'points="{pts}"/>')
        ly = top + 14 * (k + 1)
        parts.append(f'<line x1="{left + pw + 10}" y1="{ly - 4}" x2="{left + pw + 30}" '
                     f'y2="{ly - 4}" stroke="{colour}" stroke-width="2"/>')
        parts.append(f'<text x="{left + pw + 35}" y="{ly}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
