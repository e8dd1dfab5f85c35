"""Run configuration: an INI file with one section per pipeline concern.

Every hyperparameter the pipeline uses is surfaced here.  Relative data
paths resolve against the directory holding the config file.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import re
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

from .errors import ConfigError
from .mlp import TrainConfig
from .panel import UniverseFilterSpec, month_index

KNOWN_PERIODS = {"2112": "2021-12", "1911": "2019-11", "2212": "2022-12"}
LINEAR_MODELS = ("ols", "pls", "pcr")
_MLP_RE = re.compile(r"^(gkx_)?fw([1-5])$")
DATA_FILES = ("returns", "factors", "marketcap", "riskfree")


def parse_model(name: str) -> tuple[str, int, str]:
    """``(family, depth, pyramid override)`` for a roster entry.

    Linear models have depth 0.  ``gkx_fwL`` always uses the fixed GKX widths;
    ``fwL`` follows the configured pyramid mode.
    """
    if name in LINEAR_MODELS:
        return name, 0, ""
    m = _MLP_RE.match(name)
    if not m:
        raise ConfigError(f"unknown model {name!r}; expected one of ols, pls, pcr, "
                          f"fw1..fw5, gkx_fw1..gkx_fw5")
    return "mlp", int(m.group(2)), "fixed_gkx" if m.group(1) else ""


@dataclass(frozen=True)
class RunConfig:
    data: dict = field(default_factory=dict)  # file kind -> path ("" means absent)
    train_start: str = "1957-01"
    initial_train_end: str = "2003-01"
    val_len: int = 119
    step: int = 12
    periods: dict = field(default_factory=lambda: {"2112": "2021-12", "1911": "2019-11"})
    filter: UniverseFilterSpec = UniverseFilterSpec()
    roster: tuple = ("ols", "pls", "pcr", "fw1", "fw2", "fw3", "fw4", "fw5")
    pyramid_mode: str = "fixed_main"
    rounding: str = "floor"
    variance_threshold: float = 0.95
    batchnorm: bool = True
    train: TrainConfig = TrainConfig()
    importance_repeats: int = 10
    dm_hac_lags: int = 0
    cost_bp: float = 50.0
    tc_mode: str = "notional"
    weightings: tuple = ("equal", "value")
    svg: bool = True
    seed: int = 0
    out: Optional[str] = None

    def __post_init__(self):
        for name in self.roster:
            parse_model(name)
        if len(set(self.roster)) != len(self.roster) or not self.roster:
            raise ConfigError("model roster must be non-empty without duplicates")
        if self.pyramid_mode not in ("formula", "fixed_main", "fixed_gkx"):
            raise ConfigError(f"unknown pyramid_mode {self.pyramid_mode!r}")
        if not self.periods:
            raise ConfigError("at least one period is required")
        for label, end in self.periods.items():
            try:
                month_index(end)
            except ValueError as exc:
                raise ConfigError(f"period {label}: {exc}") from None
        for w in self.weightings:
            if w not in ("equal", "value"):
                raise ConfigError(f"unknown weighting {w!r}")
        if self.tc_mode not in ("notional", "literal"):
            raise ConfigError(f"unknown tc_mode {self.tc_mode!r}")
        if self.cost_bp < 0 or self.importance_repeats < 1 or self.dm_hac_lags < 0:
            raise ConfigError("cost_bp, importance_repeats and dm_hac_lags out of range")
        if not 0 < self.variance_threshold <= 1:
            raise ConfigError("variance_threshold must lie in (0, 1]")

    @property
    def test_end(self) -> str:
        return max(self.periods.values(), key=month_index)

    def sorted_periods(self) -> list[tuple[str, str]]:
        """Periods ordered by test end, then label."""
        return sorted(self.periods.items(), key=lambda kv: (month_index(kv[1]), kv[0]))

    def with_overrides(self, seed: Optional[int] = None, period: Optional[str] = None,
                       out: Optional[str] = None) -> "RunConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if period is not None:
            end = self.periods.get(period, KNOWN_PERIODS.get(period))
            if end is None:
                raise ConfigError(f"unknown period {period!r}")
            cfg = replace(cfg, periods={period: end})
        if out is not None:
            cfg = replace(cfg, out=str(out))
        return cfg

    def semantic_dict(self) -> dict:
        """Everything that changes results; paths and output location excluded."""
        d = asdict(self)
        d.pop("out")
        d.pop("data")
        d["roster"] = list(self.roster)
        d["weightings"] = list(self.weightings)
        return d

    def config_hash(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(self.semantic_dict(), sort_keys=True).encode())
        for kind in DATA_FILES:
            path = self.data.get(kind, "")
            h.update(f"|{kind}|".encode())
            if path and Path(path).exists():
                h.update(hashlib.sha256(Path(path).read_bytes()).digest())
        return h.hexdigest()


def _split_list(text: str) -> tuple:
    return tuple(x.strip() for x in text.replace("\n", ",").split(",") if x.strip())


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: config file not found")
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read(path, encoding="utf-8")
        return _from_parser(cp, path.parent)
    except (configparser.Error, ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _from_parser(cp: configparser.ConfigParser, base: Path) -> RunConfig:
    known = {"data", "split", "periods", "filter", "models", "train", "evaluation",
             "backtest", "run"}
    extra = set(cp.sections()) - known
    if extra:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(extra))}")
    kw = {}
    data = {}
    for kind in DATA_FILES:
        raw = cp.get("data", kind, fallback="").strip()
        data[kind] = str((base / raw).resolve()) if raw else ""
    kw["data"] = data
    if cp.has_section("split"):
        s = cp["split"]
        kw["train_start"] = s.get("train_start", "1957-01")
        kw["initial_train_end"] = s.get("initial_train_end", "2003-01")
        kw["val_len"] = s.getint("val_len", 119)
        kw["step"] = s.getint("step", 12)
    if cp.has_section("periods"):
        kw["periods"] = {k: v.strip() for k, v in cp["periods"].items()}
    if cp.has_section("filter"):
        f = cp["filter"]
        kw["filter"] = UniverseFilterSpec(f.getfloat("max_train_missing_frac", 0.5),
                                          f.getboolean("test_missing_allowed", False),
                                          f.getfloat("min_factor_train_avail_frac", 0.6))
    if cp.has_section("models"):
        m = cp["models"]
        if "roster" in m:
            kw["roster"] = _split_list(m["roster"])
        kw["pyramid_mode"] = m.get("pyramid_mode", "fixed_main")
        kw["rounding"] = m.get("rounding", "floor")
        kw["variance_threshold"] = m.getfloat("variance_threshold", 0.95)
        kw["batchnorm"] = m.getboolean("batchnorm", True)
    if cp.has_section("train"):
        t = cp["train"]
        defaults = TrainConfig()
        kw["train"] = TrainConfig(
            learning_rate=t.getfloat("learning_rate", defaults.learning_rate),
            beta1=t.getfloat("beta1", defaults.beta1),
            beta2=t.getfloat("beta2", defaults.beta2),
            eps=t.getfloat("eps", defaults.eps),
            l1=t.getfloat("l1", defaults.l1),
            batch_size=t.getint("batch_size", defaults.batch_size),
            max_epochs=t.getint("max_epochs", defaults.max_epochs),
            patience=t.getint("patience", defaults.patience),
            batchnorm_momentum=t.getfloat("batchnorm_momentum", defaults.batchnorm_momentum),
        )
    if cp.has_section("evaluation"):
        e = cp["evaluation"]
        kw["importance_repeats"] = e.getint("importance_repeats", 10)
        kw["dm_hac_lags"] = e.getint("dm_hac_lags", 0)
    if cp.has_section("backtest"):
        b = cp["backtest"]
        kw["cost_bp"] = b.getfloat("cost_bp", 50.0)
        kw["tc_mode"] = b.get("tc_mode", "notional")
        if "weightings" in b:
            kw["weightings"] = _split_list(b["weightings"])
        kw["svg"] = b.getboolean("svg", True)
    if cp.has_section("run"):
        r = cp["run"]
        kw["seed"] = r.getint("seed", 0)
        out = r.get("out", "").strip()
        kw["out"] = str((base / out).resolve()) if out else None
    return RunConfig(**kw)


def render_config(cfg: RunConfig, data_paths: Optional[dict] = None) -> str:
    """INI text that :func:`load_config` parses back into ``cfg``."""
    t = cfg.train
    paths = data_paths if data_paths is not None else cfg.data
    lines = ["[data]"]
    lines += [f"{k} = {paths.get(k, '')}" for k in DATA_FILES]
    lines += ["", "[split]", f"train_start = {cfg.train_start}",
              f"initial_train_end = {cfg.initial_train_end}", f"val_len = {cfg.val_len}",
              f"step = {cfg.step}", "", "[periods]"]
    lines += [f"{k} = {v}" for k, v in cfg.periods.items()]
    f = cfg.filter
    lines += ["", "[filter]", f"max_train_missing_frac = {f.max_train_missing_frac!r}",
              f"test_missing_allowed = {str(f.test_missing_allowed).lower()}",
              f"min_factor_train_avail_frac = {f.min_factor_train_avail_frac!r}",
              "", "[models]", f"roster = {', '.join(cfg.roster)}",
              f"pyramid_mode = {cfg.pyramid_mode}", f"rounding = {cfg.rounding}",
              f"variance_threshold = {cfg.variance_threshold!r}",
              f"batchnorm = {str(cfg.batchnorm).lower()}",
              "", "[train]", f"learning_rate = {t.learning_rate!r}", f"beta1 = {t.beta1!r}",
              f"beta2 = {t.beta2!r}", f"eps = {t.eps!r}", f"l1 = {t.l1!r}",
              f"batch_size = {t.batch_size}", f"max_epochs = {t.max_epochs}",
              f"patience = {t.patience}", f"batchnorm_momentum = {t.batchnorm_momentum!r}",
              "", "[evaluation]", f"importance_repeats = {cfg.importance_repeats}",
              f"dm_hac_lags = {cfg.dm_hac_lags}",
              "", "[backtest]", f"cost_bp = {cfg.cost_bp!r}", f"tc_mode = {cfg.tc_mode}",
              f"weightings = {', '.join(cfg.weightings)}", f"svg = {str(cfg.svg).lower()}",
              "", "[run]", f"seed = {cfg.seed}", ""]
    return "\n".join(lines)
