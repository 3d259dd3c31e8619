"""Line-oriented configuration files.

Grammar::

    # comment                     (also allowed after a value)
    [section]
    key = value
    key = v1, v2, v3              (lists are comma separated)

Keys before the first header belong to ``[market]``.  Every key must be one
of :data:`KEY_DOCS`; unknown keys are rejected with their line number so a
typo cannot silently fall back to a default.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ConfigError

KEY_DOCS: dict[str, str] = {
    "market.mode": "betting | stock",
    "market.mean_r": "mean of the true value R",
    "market.mean_m": "mean of the market estimate M",
    "market.mean_t": "mean of the trader estimate T",
    "market.var_r": "variance of R",
    "market.var_m": "variance of M",
    "market.var_t": "variance of T",
    "market.corr_tm": "Pearson correlation of T and M",
    "market.corr_tr": "Pearson correlation of T and R",
    "market.corr_rm": "Pearson correlation of R and M",
    "market.margin": "bookmaker margin added to each side's probability",
    "market.copula_calibration": "matched | direct",
    "sample.n": "number of triples to draw",
    "sample.source": "copula | uniform",
    "ordering.n": "number of triples in the census",
    "ordering.source": "uniform | mirror | spec",
    "experiment.corr_tr": "list of corr(T,R) values (rows)",
    "experiment.corr_tm": "list of corr(T,M) values (columns)",
    "experiment.corr_rm": "list of corr(R,M) values averaged within each cell",
    "experiment.rounds": "rounds per (cell, corr_rm) combination",
    "experiment.bets_per_round": "bets n per round",
    "experiment.strategies": "strategy kinds to run (must include sharpe and unif for the CSV)",
    "experiment.block_rounds": "rounds per parallel work unit",
    "strategy.strategy": "default strategy kind for single-strategy runs",
    "strategy.unit_stake": "unif stake per bet (default 1/n)",
    "strategy.risk_weight": "MPT risk weight gamma",
    "strategy.kelly_fraction": "fractional-Kelly multiplier in (0,1]",
    "strategy.log_base": "natural | ten",
    "learner.gamma": "decorrelation weight for train",
    "learner.learning_rate": "gradient-descent step size",
    "learner.epochs": "passes over the training rows",
    "learner.batch": "mini-batch size",
    "learner.loss_variant": "market_distance | residual_cov",
    "learner.link": "logistic | identity",
    "learner.intercept": "true | false",
    "learner.weight_decay": "L2 penalty (default 0)",
    "data.dataset": "'synthetic' or a CSV path with header y,m,x1..xk",
    "data.train_rows": "leading rows used for training",
    "data.test_rows": "held-out rows per synthetic replicate",
    "synthetic.feature_dim": "number of feature columns",
    "synthetic.mean_r": "mean of the Beta-distributed true probability",
    "synthetic.var_r": "variance of the true probability",
    "synthetic.shared_noise": "log-odds noise shared by bookmaker and public feature",
    "synthetic.book_noise": "bookmaker-only log-odds noise",
    "synthetic.public_noise": "public-feature-only noise",
    "synthetic.private_noise": "private-feature noise",
    "synthetic.signal": "scale of the latent signal in the features",
    "sweep.gammas": "list of gamma values in [0,1]",
    "sweep.replicates": "synthetic replicates (independent seeds)",
    "sweep.bets_per_round": "bets per backtest round",
    "sweep.margin": "margin added to the market probability of each side in backtests",
}

_SECTIONS = sorted({k.split(".")[0] for k in KEY_DOCS})
_HEADER = re.compile(r"^\[([A-Za-z_][A-Za-z0-9_]*)\]$")
_PAIR = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*)$")


@dataclass
class Config:
    values: dict = field(default_factory=dict)  # "section.key" -> raw string
    lines: dict = field(default_factory=dict)  # "section.key" -> line number
    text: str = ""

    def has(self, key: str) -> bool:
        return key in self.values

    def _raw(self, key, default):
        if key not in KEY_DOCS:
            raise KeyError(f"undocumented config key {key}")
        return self.values.get(key, default)

    def _fail(self, key, msg):
        raise ConfigError(f"{key}: {msg}", self.lines.get(key))

    def get_str(self, key: str, default: str | None = None, choices=None) -> str | None:
        v = self._raw(key, default)
        if v is not None and choices is not None and v not in choices:
            self._fail(key, f"expected one of {', '.join(choices)}, got {v!r}")
        return v

    def get_float(self, key: str, default: float | None = None) -> float | None:
        v = self._raw(key, default)
        if v is None or isinstance(v, float):
            return v
        try:
            return float(v)
        except (TypeError, ValueError):
            self._fail(key, f"expected a number, got {v!r}")

    def get_int(self, key: str, default: int | None = None) -> int | None:
        v = self._raw(key, default)
        if v is None or isinstance(v, int):
            return v
        try:
            return int(v)
        except (TypeError, ValueError):
            self._fail(key, f"expected an integer, got {v!r}")

    def get_bool(self, key: str, default: bool) -> bool:
        v = self._raw(key, default)
        if isinstance(v, bool):
            return v
        if v.lower() in ("true", "yes", "1"):
            return True
        if v.lower() in ("false", "no", "0"):
            return False
        self._fail(key, f"expected true or false, got {v!r}")

    def get_list(self, key: str, default=None, cast=float) -> list | None:
        v = self._raw(key, default)
        if v is None or isinstance(v, (list, tuple)):
            return None if v is None else list(v)
        try:
            return [cast(p.strip()) for p in v.split(",") if p.strip()]
        except ValueError:
            self._fail(key, f"expected a comma-separated list, got {v!r}")

    def set(self, key: str, value) -> None:
        """Command-line override; stored as text so snapshots stay uniform."""
        if key not in KEY_DOCS:
            raise KeyError(key)
        if isinstance(value, (list, tuple)):
            value = ", ".join(str(v) for v in value)
        self.values[key] = str(value)
        self.lines.pop(key, None)

    def snapshot(self) -> str:
        """Canonical text of all effective values, sorted by key."""
        return "".join(f"{k} = {self.values[k]}\n" for k in sorted(self.values))


def parse_config(text: str) -> Config:
    cfg = Config(text=text)
    section = "market"
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        h = _HEADER.match(line)
        if h:
            section = h.group(1)
            if section not in _SECTIONS:
                raise ConfigError(f"unknown section [{section}]", lineno)
            continue
        p = _PAIR.match(line)
        if not p:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key = f"{section}.{p.group(1)}"
        if key not in KEY_DOCS:
            raise ConfigError(f"unknown key {p.group(1)!r} in [{section}]", lineno)
        if key in cfg.values:
            raise ConfigError(f"duplicate key {p.group(1)!r} in [{section}]", lineno)
        value = p.group(2).strip()
        if not value:
            raise ConfigError(f"missing value for {p.group(1)!r}", lineno)
        cfg.values[key] = value
        cfg.lines[key] = lineno
    return cfg


def load_config(path: str | None) -> Config:
    if path is None:
        return Config()
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
