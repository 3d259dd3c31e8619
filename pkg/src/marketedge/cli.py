"""Command-line front end.

Exit codes: 0 success, 1 anchor failure, 2 input error, 3 infeasible spec.
Every CSV starts with ``# manifest: <hash>``; the hash binds the output to
the subcommand, effective configuration, seed and tool version.  The thread
count is deliberately excluded because results do not depend on it.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field
from importlib import resources

from . import __version__, rng
from .anchors import WORKED_ANCHORS, check_anchors, format_report
from .config import KEY_DOCS, Config, load_config, parse_config
from .datasets import read_dataset_csv
from .errors import ConfigError, InfeasibleSpecError, MarketEdgeError
from .learner import TrainConfig, gamma_sweep, predict, train
from .market_model import MarketSpec, sample_correlated_beta, sample_uniform
from .metrics import accuracy, pearson
from .returns import classification_csv
from .simulator import (
    ExperimentGrid,
    LearnerMarketSpec,
    ordering_census,
    run_experiment,
    synth_market_for_learner,
)
from .strategies import StrategyConfig

_MARKET = [k for k in KEY_DOCS if k.startswith("market.")]
_LEARNER = [k for k in KEY_DOCS if k.startswith("learner.")]
_DATA = [k for k in KEY_DOCS if k.startswith(("data.", "synthetic."))]

SUBCOMMAND_KEYS: dict[str, list[str]] = {
    "sample": _MARKET + ["sample.n", "sample.source"],
    "ordering": _MARKET + ["ordering.n", "ordering.source"],
    "simulate": _MARKET
    + [k for k in KEY_DOCS if k.startswith("experiment.")]
    + ["strategy.unit_stake", "strategy.risk_weight", "strategy.kelly_fraction"],
    "sweep": _DATA + [k for k in _LEARNER if k != "learner.gamma"] + [k for k in KEY_DOCS if k.startswith("sweep.")],
    "train": _DATA + _LEARNER,
    "examples": [],
}


class _View:
    """Read-only config access restricted to the keys a subcommand documents."""

    def __init__(self, cfg: Config, allowed):
        self._cfg, self._allowed = cfg, set(allowed)

    def __getattr__(self, name):
        getter = getattr(self._cfg, name)
        if not name.startswith("get_"):
            return getter

        def checked(key, *a, **kw):
            if key not in self._allowed:
                raise KeyError(f"subcommand reads undocumented key {key}")
            return getter(key, *a, **kw)

        return checked


@dataclass
class RunManifest:
    command: str
    config_snapshot: str
    seed: int
    tool_version: str = __version__
    outputs: list = field(default_factory=list)

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _emit(args, manifest: RunManifest, text: str) -> None:
    if args.out:
        manifest.outputs = [args.out]
    body = f"# manifest: {manifest.digest()}\n" + text
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(body)
        with open(args.out + ".manifest.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump({**asdict(manifest), "hash": manifest.digest()}, fh, indent=2, sort_keys=True)
            fh.write("\n")
    else:
        sys.stdout.write(body)


def market_spec_from(cfg) -> MarketSpec:
    d = MarketSpec()
    return MarketSpec(
        mode=cfg.get_str("market.mode", d.mode, ("betting", "stock")),
        mean_r=cfg.get_float("market.mean_r", d.mean_r),
        mean_m=cfg.get_float("market.mean_m", d.mean_m),
        mean_t=cfg.get_float("market.mean_t", d.mean_t),
        var_r=cfg.get_float("market.var_r", d.var_r),
        var_m=cfg.get_float("market.var_m", d.var_m),
        var_t=cfg.get_float("market.var_t", d.var_t),
        corr_tm=cfg.get_float("market.corr_tm", d.corr_tm),
        corr_tr=cfg.get_float("market.corr_tr", d.corr_tr),
        corr_rm=cfg.get_float("market.corr_rm", d.corr_rm),
        margin=cfg.get_float("market.margin", d.margin),
        copula_calibration=cfg.get_str("market.copula_calibration", d.copula_calibration, ("matched", "direct")),
    )


def learner_spec_from(cfg) -> LearnerMarketSpec:
    d = LearnerMarketSpec()
    return LearnerMarketSpec(
        feature_dim=cfg.get_int("synthetic.feature_dim", d.feature_dim),
        mean_r=cfg.get_float("synthetic.mean_r", d.mean_r),
        var_r=cfg.get_float("synthetic.var_r", d.var_r),
        shared_noise=cfg.get_float("synthetic.shared_noise", d.shared_noise),
        book_noise=cfg.get_float("synthetic.book_noise", d.book_noise),
        public_noise=cfg.get_float("synthetic.public_noise", d.public_noise),
        private_noise=cfg.get_float("synthetic.private_noise", d.private_noise),
        signal=cfg.get_float("synthetic.signal", d.signal),
    )


def train_config_from(cfg, seed: int, gamma: float = 0.0) -> TrainConfig:
    d = TrainConfig()
    return TrainConfig(
        gamma=gamma,
        learning_rate=cfg.get_float("learner.learning_rate", d.learning_rate),
        epochs=cfg.get_int("learner.epochs", d.epochs),
        batch=cfg.get_int("learner.batch", d.batch),
        seed=seed,
        loss_variant=cfg.get_str("learner.loss_variant", None, ("market_distance", "residual_cov")),
        link=cfg.get_str("learner.link", None, ("logistic", "identity")),
        intercept=cfg.get_bool("learner.intercept", True),
        weight_decay=cfg.get_float("learner.weight_decay", 0.0),
    )


def _datasets_from(cfg, seed: int, replicates: int):
    """Replicate builders plus the train split for the configured data source."""
    source = cfg.get_str("data.dataset", "synthetic")
    train_rows = cfg.get_int("data.train_rows", None)
    if source == "synthetic":
        spec = learner_spec_from(cfg)
        train_rows = 30_000 if train_rows is None else train_rows
        n = train_rows + cfg.get_int("data.test_rows", 1_000_000)

        def factory(k):
            return lambda: synth_market_for_learner(n, spec, rng.stream(seed, f"simulator.learner_market/{k}"))

        return [factory(k) for k in range(replicates)], train_rows
    with open(source, encoding="utf-8") as fh:
        data = read_dataset_csv(fh.read())
    return [data], (0.25 if train_rows is None else train_rows)


# --------------------------------------------------------------------------
# Subcommands


def cmd_sample(args, cfg) -> int:
    spec = market_spec_from(cfg)
    n = cfg.get_int("sample.n", 1000)
    source = cfg.get_str("sample.source", "copula", ("copula", "uniform"))
    batch = sample_uniform(n, args.seed) if source == "uniform" else sample_correlated_beta(spec, n, args.seed)
    _emit(args, RunManifest("sample", cfg.snapshot(), args.seed), batch.to_csv())
    return 0


def cmd_ordering(args, cfg) -> int:
    n = cfg.get_int("ordering.n", 1_000_000)
    source = cfg.get_str("ordering.source", "uniform", ("uniform", "mirror", "spec"))
    src = market_spec_from(cfg) if source == "spec" else source
    manifest = RunManifest("ordering", cfg.snapshot() + f"per_triple = {args.per_triple}\n", args.seed)
    if args.per_triple:
        if source == "uniform":
            batch = sample_uniform(n, args.seed)
        elif source == "mirror":
            from .simulator import mirror_sample

            batch = mirror_sample(n, args.seed)
        else:
            batch = sample_correlated_beta(src, n, args.seed)
        _emit(args, manifest, classification_csv(batch))
    else:
        _emit(args, manifest, ordering_census(src, n, args.seed).to_csv())
    return 0


def cmd_simulate(args, cfg) -> int:
    base = market_spec_from(cfg)
    d = ExperimentGrid()
    kinds = cfg.get_list("experiment.strategies", ["sharpe", "unif"], cast=str)
    strategies = tuple(
        StrategyConfig(
            k,
            unit_stake=cfg.get_float("strategy.unit_stake", None),
            risk_weight=cfg.get_float("strategy.risk_weight", 0.5),
            kelly_fraction=cfg.get_float("strategy.kelly_fraction", 1.0),
        )
        for k in kinds
    )
    grid = ExperimentGrid(
        base=base,
        corr_tr=tuple(cfg.get_list("experiment.corr_tr", list(d.corr_tr))),
        corr_tm=tuple(cfg.get_list("experiment.corr_tm", list(d.corr_tm))),
        corr_rm=tuple(cfg.get_list("experiment.corr_rm", list(d.corr_rm))),
        rounds=cfg.get_int("experiment.rounds", d.rounds),
        bets_per_round=cfg.get_int("experiment.bets_per_round", d.bets_per_round),
        strategies=strategies,
    )
    block = cfg.get_int("experiment.block_rounds", 500)
    if block < 1:
        raise ConfigError("experiment.block_rounds must be at least 1")
    result = run_experiment(grid, args.seed, threads=args.threads, block_rounds=block)
    _emit(args, RunManifest("simulate", cfg.snapshot(), args.seed), result.to_csv())
    return 0


def _gammas(cfg):
    gammas = cfg.get_list("sweep.gammas", [0.0, 0.2, 0.4, 0.6, 0.8, 1.0])
    bad = [g for g in gammas if not 0.0 <= g <= 1.0]
    if bad or not gammas:
        raise ConfigError(f"gamma values must lie in [0, 1], got {bad or 'none'}")
    return gammas


def cmd_sweep(args, cfg) -> int:
    gammas = _gammas(cfg)
    replicates = cfg.get_int("sweep.replicates", 10)
    if replicates < 1:
        raise ConfigError("sweep.replicates must be at least 1")
    builders, split = _datasets_from(cfg, args.seed, replicates)
    table = gamma_sweep(
        builders,
        gammas,
        train_config_from(cfg, args.seed),
        train_split=split,
        bets_per_round=cfg.get_int("sweep.bets_per_round", 30),
        margin=cfg.get_float("sweep.margin", 0.02),
        threads=args.threads,
    )
    _emit(args, RunManifest("sweep", cfg.snapshot(), args.seed), table.to_csv())
    return 0


def cmd_train(args, cfg) -> int:
    gamma = cfg.get_float("learner.gamma", 0.0)
    if not 0.0 <= gamma <= 1.0:
        raise ConfigError(f"learner.gamma must lie in [0, 1], got {gamma}")
    builders, split = _datasets_from(cfg, args.seed, 1)
    data = builders[0]() if callable(builders[0]) else builders[0]
    tr, te = data.split(split)
    model, trace = train(tr, train_config_from(cfg, args.seed, gamma))
    lines = ["name,value"]
    lines += [f"theta{i},{w:.12g}" for i, w in enumerate(model.weights)]
    lines.append(f"final_loss,{trace[-1]:.12g}")
    t = predict(model, te.x)
    if te.mode == "betting":
        lines.append(f"heldout_accuracy,{accuracy(te.y, t):.6f}")
    lines.append(f"heldout_corr_tm,{pearson(t, te.m):.6f}")
    _emit(args, RunManifest("train", cfg.snapshot(), args.seed), "\n".join(lines) + "\n")
    return 0


def cmd_examples(args=None, cfg=None, anchors=WORKED_ANCHORS, stream=None) -> int:
    results = check_anchors(anchors)
    text = format_report(results)
    if args is not None and getattr(args, "out", None):
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        (stream or sys.stdout).write(text)
    return 0 if all(ok for *_, ok in results) else 1


# --------------------------------------------------------------------------
# Parser

_OVERRIDES = {
    "sample": [("--n", "sample.n", int, "number of triples"), ("--source", "sample.source", str, "copula | uniform")],
    "ordering": [
        ("--n", "ordering.n", int, "number of triples"),
        ("--source", "ordering.source", str, "uniform | mirror | spec"),
    ],
    "simulate": [
        ("--rounds", "experiment.rounds", int, "rounds per cell and corr_rm value"),
        ("--bets", "experiment.bets_per_round", int, "bets per round"),
    ],
    "sweep": [
        ("--dataset", "data.dataset", str, "'synthetic' or CSV path"),
        ("--gammas", "sweep.gammas", str, "comma-separated gamma list"),
        ("--replicates", "sweep.replicates", int, "synthetic replicates"),
    ],
    "train": [
        ("--dataset", "data.dataset", str, "'synthetic' or CSV path"),
        ("--gamma", "learner.gamma", float, "decorrelation weight"),
    ],
    "examples": [],
}

_HANDLERS = {
    "sample": (cmd_sample, "draw (r, m, t) triples to CSV"),
    "ordering": (cmd_ordering, "ordering census or per-triple classification"),
    "simulate": (cmd_simulate, "Monte-Carlo experiment grid"),
    "sweep": (cmd_sweep, "gamma sweep of the decorrelation loss"),
    "train": (cmd_train, "train one estimator and report held-out metrics"),
    "examples": (cmd_examples, "recompute the worked anchor numbers"),
}


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _global_flags(parser, suppress: bool) -> None:
    dflt = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument(
        "--config", default=dflt(None), help="configuration file, or builtin:grid.cfg / builtin:synthetic.cfg"
    )
    parser.add_argument("--seed", type=_u64, default=dflt(0), help="master seed (u64)")
    parser.add_argument("--out", default=dflt(None), help="output path (default stdout)")
    parser.add_argument("--threads", type=_positive, default=dflt(1), help="worker threads")


def key_help(command: str) -> str:
    keys = SUBCOMMAND_KEYS[command]
    if not keys:
        return "config keys read: none"
    width = max(len(k) for k in keys)
    return "config keys read:\n" + "\n".join(f"  {k.ljust(width)}  {KEY_DOCS[k]}" for k in keys)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="marketedge", description="Market-taker strategy simulation toolkit.")
    parser.add_argument("--version", action="version", version=__version__)
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in _HANDLERS.items():
        p = sub.add_parser(
            name, help=help_text, description=help_text, epilog=key_help(name),
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        _global_flags(p, suppress=True)
        for flag, key, typ, h in _OVERRIDES[name]:
            p.add_argument(flag, dest=key, type=typ, default=None, help=f"{h} (overrides {key})")
        if name == "ordering":
            p.add_argument("--per-triple", action="store_true", help="dump id,r,m,t,ordering,... rows")
    return parser


BUILTIN_PREFIX = "builtin:"


def bundled_configs() -> list[str]:
    return sorted(p.name for p in resources.files("marketedge").joinpath("configs").iterdir() if p.name.endswith(".cfg"))


def _bundled(name: str) -> str:
    if name not in bundled_configs():
        raise ConfigError(f"no bundled config {name!r}; available: {', '.join(bundled_configs())}")
    return resources.files("marketedge").joinpath("configs", name).read_text(encoding="utf-8")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config is not None and args.config.startswith(BUILTIN_PREFIX):
            cfg = parse_config(_bundled(args.config[len(BUILTIN_PREFIX) :]))
        else:
            cfg = load_config(args.config)
        for _, key, _, _ in _OVERRIDES[args.command]:
            value = getattr(args, key, None)
            if value is not None:
                cfg.set(key, value)
        handler = _HANDLERS[args.command][0]
        return handler(args, _View(cfg, SUBCOMMAND_KEYS[args.command]))
    except InfeasibleSpecError as exc:
        print(f"error: infeasible specification: {exc}", file=sys.stderr)
        return 3
    except (MarketEdgeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
