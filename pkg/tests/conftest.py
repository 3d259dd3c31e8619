import os
import sys
import time

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from marketedge.learner import TrainConfig, gamma_sweep  # noqa: E402
from marketedge.simulator import (  # noqa: E402
    ExperimentGrid,
    LearnerMarketSpec,
    run_experiment,
    synth_market_for_learner,
)
from marketedge import rng  # noqa: E402

SWEEP_GAMMAS = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
SWEEP_TRAIN_ROWS = 30_000
SWEEP_TEST_ROWS = 1_000_000
SWEEP_SEEDS = 10
THREADS = min(4, os.cpu_count() or 1)


@pytest.fixture(scope="session")
def table3():
    """Full experiment grid at 10^4 rounds; returns (result, seconds)."""
    start = time.perf_counter()
    result = run_experiment(ExperimentGrid(), seed=0, threads=THREADS)
    return result, time.perf_counter() - start


@pytest.fixture(scope="session")
def synthetic_sweep():
    """Ten-replicate gamma sweep on the synthetic learner market; returns (table, seconds)."""
    spec = LearnerMarketSpec()
    n = SWEEP_TRAIN_ROWS + SWEEP_TEST_ROWS

    def builder(k):
        return lambda: synth_market_for_learner(n, spec, rng.stream(0, f"simulator.learner_market/{k}"))

    start = time.perf_counter()
    table = gamma_sweep(
        [builder(k) for k in range(SWEEP_SEEDS)],
        SWEEP_GAMMAS,
        TrainConfig(seed=0),
        train_split=SWEEP_TRAIN_ROWS,
        bets_per_round=30,
        margin=0.02,
        threads=THREADS,
    )
    return table, time.perf_counter() - start
