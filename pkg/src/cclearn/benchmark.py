"""The committed 5-task toy benchmark used by the demos and the test suite.

20 Gaussian-blob classes in 16 dimensions, split into 5 disjoint 4-class
stages with a stratified 80/20 train/test split.  Every constant here is
frozen so runs reproduce bit-for-bit: the three seeds, the data geometry, and
the per-method hyperparameters (batch sizes and optimizer settings are shared
across methods; temperature, learning rate, and the robust method's margin
and KL strength were tuned per method, mirroring how the baselines are
usually treated).

Memory budgets are quoted against the 480-sample training corpus:
CAPACITY_HIGH stores half of it, CAPACITY_LOW about 4 percent (one to two
samples per old class by the final stage).
"""

from __future__ import annotations

from dataclasses import replace

from .data import TaskStream, gen_synthetic, split_cil
from .runner import RunConfig

BENCHMARK_SEEDS = (1, 5, 11)

NUM_CLASSES = 20
PER_CLASS = 30
INPUT_DIM = 16
NUM_TASKS = 5
TEST_FRACTION = 0.2
SEPARATION = 4.0
NOISE = 0.6

TRAIN_SIZE = int(NUM_CLASSES * PER_CLASS * (1 - TEST_FRACTION))  # 480
CAPACITY_HIGH = TRAIN_SIZE // 2  # 240 = 50% of training data
CAPACITY_LOW = 20  # ~4% of training data

_PER_METHOD = {
    "gcl": dict(tau=0.2, eta=0.6, gcl_gamma=0.8),
    "joint-upper-bound": dict(tau=0.2, eta=0.6, gcl_gamma=0.8),
    "finetune-ce": dict(tau=0.2, eta=0.6),
    "gdro": dict(tau=0.1, margin=0.9, dro_lambda=5.0, dro_gamma=0.9, eta=0.3),
    "zero-shot": {},
}


def benchmark_stream(seed: int) -> TaskStream:
    ds = gen_synthetic(NUM_CLASSES, PER_CLASS, INPUT_DIM, SEPARATION, NOISE, seed)
    return split_cil(ds, NUM_TASKS, TEST_FRACTION, seed + 1)


def benchmark_config(method: str, memory_capacity: int, seed: int, **overrides) -> RunConfig:
    cfg = RunConfig(
        method=method,
        epochs_per_task=15,
        memory_capacity=memory_capacity,
        seed=seed,
        embed_dim=8,
        hidden_dim=0,
        batch_size=32,
        batch_classes=5,
        batch_per_class=6,
        beta1=0.9,
        optimizer="momentum-sgd",
        log_every=20,
        **_PER_METHOD[method],
    )
    return replace(cfg, **overrides) if overrides else cfg
