"""Class- and domain-incremental training loops, evaluation, and baselines.

A run walks the task stream in order.  For each stage it trains on the union
of the current task's data and the replay buffer, rebalances the buffer, then
evaluates on every test set seen so far with the candidate-class set grown to
all classes trained so far (class-incremental) or the fixed label set
(domain-incremental).  Classification is always nearest-label-embedding; no
separate linear head exists anywhere.

Accuracy bookkeeping: entry (t, b) is accuracy on task b's test set after
stage t.  The per-stage aggregate A_t is accuracy over the union of test sets
0..t for class-incremental streams, and the unweighted mean of per-domain
accuracies for domain-incremental streams.

Methods:
    gcl               global contrastive loss with replay
    gdro              per-class robust reweighting with replay
    finetune-ce       softmax cross-entropy over similarities, pool classes only
    zero-shot         no training; evaluates the freshly initialized model
    joint-upper-bound one merged training phase over all tasks' data
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .buffer import MemoryBuffer, sample_class_batch
from .data import Task, TaskStream
from .errors import DivergenceError, NonFiniteGradientError
from .gcl import (
    GclEstimatorState,
    gcl_gradient_estimate,
    gcl_loss_full,
    gcl_update_estimators,
)
from .gdro import (
    GdroConfig,
    GdroEstimatorState,
    dro_objective,
    dro_weights,
    gdro_gradient_estimate,
    gdro_update_estimators,
)
from .model import EncoderConfig, EncoderPair
from .optim import init_optimizer, step as optimizer_step

METHODS = ("gcl", "gdro", "finetune-ce", "zero-shot", "joint-upper-bound")


@dataclass(frozen=True)
class RunConfig:
    method: str
    epochs_per_task: int
    memory_capacity: int
    seed: int
    embed_dim: int = 8
    hidden_dim: int = 0
    tau: float = 0.1
    batch_size: int = 32  # gcl / finetune-ce
    gcl_gamma: float = 0.9
    dro_lambda: float = 0.5
    dro_gamma: float = 0.9
    margin: float = 0.1
    batch_classes: int = 4
    batch_per_class: int = 8
    eta: float = 0.2
    beta1: float = 0.9
    optimizer: str = "momentum-sgd"
    log_every: int = 10

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.epochs_per_task < 1:
            raise ValueError("epochs_per_task must be >= 1")
        if self.memory_capacity < 0:
            raise ValueError("memory_capacity must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")


@dataclass
class AccuracyMatrix:
    """Lower-triangular accuracy records plus the per-stage aggregate A_t."""

    entries: dict[tuple[int, int], float] = field(default_factory=dict)
    aggregate: dict[int, float] = field(default_factory=dict)

    def row(self, t: int) -> dict[int, float]:
        return {b: v for (tt, b), v in self.entries.items() if tt == t}

    @property
    def num_stages(self) -> int:
        return len(self.aggregate)

    def final_aggregate(self) -> float:
        return self.aggregate[max(self.aggregate)]


@dataclass
class RunResult:
    accuracy: AccuracyMatrix
    params: np.ndarray
    log: list[dict]


def evaluate(enc: EncoderPair, params, test, candidate_classes) -> float:
    """Fraction of test samples whose nearest label embedding is the true class."""
    if not test:
        raise ValueError("test set must be non-empty")
    preds = enc.predict_batch(params, [s.x for s in test], candidate_classes)
    truth = np.array([s.class_id for s in test])
    return float(np.mean(preds == truth))


# ------------------------------------------------------------- cross-entropy


def ce_loss(enc: EncoderPair, params, batch, candidates, tau) -> float:
    """Mean softmax cross-entropy of sim/tau logits over the candidate classes."""
    Z = enc.similarity_matrix(params, [s.x for s in batch], candidates) / tau
    col = {c: j for j, c in enumerate(candidates)}
    idx = np.array([col[s.class_id] for s in batch])
    m = Z.max(axis=1)
    lse = m + np.log(np.exp(Z - m[:, None]).sum(axis=1))
    return float(np.mean(lse - Z[np.arange(len(batch)), idx]))


def ce_gradient(enc: EncoderPair, params, batch, candidates, tau) -> np.ndarray:
    """Analytic gradient of ce_loss: (softmax - onehot) / (|B| * tau) pair weights."""
    Z = enc.similarity_matrix(params, [s.x for s in batch], candidates) / tau
    col = {c: j for j, c in enumerate(candidates)}
    idx = np.array([col[s.class_id] for s in batch])
    m = Z.max(axis=1)
    P = np.exp(Z - m[:, None])
    P /= P.sum(axis=1, keepdims=True)
    P[np.arange(len(batch)), idx] -= 1.0
    C = P / (len(batch) * tau)
    return enc.weighted_pair_grad(params, [s.x for s in batch], candidates, C)


# ----------------------------------------------------------------- run driver


class _Trainer:
    """Owns the mutable training state for one run."""

    def __init__(self, stream: TaskStream, config: RunConfig):
        all_classes = stream.classes_up_to(stream.num_tasks - 1)
        self.enc = EncoderPair(
            EncoderConfig(
                input_dim=stream.tasks[0].train[0].x.shape[0],
                num_classes_max=max(all_classes) + 1,
                hidden_dim=config.hidden_dim,
                embed_dim=config.embed_dim,
                seed=config.seed,
            )
        )
        self.config = config
        self.params = self.enc.init_params()
        self.opt = init_optimizer(self.enc.n_params, config.eta, config.beta1, config.optimizer)
        children = np.random.SeedSequence(config.seed).spawn(3)
        self.shuffle_rng = np.random.default_rng(children[0])
        self.batch_rng = np.random.default_rng(children[1])
        self.buffer = MemoryBuffer(config.memory_capacity, int(children[2].generate_state(1)[0]))
        self.gcl_state = GclEstimatorState(gamma=config.gcl_gamma)
        self.gdro_state = GdroEstimatorState()
        self.gdro_config = GdroConfig(
            lam=config.dro_lambda,
            gamma=config.dro_gamma,
            margin=config.margin,
            tau=config.tau,
            batch_classes=config.batch_classes,
            batch_per_class=config.batch_per_class,
        )
        self.log: list[dict] = []
        self.global_step = 0

    def _apply(self, grad, task, epoch):
        try:
            self.opt, self.params = optimizer_step(self.opt, self.params, grad)
        except NonFiniteGradientError as err:
            raise DivergenceError(
                f"non-finite gradient at task {task}, epoch {epoch}, step {self.global_step}",
                task=task, epoch=epoch, step=self.global_step,
            ) from err
        # 1e150 guard: beyond it the norm of a forward pass overflows float64
        if not np.all(np.isfinite(self.params)) or np.max(np.abs(self.params)) > 1e150:
            raise DivergenceError(
                f"parameters became non-finite or exploded at task {task}, "
                f"epoch {epoch}, step {self.global_step}",
                task=task, epoch=epoch, step=self.global_step,
            )

    def _check_loss(self, loss, task, epoch):
        if not math.isfinite(loss):
            raise DivergenceError(
                f"loss became non-finite at task {task}, epoch {epoch}, "
                f"step {self.global_step}",
                task=task, epoch=epoch, step=self.global_step,
            )

    def _train_gcl_like(self, pool, task, use_ce):
        cfg = self.config
        candidates = sorted({s.class_id for s in pool})
        for epoch in range(cfg.epochs_per_task):
            order = self.shuffle_rng.permutation(len(pool))
            for start in range(0, len(pool), cfg.batch_size):
                batch = [pool[i] for i in order[start : start + cfg.batch_size]]
                if use_ce:
                    loss = ce_loss(self.enc, self.params, batch, candidates, cfg.tau)
                    grad = ce_gradient(self.enc, self.params, batch, candidates, cfg.tau)
                else:
                    loss = gcl_loss_full(self.enc, self.params, batch, cfg.tau)
                    self.gcl_state = gcl_update_estimators(
                        self.gcl_state, self.enc, self.params, batch, cfg.tau, len(pool)
                    )
                    grad = gcl_gradient_estimate(
                        self.gcl_state, self.enc, self.params, batch, cfg.tau, len(pool)
                    )
                self._check_loss(loss, task, epoch)
                self._apply(grad, task, epoch)
                if self.global_step % cfg.log_every == 0:
                    self.log.append(
                        {"event": "step", "task": task, "epoch": epoch,
                         "step": self.global_step, "loss": loss}
                    )
                self.global_step += 1

    def _train_gdro(self, pool, task):
        cfg = self.config
        gcfg = self.gdro_config
        classes_present = sorted({s.class_id for s in pool})
        if len(classes_present) < 2:
            raise DivergenceError(
                "robust training needs at least two classes in the pool", task=task
            )
        draws = gcfg.batch_classes * gcfg.batch_per_class
        steps_per_epoch = max(1, math.ceil(len(pool) / draws))
        for epoch in range(cfg.epochs_per_task):
            for _ in range(steps_per_epoch):
                n_take = min(gcfg.batch_classes, len(classes_present))
                picked = self.batch_rng.choice(len(classes_present), n_take, replace=False)
                class_batch = [classes_present[i] for i in picked]
                per_class = {
                    k: sample_class_batch(
                        pool, k, gcfg.batch_per_class, int(self.batch_rng.integers(2**63))
                    )
                    for k in class_batch
                }
                self.gdro_state = gdro_update_estimators(
                    self.gdro_state, self.enc, self.params, class_batch, per_class, pool, gcfg
                )
                grad = gdro_gradient_estimate(
                    self.gdro_state, self.enc, self.params, class_batch, per_class, pool, gcfg
                )
                tracked = sorted(self.gdro_state.u_c)
                h_vals = np.array([self.gdro_state.u_c[k] for k in tracked])
                loss = dro_objective(h_vals, gcfg.lam)
                self._check_loss(loss, task, epoch)
                self._apply(grad, task, epoch)
                if self.global_step % cfg.log_every == 0:
                    w_vals = dro_weights(h_vals, gcfg.lam)
                    self.log.append(
                        {"event": "step", "task": task, "epoch": epoch,
                         "step": self.global_step, "loss": loss,
                         "h": {str(k): float(h) for k, h in zip(tracked, h_vals)},
                         "dro_weights": {str(k): float(w) for k, w in zip(tracked, w_vals)}}
                    )
                self.global_step += 1

    def train_task(self, task_index, task: Task, pool):
        method = self.config.method
        if method == "zero-shot":
            return
        if method == "gdro":
            self._train_gdro(pool, task_index)
        else:
            self._train_gcl_like(pool, task_index, use_ce=(method == "finetune-ce"))


def merge_tasks(stream: TaskStream) -> TaskStream:
    """Collapse a stream into one task holding all train and test data."""
    train = [s for t in stream.tasks for s in t.train]
    test = [s for t in stream.tasks for s in t.test]
    classes = frozenset(stream.classes_up_to(stream.num_tasks - 1))
    merged = Task(
        train=[replace(s, task_id=0) for s in train],
        test=[replace(s, task_id=0) for s in test],
        classes=classes,
    )
    return TaskStream(mode="cil", tasks=[merged])


def run(stream: TaskStream, config: RunConfig, hook=None) -> RunResult:
    """Execute one continual run; deterministic per config seed.

    ``hook(event, info)``, if given, fires at task boundaries with the live
    buffer in ``info`` (instrumentation, e.g. capacity audits).
    """
    if not stream.tasks:
        raise ValueError("stream has no tasks")
    if config.method == "joint-upper-bound":
        inner = replace(
            config,
            method="gcl",
            epochs_per_task=config.epochs_per_task * stream.num_tasks,
        )
        return run(merge_tasks(stream), inner, hook=hook)

    trainer = _Trainer(stream, config)
    matrix = AccuracyMatrix()
    trainer.log.append(
        {"event": "run_start", "method": config.method, "seed": config.seed,
         "num_tasks": stream.num_tasks, "mode": stream.mode,
         "memory_capacity": config.memory_capacity}
    )
    all_classes = stream.classes_up_to(stream.num_tasks - 1)
    for t, task in enumerate(stream.tasks):
        pool = trainer.buffer.union_view(task.train)
        if hook:
            hook("task_start", {"task": t, "buffer": trainer.buffer, "pool_size": len(pool)})
        trainer.train_task(t, task, pool)
        trainer.buffer = trainer.buffer.rebalance_after_task(task.train)
        if hook:
            hook("rebalance", {"task": t, "buffer": trainer.buffer})

        candidates = all_classes if stream.mode == "dil" else stream.classes_up_to(t)
        for b in range(t + 1):
            acc = evaluate(trainer.enc, trainer.params, stream.tasks[b].test, candidates)
            matrix.entries[(t, b)] = acc
            trainer.log.append(
                {"event": "eval", "after_task": t, "eval_task": b, "accuracy": acc}
            )
        if stream.mode == "dil":
            a_t = float(np.mean([matrix.entries[(t, b)] for b in range(t + 1)]))
        else:
            union_test = [s for b in range(t + 1) for s in stream.tasks[b].test]
            a_t = evaluate(trainer.enc, trainer.params, union_test, candidates)
        matrix.aggregate[t] = a_t
        trainer.log.append({"event": "task_summary", "after_task": t, "A_t": a_t})
    return RunResult(accuracy=matrix, params=trainer.params, log=trainer.log)


def finetune_ce_baseline(stream: TaskStream, config: RunConfig) -> AccuracyMatrix:
    """Per-task cross-entropy finetuning over the pool's classes."""
    return run(stream, replace(config, method="finetune-ce")).accuracy


def joint_upper_bound(stream: TaskStream, config: RunConfig) -> float:
    """Train once on all tasks' data; returns accuracy on the union test set.

    The merged phase trains the contrastive objective for epochs_per_task *
    num_tasks epochs (same total budget as the continual run it bounds).
    """
    result = run(stream, replace(config, method="joint-upper-bound"))
    return result.accuracy.aggregate[0]
