"""KL-regularized group-robust objective over per-class contrastive losses.

Replay buffers shrink per-class counts as classes accumulate, so the pool gets
imbalanced.  This module reweights classes adversarially: per-class losses

    h_k = 1/(2 n_k) * sum_{i: class(i)=k} ( tau*log g1(i) + tau*log g2(i) )

    g1(i) = mean over negatives j of exp( hinge(s_ij - s_ii + margin)^2 / tau )
    g2(i) = mean over negatives j of exp( hinge(s_ji - s_ii + margin)^2 / tau )

feed the robust objective

    F = lam * log( (1/K) * sum_k exp(h_k / lam) )

which is the closed-form value of max over simplex weights p of
sum_k p_k h_k - lam * KL(p || uniform); the maximizing weights are
softmax(h / lam).  Harder classes (larger h_k) get larger weight, and lam
interpolates between the mean (lam -> inf) and the max (lam -> 0) of h.

Negatives are always drawn from the full pool (task data plus memory): the
per-class loss is a pool-level quantity, and at desk scale scoring each
sampled anchor against the whole pool is affordable.  g1/g2 are means over
negatives, so an in-batch estimate needs no extra rescaling to target the
pool value; the full-batch, gamma=1 configuration is exact, and there the
stochastic gradient estimator

    (1/(v|Bc|)) * sum_{k in Bc} exp(u_c[k]/lam)
        * 1/(2|Bk|) * sum_{i in Bk} tau * ( grad g1 / u_I[i] + grad g2 / u_T[i] )

equals grad F exactly (the exp(u/lam)/(vK) weights collapse to softmax(h/lam)).

Overflow note: exp(u_c/lam) explodes for small lam, so the scalar estimator v
is stored as (mantissa, shift) with value mantissa * exp(shift); every use of
exp(u_c[k]/lam)/v is computed as exp(u_c[k]/lam - shift)/mantissa.  This keeps
lam down to ~0.01 usable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gcl import U_FLOOR
from .model import EncoderPair

_STATE_HEADER = "cclearn-gdro-state"
_STATE_VERSION = 1


@dataclass(frozen=True)
class GdroConfig:
    """Hyperparameters for the robust objective and its estimators."""

    lam: float  # KL regularization strength
    gamma: float  # moving-average rate
    margin: float  # hinge margin on similarity violations
    tau: float  # temperature inside the hinge exponentials
    batch_classes: int  # classes sampled per step
    batch_per_class: int  # samples per sampled class

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lam must be > 0, got {self.lam}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.margin < 0:
            raise ValueError(f"margin must be >= 0, got {self.margin}")
        if not self.tau > 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if self.batch_classes < 1 or self.batch_per_class < 1:
            raise ValueError("batch_classes and batch_per_class must be positive")


@dataclass
class GdroEstimatorState:
    """Moving averages for the compositional estimator.

    u_I/u_T track per-sample hinge normalizers g1/g2, u_c tracks per-class
    losses h_k, and v tracks (1/K) * sum_k exp(u_c[k]/lam) over all tracked
    classes.  Key presence doubles as the initialization flag; first touches
    use gamma=1.
    """

    u_I: dict[int, float] = field(default_factory=dict)
    u_T: dict[int, float] = field(default_factory=dict)
    u_c: dict[int, float] = field(default_factory=dict)
    v_mantissa: float = 0.0
    v_shift: float = 0.0
    v_initialized: bool = False

    @property
    def v(self) -> float:
        """Linear-scale value of the scalar estimator (may overflow to inf)."""
        return self.v_mantissa * math.exp(self.v_shift) if self.v_initialized else 0.0

    def copy(self) -> "GdroEstimatorState":
        return GdroEstimatorState(
            u_I=dict(self.u_I),
            u_T=dict(self.u_T),
            u_c=dict(self.u_c),
            v_mantissa=self.v_mantissa,
            v_shift=self.v_shift,
            v_initialized=self.v_initialized,
        )


# ------------------------------------------------------------ hinge machinery


def _hinge_stats(enc, params, anchors, pool, margin, tau):
    """Similarities, hinge activations, and stable log g1/g2 per anchor vs pool.

    Every anchor must see at least one negative (different class) in the pool.
    """
    xa = [s.x for s in anchors]
    ca = np.array([s.class_id for s in anchors])
    E1a = enc.encode_input_batch(params, xa)
    E2a = enc.encode_label_batch(params, ca)
    E1p = enc.encode_input_batch(params, [s.x for s in pool])
    E2p = enc.encode_label_batch(params, [s.class_id for s in pool])
    cp = np.array([s.class_id for s in pool])

    sii = np.sum(E1a * E2a, axis=1)
    S1 = E1a @ E2p.T  # anchor inputs vs pool labels
    S2 = (E1p @ E2a.T).T  # anchor labels vs pool inputs, row per anchor
    neg = cp[None, :] != ca[:, None]
    n_neg = neg.sum(axis=1)
    if np.any(n_neg == 0):
        bad = anchors[int(np.argmin(n_neg))]
        raise ValueError(f"no negatives in pool for anchor of class {bad.class_id}")

    H1 = np.where(neg, np.maximum(0.0, S1 - sii[:, None] + margin), 0.0)
    H2 = np.where(neg, np.maximum(0.0, S2 - sii[:, None] + margin), 0.0)
    A1 = np.where(neg, H1 * H1 / tau, -np.inf)
    A2 = np.where(neg, H2 * H2 / tau, -np.inf)
    m1 = A1.max(axis=1)
    m2 = A2.max(axis=1)
    log_g1 = m1 + np.log(np.exp(A1 - m1[:, None]).sum(axis=1)) - np.log(n_neg)
    log_g2 = m2 + np.log(np.exp(A2 - m2[:, None]).sum(axis=1)) - np.log(n_neg)
    return {
        "neg": neg, "n_neg": n_neg, "H1": H1, "H2": H2, "A1": A1, "A2": A2,
        "log_g1": log_g1, "log_g2": log_g2,
    }


def hinge_g1(enc: EncoderPair, params, anchor, pool, margin, tau) -> float:
    """Input-anchored hinge normalizer, linear scale. Equals 1 iff no violations."""
    st = _hinge_stats(enc, params, [anchor], pool, margin, tau)
    return float(np.exp(st["log_g1"][0]))


def hinge_g2(enc: EncoderPair, params, anchor, pool, margin, tau) -> float:
    """Label-anchored hinge normalizer, linear scale."""
    st = _hinge_stats(enc, params, [anchor], pool, margin, tau)
    return float(np.exp(st["log_g2"][0]))


def class_loss_hk(enc: EncoderPair, params, class_id, pool, config: GdroConfig) -> float:
    """Per-class loss h_k over all pool members of the class; always >= 0."""
    members = [s for s in pool if s.class_id == class_id]
    if not members:
        raise ValueError(f"class {class_id} not present in pool")
    st = _hinge_stats(enc, params, members, pool, config.margin, config.tau)
    return float(config.tau * np.mean(st["log_g1"] + st["log_g2"]) / 2.0)


# ------------------------------------------------------------ robust weighting


def dro_weights(h, lam) -> np.ndarray:
    """Closed-form inner-max weights softmax(h/lam); sums to 1."""
    if not lam > 0:
        raise ValueError(f"lam must be > 0, got {lam}")
    h = np.asarray(h, dtype=np.float64)
    z = h / lam
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def dro_objective(h, lam) -> float:
    """lam * log-mean-exp(h/lam): between mean(h) and max(h)."""
    if not lam > 0:
        raise ValueError(f"lam must be > 0, got {lam}")
    h = np.asarray(h, dtype=np.float64)
    z = h / lam
    m = z.max()
    return float(lam * (m + np.log(np.mean(np.exp(z - m)))))


# --------------------------------------------------------------- estimators


def _flatten_batches(class_batch, per_class_batches):
    anchors = []
    for k in class_batch:
        if k not in per_class_batches or not per_class_batches[k]:
            raise ValueError(f"missing or empty batch for class {k}")
        anchors.extend(per_class_batches[k])
    return anchors


def gdro_update_estimators(
    state: GdroEstimatorState,
    enc: EncoderPair,
    params,
    class_batch,
    per_class_batches,
    pool,
    config: GdroConfig,
) -> GdroEstimatorState:
    """One pass of the moving-average updates for sampled classes and samples.

    Order matters: per-sample g estimates first, then per-class h estimates
    from the same fresh statistics, then v from the updated u_c values over
    all tracked classes (stale entries stand in for unsampled classes).
    """
    anchors = _flatten_batches(class_batch, per_class_batches)
    st = _hinge_stats(enc, params, anchors, pool, config.margin, config.tau)
    g1 = np.exp(st["log_g1"])
    g2 = np.exp(st["log_g2"])

    new = state.copy()
    g = config.gamma
    pos = 0
    for k in class_batch:
        batch_k = per_class_batches[k]
        n_k = len(batch_k)
        rows = slice(pos, pos + n_k)
        pos += n_k
        for i, s in zip(range(rows.start, rows.stop), batch_k):
            old_i = new.u_I.get(s.sample_id)
            old_t = new.u_T.get(s.sample_id)
            gi, gt = float(g1[i]), float(g2[i])
            new.u_I[s.sample_id] = max(
                U_FLOOR, gi if old_i is None else (1 - g) * old_i + g * gi
            )
            new.u_T[s.sample_id] = max(
                U_FLOOR, gt if old_t is None else (1 - g) * old_t + g * gt
            )
        h_hat = float(
            config.tau * np.mean(st["log_g1"][rows] + st["log_g2"][rows]) / 2.0
        )
        old_c = new.u_c.get(k)
        new.u_c[k] = h_hat if old_c is None else (1 - g) * old_c + g * h_hat

    # v <- (1-gamma) v + gamma * mean_k exp(u_c[k]/lam), in shifted form
    uc = np.array([new.u_c[k] for k in sorted(new.u_c)])
    shift = float(np.max(uc / config.lam))
    mantissa = float(np.mean(np.exp(uc / config.lam - shift)))
    if not new.v_initialized:
        new.v_mantissa, new.v_shift, new.v_initialized = mantissa, shift, True
    else:
        common = max(shift, new.v_shift)
        new.v_mantissa = (1 - g) * new.v_mantissa * math.exp(new.v_shift - common) + (
            g * mantissa * math.exp(shift - common)
        )
        new.v_shift = common
    return new


def gdro_gradient_estimate(
    state: GdroEstimatorState,
    enc: EncoderPair,
    params,
    class_batch,
    per_class_batches,
    pool,
    config: GdroConfig,
) -> np.ndarray:
    """Compositional gradient estimator (module docstring) as one backward pass.

    Builds a single coefficient matrix over (anchor+pool) x (anchor+pool)
    similarity pairs: active hinges contribute off-diagonal mass against pool
    negatives and negative mass on the anchor's own diagonal entry.
    """
    anchors = _flatten_batches(class_batch, per_class_batches)
    if not state.v_initialized or state.v_mantissa <= 0:
        raise ValueError("scalar estimator v is not initialized or non-positive")
    st = _hinge_stats(enc, params, anchors, pool, config.margin, config.tau)

    n = len(anchors)
    log_u_I = np.empty(n)
    log_u_T = np.empty(n)
    class_weight = np.empty(n)
    pos = 0
    for k in class_batch:
        if k not in state.u_c:
            raise ValueError(f"class estimator not initialized for class {k}")
        batch_k = per_class_batches[k]
        # exp(u_c/lam) / (v * |Bc|) with the shared shift folded in
        w_k = math.exp(state.u_c[k] / config.lam - state.v_shift) / (
            state.v_mantissa * len(class_batch) * 2.0 * len(batch_k)
        )
        for s in batch_k:
            ui = state.u_I.get(s.sample_id)
            ut = state.u_T.get(s.sample_id)
            if ui is None or ut is None:
                raise ValueError(f"estimator not initialized for sample {s.sample_id}")
            if ui <= 0 or ut <= 0:
                raise ValueError(f"non-positive estimator value for sample {s.sample_id}")
            log_u_I[pos] = math.log(ui)
            log_u_T[pos] = math.log(ut)
            class_weight[pos] = w_k
            pos += 1

    neg = st["neg"]
    inv_neg = 1.0 / st["n_neg"]
    # tau cancels: tau * d/ds exp(h^2/tau) = 2h * exp(h^2/tau)
    coef1 = np.where(
        neg, 2.0 * st["H1"] * np.exp(st["A1"] - log_u_I[:, None]), 0.0
    ) * (class_weight * inv_neg)[:, None]
    coef2 = np.where(
        neg, 2.0 * st["H2"] * np.exp(st["A2"] - log_u_T[:, None]), 0.0
    ) * (class_weight * inv_neg)[:, None]

    N = len(pool)
    C = np.zeros((n + N, n + N))
    C[:n, n:] = coef1  # anchor input vs pool label
    C[n:, :n] = coef2.T  # pool input vs anchor label
    C[np.arange(n), np.arange(n)] = -(coef1.sum(axis=1) + coef2.sum(axis=1))

    xs = [s.x for s in anchors] + [s.x for s in pool]
    cls = [s.class_id for s in anchors] + [s.class_id for s in pool]
    return enc.weighted_pair_grad(params, xs, cls, C)


# ------------------------------------------------------------- serialization


def save_gdro_state(state: GdroEstimatorState, path) -> None:
    keys = sorted(state.u_I)
    if keys != sorted(state.u_T):
        raise ValueError("u_I and u_T track different sample ids; refusing to serialize")
    with open(path, "w") as fh:
        fh.write(f"{_STATE_HEADER} {_STATE_VERSION}\n")
        fh.write(
            f"v {state.v_mantissa!r} {state.v_shift!r} {int(state.v_initialized)}\n"
        )
        fh.write("[samples]\n")
        for k in keys:
            fh.write(f"{k} {state.u_I[k]!r} {state.u_T[k]!r}\n")
        fh.write("[classes]\n")
        for k in sorted(state.u_c):
            fh.write(f"{k} {state.u_c[k]!r}\n")


def load_gdro_state(path) -> GdroEstimatorState:
    state = GdroEstimatorState()
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2 or header[0] != _STATE_HEADER:
            raise ValueError(f"not a {_STATE_HEADER} file")
        if int(header[1]) != _STATE_VERSION:
            raise ValueError(f"unsupported state version {header[1]}")
        tag, mant, shift, init = fh.readline().split()
        if tag != "v":
            raise ValueError("malformed state file: missing v line")
        state.v_mantissa, state.v_shift = float(mant), float(shift)
        state.v_initialized = bool(int(init))
        section = None
        for line in fh:
            line = line.strip()
            if line in ("[samples]", "[classes]"):
                section = line
                continue
            parts = line.split()
            if section == "[samples]":
                state.u_I[int(parts[0])] = float(parts[1])
                state.u_T[int(parts[0])] = float(parts[2])
            elif section == "[classes]":
                state.u_c[int(parts[0])] = float(parts[1])
            else:
                raise ValueError("malformed state file: data before section header")
    return state
