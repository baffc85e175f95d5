"""Training loop that interleaves SGD with periodic low-rank projection.

Every ``period_m`` iterations (counting t = 0, so event z = t / m starts
at 0) each convolution weight is replaced by its energy-thresholded
low-rank projection before the gradient step; in between, plain
momentum-SGD runs.  An optional nuclear-norm sub-gradient, computed in the
matrix view of the configured scheme, is added to conv weight gradients to
push singular values toward zero between events.

Each projection event is logged with the selected rank, the normalized
energy ratios of the retained singular values, and a bound statistic
``m * G / ||W||_F`` where G is the largest applied weight-step norm since
the previous event and ``||W||_F`` is taken just before projecting.  The
rank-monotonicity monitor checks that whenever that statistic stays below
sqrt(e), the selected rank did not grow between consecutive events.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError
from .linalg import nuclear_subgradient
from .net import Conv2D, GradientSet, NetworkModel, backward, evaluate, forward
from .reshape import SCHEMES, from_matrix, project_tsvd, to_matrix


@dataclass(frozen=True)
class TrpConfig:
    """Hyperparameters for one training run.

    ``period_m = None`` disables projection entirely (the plain baseline);
    otherwise events fire at every iteration t with t % period_m = 0 and
    once more at the final iteration count when it is a multiple.
    ``lr_schedule`` maps epoch thresholds to learning rates: the rate in
    force at epoch E is the entry with the largest epoch <= E.
    """

    period_m: int | None = 20
    energy_e: float = 0.02
    nuclear_lambda: float = 0.0003
    scheme: str = "channel"
    lr_schedule: tuple[tuple[int, float], ...] = ((0, 0.1), (8, 0.01), (11, 0.001))
    momentum: float = 0.9
    weight_decay: float = 1e-4
    epochs: int = 12
    batch_size: int = 32
    seed: int = 0
    mode: str = "scratch"

    def __post_init__(self):
        if self.period_m is not None and self.period_m < 1:
            raise ConfigError(f"period_m must be >= 1 or None, got {self.period_m}")
        if not 0.0 < self.energy_e < 1.0:
            raise ConfigError(f"energy_e must be in (0, 1), got {self.energy_e}")
        if self.nuclear_lambda < 0.0:
            raise ConfigError(f"nuclear_lambda must be >= 0, got {self.nuclear_lambda}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}, expected one of {SCHEMES}")
        if not self.lr_schedule:
            raise ConfigError("lr_schedule must be non-empty")
        epochs_seen = [ep for ep, _ in self.lr_schedule]
        if epochs_seen[0] != 0:
            raise ConfigError("lr_schedule must start at epoch 0")
        if any(b <= a for a, b in zip(epochs_seen, epochs_seen[1:])):
            raise ConfigError("lr_schedule epochs must be strictly increasing")
        if any(lr < 0.0 for _, lr in self.lr_schedule):
            raise ConfigError("learning rates must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0.0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.mode not in ("scratch", "finetune"):
            raise ConfigError(f"mode must be 'scratch' or 'finetune', got {self.mode!r}")

    def lr_at(self, epoch: int) -> float:
        lr = self.lr_schedule[0][1]
        for ep, value in self.lr_schedule:
            if ep <= epoch:
                lr = value
        return lr


@dataclass(frozen=True)
class TrajectoryEvent:
    """One projection event for one conv layer.

    ``layer`` is the conv ordinal (0 for the first conv in the model).
    ``fro_norm`` is ``||W||_F`` just before projecting; ``bound_stat`` is
    ``m * G / fro_norm`` with G the largest applied weight-step norm in
    the window since the previous event (0 at z = 0).
    """

    layer: int
    t: int
    z: int
    k: int
    er: np.ndarray
    fro_norm: float
    bound_stat: float
    bound_holds: bool
    discarded_energy: float


@dataclass
class RankTrajectory:
    """Append-only event log, ordered by iteration within each layer."""

    events: list[TrajectoryEvent] = field(default_factory=list)

    def extend(self, events) -> None:
        self.events.extend(events)

    def per_layer(self) -> dict[int, list[TrajectoryEvent]]:
        grouped: dict[int, list[TrajectoryEvent]] = {}
        for ev in self.events:
            grouped.setdefault(ev.layer, []).append(ev)
        return grouped


@dataclass
class GradBoundTracker:
    """Per-conv-layer step-norm stats over the current inter-event window.

    ``max_step`` realizes the bound G as the largest applied weight delta
    ``||lr * v||_F`` seen since the last event; ``window_sum`` keeps the
    telescoped total, which can only be tighter (sum <= m * max).
    """

    max_step: dict[int, float] = field(default_factory=dict)
    window_sum: dict[int, float] = field(default_factory=dict)

    def observe(self, layer: int, delta_norm: float) -> None:
        self.max_step[layer] = max(self.max_step.get(layer, 0.0), delta_norm)
        self.window_sum[layer] = self.window_sum.get(layer, 0.0) + delta_norm

    def g(self, layer: int) -> float:
        return self.max_step.get(layer, 0.0)

    def reset(self, layer: int) -> None:
        self.max_step[layer] = 0.0
        self.window_sum[layer] = 0.0


@dataclass
class OptState:
    """Momentum buffers (one per parameter) plus the window tracker."""

    velocities: list
    tracker: GradBoundTracker

    @classmethod
    def for_model(cls, model: NetworkModel) -> "OptState":
        vel = [[np.zeros_like(p) for p in layer.params()] for layer in model.layers]
        return cls(velocities=vel, tracker=GradBoundTracker())


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_loss: float
    test_acc: float


@dataclass
class TrainResult:
    model: NetworkModel
    trajectory: RankTrajectory
    metrics: list


def _conv_ordinals(model: NetworkModel) -> dict[int, int]:
    return {idx: ordinal for ordinal, idx in enumerate(model.conv_indices())}


def sgd_step(model: NetworkModel, batch, lr: float, config: TrpConfig, state: OptState) -> float:
    """One momentum-SGD update on every parameter; returns the batch loss.

    Conv weight gradients get the nuclear-norm sub-gradient (scaled by
    ``nuclear_lambda``, in the configured matrix view) and all parameters
    get weight decay, both folded in before the momentum update
    ``v = momentum * v + g; p -= lr * v``.  Applied conv weight deltas
    feed the bound tracker.
    """
    x, y = batch
    grads = backward(model, x, y)
    grads.check_finite(model)
    loss, _ = forward(model, x, y)
    _apply_update(model, grads, lr, config, state)
    return loss


def _apply_update(
    model: NetworkModel, grads: GradientSet, lr: float, config: TrpConfig, state: OptState
) -> None:
    ordinals = _conv_ordinals(model)
    for i, layer in enumerate(model.layers):
        params = layer.params()
        for j, p in enumerate(params):
            g = grads.by_layer[i][j]
            if (
                isinstance(layer, Conv2D)
                and j == 0
                and config.nuclear_lambda > 0.0
            ):
                m_view = to_matrix(p, config.scheme)
                sub = nuclear_subgradient(m_view)
                g = g + config.nuclear_lambda * from_matrix(sub, config.scheme, p.shape)
            if config.weight_decay > 0.0:
                g = g + config.weight_decay * p
            v = state.velocities[i][j]
            v *= config.momentum
            v += g
            delta = lr * v
            p -= delta
            if isinstance(layer, Conv2D) and j == 0:
                state.tracker.observe(ordinals[i], float(np.linalg.norm(delta)))


def project_all(
    model: NetworkModel, t: int, config: TrpConfig, state: OptState
) -> list[TrajectoryEvent]:
    """Project every conv weight and log one event per layer.

    The bound statistic is computed from the window ending at this event
    and the pre-projection weight norm, then the window is reset so the
    event iteration's own step opens the next window.
    """
    if config.period_m is None:
        raise ConfigError("projection requires a finite period_m")
    if t % config.period_m != 0:
        raise ValueError(f"projection event requires t % m = 0, got t={t}, m={config.period_m}")
    z = t // config.period_m
    sqrt_e = math.sqrt(config.energy_e)
    events = []
    for ordinal, idx in enumerate(model.conv_indices()):
        layer = model.layers[idx]
        pre_norm = float(np.linalg.norm(layer.w))
        g = state.tracker.g(ordinal)
        if g == 0.0:
            bound_stat = 0.0
        elif pre_norm == 0.0:
            bound_stat = math.inf
        else:
            bound_stat = config.period_m * g / pre_norm
        projected, result = project_tsvd(layer.w, config.scheme, config.energy_e)
        layer.w = projected
        events.append(
            TrajectoryEvent(
                layer=ordinal,
                t=t,
                z=z,
                k=result.k,
                er=energy_ratios(result.factors.sigma, result.k),
                fro_norm=pre_norm,
                bound_stat=bound_stat,
                bound_holds=bound_stat < sqrt_e,
                discarded_energy=result.discarded_energy,
            )
        )
        state.tracker.reset(ordinal)
    return events


def trp_step(
    model: NetworkModel, batch, lr: float, config: TrpConfig, state: OptState, t: int
) -> tuple[float, list[TrajectoryEvent]]:
    """Projection event followed by one gradient step on the projected
    weights; returns the batch loss and the logged events.
    """
    events = project_all(model, t, config, state)
    loss = sgd_step(model, batch, lr, config, state)
    return loss, events


def train(model: NetworkModel, dataset, config: TrpConfig) -> TrainResult:
    """Run the full loop over ``config.epochs`` epochs of shuffled full
    batches (each epoch's trailing remainder is skipped).

    Iteration t counts globally; when ``period_m`` is set, events fire at
    every t % m = 0 including t = 0 and a final gradient-free projection
    when the total iteration count is itself a multiple of m, so a run of
    T iterations logs floor(T / m) + 1 events per conv layer.
    """
    x_train, y_train = dataset.train_images, dataset.train_labels
    x_test, y_test = dataset.test_images, dataset.test_labels
    n = x_train.shape[0]
    if n < config.batch_size:
        raise ConfigError(f"batch_size {config.batch_size} exceeds train split size {n}")
    batches_per_epoch = n // config.batch_size
    rng = np.random.default_rng(config.seed)
    state = OptState.for_model(model)
    trajectory = RankTrajectory()
    metrics = []
    t = 0
    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        perm = rng.permutation(n)
        losses = np.zeros(batches_per_epoch)
        for b in range(batches_per_epoch):
            idx = perm[b * config.batch_size : (b + 1) * config.batch_size]
            batch = (x_train[idx], y_train[idx])
            if config.period_m is not None and t % config.period_m == 0:
                loss, events = trp_step(model, batch, lr, config, state, t)
                trajectory.extend(events)
            else:
                loss = sgd_step(model, batch, lr, config, state)
            losses[b] = loss
            t += 1
        # an empty held-out split (estimator with validation disabled) logs nan
        acc = evaluate(model, x_test, y_test)[0] if x_test.shape[0] else float("nan")
        metrics.append(EpochMetrics(epoch=epoch, train_loss=float(losses.mean()), test_acc=acc))
    if config.period_m is not None and t % config.period_m == 0:
        trajectory.extend(project_all(model, t, config, state))
    return TrainResult(model=model, trajectory=trajectory, metrics=metrics)


def energy_ratios(sigma, k: int) -> np.ndarray:
    """Normalized energy ratios ER(i) = sigma_i^2 / sum_j sigma_j^2 for the
    first ``k`` values, where the sum runs over every value passed in.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim != 1 or sigma.size == 0:
        raise ValueError("sigma must be a non-empty 1D array")
    if np.any(sigma < 0.0):
        raise ValueError("sigma values must be non-negative")
    if np.any(np.diff(sigma) > 1e-12 * max(sigma[0], 1.0)):
        raise ValueError("sigma must be non-increasing")
    if not 1 <= k <= sigma.size:
        raise ValueError(f"k must be in [1, {sigma.size}], got {k}")
    total = float(np.sum(sigma**2))
    if total == 0.0:
        raise ValueError("sigma must not be all zero")
    return sigma[:k] ** 2 / total


@dataclass(frozen=True)
class PairCheck:
    """Monitor verdict for one consecutive event pair of one layer."""

    layer: int
    t: int
    z: int
    bound_stat: float
    sqrt_e: float
    bound_holds: bool
    rank_nonincrease: bool


@dataclass(frozen=True)
class Theorem2Report:
    pairs: list
    pairs_checked: int
    hypothesis_satisfied: int
    violations: int


def theorem2_monitor(trajectory: RankTrajectory, config: TrpConfig) -> Theorem2Report:
    """Check rank monotonicity wherever the step-norm bound held.

    For each consecutive event pair (z-1, z) of each layer: the pair's
    ``bound_stat`` is the one logged at event z (it summarizes the window
    between the two events); the hypothesis is ``bound_stat < sqrt(e)``
    and the conclusion checked is k(z) <= k(z-1).  The summary counts
    hypothesis-satisfied pairs and, among those, monotonicity violations.
    """
    sqrt_e = math.sqrt(config.energy_e)
    pairs = []
    for layer, events in sorted(trajectory.per_layer().items()):
        if len(events) < 2:
            raise ValueError(f"layer {layer} has {len(events)} events, need at least 2")
        for prev, cur in zip(events, events[1:]):
            pairs.append(
                PairCheck(
                    layer=layer,
                    t=cur.t,
                    z=cur.z,
                    bound_stat=cur.bound_stat,
                    sqrt_e=sqrt_e,
                    bound_holds=cur.bound_stat < sqrt_e,
                    rank_nonincrease=cur.k <= prev.k,
                )
            )
    satisfied = [p for p in pairs if p.bound_holds]
    violations = sum(1 for p in satisfied if not p.rank_nonincrease)
    return Theorem2Report(
        pairs=pairs,
        pairs_checked=len(pairs),
        hypothesis_satisfied=len(satisfied),
        violations=violations,
    )
