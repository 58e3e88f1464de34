"""Two-layer networks (and the single ReLU neuron) trained by batch gradient descent."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .stimulus import LabeledBatch, StimulusModel, TaskStream, substream, task_sample

PARAM_NAMES = ("w1", "b1", "w2", "b2")

# trainable flags per preset, in PARAM_NAMES order
PRESETS = {
    "single": (True, False, False, False),
    "scm": (True, False, False, False),
    "scm_bias": (True, True, False, False),
    "two_layer": (True, True, True, True),
}
DEFAULT_ACTIVATION = {"single": "relu", "scm": "sigmoid", "scm_bias": "sigmoid", "two_layer": "relu"}
DEFAULT_TAU = {"single": 0.05, "scm": 0.01, "scm_bias": 0.01, "two_layer": 0.01}


class TrainingError(RuntimeError):
    """Training produced a non-finite loss. ``trajectory`` holds the snapshots so far."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


@dataclass
class TwoLayerParams:
    w1: np.ndarray            # (M, N)
    b1: np.ndarray            # (M,)
    w2: np.ndarray            # (M,)
    b2: float
    activation: str = "relu"
    trainable: tuple = (True, True, True, True)

    def __post_init__(self):
        self.w1 = np.atleast_2d(np.asarray(self.w1, dtype=float))
        M, N = self.w1.shape
        if M < 1 or N < 2:
            raise ValueError("need M >= 1 hidden units and N >= 2 inputs")
        self.b1 = np.asarray(self.b1, dtype=float).reshape(M)
        self.w2 = np.asarray(self.w2, dtype=float).reshape(M)
        self.b2 = float(self.b2)
        if self.activation not in ("relu", "sigmoid"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def shape(self):
        return self.w1.shape

    def copy(self) -> "TwoLayerParams":
        return TwoLayerParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2,
                              self.activation, self.trainable)

    def trainable_names(self):
        return [n for n, t in zip(PARAM_NAMES, self.trainable) if t]


def init_params(M: int, N: int, init_variance: float, preset: str = "single",
                rng: np.random.Generator | None = None,
                activation: str | None = None) -> TwoLayerParams:
    """Gaussian initialization; frozen entries follow the preset.

    ``single``: M = 1, w2 = 1, no biases, ReLU. ``scm``: w2 = 1/M, no biases.
    ``scm_bias``: w2 = 1/M and b2 = 0 frozen, first-layer biases random and trained.
    ``two_layer``: every tensor drawn i.i.d. N(0, init_variance).
    """
    if not init_variance > 0:
        raise ValueError("init_variance must be positive")
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}")
    rng = np.random.default_rng() if rng is None else rng
    sd = np.sqrt(init_variance)
    if preset == "single":
        M = 1
    w1 = sd * rng.standard_normal((M, N))
    if preset == "two_layer":
        b1 = sd * rng.standard_normal(M)
        w2 = sd * rng.standard_normal(M)
        b2 = sd * rng.standard_normal()
    else:
        b1 = sd * rng.standard_normal(M) if preset == "scm_bias" else np.zeros(M)
        w2 = np.full(M, 1.0 / M)
        b2 = 0.0
    if preset == "single" and activation not in (None, "relu"):
        raise ValueError("the single-neuron preset is ReLU only")
    act = activation or DEFAULT_ACTIVATION[preset]
    return TwoLayerParams(w1, b1, w2, b2, act, PRESETS[preset])


def _act(h, kind):
    if kind == "relu":
        return np.maximum(h, 0.0)
    return special.expit(h)


def _act_grad(h, a, kind):
    if kind == "relu":
        return (h > 0).astype(float)  # subgradient 0 at 0
    return a * (1.0 - a)


def forward(params: TwoLayerParams, x: np.ndarray):
    """Network output for one input (scalar) or a batch (vector)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.w1.shape[1]:
        raise ValueError(f"input dimension {x.shape[-1]} != {params.w1.shape[1]}")
    h = x @ params.w1.T + params.b1
    out = params.b2 + _act(h, params.activation) @ params.w2
    return float(out) if x.ndim == 1 else out


def mse_and_grad(params: TwoLayerParams, batch: LabeledBatch):
    """Mean squared error over the batch and exact gradients of trainable tensors."""
    X, y = batch.inputs, batch.labels
    B = y.size
    if B == 0:
        raise ValueError("empty batch")
    h = X @ params.w1.T + params.b1
    a = _act(h, params.activation)
    resid = params.b2 + a @ params.w2 - y
    loss = float(np.mean(resid ** 2))
    g_out = (2.0 / B) * resid
    grads = {}
    t_w1, t_b1, t_w2, t_b2 = params.trainable
    if t_w2:
        grads["w2"] = a.T @ g_out
    if t_b2:
        grads["b2"] = float(g_out.sum())
    if t_w1 or t_b1:
        dh = np.outer(g_out, params.w2) * _act_grad(h, a, params.activation)
        if t_w1:
            grads["w1"] = dh.T @ X
        if t_b1:
            grads["b1"] = dh.sum(axis=0)
    return loss, grads


@dataclass
class TrainConfig:
    tau: float = 0.05
    steps: int = 10_000
    batch_size: int = 1000
    init_variance: float = 0.1
    seed: int = 0
    snapshot_stride: int = 100
    chunk_size: int = 50_000   # larger batches are drawn and differentiated in chunks

    def __post_init__(self):
        # tau = 0 is accepted as a degenerate no-update run
        if (self.tau < 0 or self.steps < 1 or self.snapshot_stride < 1 or self.batch_size < 1
                or self.chunk_size < 1):
            raise ValueError(f"invalid training config {self}")


@dataclass
class WeightTrajectory:
    """First-layer weight snapshots. ``times`` is ``step * tau`` (training time)."""

    steps: np.ndarray
    times: np.ndarray
    weights: np.ndarray          # (snapshots, M, N)
    meta: dict = field(default_factory=dict)
    losses: np.ndarray | None = None

    def __post_init__(self):
        self.steps = np.asarray(self.steps, dtype=int)
        self.times = np.asarray(self.times, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.ndim == 2:
            self.weights = self.weights[:, None, :]
        if np.any(np.diff(self.steps) <= 0):
            raise ValueError("snapshot steps must be strictly increasing")
        if len(self.steps) != len(self.weights) or len(self.times) != len(self.steps):
            raise ValueError("snapshot count mismatch")

    def __len__(self):
        return len(self.steps)

    @property
    def final(self) -> np.ndarray:
        """Final first-layer weights, (M, N)."""
        return self.weights[-1]

    def at_time(self, t: float) -> np.ndarray:
        return self.weights[int(np.argmin(np.abs(self.times - t)))]


def _chunked_loss_and_grad(params, stream: TaskStream, chunk: int):
    """Mean loss and gradient over one batch drawn ``chunk`` rows at a time."""
    rng = stream.next_rng()
    total, loss, grads = stream.batch_size, 0.0, {}
    done = 0
    while done < total:
        m = min(chunk, total - done)
        l, g = mse_and_grad(params, task_sample(stream.model, m, rng))
        loss += l * m / total
        for k, v in g.items():
            grads[k] = grads.get(k, 0.0) + v * (m / total)
        done += m
    return loss, grads


def initial_weights(seed: int, N: int, init_variance: float = 0.1, M: int = 1,
                    preset: str = "single", activation: str | None = None) -> TwoLayerParams:
    """Initialization shared by training and flow integration for a given seed."""
    return init_params(M, N, init_variance, preset, substream(seed, 0), activation)


def train(model: StimulusModel, preset: str = "single", cfg: TrainConfig | None = None,
          M: int = 1, activation: str | None = None,
          params: TwoLayerParams | None = None) -> WeightTrajectory:
    """Gradient descent on fresh task batches: ``theta <- theta - tau * grad``.

    Returns snapshots of the first-layer weights every ``snapshot_stride``
    steps (plus the initial and final states). The final parameters are kept
    in ``trajectory.meta["params"]``.
    """
    cfg = cfg or TrainConfig()
    if params is None:
        params = initial_weights(cfg.seed, model.n, cfg.init_variance, M, preset, activation)
    params = params.copy()
    stream = TaskStream(model, cfg.batch_size, cfg.seed)
    names = params.trainable_names()

    steps, snaps, losses = [0], [params.w1.copy()], []
    meta = {"model": model, "preset": preset, "config": cfg, "activation": params.activation}

    def _traj():
        return WeightTrajectory(np.array(steps), cfg.tau * np.array(steps),
                                np.array(snaps), dict(meta, params=params),
                                np.array(losses))

    chunked = cfg.batch_size > cfg.chunk_size and model.variant != "ising"
    for step in range(1, cfg.steps + 1):
        # overflow shows up as a non-finite loss, reported below
        with np.errstate(over="ignore", invalid="ignore"):
            if chunked:
                loss, grads = _chunked_loss_and_grad(params, stream, cfg.chunk_size)
            else:
                loss, grads = mse_and_grad(params, next(stream))
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss at step {step}", _traj())
        losses.append(loss)
        if cfg.tau:
            for name in names:
                if name == "b2":
                    params.b2 -= cfg.tau * grads["b2"]
                else:
                    getattr(params, name)[...] -= cfg.tau * grads[name]
        if step % cfg.snapshot_stride == 0 or step == cfg.steps:
            steps.append(step)
            snaps.append(params.w1.copy())
    return _traj()
