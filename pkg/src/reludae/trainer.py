"""Stochastic training of the ReLU DAE with hand-written backpropagation."""
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional

import numpy as np

from ._validation import as_vector, check_nonnegative, check_positive_int
from .data import Dataset
from .exceptions import ConfigurationError, DivergenceError
from .model import DaeModel, hidden
from .optim import make_optimizer

__all__ = [
    "OptimizerConfig",
    "TrainTrace",
    "init_weights",
    "loss_and_grad",
    "grad_check",
    "train",
]

OPTIMIZER_KINDS = ("rmsprop", "adam", "adamw")


@dataclass(frozen=True)
class OptimizerConfig:
    """Training hyperparameters.

    ``weight_decay`` is the lambda of the objective. For ``rmsprop`` and
    ``adam`` it enters as the gradient term ``2 * lambda * W``; for
    ``adamw`` it is applied as a decoupled shrink. ``beta2=None`` picks the
    usual default for the optimizer (0.99 for RMSprop's running average,
    0.999 for Adam). ``batch=0`` means full batch.
    """

    kind: str = "rmsprop"
    lr: float = 1e-3
    weight_decay: float = 1e-2
    steps: int = 1000
    batch: int = 0
    seed: int = 0
    beta1: float = 0.9
    beta2: Optional[float] = None
    eps: float = 1e-8
    tied: bool = True
    init_scale: float = 1e-2
    log_every: int = 100
    divergence_factor: float = 1e6

    def __post_init__(self):
        if self.kind not in OPTIMIZER_KINDS:
            raise ConfigurationError(f"kind must be one of {OPTIMIZER_KINDS}, got {self.kind!r}")
        if not self.lr >= 0:
            raise ConfigurationError(f"lr must be >= 0, got {self.lr}")
        check_nonnegative(self.weight_decay, "weight_decay")
        check_positive_int(self.steps, "steps")
        check_positive_int(self.batch, "batch", minimum=0)
        check_positive_int(self.log_every, "log_every")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if b is not None and not 0 <= b < 1:
                raise ConfigurationError(f"{name} must lie in [0, 1), got {b}")
        if not self.eps > 0:
            raise ConfigurationError(f"eps must be > 0, got {self.eps}")
        check_nonnegative(self.init_scale, "init_scale")

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainTrace:
    loss_history: np.ndarray
    grad_norm_history: np.ndarray
    steps_logged: np.ndarray
    final_model: DaeModel
    initial_loss: float = field(default=float("nan"))


def init_weights(d, p, scale=1e-2, seed=0, tied=True, sigma_train=0.0):
    """I.i.d. normal entries with standard deviation ``scale / sqrt(d)``."""
    d = check_positive_int(d, "d")
    p = check_positive_int(p, "p")
    scale = check_nonnegative(scale, "scale")
    rng = np.random.default_rng(seed)
    W1 = rng.standard_normal((d, p)) * (scale / np.sqrt(d))
    W2 = None
    if not tied:
        W2 = rng.standard_normal((d, p)) * (scale / np.sqrt(d))
    return DaeModel(W1, W2, sigma_train=sigma_train, tied=tied)


def loss_and_grad(m: DaeModel, X, Y, lam=0.0):
    """Batch loss ``mean_i ||W2 relu(W1^T y_i) - x_i||^2 + lam (|W1|^2 + |W2|^2)``.

    Returns ``(loss, grad_W1, grad_W2)``; for a tied model both gradients
    are the same array, the sum of the two partials.
    """
    B = X.shape[1]
    Z = m.W1.T @ Y
    H = np.maximum(Z, 0.0)
    R = m.W2 @ H - X
    loss = np.sum(R * R) / B + lam * (np.sum(m.W1 * m.W1) + np.sum(m.W2 * m.W2))
    R *= 2.0 / B
    gW2 = R @ H.T
    dZ = m.W2.T @ R
    dZ *= Z > 0
    gW1 = Y @ dZ.T
    if lam:
        gW1 += 2.0 * lam * m.W1
        gW2 += 2.0 * lam * m.W2
    if m.tied:
        gW1 += gW2
        return float(loss), gW1, gW1
    return float(loss), gW1, gW2


def _column_delta(w_enc, w_dec, y, t, which):
    """Change of the column-j output when entry ``which`` is shifted by t."""
    i, part = which
    enc = w_enc.copy()
    dec = w_dec.copy()
    if part in ("enc", "tied"):
        enc[i] += t
    if part in ("dec", "tied"):
        dec[i] += t
    h0 = max(w_enc @ y, 0.0)
    h1 = max(enc @ y, 0.0)
    return dec * h1 - w_dec * h0


def grad_check(m: DaeModel, x, sigma, seed, h=1e-5, lam=0.0):
    """Max relative error between analytic and finite-difference gradients.

    Uses one noise draw shared by both paths and the fourth-order central
    stencil. Only the perturbed column is re-evaluated, and the loss change
    is formed as ``<delta, 2 r0 + delta>`` so no large numbers cancel.
    Entries where both gradients are below 1e-8 are skipped.
    """
    x = as_vector(x, "x", size=m.d)
    eps = np.random.default_rng(seed).standard_normal(m.d)
    y = x + sigma * eps
    _, gW1, gW2 = loss_and_grad(m, x[:, None], y[:, None], lam)
    r0 = m.W2 @ np.maximum(m.W1.T @ y, 0.0) - x

    def loss_delta(j, which, t):
        delta = _column_delta(m.W1[:, j], m.W2[:, j], y, t, which)
        i, part = which
        reg = 0.0
        if part in ("enc", "tied"):
            reg += 2.0 * m.W1[i, j] * t + t * t
        if part in ("dec", "tied"):
            reg += 2.0 * m.W2[i, j] * t + t * t
        return float(delta @ (2.0 * r0 + delta)) + lam * reg

    def numeric(j, which):
        fm2, fm1, fp1, fp2 = (loss_delta(j, which, s * h) for s in (-2, -1, 1, 2))
        return (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h)

    checks = [("tied", gW1)] if m.tied else [("enc", gW1), ("dec", gW2)]
    worst = 0.0
    for part, g in checks:
        for i in range(m.d):
            for j in range(m.p):
                num = numeric(j, (i, part))
                ana = g[i, j]
                scale = max(abs(num), abs(ana))
                if scale > 1e-8:
                    worst = max(worst, abs(num - ana) / scale)
    return worst


def train(
    data: Dataset,
    sigma,
    p,
    cfg: OptimizerConfig,
    init: Optional[DaeModel] = None,
    callback: Optional[Callable[[int, DaeModel], None]] = None,
    checkpoint_every: int = 0,
) -> TrainTrace:
    """Train a DAE at noise level ``sigma`` with fresh noise every step.

    The batch loss before each logged update is recorded every
    ``cfg.log_every`` steps, always including the first and last step.
    ``init`` warm-starts from an existing model (copied, never mutated).
    ``callback(step, model)`` runs every ``checkpoint_every`` steps.
    """
    sigma = check_nonnegative(sigma, "sigma")
    p = check_positive_int(p, "p")
    if init is None:
        m = init_weights(data.d, p, cfg.init_scale, cfg.seed, cfg.tied, sigma)
    else:
        if init.d != data.d or init.p != p or init.tied != cfg.tied:
            raise ConfigurationError("warm-start model does not match data dimension, p or tying")
        m = init.copy()
        m.sigma_train = sigma
    params = [m.W1] if m.tied else [m.W1, m.W2]
    coupled = cfg.weight_decay if cfg.kind in ("rmsprop", "adam") else 0.0
    opt = make_optimizer(
        cfg.kind, params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps,
        weight_decay=cfg.weight_decay if cfg.kind == "adamw" else 0.0,
    )
    rng = np.random.default_rng([cfg.seed, 1])
    X = data.X
    n = data.n
    full = cfg.batch == 0 or cfg.batch >= n
    losses, gnorms, logged = [], [], []
    initial = None
    for step in range(cfg.steps):
        if full:
            Xb = X
        else:
            Xb = X[:, rng.choice(n, size=cfg.batch, replace=False)]
        Y = Xb + sigma * rng.standard_normal(Xb.shape)
        loss, gW1, gW2 = loss_and_grad(m, Xb, Y, coupled)
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite loss at step {step}")
        if initial is None:
            initial = max(loss, np.finfo(float).tiny)
        elif loss > cfg.divergence_factor * initial:
            raise DivergenceError(
                f"loss {loss:.3e} at step {step} exceeds {cfg.divergence_factor:g}x initial {initial:.3e}"
            )
        if step % cfg.log_every == 0 or step == cfg.steps - 1:
            gn = np.sqrt(np.sum(gW1 * gW1) + (0.0 if m.tied else np.sum(gW2 * gW2)))
            losses.append(loss)
            gnorms.append(gn)
            logged.append(step)
        opt.step([gW1] if m.tied else [gW1, gW2])
        if callback is not None and checkpoint_every and (step + 1) % checkpoint_every == 0:
            callback(step + 1, m)
    return TrainTrace(
        loss_history=np.array(losses),
        grad_norm_history=np.array(gnorms),
        steps_logged=np.array(logged),
        final_model=m,
        initial_loss=float(initial),
    )
