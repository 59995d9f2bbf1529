"""Dense MLP numerics: forward/backward, tempered softmax, losses, Adam.

All arithmetic is float64 so gradient checks against central finite
differences can be held to tight tolerances. Parameters live in flat vectors
(`ParameterVector`) tied to an architecture; layer matrices are views carved
out of the flat buffer, which makes averaging, task-vector arithmetic, and
checkpointing trivial.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class MlpArchitecture:
    """Layer-width description of one device prototype's model.

    ``hidden_widths=[]`` degenerates to multinomial logistic regression.
    Only logit-level operations are meaningful across architectures with the
    same ``num_classes``; parameter-level operations require identical
    architectures.
    """

    input_dim: int
    hidden_widths: tuple[int, ...]
    num_classes: int
    activation: str = "relu"

    def __post_init__(self) -> None:
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be positive, got {self.input_dim}")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if any(w < 1 for w in self.hidden_widths):
            raise ValueError(f"hidden widths must be positive, got {self.hidden_widths}")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))

    def layer_shapes(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) for each affine layer, input to output."""
        dims = [self.input_dim, *self.hidden_widths, self.num_classes]
        return list(zip(dims[:-1], dims[1:]))

    def parameter_count(self) -> int:
        return sum(fi * fo + fo for fi, fo in self.layer_shapes())

    @property
    def arch_id(self) -> str:
        dims = "-".join(str(d) for d in (self.input_dim, *self.hidden_widths, self.num_classes))
        return f"mlp:{dims}:{self.activation}"


@dataclass
class ParameterVector:
    """Flat float64 parameter buffer for one architecture."""

    values: np.ndarray
    arch_id: str

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64).ravel()

    def copy(self) -> "ParameterVector":
        return ParameterVector(self.values.copy(), self.arch_id)

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass
class Batch:
    """A block of samples; labels are optional (public data has none)."""

    features: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError(f"features must be a nonempty 2-D matrix, got shape {self.features.shape}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
            if self.labels.shape[0] != self.features.shape[0]:
                raise ValueError(
                    f"labels length {self.labels.shape[0]} != feature rows {self.features.shape[0]}"
                )


def check_params(arch: MlpArchitecture, params: ParameterVector) -> None:
    if params.arch_id != arch.arch_id:
        raise ValueError(f"parameters built for {params.arch_id} used with {arch.arch_id}")
    if len(params) != arch.parameter_count():
        raise ValueError(
            f"parameter length {len(params)} != architecture count {arch.parameter_count()}"
        )


def unflatten(arch: MlpArchitecture, values: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Carve (W, b) views per layer out of the flat buffer.

    Layout: for each layer, W (fan_in x fan_out, C order) then b (fan_out).
    The views share memory with ``values``; ``flatten`` of them round-trips
    bit-identically.
    """
    out = []
    off = 0
    for fi, fo in arch.layer_shapes():
        w = values[off : off + fi * fo].reshape(fi, fo)
        off += fi * fo
        b = values[off : off + fo]
        off += fo
        out.append((w, b))
    if off != values.shape[0]:
        raise ValueError(f"flat length {values.shape[0]} does not match architecture ({off} expected)")
    return out


def flatten(layers: Sequence[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    return np.concatenate([a.ravel() for w, b in layers for a in (w, b)])


def init_params(arch: MlpArchitecture, rng: np.random.Generator) -> ParameterVector:
    """Glorot-uniform weights, zero biases; deterministic for a fixed stream."""
    values = np.zeros(arch.parameter_count())
    for w, b in unflatten(arch, values):
        fi, fo = w.shape
        limit = np.sqrt(6.0 / (fi + fo))
        w[...] = rng.uniform(-limit, limit, size=(fi, fo))
        b[...] = 0.0
    return ParameterVector(values, arch.arch_id)


def forward(arch: MlpArchitecture, params: ParameterVector, features: np.ndarray) -> np.ndarray:
    """Logits for a feature matrix, shape (rows, num_classes)."""
    logits, _ = forward_cached(arch, params, features)
    return logits


def forward_cached(
    arch: MlpArchitecture, params: ParameterVector, features: np.ndarray
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Forward pass keeping per-layer inputs for the backward pass.

    Returns (logits, cache) where cache[i] is the input to affine layer i.
    """
    check_params(arch, params)
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {x.shape}")
    if x.shape[1] != arch.input_dim:
        raise ValueError(f"feature width {x.shape[1]} does not match input_dim {arch.input_dim}")
    layers = unflatten(arch, params.values)
    cache = []
    h = x
    for i, (w, b) in enumerate(layers):
        cache.append(h)
        z = h @ w + b
        h = np.maximum(z, 0.0) if i < len(layers) - 1 else z
    return h, cache


def backward(
    arch: MlpArchitecture,
    params: ParameterVector,
    cache: list[np.ndarray],
    grad_logits: np.ndarray,
) -> np.ndarray:
    """Flat parameter gradient given dLoss/dlogits from a cached forward."""
    layers = unflatten(arch, params.values)
    grads = np.zeros_like(params.values)
    gviews = unflatten(arch, grads)
    delta = np.asarray(grad_logits, dtype=np.float64)
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        gw, gb = gviews[i]
        h_in = cache[i]
        gw[...] = h_in.T @ delta
        gb[...] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ w.T
            # the stored input of layer i is relu(z_{i-1}); its derivative is 1 where it is > 0
            delta = delta * (h_in > 0.0)
    return grads


def softmax_t(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Tempered softmax with max-subtraction; rows sum to 1 within 1e-12."""
    if not temperature > 0.0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the logits.

    grad = (softmax(logits) - one_hot(labels)) / batch_size, so it matches
    finite differences of the mean loss directly.
    """
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64).ravel()
    n, c = logits.shape
    if labels.shape[0] != n:
        raise ValueError(f"labels length {labels.shape[0]} != logit rows {n}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= c:
        raise ValueError(f"labels must lie in [0, {c}), got range [{labels.min()}, {labels.max()}]")
    ls = log_softmax(logits)
    loss = -ls[np.arange(n), labels].mean()
    grad = np.exp(ls)
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return float(loss), grad


def kd_kl_loss(
    teacher_logits: np.ndarray, student_logits: np.ndarray, temperature: float
) -> tuple[float, np.ndarray]:
    """Distillation loss T^2 * mean_i KL(softmax(t_i/T) || softmax(s_i/T)).

    The T^2 factor keeps gradient magnitude comparable across temperatures.
    Returns the loss and its gradient w.r.t. the student logits,
    T * (softmax(s/T) - softmax(t/T)) / batch_size.
    """
    t = np.atleast_2d(np.asarray(teacher_logits, dtype=np.float64))
    s = np.atleast_2d(np.asarray(student_logits, dtype=np.float64))
    if t.shape != s.shape:
        raise ValueError(f"teacher logits shape {t.shape} != student logits shape {s.shape}")
    if not temperature > 0.0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    n = t.shape[0]
    lp = log_softmax(t, temperature)
    lq = log_softmax(s, temperature)
    p = np.exp(lp)
    loss = temperature**2 * float((p * (lp - lq)).sum()) / n
    grad = temperature * (np.exp(lq) - p) / n
    return loss, grad


@dataclass
class AdamState:
    """Adam moments plus hyperparameters; weight decay is decoupled."""

    m: np.ndarray
    v: np.ndarray
    t: int
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0


def adam_init(
    n_params: int,
    lr: float,
    weight_decay: float = 0.0,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    return AdamState(
        m=np.zeros(n_params),
        v=np.zeros(n_params),
        t=0,
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
        weight_decay=weight_decay,
    )


def adam_step(
    state: AdamState, params: np.ndarray, grads: np.ndarray
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam step; returns new params and state.

    update = lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * params)
    """
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError(
            f"shape mismatch: params {params.shape}, grads {grads.shape}, state {state.m.shape}"
        )
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads**2
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    step = m_hat / (np.sqrt(v_hat) + state.eps)
    if state.weight_decay != 0.0:
        step = step + state.weight_decay * params
    new_params = params - state.lr * step
    return new_params, replace(state, m=m, v=v, t=t)
