"""Shared test utilities: finite-difference oracles and tiny fixtures."""

from __future__ import annotations

import numpy as np

from takfed import MlpArchitecture, ParameterVector, forward


def central_difference_grad(loss_fn, values: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar loss over a flat parameter vector."""
    v = values.copy()
    grad = np.zeros_like(v)
    for i in range(v.shape[0]):
        orig = v[i]
        v[i] = orig + h
        up = loss_fn(v)
        v[i] = orig - h
        down = loss_fn(v)
        v[i] = orig
        grad[i] = (up - down) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = max(float(np.linalg.norm(numeric)), 1e-12)
    return float(np.linalg.norm(analytic - numeric)) / denom


def random_small_mlp(rng: np.random.Generator, max_params: int = 500):
    """A random architecture/parameters/batch triple with <= max_params weights."""
    while True:
        input_dim = int(rng.integers(2, 7))
        n_hidden = int(rng.integers(0, 3))
        hidden = tuple(int(rng.integers(2, 9)) for _ in range(n_hidden))
        classes = int(rng.integers(2, 6))
        arch = MlpArchitecture(input_dim, hidden, classes)
        if arch.parameter_count() <= max_params:
            break
    values = rng.normal(0.0, 0.5, size=arch.parameter_count())
    params = ParameterVector(values, arch.arch_id)
    x = rng.normal(size=(int(rng.integers(2, 9)), input_dim))
    return arch, params, x


def loss_over_params(arch, loss_from_logits, x):
    """Wrap a logits->scalar loss as a flat-parameter function for FD checks."""

    def fn(values):
        pv = ParameterVector(values, arch.arch_id)
        return loss_from_logits(forward(arch, pv, x))

    return fn
