"""Named parameter storage with gradient buffers and Adam state."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, NonFiniteError
from .tensor import Tensor


class ParameterSet:
    """An ordered collection of named trainable tensors.

    Iteration order is insertion order and is stable, which makes updates,
    checkpoints, and gradient checks deterministic.  Each parameter carries
    its gradient (on the Tensor) and first/second Adam moments here.
    """

    def __init__(self, dtype=np.float32, trainable=True):
        self.dtype = np.dtype(dtype)
        self.trainable = trainable
        self._params: dict[str, Tensor] = {}
        self.adam_m: dict[str, np.ndarray] = {}
        self.adam_v: dict[str, np.ndarray] = {}
        self.adam_step_count = 0

    def add(self, name, array):
        if name in self._params:
            raise ConfigError(f"duplicate parameter name '{name}'")
        arr = np.asarray(array, dtype=self.dtype)
        t = Tensor(arr, requires_grad=self.trainable, name=name)
        self._params[name] = t
        self.adam_m[name] = np.zeros_like(arr)
        self.adam_v[name] = np.zeros_like(arr)
        return t

    def __getitem__(self, name) -> Tensor:
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params.keys())

    def items(self):
        return self._params.items()

    def tensors(self):
        return list(self._params.values())

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def freeze(self):
        """Stop gradient accumulation into these parameters (teacher mode)."""
        self.trainable = False
        for t in self._params.values():
            t.requires_grad = False

    def num_values(self):
        return sum(t.data.size for t in self._params.values())

    def copy(self):
        out = ParameterSet(dtype=self.dtype, trainable=self.trainable)
        for name, t in self._params.items():
            out.add(name, t.data.copy())
        out.adam_m = {k: v.copy() for k, v in self.adam_m.items()}
        out.adam_v = {k: v.copy() for k, v in self.adam_v.items()}
        out.adam_step_count = self.adam_step_count
        return out

    def state_arrays(self):
        """name -> array view of the raw parameter values (for checkpoints)."""
        return {name: t.data for name, t in self._params.items()}

    def load_arrays(self, arrays):
        for name, t in self._params.items():
            if name not in arrays:
                raise ConfigError(f"missing parameter '{name}' in loaded state")
            src = np.asarray(arrays[name])
            if src.shape != t.data.shape:
                raise ConfigError(
                    f"shape mismatch for '{name}': have {t.data.shape}, loaded {src.shape}"
                )
            t.data = src.astype(self.dtype, copy=True)


def adam_step(params: ParameterSet, lr, betas=(0.9, 0.999), eps=1e-8):
    """Bias-corrected Adam update over all parameters with gradients.

    Rejects the whole update if any gradient is non-finite, naming the tensor.
    Parameters without a gradient this step are left untouched.
    """
    b1, b2 = betas
    for name, t in params.items():
        if t.grad is not None and not np.all(np.isfinite(t.grad)):
            raise NonFiniteError(f"non-finite gradient for parameter '{name}'; update rejected")
    params.adam_step_count += 1
    step = params.adam_step_count
    bc1 = 1.0 - b1**step
    bc2 = 1.0 - b2**step
    for name, t in params.items():
        g = t.grad
        if g is None:
            continue
        m = params.adam_m[name]
        v = params.adam_v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        mhat = m / bc1
        vhat = v / bc2
        t.data = t.data - (lr * mhat / (np.sqrt(vhat) + eps)).astype(t.data.dtype)


def clip_grad_norm(params: ParameterSet, max_norm):
    """Scale all gradients so their global l2 norm is at most max_norm."""
    total = 0.0
    for t in params.tensors():
        if t.grad is not None:
            total += float(np.sum(t.grad.astype(np.float64) ** 2))
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for t in params.tensors():
            if t.grad is not None:
                t.grad = t.grad * scale
    return norm
