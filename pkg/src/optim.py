"""
Adam optimizer for faultsynth
-----------------------------
Functional `adam_step` over named parameters plus a thin stateful wrapper.
"""

from dataclasses import dataclass, field

import numpy as np

from src.errors import ConfigurationError

GAN_BETA1 = 0.5
CLASSIFIER_BETA1 = 0.9


@dataclass
class AdamState:
    learning_rate: float = 2e-4
    beta1: float = GAN_BETA1
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


def adam_step(params, grads, state):
    """
    One bias-corrected Adam update, applied in place.

    Args:
        params: mapping name -> parameter Tensor
        grads: mapping name -> gradient array (same shapes)
        state: AdamState; moments are created lazily per parameter

    Returns:
        AdamState: the same object with step_count advanced by one
    """
    state.step_count += 1
    t = state.step_count
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t
    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            continue
        if grad.shape != param.shape:
            raise ConfigurationError(f"gradient shape {grad.shape} != parameter {name} shape {param.shape}")
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.first_moment[name] = m.astype(param.dtype)
        state.second_moment[name] = v.astype(param.dtype)
        m_hat = m / correction1
        v_hat = v / correction2
        update = state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
        param.data = (param.data - update).astype(param.dtype)
    return state


class Adam:
    """Adam bound to one network's parameters."""

    def __init__(self, params, learning_rate=2e-4, beta1=GAN_BETA1, beta2=0.999, epsilon=1e-8):
        self.params = dict(params)
        self.state = AdamState(learning_rate, beta1, beta2, epsilon)

    def step(self, grads):
        adam_step(self.params, grads, self.state)

    def state_tensors(self, prefix):
        """Moments as named arrays for checkpointing."""
        tensors = {}
        for name in self.params:
            if name in self.state.first_moment:
                tensors[f"{prefix}.m.{name}"] = self.state.first_moment[name]
                tensors[f"{prefix}.v.{name}"] = self.state.second_moment[name]
        return tensors

    def load_state_tensors(self, prefix, tensors, step_count):
        self.state.step_count = step_count
        for name, param in self.params.items():
            m = tensors.get(f"{prefix}.m.{name}")
            if m is not None:
                self.state.first_moment[name] = np.asarray(m, dtype=param.dtype).reshape(param.shape)
                self.state.second_moment[name] = np.asarray(
                    tensors[f"{prefix}.v.{name}"], dtype=param.dtype).reshape(param.shape)
