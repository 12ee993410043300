"""AdamW with decoupled weight decay over named parameter buffers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ndtensor import NonFiniteError


class GradientError(ValueError):
    """Gradients missing or mis-keyed."""


@dataclass
class AdamW:
    """Standard decoupled-weight-decay Adam.

    Bias correction divides the moments before epsilon enters the
    denominator: update = lr * m_hat / (sqrt(v_hat) + epsilon).
    """

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.0
    epsilon: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self._scratch: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    def _ensure_buffers(self, params: dict[str, np.ndarray]) -> None:
        for name, p in params.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            if name not in self._scratch:
                self._scratch[name] = (np.empty_like(p), np.empty_like(p))

    def step(self, params: dict[str, np.ndarray],
             grads: dict[str, np.ndarray]) -> None:
        """Update `params` in place from same-keyed `grads`."""
        if set(params) != set(grads):
            missing = set(params) ^ set(grads)
            raise GradientError(f"gradient keys do not match parameters: {sorted(missing)}")
        self._ensure_buffers(params)
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, p in params.items():
            g = np.asarray(grads[name], dtype=np.float64)
            if g.shape != p.shape:
                raise GradientError(f"gradient for '{name}' has shape {g.shape}, "
                                    f"parameter has {p.shape}")
            if g.size and not (np.isfinite(g.min()) and np.isfinite(g.max())):
                raise NonFiniteError(f"non-finite gradient for '{name}'")
            m = self.m[name]
            v = self.v[name]
            s, d = self._scratch[name]  # persistent scratch keeps the loop allocation-free
            if self.weight_decay != 0.0:
                np.multiply(p, self.lr * self.weight_decay, out=s)
                p -= s
            m *= self.beta1
            np.multiply(g, 1.0 - self.beta1, out=s)
            m += s
            v *= self.beta2
            np.multiply(g, 1.0 - self.beta2, out=s)
            s *= g
            v += s
            np.divide(v, bc2, out=d)
            np.sqrt(d, out=d)
            d += self.epsilon
            np.divide(m, bc1, out=s)
            s *= self.lr
            s /= d
            p -= s

    # -- serialization --------------------------------------------------------

    def hyper_dict(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2,
                "weight_decay": self.weight_decay, "epsilon": self.epsilon,
                "step_count": self.step_count}

    def moment_buffers(self) -> dict[str, np.ndarray]:
        """Named views for the checkpoint tensor index."""
        out = {}
        for name, buf in self.m.items():
            out[f"opt.m.{name}"] = buf
        for name, buf in self.v.items():
            out[f"opt.v.{name}"] = buf
        return out

    @classmethod
    def from_state(cls, hyper: dict, moments: dict[str, np.ndarray]) -> "AdamW":
        opt = cls(lr=float(hyper["lr"]), beta1=float(hyper["beta1"]),
                  beta2=float(hyper["beta2"]), weight_decay=float(hyper["weight_decay"]),
                  epsilon=float(hyper["epsilon"]), step_count=int(hyper["step_count"]))
        for key, buf in moments.items():
            if key.startswith("opt.m."):
                opt.m[key[len("opt.m."):]] = np.array(buf)
            elif key.startswith("opt.v."):
                opt.v[key[len("opt.v."):]] = np.array(buf)
        return opt
