"""Minimal fully-connected function approximators over flat parameter buffers.

Each network owns a single float64 vector; per-layer weight/bias views alias
into it, so in-place axpy steps, soft target mixing, and meta-learning
parameter surgery all reduce to flat-vector arithmetic.  Backward passes are
hand-derived and exact, which the gradient-check tests rely on.

Activations are smooth everywhere (softplus hidden units, tanh outputs) so
central finite differences converge cleanly.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Mlp", "softplus", "sigmoid"]


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


_ACTS = {
    "softplus": (softplus, lambda z, a: sigmoid(z)),
    "tanh": (np.tanh, lambda z, a: 1.0 - a * a),
    "linear": (lambda z: z, lambda z, a: np.ones_like(z)),
}


class Mlp:
    """Dense network with one hidden activation and one output activation.

    ``sizes`` lists layer widths input-first, e.g. (63, 64, 64, 8).
    """

    def __init__(self, sizes, hidden_act="softplus", out_act="linear",
                 rng: np.random.Generator | None = None, theta=None):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2:
            raise ValueError("need at least input and output widths")
        if hidden_act not in _ACTS or out_act not in _ACTS:
            raise ValueError("unknown activation")
        self.hidden_act = hidden_act
        self.out_act = out_act
        n_params = sum((a + 1) * b for a, b in zip(self.sizes, self.sizes[1:]))
        if theta is not None:
            theta = np.asarray(theta, dtype=float)
            if theta.shape != (n_params,):
                raise ValueError(f"theta must have {n_params} entries")
            self.theta = theta.copy()
        else:
            self.theta = np.zeros(n_params)
        self._weights = []
        self._biases = []
        offset = 0
        for a, b in zip(self.sizes, self.sizes[1:]):
            self._weights.append(self.theta[offset:offset + a * b].reshape(a, b))
            offset += a * b
            self._biases.append(self.theta[offset:offset + b])
            offset += b
        if theta is None and rng is not None:
            self._init_glorot(rng)

    def _init_glorot(self, rng):
        for w in self._weights:
            limit = np.sqrt(6.0 / (w.shape[0] + w.shape[1]))
            w[:] = rng.uniform(-limit, limit, size=w.shape)

    # ------------------------------------------------------------- descriptor

    @property
    def n_params(self) -> int:
        return self.theta.size

    def descriptor(self) -> dict:
        return {"sizes": list(self.sizes), "hidden_act": self.hidden_act,
                "out_act": self.out_act}

    @classmethod
    def from_descriptor(cls, desc: dict, theta=None) -> "Mlp":
        return cls(desc["sizes"], hidden_act=desc["hidden_act"],
                   out_act=desc["out_act"], theta=theta)

    def copy(self) -> "Mlp":
        return Mlp(self.sizes, hidden_act=self.hidden_act,
                   out_act=self.out_act, theta=self.theta)

    def axpy(self, alpha: float, vec: np.ndarray) -> None:
        """theta += alpha * vec, in place (views stay valid)."""
        self.theta += alpha * np.asarray(vec)

    def set_theta(self, vec: np.ndarray) -> None:
        self.theta[:] = np.asarray(vec, dtype=float)

    # ------------------------------------------------------------ forward/back

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.forward_cache(x)[0]

    def forward_cache(self, x: np.ndarray):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        acts = [x]
        pre = []
        n_layers = len(self._weights)
        out = x
        for idx, (w, b) in enumerate(zip(self._weights, self._biases)):
            z = out @ w + b
            name = self.out_act if idx == n_layers - 1 else self.hidden_act
            out = _ACTS[name][0](z)
            pre.append(z)
            acts.append(out)
        return out, (acts, pre)

    def backward(self, cache, grad_out: np.ndarray):
        """Accumulate dL/dtheta and dL/dinput for dL/doutput = grad_out.

        ``grad_out`` has one row per sample; no batch averaging is applied
        here, losses own their normalization.
        """
        acts, pre = cache
        grad_theta = np.zeros_like(self.theta)
        grads_w = []
        grads_b = []
        offset = 0
        for w in self._weights:
            grads_w.append(grad_theta[offset:offset + w.size].reshape(w.shape))
            offset += w.size
            grads_b.append(grad_theta[offset:offset + w.shape[1]])
            offset += w.shape[1]
        delta = np.atleast_2d(np.asarray(grad_out, dtype=float))
        n_layers = len(self._weights)
        for idx in range(n_layers - 1, -1, -1):
            name = self.out_act if idx == n_layers - 1 else self.hidden_act
            dact = _ACTS[name][1](pre[idx], acts[idx + 1])
            delta = delta * dact
            grads_w[idx][:] = acts[idx].T @ delta
            grads_b[idx][:] = delta.sum(axis=0)
            delta = delta @ self._weights[idx].T
        return grad_theta, delta
