"""A small shared-trunk, three-head network with hand-written backprop.

The trunk is a stack of tanh dense layers. Each head is a dense stack with
tanh between layers and a linear output:

* ``waveform``: regresses the 200-sample single-cycle ECG piece (RMSE loss)
* ``anchor``: one logit per time index of the window; cross-entropy against
  the uniform distribution over the true anchor indices
* ``length``: one logit per cycle-length bin; cross-entropy with one true bin

Only the trunk gradients are balanced across tasks. Each head is trained on
its own loss with momentum SGD.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import InvalidConfigError, InvalidInputError

log = logging.getLogger(__name__)

HEAD_KINDS = ("waveform", "anchor", "length")
RMSE_FLOOR = 1e-12
CHECKPOINT_FORMAT = "egamtl-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class Dense:
    W: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)


class MLP:
    """Dense layers with tanh activations.

    ``activate_last=False`` leaves the final layer linear (used by heads).
    """

    def __init__(self, layers: list[Dense], activate_last: bool = True):
        if not layers:
            raise InvalidConfigError("MLP needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.W.shape[0] != nxt.W.shape[1]:
                raise InvalidConfigError(
                    f"layer dimensions do not chain: {prev.W.shape} -> {nxt.W.shape}"
                )
        for layer in layers:
            if layer.b.shape != (layer.W.shape[0],):
                raise InvalidConfigError("bias shape does not match weight rows")
        self.layers = layers
        self.activate_last = activate_last

    @classmethod
    def init(cls, sizes, rng: np.random.Generator, activate_last: bool = True) -> "MLP":
        layers = [
            Dense(rng.normal(0.0, 1.0 / np.sqrt(n_in), size=(n_out, n_in)), np.zeros(n_out))
            for n_in, n_out in zip(sizes[:-1], sizes[1:])
        ]
        return cls(layers, activate_last)

    @property
    def sizes(self) -> list[int]:
        return [self.layers[0].W.shape[1]] + [layer.W.shape[0] for layer in self.layers]

    @property
    def n_params(self) -> int:
        return sum(layer.W.size + layer.b.size for layer in self.layers)

    def get_flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([l.W.ravel(), l.b]) for l in self.layers])

    def set_flat(self, theta) -> None:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise InvalidInputError(f"expected {self.n_params} parameters, got {theta.shape}")
        i = 0
        for layer in self.layers:
            n = layer.W.size
            layer.W = theta[i : i + n].reshape(layer.W.shape).copy()
            i += n
            layer.b = theta[i : i + layer.b.size].copy()
            i += layer.b.size

    def _activated(self, k: int) -> bool:
        return self.activate_last or k < len(self.layers) - 1

    def forward(self, x: np.ndarray):
        cache = []
        h = x
        for k, layer in enumerate(self.layers):
            z = h @ layer.W.T + layer.b
            out = np.tanh(z) if self._activated(k) else z
            cache.append((h, out))
            h = out
        return h, cache

    def backward(self, cache, d_out: np.ndarray):
        """Return (gradient w.r.t. the input, flat parameter gradient)."""
        grads = []
        d = d_out
        for k in range(len(self.layers) - 1, -1, -1):
            h_in, out = cache[k]
            if self._activated(k):
                d = d * (1.0 - out * out)
            grads.append(np.concatenate([(d.T @ h_in).ravel(), d.sum(axis=0)]))
            d = d @ self.layers[k].W
        return d, np.concatenate(grads[::-1])


@dataclass
class TaskHead:
    kind: str
    mlp: MLP

    def __post_init__(self):
        if self.kind not in HEAD_KINDS:
            raise InvalidConfigError(f"unknown head kind {self.kind!r}")

    @property
    def out_dim(self) -> int:
        return self.mlp.sizes[-1]


@dataclass
class Batch:
    x: np.ndarray  # (B, input_dim)
    waveform: np.ndarray  # (B, waveform_dim)
    anchors: np.ndarray  # (B, anchor_classes) bool mask
    length: np.ndarray  # (B,) int class index

    def __post_init__(self):
        B = self.x.shape[0]
        if B < 1:
            raise InvalidInputError("batch must hold at least one sample")
        if not (self.waveform.shape[0] == self.anchors.shape[0] == self.length.shape[0] == B):
            raise InvalidInputError("batch fields disagree on batch size")

    def __len__(self) -> int:
        return self.x.shape[0]


class MultiTaskNet:
    def __init__(self, trunk: MLP, heads: list[TaskHead]):
        kinds = [h.kind for h in heads]
        if kinds != list(HEAD_KINDS):
            raise InvalidConfigError(f"heads must be {HEAD_KINDS} in order, got {kinds}")
        for head in heads:
            if head.mlp.sizes[0] != trunk.sizes[-1]:
                raise InvalidConfigError("head input does not match trunk output width")
        self.trunk = trunk
        self.heads = heads

    @classmethod
    def build(
        cls,
        input_dim: int,
        trunk_hidden=(64, 64),
        head_hidden=(),
        out_dims=(200, 200, 100),
        seed: int = 0,
    ) -> "MultiTaskNet":
        rng = np.random.default_rng(seed)
        trunk = MLP.init([input_dim, *trunk_hidden], rng)
        width = trunk.sizes[-1]
        heads = [
            TaskHead(kind, MLP.init([width, *head_hidden, out], rng, activate_last=False))
            for kind, out in zip(HEAD_KINDS, out_dims)
        ]
        return cls(trunk, heads)

    def forward(self, x: np.ndarray):
        """Predictions of every head from one trunk pass, plus the caches."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.trunk.sizes[0]:
            raise InvalidInputError(f"input must be (B, {self.trunk.sizes[0]}), got {x.shape}")
        h, trunk_cache = self.trunk.forward(x)
        preds, head_caches = [], []
        for head in self.heads:
            p, c = head.mlp.forward(h)
            preds.append(p)
            head_caches.append(c)
        return preds, (trunk_cache, head_caches)

    def predict(self, x: np.ndarray) -> list[np.ndarray]:
        return self.forward(x)[0]

    def config(self) -> dict:
        return {
            "trunk_sizes": self.trunk.sizes,
            "heads": [{"kind": h.kind, "sizes": h.mlp.sizes} for h in self.heads],
            "activation": "tanh",
        }

    def copy(self) -> "MultiTaskNet":
        clone = MultiTaskNet.from_config(self.config())
        clone.trunk.set_flat(self.trunk.get_flat())
        for dst, src in zip(clone.heads, self.heads):
            dst.mlp.set_flat(src.mlp.get_flat())
        return clone

    @classmethod
    def from_config(cls, cfg: dict) -> "MultiTaskNet":
        rng = np.random.default_rng(0)
        trunk = MLP.init(cfg["trunk_sizes"], rng)
        heads = [TaskHead(h["kind"], MLP.init(h["sizes"], rng, activate_last=False)) for h in cfg["heads"]]
        return cls(trunk, heads)


# --- losses ---------------------------------------------------------------


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _check_shapes(preds, batch: Batch) -> None:
    if len(preds) != 3:
        raise InvalidInputError(f"expected 3 predictions, got {len(preds)}")
    wave, anchor, length = preds
    if wave.shape != batch.waveform.shape:
        raise InvalidInputError(f"waveform prediction {wave.shape} vs target {batch.waveform.shape}")
    if anchor.shape != batch.anchors.shape:
        raise InvalidInputError(f"anchor logits {anchor.shape} vs target {batch.anchors.shape}")
    if length.shape[0] != batch.length.shape[0]:
        raise InvalidInputError("length logits and targets disagree on batch size")
    if np.any(batch.length < 0) or np.any(batch.length >= length.shape[1]):
        raise InvalidInputError("length class index out of range")


def losses_and_output_grads(preds, batch: Batch):
    """Three task losses and the gradient of each w.r.t. its head output."""
    _check_shapes(preds, batch)
    wave, anchor, length = preds
    B = len(batch)

    diff = wave - batch.waveform
    l1 = float(np.sqrt(np.mean(diff * diff)))
    d1 = diff / (diff.size * max(l1, RMSE_FLOOR))

    counts = batch.anchors.sum(axis=1)
    empty = counts == 0
    if np.any(empty):
        log.debug("%d samples without anchors contribute zero anchor loss", int(empty.sum()))
    q = batch.anchors / np.where(empty, 1, counts)[:, None]
    logp = _log_softmax(anchor)
    l2 = float(-(q * logp).sum() / B)
    d2 = (np.exp(logp) - q) / B
    d2[empty] = 0.0

    logp3 = _log_softmax(length)
    rows = np.arange(B)
    l3 = float(-logp3[rows, batch.length].mean())
    d3 = np.exp(logp3)
    d3[rows, batch.length] -= 1.0
    d3 /= B

    return np.array([l1, l2, l3]), [d1, d2, d3]


def task_losses(preds, batch: Batch) -> np.ndarray:
    return losses_and_output_grads(preds, batch)[0]


class TaskGradients(NamedTuple):
    trunk: np.ndarray  # (3, m) rows are dL_i/dtheta_trunk
    heads: list  # flat gradient per head, own loss only
    losses: np.ndarray


def per_task_gradients(net: MultiTaskNet, batch: Batch, loss_scales=None) -> TaskGradients:
    """Per-task trunk gradients plus each head's gradient of its own loss.

    ``loss_scales`` multiplies each task's loss before differentiation; the
    returned losses are unscaled.
    """
    preds, (trunk_cache, head_caches) = net.forward(batch.x)
    losses, d_outs = losses_and_output_grads(preds, batch)
    scales = np.ones(3) if loss_scales is None else np.asarray(loss_scales, dtype=np.float64)
    rows, head_grads = [], []
    for head, cache, d_out, s in zip(net.heads, head_caches, d_outs, scales):
        d_h, g_head = head.mlp.backward(cache, s * d_out)
        _, g_trunk = net.trunk.backward(trunk_cache, d_h)
        rows.append(g_trunk)
        head_grads.append(g_head)
    return TaskGradients(np.stack(rows), head_grads, losses)


# --- head optimiser -------------------------------------------------------


def sgd_momentum_step(w, g, v, eta: float, momentum: float, weight_decay: float):
    """Classical momentum with L2 decay folded into the gradient.

    Returns the new ``(w, v)``.
    """
    v = momentum * v + (g + weight_decay * w)
    return w - eta * v, v


class HeadSGD:
    """Momentum SGD state for every head of a network."""

    def __init__(self, net: MultiTaskNet, eta: float, momentum: float = 0.0, weight_decay: float = 0.0):
        if not eta > 0:
            raise InvalidConfigError(f"eta must be > 0, got {eta}")
        if not 0 <= momentum < 1:
            raise InvalidConfigError(f"momentum must be in [0, 1), got {momentum}")
        if weight_decay < 0:
            raise InvalidConfigError(f"weight_decay must be >= 0, got {weight_decay}")
        self.eta, self.momentum, self.weight_decay = eta, momentum, weight_decay
        self.velocity = [np.zeros(h.mlp.n_params) for h in net.heads]

    def step(self, net: MultiTaskNet, head_grads) -> None:
        sgd_head_update(net.heads, head_grads, self.velocity, self.eta, self.momentum, self.weight_decay)


def sgd_head_update(heads, head_grads, velocities, eta, momentum, weight_decay):
    """Update every head in place; ``velocities`` is updated in place too."""
    for k, (head, g) in enumerate(zip(heads, head_grads)):
        w, velocities[k] = sgd_momentum_step(
            head.mlp.get_flat(), g, velocities[k], eta, momentum, weight_decay
        )
        head.mlp.set_flat(w)
    return heads


# --- checkpoints ----------------------------------------------------------


def save_checkpoint(net: MultiTaskNet, path) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": net.config(),
        "trunk": net.trunk.get_flat().tolist(),
        "heads": [h.mlp.get_flat().tolist() for h in net.heads],
    }
    Path(path).write_text(json.dumps(payload))


def load_checkpoint(path) -> MultiTaskNet:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise InvalidInputError(f"{path} is not a model checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise InvalidInputError(f"unsupported checkpoint version {payload.get('version')}")
    net = MultiTaskNet.from_config(payload["config"])
    net.trunk.set_flat(payload["trunk"])
    for head, flat in zip(net.heads, payload["heads"]):
        head.mlp.set_flat(flat)
    return net
