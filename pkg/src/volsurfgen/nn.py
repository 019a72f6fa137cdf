"""Minimal feedforward network engine with exact reverse-mode gradients.

Sized for shallow, narrow regression networks: dense layers without bias
(batch normalization's shift parameter plays that role), scaled softplus
or sigmoid activations, per-layer batch normalization with running
statistics for inference, and a bias-corrected Adam optimizer. Everything
is float64 numpy and deterministic given a seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .exceptions import DataError, NumericOverflowError

ACTIVATIONS = ("softplus", "sigmoid", "none")

BN_EPS = 1e-5
BN_MOMENTUM = 0.9

_CHECKPOINT_VERSION = 1


@dataclass
class DenseLayer:
    """One dense block: x @ w, optional batchnorm, then activation."""

    w: np.ndarray
    activation: str
    beta: float = 1.0
    gamma: np.ndarray | None = None
    eta: np.ndarray | None = None
    run_mean: np.ndarray | None = None
    run_var: np.ndarray | None = None

    @property
    def batchnorm(self) -> bool:
        return self.gamma is not None

    def parameters(self):
        if self.batchnorm:
            return [self.w, self.gamma, self.eta]
        return [self.w]


class MlpNetwork:
    """Ordered dense layers mapping input_dim -> output_dim."""

    def __init__(self, layers: list[DenseLayer]):
        if not layers:
            raise ValueError("network needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.w.shape[1] != b.w.shape[0]:
                raise ValueError(
                    f"incompatible layer dims {a.w.shape} -> {b.w.shape}"
                )
        for layer in layers:
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"unknown activation {layer.activation!r}")
            if layer.beta <= 0:
                raise ValueError("softplus beta must be positive")
        self.layers = layers

    @property
    def input_dim(self) -> int:
        return self.layers[0].w.shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].w.shape[1]

    def parameters(self):
        """Flat parameter list (views) in a stable order."""
        params = []
        for layer in self.layers:
            params.extend(layer.parameters())
        return params

    @classmethod
    def build(
        cls,
        dims,
        hidden_activation="softplus",
        output_activation="softplus",
        beta=1.0,
        batchnorm=True,
        rng=None,
    ) -> "MlpNetwork":
        """Glorot-uniform initialized network for a [d0, d1, ..., dk] spec.

        Hidden layers carry batchnorm (when enabled); the output layer is a
        plain dense + activation.
        """
        if len(dims) < 2:
            raise ValueError("dims must list input and output sizes")
        rng = rng or np.random.default_rng(0)
        layers = []
        last = len(dims) - 2
        for idx, (n_in, n_out) in enumerate(zip(dims, dims[1:])):
            limit = np.sqrt(6.0 / (n_in + n_out))
            w = rng.uniform(-limit, limit, size=(n_in, n_out))
            activation = hidden_activation if idx < last else output_activation
            use_bn = batchnorm and idx < last
            layers.append(
                DenseLayer(
                    w=w,
                    activation=activation,
                    beta=beta,
                    gamma=np.ones(n_out) if use_bn else None,
                    eta=np.zeros(n_out) if use_bn else None,
                    run_mean=np.zeros(n_out) if use_bn else None,
                    run_var=np.ones(n_out) if use_bn else None,
                )
            )
        return cls(layers)


@dataclass
class _LayerCache:
    a_in: np.ndarray
    s: np.ndarray
    xh: np.ndarray | None
    inv_std: np.ndarray | None
    z: np.ndarray
    out: np.ndarray


@dataclass
class ForwardCache:
    net: MlpNetwork
    layers: list[_LayerCache]
    consumed: bool = field(default=False)


def _activate(z, activation, beta):
    if activation == "softplus":
        return np.logaddexp(0.0, beta * z) / beta
    if activation == "sigmoid":
        return expit(z)
    return z


def _activation_grad(layer_cache, activation, beta):
    if activation == "softplus":
        return expit(beta * layer_cache.z)
    if activation == "sigmoid":
        return layer_cache.out * (1.0 - layer_cache.out)
    return 1.0


def forward(net: MlpNetwork, batch: np.ndarray, mode: str = "eval"):
    """Run the network on a (B, input_dim) batch.

    mode="train" uses batch statistics for normalization, updates the
    running statistics, and returns (output, cache) for backward.
    mode="eval" uses the stored running statistics and returns output only.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(batch, dtype=float)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ValueError(
            f"batch shape {x.shape} incompatible with input_dim {net.input_dim}"
        )
    train = mode == "train"
    caches = []
    a = x
    for layer in net.layers:
        s = a @ layer.w
        if layer.batchnorm:
            if train:
                if s.shape[0] < 2:
                    raise ValueError("batchnorm needs a batch of at least 2 rows")
                mean = s.mean(axis=0)
                var = s.var(axis=0)
                layer.run_mean *= BN_MOMENTUM
                layer.run_mean += (1.0 - BN_MOMENTUM) * mean
                layer.run_var *= BN_MOMENTUM
                layer.run_var += (1.0 - BN_MOMENTUM) * var
            else:
                mean = layer.run_mean
                var = layer.run_var
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            xh = (s - mean) * inv_std
            z = layer.gamma * xh + layer.eta
        else:
            xh = None
            inv_std = None
            z = s
        out = _activate(z, layer.activation, layer.beta)
        if train:
            caches.append(_LayerCache(a, s, xh, inv_std, z, out))
        a = out
    if train:
        return a, ForwardCache(net, caches)
    return a


def backward(net: MlpNetwork, cache: ForwardCache, grad_out: np.ndarray):
    """Exact gradients of a scalar loss given d(loss)/d(output).

    Returns (parameter gradients aligned with net.parameters(), gradient
    with respect to the input batch). The cache must come from a
    train-mode forward of this very network and is single-use.
    """
    if cache.net is not net:
        raise ValueError("stale cache: it was produced by a different network")
    if cache.consumed:
        raise ValueError("stale cache: already consumed by a previous backward")
    cache.consumed = True
    grad = np.asarray(grad_out, dtype=float)
    param_grads = []
    for layer, lc in zip(reversed(net.layers), reversed(cache.layers)):
        dz = grad * _activation_grad(lc, layer.activation, layer.beta)
        if layer.batchnorm:
            b = dz.shape[0]
            dgamma = np.sum(dz * lc.xh, axis=0)
            deta = np.sum(dz, axis=0)
            dxh = dz * layer.gamma
            ds = (
                lc.inv_std
                / b
                * (
                    b * dxh
                    - np.sum(dxh, axis=0)
                    - lc.xh * np.sum(dxh * lc.xh, axis=0)
                )
            )
            layer_grads = [lc.a_in.T @ ds, dgamma, deta]
        else:
            ds = dz
            layer_grads = [lc.a_in.T @ ds]
        param_grads = layer_grads + param_grads
        grad = ds @ layer.w.T
    return param_grads, grad


@dataclass
class AdamState:
    """First/second moment accumulators and step count for Adam."""

    t: int
    m: list
    v: list
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls(
            t=0,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )


def adam_step(state: AdamState, params, grads):
    """One in-place bias-corrected Adam update; returns the state."""
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ValueError("params/grads do not match the optimizer state")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NumericOverflowError("non-finite gradient; update aborted")
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return state


def save_checkpoint(net: MlpNetwork, path) -> None:
    """Versioned npz container; float64 arrays round-trip bit-exactly."""
    meta = {
        "version": _CHECKPOINT_VERSION,
        "layers": [
            {
                "activation": layer.activation,
                "beta": layer.beta,
                "batchnorm": layer.batchnorm,
            }
            for layer in net.layers
        ],
    }
    arrays = {"meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    for i, layer in enumerate(net.layers):
        arrays[f"w_{i}"] = layer.w
        if layer.batchnorm:
            arrays[f"gamma_{i}"] = layer.gamma
            arrays[f"eta_{i}"] = layer.eta
            arrays[f"run_mean_{i}"] = layer.run_mean
            arrays[f"run_var_{i}"] = layer.run_var
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> MlpNetwork:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("version") != _CHECKPOINT_VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        layers = []
        for i, spec in enumerate(meta["layers"]):
            bn = spec["batchnorm"]
            layers.append(
                DenseLayer(
                    w=data[f"w_{i}"],
                    activation=spec["activation"],
                    beta=spec["beta"],
                    gamma=data[f"gamma_{i}"] if bn else None,
                    eta=data[f"eta_{i}"] if bn else None,
                    run_mean=data[f"run_mean_{i}"] if bn else None,
                    run_var=data[f"run_var_{i}"] if bn else None,
                )
            )
    return MlpNetwork(layers)
