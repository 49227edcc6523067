"""Feedforward tanh networks with a flat parameter vector."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad


@dataclass(frozen=True)
class MlpTopology:
    """Layer widths (n0, n1, ..., n_{L+1}); tanh on hidden layers only."""

    widths: tuple
    activation: str = "tanh"

    def __post_init__(self):
        if len(self.widths) < 2:
            raise ValueError("topology needs at least input and output widths")
        if any(w < 1 for w in self.widths):
            raise ValueError("layer widths must be >= 1")
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))

    @property
    def input_dim(self):
        return self.widths[0]

    @property
    def output_dim(self):
        return self.widths[-1]

    @property
    def param_count(self):
        return sum(
            n_out * n_in + n_out
            for n_in, n_out in zip(self.widths[:-1], self.widths[1:])
        )

    def layer_slices(self):
        """Contiguous (weight_slice, bias_slice, n_out, n_in) per layer."""
        out = []
        offset = 0
        for n_in, n_out in zip(self.widths[:-1], self.widths[1:]):
            ws = slice(offset, offset + n_out * n_in)
            offset += n_out * n_in
            bs = slice(offset, offset + n_out)
            offset += n_out
            out.append((ws, bs, n_out, n_in))
        return out

    def unflatten(self, theta):
        """Split a flat vector into [(W, b), ...]; works on ndarray/Dual/Var."""
        layers = []
        for ws, bs, n_out, n_in in self.layer_slices():
            w = theta[ws].reshape((n_out, n_in))
            b = theta[bs]
            layers.append((w, b))
        return layers

    def flatten(self, layers):
        parts = []
        for w, b in layers:
            parts.append(np.asarray(w).reshape(-1))
            parts.append(np.asarray(b).reshape(-1))
        return np.concatenate(parts)


@dataclass(frozen=True)
class ParamVector:
    """Flat parameter vector tied to its network topology."""

    values: np.ndarray
    topology: MlpTopology

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.topology.param_count,):
            raise ValueError(
                f"expected {self.topology.param_count} parameters, got {values.shape}"
            )
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.shape[0]


def concat_params(params):
    """Combine several ParamVectors into one flat vector (multi-network runs)."""
    return np.concatenate([p.values for p in params])


def init(topology, seed):
    """Deterministic init: weights ~ N(0, 1/fan_in), biases zero."""
    rng = np.random.default_rng(seed)
    theta = np.zeros(topology.param_count)
    for ws, bs, n_out, n_in in topology.layer_slices():
        theta[ws] = rng.standard_normal(n_out * n_in) / np.sqrt(n_in)
    return ParamVector(theta, topology)


def forward(topology, theta, x):
    """Evaluate the network on a batch x of shape (q, d).

    theta may be an ndarray, Dual or Var; the result has shape (q,) for
    scalar output, (q, d') otherwise.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != topology.input_dim:
        raise ValueError(
            f"input dim {x.shape[1]} does not match topology ({topology.input_dim})"
        )
    if isinstance(theta, ParamVector):
        theta = theta.values
    layers = topology.unflatten(theta)
    value = x
    for k, (w, b) in enumerate(layers):
        value = ad.matmul(value, w.T) + b
        if k < len(layers) - 1:
            value = ad.tanh(value)
    if topology.output_dim == 1:
        return value.reshape((x.shape[0],))
    return value


def input_derivatives(topology, theta, x):
    """Network value, input gradient and Laplacian on a batch of points.

    Returns (u, grad_u, lap_u) with shapes (q,), (q, d), (q,).  Remains
    differentiable with respect to theta (Dual/Var pass through).
    """
    if isinstance(theta, ParamVector):
        theta = theta.values
    x = np.atleast_2d(np.asarray(x, dtype=float))
    layers = topology.unflatten(theta)
    value, gradient, second = ad.mlp_input_derivatives(
        layers, x, activation=topology.activation
    )
    lap = ad.asum(second, axis=1)
    return value, gradient, lap


def input_jet(topology, theta, x):
    """Like input_derivatives but returns per-coordinate second derivatives."""
    if isinstance(theta, ParamVector):
        theta = theta.values
    x = np.atleast_2d(np.asarray(x, dtype=float))
    layers = topology.unflatten(theta)
    return ad.mlp_input_derivatives(layers, x, activation=topology.activation)
