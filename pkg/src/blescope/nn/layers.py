"""Layers built on the autodiff tensor: dense, LSTM, 1-D convolution, ReLU."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .tensor import Tensor, conv1d, lstm_cell


class Module:
    """Base class; parameters and submodules are discovered from attributes."""

    name: str = ""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + key, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{key}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{key}.{i}.")

    def parameters(self) -> dict[str, Tensor]:
        return dict(self.named_parameters())

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = set(params) - set(state)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for k, p in params.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"{k}: shape {arr.shape} != {p.shape}")
            p.data = arr.copy()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):  # pragma: no cover - abstract
        raise NotImplementedError


def _xavier(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True)


def _zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


class Dense(Module):
    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator, name: str = "dense"):
        self.name = name
        self.fan_in = fan_in
        self.fan_out = fan_out
        self.weight = _xavier(rng, (fan_in, fan_out), fan_in, fan_out)
        self.bias = _zeros((fan_out,))

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.fan_in:
            raise ValueError(f"{self.name}: expected (N, {self.fan_in}) input, got {x.shape}")
        return x @ self.weight + self.bias


class ReLU(Module):
    def __init__(self, name: str = "relu"):
        self.name = name

    def forward(self, x: Tensor) -> Tensor:
        return x.relu()


class Conv1d(Module):
    """Stride-1 convolution over the last axis with 'same' padding."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        name: str = "conv1d",
    ):
        self.name = name
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.weight = _xavier(
            rng,
            (out_channels, in_channels, kernel_size),
            in_channels * kernel_size,
            out_channels * kernel_size,
        )
        self.bias = _zeros((out_channels,))

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[1] != self.in_channels:
            raise ValueError(
                f"{self.name}: expected (N, {self.in_channels}, L) input, got {x.shape}"
            )
        return conv1d(x, self.weight, self.bias)


class LSTMCell(Module):
    """Single LSTM step. Gate blocks are laid out as [input, forget, cell, output]."""

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator, name: str = "lstm"):
        self.name = name
        self.input_size = input_size
        self.hidden_size = hidden_size
        h4 = 4 * hidden_size
        a_in = 1.0 / np.sqrt(input_size)
        a_h = 1.0 / np.sqrt(hidden_size)
        self.w_ih = Tensor(rng.uniform(-a_in, a_in, size=(input_size, h4)), requires_grad=True)
        self.w_hh = Tensor(rng.uniform(-a_h, a_h, size=(hidden_size, h4)), requires_grad=True)
        bias = np.zeros(h4)
        bias[hidden_size : 2 * hidden_size] = 1.0
        self.bias = Tensor(bias, requires_grad=True)

    def gates(self, x: Tensor, h: Tensor) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        if x.ndim != 2 or x.shape[1] != self.input_size:
            raise ValueError(f"{self.name}: expected (N, {self.input_size}) input, got {x.shape}")
        z = x @ self.w_ih + h @ self.w_hh + self.bias
        n = self.hidden_size
        i = z[:, 0:n].sigmoid()
        f = z[:, n : 2 * n].sigmoid()
        g = z[:, 2 * n : 3 * n].tanh()
        o = z[:, 3 * n : 4 * n].sigmoid()
        return i, f, g, o

    def forward(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        if x.ndim != 2 or x.shape[1] != self.input_size:
            raise ValueError(f"{self.name}: expected (N, {self.input_size}) input, got {x.shape}")
        hc = lstm_cell(x, h, c, self.w_ih, self.w_hh, self.bias)
        n = self.hidden_size
        return hc[:, :n], hc[:, n:]

    def forward_unfused(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        """Same step composed from primitive ops; a cross-check for the fused kernel."""
        i, f, g, o = self.gates(x, h)
        c = f * c + i * g
        h = o * c.tanh()
        return h, c


class LSTM(Module):
    """Stacked LSTM over a (N, features, time) tensor; returns the last hidden state."""

    def __init__(
        self,
        input_size: int,
        hidden_size: int,
        num_layers: int,
        rng: np.random.Generator,
        name: str = "lstm",
    ):
        self.name = name
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.cells = [
            LSTMCell(input_size if k == 0 else hidden_size, hidden_size, rng, name=f"{name}.{k}")
            for k in range(num_layers)
        ]

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[1] != self.input_size:
            raise ValueError(
                f"{self.name}: expected (N, {self.input_size}, T) input, got {x.shape}"
            )
        n, _, steps = x.shape
        seq = [x[:, :, t] for t in range(steps)]
        for cell in self.cells:
            h = Tensor(np.zeros((n, self.hidden_size)))
            c = Tensor(np.zeros((n, self.hidden_size)))
            out = []
            for xt in seq:
                h, c = cell(xt, h, c)
                out.append(h)
            seq = out
        return seq[-1]


class Sequential(Module):
    def __init__(self, layers: list[Module], name: str = "seq"):
        self.name = name
        self.layers = layers

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # dense | lstm | conv1d | relu
    fan_in: int = 0
    fan_out: int = 0
    kernel_size: int = 3
    num_layers: int = 1

    def __post_init__(self):
        if self.kind not in ("dense", "lstm", "conv1d", "relu"):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind != "relu" and (self.fan_in <= 0 or self.fan_out <= 0):
            raise ValueError(f"{self.kind}: dimensions must be positive")
        if self.kind == "conv1d" and self.kernel_size <= 0:
            raise ValueError("conv1d: kernel size must be positive")


def build_layer(spec: LayerSpec, rng: np.random.Generator, name: str | None = None) -> Module:
    name = name or spec.kind
    if spec.kind == "dense":
        return Dense(spec.fan_in, spec.fan_out, rng, name=name)
    if spec.kind == "conv1d":
        return Conv1d(spec.fan_in, spec.fan_out, spec.kernel_size, rng, name=name)
    if spec.kind == "lstm":
        return LSTM(spec.fan_in, spec.fan_out, spec.num_layers, rng, name=name)
    return ReLU(name=name)


def build_sequential(specs: list[LayerSpec], rng: np.random.Generator) -> Sequential:
    return Sequential([build_layer(s, rng, name=f"{s.kind}{i}") for i, s in enumerate(specs)])
