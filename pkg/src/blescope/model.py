"""LocNet, TransNet, their composition, and the four training losses."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .core import Location, RssiWindow
from .nn import LSTM, Conv1d, Dense, Module, ReLU, Tensor, load_checkpoint, no_grad, save_checkpoint
from .stats import StatMatrix

RSSI_SCALE = 0.01
DEFAULT_TAU = 0.1
DEFAULT_LOG_WEIGHT_CAP = 50.0


@dataclass(frozen=True)
class LossWeights:
    w_loc: float = 1.0
    w_ps: float = 0.1
    w_ssl: float = 0.01
    w_ts: float = 0.01
    w_u: float = 1.0
    tau: float = DEFAULT_TAU

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        for name in ("w_loc", "w_ps", "w_ssl", "w_ts", "w_u"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class LocNetConfig:
    n_beacons: int
    hidden: int = 128
    num_layers: int = 2
    dense_hidden: int = 64
    # fixed output affine: metres = raw * out_scale + out_offset
    out_offset: tuple[float, float] = (0.0, 0.0)
    out_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "out_offset", tuple(float(v) for v in self.out_offset))
        if not self.out_scale > 0:
            raise ValueError("out_scale must be positive")


@dataclass(frozen=True)
class TransNetConfig:
    n_beacons: int
    channels: tuple[int, int, int] = (64, 32, 16)
    kernel_size: int = 3
    zero_init_residual: bool = True


class LocNet(Module):
    """Stacked LSTM over time, then dense(hidden -> dense_hidden) + ReLU + dense(-> 2)."""

    def __init__(self, cfg: LocNetConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.lstm = LSTM(cfg.n_beacons, cfg.hidden, cfg.num_layers, rng, name="locnet.lstm")
        self.fc1 = Dense(cfg.hidden, cfg.dense_hidden, rng, name="locnet.fc1")
        self.act = ReLU()
        self.fc2 = Dense(cfg.dense_hidden, 2, rng, name="locnet.fc2")

    def forward(self, x: Tensor) -> Tensor:
        """``x`` is (N, B, H) normalized RSSI; returns (N, 2) metres."""
        if x.ndim != 3 or x.shape[1] != self.cfg.n_beacons:
            raise ValueError(f"locnet: expected (N, {self.cfg.n_beacons}, H) input, got {x.shape}")
        raw = self.fc2(self.act(self.fc1(self.lstm(x))))
        if self.cfg.out_scale == 1.0 and self.cfg.out_offset == (0.0, 0.0):
            return raw
        return raw * self.cfg.out_scale + np.asarray(self.cfg.out_offset)


class TransNet(Module):
    """ReLU(r(S) + S) with r a six-layer 1-D convolutional autoencoder over time."""

    def __init__(self, cfg: TransNetConfig, rng: np.random.Generator):
        self.cfg = cfg
        c1, c2, c3 = cfg.channels
        sizes = [cfg.n_beacons, c1, c2, c3, c2, c1, cfg.n_beacons]
        self.convs = [
            Conv1d(sizes[k], sizes[k + 1], cfg.kernel_size, rng, name=f"transnet.conv{k}") for k in range(6)
        ]
        if cfg.zero_init_residual:
            self.zero_residual()

    def zero_residual(self) -> None:
        last = self.convs[-1]
        last.weight.data = np.zeros_like(last.weight.data)
        last.bias.data = np.zeros_like(last.bias.data)

    def residual(self, x: Tensor) -> Tensor:
        h = x
        for k, conv in enumerate(self.convs):
            h = conv(h)
            if k < len(self.convs) - 1:
                h = h.relu()
        return h

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[1] != self.cfg.n_beacons:
            raise ValueError(f"transnet: expected (N, {self.cfg.n_beacons}, H) input, got {x.shape}")
        return (self.residual(x) + x).relu()


# -- losses (batched over leading axes) -------------------------------------------


def loss_loc(pred: Tensor, truth) -> Tensor:
    """Squared Euclidean distance along the last axis."""
    return (pred - np.asarray(truth, dtype=np.float64)).square().sum(axis=-1)


def loss_ps(pred_t: Tensor, pred_prev: Tensor) -> Tensor:
    return (pred_t - pred_prev).square().sum(axis=-1)


def ssl_weights_log(inputs: np.ndarray, m: np.ndarray, tau: float, log_cap: float) -> np.ndarray:
    return np.minimum((inputs - np.diag(m)[:, None]) / tau, log_cap)


def loss_ssl(
    translated: Tensor,
    inputs,
    stats: StatMatrix | np.ndarray,
    tau: float = DEFAULT_TAU,
    mask: np.ndarray | bool | None = True,
    log_weight_cap: float = DEFAULT_LOG_WEIGHT_CAP,
) -> Tensor:
    """Statistic similarity loss per window.

    ``translated`` and ``inputs`` are (N, B, H) or (B, H), in the same units
    as ``stats``. The per-beacon weight exp((S_it - M_ii) / tau) has its
    exponent capped at ``log_weight_cap``. With ``mask=True`` rows of beacons
    never heard in the statistics data (zero support) are ignored.
    """
    if isinstance(stats, StatMatrix):
        m = stats.m
        if mask is True:
            mask = stats.mask
    else:
        m = np.asarray(stats, dtype=np.float64)
    if mask is True or mask is None or mask is False:
        mask = np.ones_like(m, dtype=bool)
    single = translated.ndim == 2
    g = translated.reshape(1, *translated.shape) if single else translated
    s = inputs if isinstance(inputs, Tensor) else Tensor(inputs)
    if single:
        s = s.reshape(1, *s.shape)
    if g.shape != s.shape or g.shape[1] != m.shape[0]:
        raise ValueError(f"loss_ssl: shapes {g.shape}, {s.shape} and M {m.shape} disagree")

    # weight[n, i, t]; exponent capped before exp so large inputs cannot overflow
    expo = ((s - Tensor(np.diag(m)[None, :, None])) * (1.0 / tau)).clip_max(log_weight_cap)
    w = expo.exp()
    wm = w.reshape(g.shape[0], g.shape[1], 1, g.shape[2]) * Tensor(mask.astype(np.float64)[:, :, None])
    # diff[n, i, j, t] = M_ij - g_jt
    diff = Tensor(m[None, :, :, None]) - g.reshape(g.shape[0], 1, g.shape[1], g.shape[2])
    d = (-diff).relu() + diff.relu().square()
    out = (wm * d).sum(axis=(1, 2, 3))
    return out.reshape(()) if single else out


def loss_ts(translated: Tensor) -> Tensor:
    """Sum over beacons and adjacent time steps of |g_t - g_{t+1}|."""
    if translated.shape[-1] < 2:
        return Tensor(np.zeros(translated.shape[:-2]))
    step = translated[..., 1:] - translated[..., :-1]
    return step.abs().sum(axis=(-2, -1))


# -- composition -------------------------------------------------------------------


class Localizer:
    """f(S) = LocNet(TransNet(scale * S)), or LocNet(scale * S) without a TransNet."""

    def __init__(self, locnet: LocNet, transnet: TransNet | None = None, scale: float = RSSI_SCALE):
        self.locnet = locnet
        self.transnet = transnet
        self.scale = scale

    @classmethod
    def build(
        cls,
        n_beacons: int,
        seed: int,
        with_transnet: bool,
        hidden: int = 128,
        dense_hidden: int = 64,
        channels: tuple[int, int, int] = (64, 32, 16),
        scale: float = RSSI_SCALE,
        out_offset: tuple[float, float] = (0.0, 0.0),
        out_scale: float = 1.0,
    ) -> "Localizer":
        ss = np.random.SeedSequence(seed).spawn(2)
        lcfg = LocNetConfig(n_beacons, hidden, 2, dense_hidden, tuple(out_offset), out_scale)
        loc = LocNet(lcfg, np.random.default_rng(ss[0]))
        trans = TransNet(TransNetConfig(n_beacons, channels), np.random.default_rng(ss[1])) if with_transnet else None
        return cls(loc, trans, scale)

    def modules(self) -> dict[str, Module | None]:
        return {"loc": self.locnet, "trans": self.transnet}

    def translate(self, x: Tensor) -> Tensor:
        """Normalized input to normalized translated RSSI (identity without a TransNet)."""
        return x if self.transnet is None else self.transnet(x)

    def forward(self, x_shifted) -> tuple[Tensor, Tensor, Tensor]:
        """Returns (normalized input, translated, predicted locations)."""
        x = Tensor(np.asarray(x_shifted, dtype=np.float64) * self.scale)
        g = self.translate(x)
        return x, g, self.locnet(g)

    def predict(self, x_shifted: np.ndarray, batch_size: int = 2048) -> np.ndarray:
        x_shifted = np.asarray(x_shifted, dtype=np.float64)
        out = np.zeros((x_shifted.shape[0], 2))
        with no_grad():
            for k in range(0, x_shifted.shape[0], batch_size):
                out[k : k + batch_size] = self.forward(x_shifted[k : k + batch_size])[2].data
        return out

    __call__ = predict

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {f"loc.{k}": v for k, v in self.locnet.state_dict().items()}
        if self.transnet is not None:
            state.update({f"trans.{k}": v for k, v in self.transnet.state_dict().items()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        self.locnet.load_state_dict({k[4:]: v for k, v in state.items() if k.startswith("loc.")})
        if self.transnet is not None:
            self.transnet.load_state_dict({k[6:]: v for k, v in state.items() if k.startswith("trans.")})

    def config(self) -> dict:
        return {
            "scale": self.scale,
            "locnet": asdict(self.locnet.cfg),
            "transnet": None if self.transnet is None else asdict(self.transnet.cfg),
        }

    def save(self, path: str | Path) -> None:
        save_checkpoint(path, self.state_dict(), {"config": json.dumps(self.config())})

    @classmethod
    def load(cls, path: str | Path) -> "Localizer":
        state, meta = load_checkpoint(path)
        cfg = json.loads(meta["config"])
        rng = np.random.default_rng(0)
        lc = dict(cfg["locnet"])
        lc["out_offset"] = tuple(lc.get("out_offset", (0.0, 0.0)))
        loc = LocNet(LocNetConfig(**lc), rng)
        trans = None
        if cfg["transnet"] is not None:
            tc = dict(cfg["transnet"])
            tc["channels"] = tuple(tc["channels"])
            trans = TransNet(TransNetConfig(**tc), rng)
        out = cls(loc, trans, cfg["scale"])
        out.load_state_dict(state)
        return out


def locnet_forward(net: LocNet, w: RssiWindow, scale: float = RSSI_SCALE) -> Location:
    with no_grad():
        out = net(Tensor(w.values[None] * scale)).data[0]
    return Location(float(out[0]), float(out[1]))


def transnet_forward(net: TransNet, w: RssiWindow, scale: float = RSSI_SCALE) -> RssiWindow:
    """Translate a window; input and output are both in shifted-RSSI units."""
    with no_grad():
        out = net(Tensor(w.values[None] * scale)).data[0] / scale
    return w.with_values(np.maximum(out, 0.0))
