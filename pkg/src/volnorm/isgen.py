"""Intermediate slice generator: models, losses, training steps and On-Off training.

The generator takes two slices ``x1`` and ``x2`` that sit an equal distance
either side of a missing slice and predicts that middle slice. Each input
goes through its own strided-convolution encoder; the two bottleneck maps are
concatenated along channels and decoded back to full resolution by
transposed convolutions with a sigmoid output.

The discriminator scores one image at a time (three strided convolutions, a
hidden fully connected layer, one sigmoid unit). During an adversarial step
it sees the synthetic slice first and ``x1`` second, with targets ``[0, 1]``;
the generator is trained against the inverted targets ``[1, 0]``.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import EmptyDataset, InvalidConfig, LengthMismatch, ShapeMismatch, VolumeTooThin
from .tensorkit import (
    OptimizerState,
    Tensor,
    concat,
    conv2d,
    conv2d_transpose,
    dense,
    leaky_relu,
    load_params,
    save_params,
    sigmoid,
    step,
    zero_grad,
)
from .volume import Volume3D, resize_nearest

__all__ = [
    "GeneratorConfig",
    "DiscriminatorConfig",
    "TrainConfig",
    "Generator",
    "Discriminator",
    "IsGenModel",
    "Triplet",
    "sample_triplet",
    "sample_triplet_indices",
    "build_triplets",
    "reconstruction_loss",
    "discriminator_loss",
    "generator_loss",
    "adversarial_step",
    "nonadversarial_step",
    "epoch_schedule",
    "on_off_train",
    "mean_reconstruction_loss",
    "EpochRecord",
    "TrainingLog",
]

CLAMP = 1e-7


# ---------------------------------------------------------------- configs
@dataclass(frozen=True)
class GeneratorConfig:
    image_size: int = 64
    channels: tuple[int, ...] = (16, 32, 48, 64)
    kernel: int = 4
    alpha: float = 0.2

    def validate(self) -> None:
        if self.image_size < 16 or self.image_size % 16:
            raise InvalidConfig(f"image_size must be a positive multiple of 16, got {self.image_size}")
        if len(self.channels) != 4:
            raise InvalidConfig("generator uses exactly 4 encoder stages")
        if self.kernel % 2:
            raise InvalidConfig("kernel must be even for exact 2x resampling")

    @property
    def bottleneck(self) -> tuple[int, int, int]:
        s = self.image_size // 16
        return (self.channels[-1], s, s)

    @property
    def decoder_channels(self) -> tuple[int, ...]:
        return tuple(reversed(self.channels[:-1])) + (1,)


@dataclass(frozen=True)
class DiscriminatorConfig:
    image_size: int = 64
    channels: tuple[int, ...] = (8, 16, 32)
    hidden: int = 32
    kernel: int = 4
    alpha: float = 0.2

    def validate(self) -> None:
        if self.image_size % 8:
            raise InvalidConfig("discriminator image_size must be divisible by 8")
        if len(self.channels) != 3:
            raise InvalidConfig("discriminator uses exactly 3 convolutional layers")


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 0.03
    on_epochs: int = 5
    off_epochs: int = 5
    cycles: int = 10
    d_max: int = 4
    seed: int = 0
    lr: float = 1e-3
    optimizer: str = "adam"
    warmup_epochs: int = 0

    def validate(self) -> None:
        if self.lam < 0:
            raise InvalidConfig("lambda must be >= 0")
        if self.on_epochs < 1 or self.off_epochs < 1:
            raise InvalidConfig("on_epochs and off_epochs must both be >= 1")
        if self.cycles < 1:
            raise InvalidConfig("cycles must be >= 1")
        if self.d_max < 1:
            raise InvalidConfig("d_max must be >= 1")
        if self.warmup_epochs < 0:
            raise InvalidConfig("warmup_epochs must be >= 0")


# ---------------------------------------------------------------- models
def _he(rng, shape, fan_in):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)


class _Module:
    params: dict[str, Tensor]

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for k, p in self.params.items():
            arr = np.asarray(state[k])
            if arr.shape != p.shape:
                raise ShapeMismatch(f"{k}: checkpoint {arr.shape} vs model {p.shape}")
            p.data = arr.astype(p.data.dtype, copy=True)
            p.grad = np.zeros_like(p.data)

    def zero_grad(self) -> None:
        zero_grad(self.params)

    def _add(self, name, arr):
        self.params[name] = Tensor(arr, requires_grad=True, name=name)


class Generator(_Module):
    def __init__(self, config: GeneratorConfig | None = None, seed: int = 0):
        self.config = config or GeneratorConfig()
        self.config.validate()
        cfg = self.config
        rng = np.random.default_rng(seed)
        k = cfg.kernel
        self.params = {}
        for branch in ("enc1", "enc2"):
            c_in = 1
            for i, c_out in enumerate(cfg.channels):
                self._add(f"{branch}.{i}.w", _he(rng, (c_out, c_in, k, k), c_in * k * k))
                self._add(f"{branch}.{i}.b", np.zeros(c_out, np.float32))
                c_in = c_out
        c_in = 2 * cfg.channels[-1]
        for i, c_out in enumerate(cfg.decoder_channels):
            self._add(f"dec.{i}.w", _he(rng, (c_in, c_out, k, k), c_in * k * k / 4))
            self._add(f"dec.{i}.b", np.zeros(c_out, np.float32))
            c_in = c_out

    def encode(self, branch: str, x: Tensor) -> Tensor:
        p, pad = self.params, self.config.kernel // 2 - 1
        for i in range(len(self.config.channels)):
            x = conv2d(x, p[f"{branch}.{i}.w"], p[f"{branch}.{i}.b"], stride=2, padding=pad)
            x = leaky_relu(x, self.config.alpha)
        return x

    def forward(self, x1: Tensor, x2: Tensor) -> Tensor:
        """Predict the middle slice; inputs and output are (1, S, S)."""
        s = self.config.image_size
        if x1.shape != (1, s, s) or x2.shape != (1, s, s):
            raise ShapeMismatch(f"generator expects (1, {s}, {s}) inputs, got {x1.shape}, {x2.shape}")
        h = concat(self.encode("enc1", x1), self.encode("enc2", x2), axis=0)
        p, pad = self.params, self.config.kernel // 2 - 1
        n = len(self.config.decoder_channels)
        for i in range(n):
            h = conv2d_transpose(h, p[f"dec.{i}.w"], p[f"dec.{i}.b"], stride=2, padding=pad)
            h = leaky_relu(h, self.config.alpha) if i < n - 1 else sigmoid(h)
        return h

    __call__ = forward

    def predict(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Graph-free inference on two (S, S) arrays scaled to [0, 1]."""
        x1 = Tensor(np.asarray(a, np.float32)[None])
        x2 = Tensor(np.asarray(b, np.float32)[None])
        saved = {k: t.requires_grad for k, t in self.params.items()}
        try:
            for t in self.params.values():
                t.requires_grad = False
            return self.forward(x1, x2).data[0]
        finally:
            for k, t in self.params.items():
                t.requires_grad = saved[k]


class Discriminator(_Module):
    def __init__(self, config: DiscriminatorConfig | None = None, seed: int = 1):
        self.config = config or DiscriminatorConfig()
        self.config.validate()
        cfg = self.config
        rng = np.random.default_rng(seed)
        k = cfg.kernel
        self.params = {}
        c_in = 1
        for i, c_out in enumerate(cfg.channels):
            self._add(f"conv.{i}.w", _he(rng, (c_out, c_in, k, k), c_in * k * k))
            self._add(f"conv.{i}.b", np.zeros(c_out, np.float32))
            c_in = c_out
        flat = cfg.channels[-1] * (cfg.image_size // 8) ** 2
        self._add("fc.w", _he(rng, (cfg.hidden, flat), flat))
        self._add("fc.b", np.zeros(cfg.hidden, np.float32))
        self._add("out.w", _he(rng, (1, cfg.hidden), cfg.hidden))
        self._add("out.b", np.zeros(1, np.float32))

    def forward(self, x: Tensor) -> Tensor:
        """Probability (shape ``(1,)``) that the (1, S, S) image is real."""
        p, cfg = self.params, self.config
        pad = cfg.kernel // 2 - 1
        for i in range(len(cfg.channels)):
            x = leaky_relu(conv2d(x, p[f"conv.{i}.w"], p[f"conv.{i}.b"], stride=2, padding=pad), cfg.alpha)
        x = leaky_relu(dense(x.reshape(-1), p["fc.w"], p["fc.b"]), cfg.alpha)
        return sigmoid(dense(x, p["out.w"], p["out.b"]))

    __call__ = forward

    def score_pair(self, synthetic: Tensor, real: Tensor) -> Tensor:
        """Scores ``[D(synthetic), D(real)]`` as a length-2 tensor."""
        return concat(self.forward(synthetic), self.forward(real), axis=0)


@dataclass
class IsGenModel:
    """A generator/discriminator pair plus the settings they were trained with."""

    generator: Generator
    discriminator: Discriminator
    train: TrainConfig = field(default_factory=TrainConfig)
    modality: str = "synthetic"

    @classmethod
    def create(cls, image_size: int = 64, seed: int = 0, train: TrainConfig | None = None,
               modality: str = "synthetic", gen_channels=(16, 32, 48, 64),
               disc_channels=(8, 16, 32), disc_hidden: int = 32) -> "IsGenModel":
        g = Generator(GeneratorConfig(image_size, tuple(gen_channels)), seed=seed)
        d = Discriminator(DiscriminatorConfig(image_size, tuple(disc_channels), disc_hidden), seed=seed + 1)
        return cls(g, d, train or TrainConfig(seed=seed), modality)

    def save(self, path) -> None:
        arrays = {f"generator.{k}": v for k, v in self.generator.state_dict().items()}
        arrays.update({f"discriminator.{k}": v for k, v in self.discriminator.state_dict().items()})
        g, d = self.generator.config, self.discriminator.config
        arrays["meta.image_size"] = np.array(g.image_size, np.float32)
        arrays["meta.gen_channels"] = np.array(g.channels, np.float32)
        arrays["meta.disc_channels"] = np.array(d.channels, np.float32)
        arrays["meta.disc_hidden"] = np.array(d.hidden, np.float32)
        arrays["meta.lambda"] = np.array(self.train.lam, np.float32)
        save_params(arrays, path)

    @classmethod
    def load(cls, path, modality: str = "synthetic") -> "IsGenModel":
        arrays = load_params(path)
        size = int(arrays["meta.image_size"])
        model = cls.create(
            size,
            gen_channels=tuple(int(c) for c in arrays["meta.gen_channels"]),
            disc_channels=tuple(int(c) for c in arrays["meta.disc_channels"]),
            disc_hidden=int(arrays["meta.disc_hidden"]),
            train=TrainConfig(lam=float(arrays["meta.lambda"])),
            modality=modality,
        )
        model.generator.load_state_dict({k[10:]: v for k, v in arrays.items() if k.startswith("generator.")})
        model.discriminator.load_state_dict(
            {k[14:]: v for k, v in arrays.items() if k.startswith("discriminator.")})
        return model


# ---------------------------------------------------------------- data
class Triplet(NamedTuple):
    x1: np.ndarray
    y: np.ndarray
    x2: np.ndarray


def sample_triplet_indices(n: int, rng: np.random.Generator, d_max: int = 4) -> tuple[int, int, int]:
    """Spacing ``d`` uniform on [1, d_max], centre uniform on [d, n-1-d]."""
    if n < 2 * d_max + 1:
        raise VolumeTooThin(f"need at least {2 * d_max + 1} slices for d_max={d_max}, got {n}")
    d = int(rng.integers(1, d_max + 1))
    i = int(rng.integers(d, n - d))
    return i - d, i, i + d


def _prepare(sl: np.ndarray, lo: float, scale: float, size: int) -> np.ndarray:
    out = (sl.astype(np.float64) - lo) * scale
    return resize_nearest(np.clip(out, 0.0, 1.0), (size, size)).astype(np.float32)


def sample_triplet(vol: Volume3D, rng: np.random.Generator, d_max: int = 4, image_size: int = 64,
                   return_indices: bool = False):
    """Draw an equally spaced slice triplet ``(x1, y, x2)``.

    Slices are scaled to [0, 1] with the volume's own intensity range (so the
    three share one scale) and nearest-neighbour resized to ``image_size``.
    """
    idx = sample_triplet_indices(vol.n_slices, rng, d_max)
    lo, hi = float(vol.data.min()), float(vol.data.max())
    scale = 1.0 / (hi - lo) if hi > lo else 0.0
    x1, y, x2 = (_prepare(vol.data[i], lo, scale, image_size) for i in idx)
    trip = Triplet(x1, y, x2)
    return (trip, idx) if return_indices else trip


def build_triplets(volumes: Sequence[Volume3D], count: int, seed: int = 0, d_max: int = 4,
                   image_size: int = 64) -> list[Triplet]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        vol = volumes[int(rng.integers(len(volumes)))]
        out.append(sample_triplet(vol, rng, d_max, image_size))
    return out


# ---------------------------------------------------------------- losses
def _as_const(a, dtype) -> np.ndarray:
    return a.data if isinstance(a, Tensor) else np.asarray(a, dtype=dtype)


def reconstruction_loss(y, y_hat) -> Tensor:
    """Pixel mean of ``y_hat**2`` where ``y == 0`` and ``5 * (y - y_hat)**2`` elsewhere."""
    y_hat = y_hat if isinstance(y_hat, Tensor) else Tensor(np.asarray(y_hat, np.float32))
    y = _as_const(y, y_hat.data.dtype)
    if y.shape != y_hat.shape:
        raise ShapeMismatch(f"target {y.shape} vs prediction {y_hat.shape}")
    # at y == 0 the squared difference already equals y_hat**2
    weight = np.where(y == 0, 1.0, 5.0).astype(y_hat.data.dtype)
    return (weight * (y_hat - y).square()).mean()


def discriminator_loss(labels, predictions) -> Tensor:
    """Binary cross-entropy averaged over the N scored images."""
    predictions = predictions if isinstance(predictions, Tensor) else Tensor(np.asarray(predictions, np.float32))
    labels = _as_const(labels, predictions.data.dtype).reshape(-1)
    if labels.shape != predictions.shape:
        raise LengthMismatch(f"{labels.shape[0]} labels for {predictions.shape} predictions")
    p = predictions.clip(CLAMP, 1.0 - CLAMP)
    return -(labels * p.log() + (1.0 - labels) * (1.0 - p).log()).mean()


def generator_loss(y_g, y_hat_g, y_hat_d, lam: float, y_d=(0.0, 1.0)) -> Tensor:
    """Reconstruction loss plus ``lam`` times the discriminator loss on inverted labels."""
    inverted = 1.0 - np.asarray(y_d, dtype=np.float64)
    return reconstruction_loss(y_g, y_hat_g) + lam * discriminator_loss(inverted, y_hat_d)


# ---------------------------------------------------------------- steps
def _img(a) -> Tensor:
    arr = np.asarray(a, np.float32)
    return Tensor(arr if arr.ndim == 3 else arr[None])


def adversarial_step(G: Generator, D: Discriminator, x1, x2, y_g, opt_g: OptimizerState,
                     opt_d: OptimizerState, lam: float = 0.03, return_reconstruction: bool = False):
    """One adversarial update (generator first, then discriminator).

    Returns ``(L_G, L_D)`` (and ``L_RL`` when ``return_reconstruction``),
    all evaluated before either update.
    """
    t1, t2, ty = _img(x1), _img(x2), _img(y_g)
    y_d = np.array([0.0, 1.0])
    y_hat_g = G(t1, t2)
    y_hat_d = D.score_pair(y_hat_g, t1)
    l_rl = reconstruction_loss(ty, y_hat_g)
    l_g = l_rl + lam * discriminator_loss(1.0 - y_d, y_hat_d)

    G.zero_grad()
    D.zero_grad()
    l_g.backward()
    step(G.params, opt_g)

    # fresh discriminator graph on the pre-update synthetic slice
    D.zero_grad()
    l_d = discriminator_loss(y_d, D.score_pair(y_hat_g.detach(), t1))
    l_d.backward()
    step(D.params, opt_d)

    out = (l_g.item(), l_d.item())
    return out + (l_rl.item(),) if return_reconstruction else out


def nonadversarial_step(G: Generator, x1, x2, y_g, opt_g: OptimizerState) -> float:
    """Reconstruction-only generator update; the discriminator is not involved."""
    t1, t2, ty = _img(x1), _img(x2), _img(y_g)
    l_rl = reconstruction_loss(ty, G(t1, t2))
    G.zero_grad()
    l_rl.backward()
    step(G.params, opt_g)
    return l_rl.item()


def mean_reconstruction_loss(G: Generator, triplets: Sequence[Triplet]) -> float:
    if not triplets:
        raise EmptyDataset("no triplets to evaluate")
    total = 0.0
    for t in triplets:
        pred = G.predict(t.x1, t.x2)
        total += reconstruction_loss(t.y, pred).item()
    return total / len(triplets)


# ---------------------------------------------------------------- On-Off
def epoch_schedule(cfg: TrainConfig) -> list[str]:
    """Per-epoch mode list: optional warmup, then (off * off_epochs + on * on_epochs) * cycles."""
    cfg.validate()
    cycle = ["off"] * cfg.off_epochs + ["on"] * cfg.on_epochs
    return ["off"] * cfg.warmup_epochs + cycle * cfg.cycles


@dataclass
class EpochRecord:
    epoch: int
    mode: str
    l_rl: float
    l_d: float | None
    val_l_rl: float | None = None


@dataclass
class TrainingLog:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None
    best_state: dict | None = None

    @property
    def modes(self) -> list[str]:
        return [r.mode for r in self.records]

    def to_text(self) -> str:
        """One whitespace-separated line per epoch: epoch mode L_RL L_D val_L_RL ('-' when absent)."""
        def fmt(v):
            return "-" if v is None else f"{v:.8g}"

        return "".join(
            f"{r.epoch} {r.mode} {fmt(r.l_rl)} {fmt(r.l_d)} {fmt(r.val_l_rl)}\n" for r in self.records
        )

    @classmethod
    def from_text(cls, text: str) -> "TrainingLog":
        def val(tok):
            return None if tok == "-" else float(tok)

        recs = []
        for line in text.splitlines():
            if not line.strip():
                continue
            e, mode, rl, ld, vl = line.split()
            recs.append(EpochRecord(int(e), mode, float(rl), val(ld), val(vl)))
        return cls(recs)


def on_off_train(G: Generator, D: Discriminator, dataset: Sequence[Triplet], cfg: TrainConfig,
                 val: Sequence[Triplet] | None = None, opt_g: OptimizerState | None = None,
                 opt_d: OptimizerState | None = None, progress=None) -> TrainingLog:
    """Alternate reconstruction-only and adversarial epochs.

    The generator weights with the lowest validation reconstruction loss
    (training loss when ``val`` is not given) are restored into ``G`` at the
    end and also kept in ``log.best_state``.
    """
    if not dataset:
        raise EmptyDataset("on_off_train needs at least one triplet")
    schedule = epoch_schedule(cfg)
    rng = np.random.default_rng(cfg.seed)
    opt_g = opt_g or OptimizerState(lr=cfg.lr, kind=cfg.optimizer)
    opt_d = opt_d or OptimizerState(lr=cfg.lr, kind=cfg.optimizer)
    log = TrainingLog()
    best = np.inf
    for epoch, mode in enumerate(schedule, start=1):
        order = rng.permutation(len(dataset))
        rl_sum, d_sum = 0.0, 0.0
        for i in order:
            t = dataset[i]
            if mode == "off":
                rl_sum += nonadversarial_step(G, t.x1, t.x2, t.y, opt_g)
            else:
                _, l_d, l_rl = adversarial_step(G, D, t.x1, t.x2, t.y, opt_g, opt_d, cfg.lam,
                                                return_reconstruction=True)
                rl_sum += l_rl
                d_sum += l_d
        n = len(dataset)
        val_rl = mean_reconstruction_loss(G, val) if val else None
        rec = EpochRecord(epoch, mode, rl_sum / n, d_sum / n if mode == "on" else None, val_rl)
        log.records.append(rec)
        score = val_rl if val_rl is not None else rec.l_rl
        if score < best:
            best = score
            log.best_epoch = epoch
            log.best_state = copy.deepcopy(G.state_dict())
        if progress is not None:
            progress(rec)
    if log.best_state is not None:
        G.load_state_dict(log.best_state)
    return log
