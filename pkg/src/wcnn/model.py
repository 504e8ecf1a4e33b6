"""The subband-injection classifier and its parameter accounting.

The backbone is a VGG-style stack of stages, one per decomposition level.
Stage t opens with a 3x3 stride-2 convolution that brings the feature maps to
extent input/2^t — exactly the extent of the level-t detail subbands.  Those
subbands (LH, HL, HH of every input channel, concatenated) pass through a 1x1
projection convolution and are concatenated channel-wise into the stage, then
a run of 3x3 stride-1 convolutions (each conv followed by batch norm and
ReLU) processes the widened features.  Because each stage's output feeds all
later stages, every level's spectral detail reaches the end of the network.
The head is global average pooling, an optional embedding layer, and a fully
connected classifier.

The analysis filters are fixed and contribute zero trainable parameters;
`param_count` walks only the registered parameter variables, and the tests
recompute the totals from the configuration arithmetic independently.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import autodiff as ad
from . import layers as L
from . import wavelet as W
from .seeding import INIT, stream_rng
from .tensor import DTYPES, ShapeError, Tensor

DEFAULT_CHANNELS = (64, 128, 256, 512, 512)
MAX_LEVELS = 5


@dataclass(frozen=True)
class WaveletCnnConfig:
    """Architecture hyperparameters.

    `channels` defaults to the first `levels` entries of (64, 128, 256, 512,
    512); per-stage widths are a free choice of the architecture family, so
    they stay configurable and the parameter census is the conformance
    instrument.  `proj_fraction` sizes each projection shortcut relative to
    its receiving stage (rounded, at least one channel).  `embedding_dim` > 0
    inserts a fully connected layer (with ReLU) between global average
    pooling and the classifier.  `ablated` drops every subband injection and
    projection, leaving the plain lowpass-only backbone.
    """

    levels: int = 5
    input_size: int = 224
    input_channels: int = 3
    channels: tuple[int, ...] = ()
    blocks_per_stage: int = 2
    num_classes: int = 1000
    head: str = "softmax"
    embedding_dim: int = 0
    proj_fraction: float = 0.25
    ablated: bool = False
    wavelet: str = "haar"
    bn_epsilon: float = 1e-5
    bn_momentum: float = 0.1
    precision: str = "f32"
    init_seed: int = 0

    def resolved_channels(self) -> tuple[int, ...]:
        return self.channels if self.channels else DEFAULT_CHANNELS[: self.levels]

    def proj_width(self, stage_width: int) -> int:
        return max(1, int(stage_width * self.proj_fraction + 0.5))

    def validate(self) -> None:
        if not 2 <= self.levels <= MAX_LEVELS:
            raise ShapeError(f"levels must be in [2, {MAX_LEVELS}], got {self.levels}")
        if self.input_size % (1 << self.levels):
            raise ShapeError(
                f"input size {self.input_size} not divisible by 2^{self.levels}"
            )
        if self.input_channels not in (1, 3):
            raise ShapeError(f"input channels must be 1 or 3, got {self.input_channels}")
        sched = self.resolved_channels()
        if len(sched) != self.levels:
            raise ShapeError(
                f"channel schedule {sched} has {len(sched)} entries; "
                f"{self.levels} stages need one each"
            )
        if any(c < 1 for c in sched):
            raise ShapeError(f"channel schedule must be positive, got {sched}")
        if self.blocks_per_stage < 1:
            raise ShapeError("blocks_per_stage must be >= 1")
        if self.head not in ("softmax", "multilabel"):
            raise ShapeError(f"head must be 'softmax' or 'multilabel', got {self.head!r}")
        if self.num_classes < 2:
            raise ShapeError("num_classes must be >= 2")
        if not 0.0 < self.proj_fraction <= 1.0:
            raise ShapeError("proj_fraction must lie in (0, 1]")
        if self.precision not in DTYPES:
            raise ShapeError(f"precision must be one of {sorted(DTYPES)}")
        W.get_filter(self.wavelet)


@dataclass
class Model:
    config: WaveletCnnConfig
    params: dict[str, ad.Variable] = field(default_factory=dict)
    convs: dict[str, L.Conv2dParams] = field(default_factory=dict)
    norms: dict[str, L.BatchNormParams] = field(default_factory=dict)
    injection_extents: dict[int, int] = field(default_factory=dict)

    @property
    def dtype(self) -> str:
        return self.config.precision

    def buffers(self) -> dict[str, Tensor]:
        out = {}
        for name, bn in self.norms.items():
            out[f"{name}.running_mean"] = bn.running_mean
            out[f"{name}.running_var"] = bn.running_var
        return out


def _he_weight(rng, shape, dtype):
    # He init, uniform variant: U(-b, b) with b = sqrt(6 / fan_in) has the
    # ReLU-calibrated variance 2/fan_in.  Drawn in the target dtype; the f32
    # stream differs from cast f64 draws, but determinism per
    # (seed, precision) is what matters.
    fan_in = int(np.prod(shape[1:]))
    bound = np.sqrt(6.0 / fan_in)
    draw = rng.random(shape, dtype=DTYPES[dtype])
    return Tensor((2 * draw - 1) * DTYPES[dtype](bound))


def _add_conv(model: Model, rng, name: str, in_ch: int, out_ch: int, k: int,
              stride: int, padding: int) -> None:
    dt = model.dtype
    w = ad.Variable(_he_weight(rng, (out_ch, in_ch, k, k), dt), requires_grad=True,
                    name=f"{name}.weight")
    b = ad.Variable(Tensor(np.zeros(out_ch), dtype=dt), requires_grad=True,
                    name=f"{name}.bias")
    model.params[f"{name}.weight"] = w
    model.params[f"{name}.bias"] = b
    model.convs[name] = L.Conv2dParams(w, b, stride=stride, padding=padding)


def _add_norm(model: Model, name: str, ch: int) -> None:
    cfg, dt = model.config, model.dtype
    gamma = ad.Variable(Tensor(np.ones(ch), dtype=dt), requires_grad=True,
                        name=f"{name}.gamma")
    beta = ad.Variable(Tensor(np.zeros(ch), dtype=dt), requires_grad=True,
                       name=f"{name}.beta")
    model.params[f"{name}.gamma"] = gamma
    model.params[f"{name}.beta"] = beta
    model.norms[name] = L.BatchNormParams(
        gamma, beta, epsilon=cfg.bn_epsilon, momentum=cfg.bn_momentum
    )


def _add_fc(model: Model, rng, name: str, d_in: int, d_out: int,
            scale: float = 1.0) -> None:
    dt = model.dtype
    bound = scale * np.sqrt(6.0 / d_in)
    draw = rng.random((d_in, d_out), dtype=DTYPES[dt])
    w = ad.Variable(Tensor((2 * draw - 1) * DTYPES[dt](bound)),
                    requires_grad=True, name=f"{name}.weight")
    b = ad.Variable(Tensor(np.zeros(d_out), dtype=dt), requires_grad=True,
                    name=f"{name}.bias")
    model.params[f"{name}.weight"] = w
    model.params[f"{name}.bias"] = b


def build(config: WaveletCnnConfig) -> Model:
    """Realize the layer graph; all concatenation extents are checked here."""
    config.validate()
    model = Model(config=config)
    rng = stream_rng(config.init_seed, INIT)
    sched = config.resolved_channels()

    extent = config.input_size
    prev_ch = config.input_channels
    for t in range(1, config.levels + 1):
        out_ch = sched[t - 1]
        extent //= 2
        stage = f"stage{t}"
        _add_conv(model, rng, f"{stage}.down", prev_ch, out_ch, 3, stride=2, padding=1)
        _add_norm(model, f"{stage}.down.bn", out_ch)
        width = out_ch
        if not config.ablated:
            # level-t detail subbands arrive at this extent by construction
            model.injection_extents[t] = extent
            if config.input_size // (1 << t) != extent:
                raise ShapeError("internal: injection extent drifted from subband extent")
            proj_ch = config.proj_width(out_ch)
            _add_conv(model, rng, f"{stage}.proj", 3 * config.input_channels, proj_ch,
                      1, stride=1, padding=0)
            _add_norm(model, f"{stage}.proj.bn", proj_ch)
            width = out_ch + proj_ch
        for b in range(1, config.blocks_per_stage + 1):
            _add_conv(model, rng, f"{stage}.conv{b}", width, out_ch, 3, stride=1, padding=1)
            _add_norm(model, f"{stage}.conv{b}.bn", out_ch)
            width = out_ch
        prev_ch = out_ch

    feat = sched[-1]
    if config.embedding_dim:
        _add_fc(model, rng, "head.embed", feat, config.embedding_dim)
        feat = config.embedding_dim
    # damped init for the classifier itself: logits start near zero, so the
    # first-batch loss sits at the uniform-prediction value log(C)
    _add_fc(model, rng, "head.fc", feat, config.num_classes, scale=0.1)
    return model


def _cbr(model: Model, h: ad.Variable, name: str, mode: str, update_stats) -> ad.Variable:
    h = L.conv2d(h, model.convs[name])
    h = L.batch_norm(h, model.norms[f"{name}.bn"], mode=mode, update_stats=update_stats)
    return L.relu(h)


def forward(model: Model, batch, mode: str = "eval",
            update_stats: bool | None = None) -> ad.Variable:
    """Run the network on an NCHW batch and return the logits Variable.

    Eval mode is deterministic and read-only; train mode uses batch
    statistics and (unless `update_stats=False`) updates the running ones.
    """
    cfg = model.config
    x = batch if isinstance(batch, ad.Variable) else ad.Variable(batch)
    shape = x.value.shape
    expected = (cfg.input_channels, cfg.input_size, cfg.input_size)
    if len(shape) != 4 or shape[1:] != expected:
        raise ShapeError(f"batch shape {shape} does not match config {('N',) + expected}")
    if x.value.dtype != cfg.precision:
        raise ShapeError(f"batch dtype {x.value.dtype} != model precision {cfg.precision}")
    if mode not in ("train", "eval"):
        raise ShapeError(f"mode must be 'train' or 'eval', got {mode!r}")

    stacks = None
    if not cfg.ablated:
        stacks = W.decompose_variables(x, cfg.levels, W.get_filter(cfg.wavelet))

    h = x
    for t in range(1, cfg.levels + 1):
        stage = f"stage{t}"
        h = _cbr(model, h, f"{stage}.down", mode, update_stats)
        if stacks is not None:
            proj = _cbr(model, stacks[t - 1], f"{stage}.proj", mode, update_stats)
            h = ad.concat_channels([h, proj])
        for b in range(1, cfg.blocks_per_stage + 1):
            h = _cbr(model, h, f"{stage}.conv{b}", mode, update_stats)

    g = L.global_average_pool(h)
    if cfg.embedding_dim:
        g = L.relu(L.fully_connected(g, model.params["head.embed.weight"],
                                     model.params["head.embed.bias"]))
    return L.fully_connected(g, model.params["head.fc.weight"], model.params["head.fc.bias"])


def param_count(model: Model) -> tuple[int, list[tuple[str, int]]]:
    """Exact trainable-scalar count with a per-layer breakdown.

    Layers are parameter-name prefixes (`stage1.down`, `stage1.down.bn`, ...);
    the fixed analysis filters never appear because they are not parameters.
    """
    by_layer: dict[str, int] = {}
    for name, v in model.params.items():
        layer = name.rsplit(".", 1)[0]
        by_layer[layer] = by_layer.get(layer, 0) + v.value.size
    breakdown = list(by_layer.items())
    return sum(by_layer.values()), breakdown


def ablate_to_plain_cnn(config: WaveletCnnConfig) -> Model:
    """The lowpass-only baseline: same backbone, no subband injections."""
    return build(replace(config, ablated=True))


# --- checkpoint format "WCNN1" ------------------------------------------------
#
#   WCNN1 1
#   config <n>         followed by n canonical `key = value` lines
#   manifest <n>       followed by n `name kind dtype ndim d0 .. offset` lines
#   payload <bytes>    followed by raw little-endian scalars
#
# Parameters and running statistics round-trip bit-exactly at matching
# precision; loading into a narrower precision rounds to nearest.

_MAGIC = "WCNN1"
_VERSION = 1


class CheckpointError(ValueError):
    pass


def config_to_items(config: WaveletCnnConfig) -> list[tuple[str, str]]:
    items = []
    for f in fields(config):
        v = getattr(config, f.name)
        if f.name == "channels":
            v = ",".join(str(c) for c in v)
        items.append((f.name, str(v)))
    return sorted(items)


_STR_FIELDS = ("head", "wavelet", "precision")
_FLOAT_FIELDS = ("proj_fraction", "bn_epsilon", "bn_momentum")


def config_from_items(items: dict[str, str]) -> WaveletCnnConfig:
    kwargs = {}
    for f in fields(WaveletCnnConfig):
        if f.name not in items:
            continue
        raw = items[f.name]
        if f.name == "channels":
            kwargs[f.name] = tuple(int(c) for c in raw.split(",") if c) if raw else ()
        elif f.name == "ablated":
            kwargs[f.name] = raw == "True"
        elif f.name in _FLOAT_FIELDS:
            kwargs[f.name] = float(raw)
        elif f.name in _STR_FIELDS:
            kwargs[f.name] = raw
        else:
            kwargs[f.name] = int(raw)
    return WaveletCnnConfig(**kwargs)


def save_model(model: Model, path) -> None:
    entries: list[tuple[str, str, Tensor]] = []
    for name, v in model.params.items():
        entries.append((name, "param", v.value))
    for name, t in model.buffers().items():
        entries.append((name, "buffer", t))

    payload = io.BytesIO()
    manifest_lines = []
    le = {"f32": "<f4", "f64": "<f8"}
    for name, kind, t in entries:
        offset = payload.tell()
        payload.write(np.ascontiguousarray(t.data).astype(le[t.dtype]).tobytes())
        dims = " ".join(str(d) for d in t.shape)
        manifest_lines.append(
            f"{name} {kind} {t.dtype} {t.ndim}" + (f" {dims}" if dims else "") + f" {offset}"
        )
    blob = payload.getvalue()

    cfg_lines = [f"{k} = {v}" for k, v in config_to_items(model.config)]
    with open(path, "wb") as fh:
        fh.write(f"{_MAGIC} {_VERSION}\n".encode("ascii"))
        fh.write(f"config {len(cfg_lines)}\n".encode("ascii"))
        for line in cfg_lines:
            fh.write((line + "\n").encode("ascii"))
        fh.write(f"manifest {len(manifest_lines)}\n".encode("ascii"))
        for line in manifest_lines:
            fh.write((line + "\n").encode("ascii"))
        fh.write(f"payload {len(blob)}\n".encode("ascii"))
        fh.write(blob)


def load_model(path, precision: str | None = None) -> Model:
    """Rebuild a model from a checkpoint.

    `precision` overrides the stored one; narrowing f64 -> f32 rounds each
    scalar to the nearest representable value.
    """
    with open(path, "rb") as fh:
        head = fh.readline().decode("ascii", errors="replace").split()
        if len(head) != 2 or head[0] != _MAGIC:
            raise CheckpointError(f"{path}: not a {_MAGIC} checkpoint")
        if int(head[1]) != _VERSION:
            raise CheckpointError(f"{path}: unsupported version {head[1]}")

        def expect(tag):
            line = fh.readline().decode("ascii").split()
            if len(line) != 2 or line[0] != tag:
                raise CheckpointError(f"{path}: malformed {tag} header")
            return int(line[1])

        items = {}
        for _ in range(expect("config")):
            key, _, value = fh.readline().decode("ascii").rstrip("\n").partition(" = ")
            items[key] = value
        manifest = []
        for _ in range(expect("manifest")):
            parts = fh.readline().decode("ascii").split()
            name, kind, dtype, ndim = parts[0], parts[1], parts[2], int(parts[3])
            dims = tuple(int(d) for d in parts[4:4 + ndim])
            offset = int(parts[4 + ndim])
            manifest.append((name, kind, dtype, dims, offset))
        nbytes = expect("payload")
        blob = fh.read()
    if len(blob) != nbytes:
        raise CheckpointError(f"{path}: payload is {len(blob)} bytes, expected {nbytes}")

    config = config_from_items(items)
    if precision is not None:
        config = replace(config, precision=precision)
    model = build(config)

    stored: dict[str, tuple[str, Tensor]] = {}
    le = {"f32": "<f4", "f64": "<f8"}
    for name, kind, dtype, dims, offset in manifest:
        count = int(np.prod(dims, dtype=np.int64)) if dims else 1
        width = np.dtype(le[dtype]).itemsize
        raw = blob[offset:offset + count * width]
        if len(raw) != count * width:
            raise CheckpointError(f"{path}: truncated payload for {name}")
        arr = np.frombuffer(raw, dtype=le[dtype]).reshape(dims)
        stored[name] = (kind, Tensor(arr.astype(DTYPES[config.precision])))

    for name, v in model.params.items():
        if name not in stored:
            raise CheckpointError(f"{path}: missing parameter {name}")
        kind, t = stored[name]
        if t.shape != v.value.shape:
            raise CheckpointError(
                f"{path}: {name} has shape {t.shape}, model expects {v.value.shape}"
            )
        v.value = t
    for name in model.buffers():
        if name not in stored:
            raise CheckpointError(f"{path}: missing buffer {name}")
        bn_name, _, stat = name.rpartition(".")
        bn = model.norms[bn_name]
        if stat == "running_mean":
            bn.running_mean = stored[name][1]
        else:
            bn.running_var = stored[name][1]
    return model
