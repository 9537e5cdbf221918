"""Scaled SqueezeNet regressor/classifier over difference-image patches.

Layer order::

    conv1 -> relu -> maxpool -> fire x3 -> maxpool -> fire x4 -> maxpool
          -> fire x1 -> conv 1x1 [-> relu] -> global avg pool -> fc -> head

Inputs are multiplied by ``input_scale`` first. Difference patches span
roughly +-100, which saturates a freshly initialised network; at 1/64 the
first activations are O(1).
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .estimators import EstimatorResult
from .noise import DifferenceImage, sample_patches
from .nn import functional as F
from .nn.layers import Conv2d, Fire, GlobalAvgPool, LayerParams, Linear, MaxPool2d, ReLU, Sequential
from .rng import derive_seed

FORMAT_VERSION = 1
MAGIC = b"DSQZ"
STAGE_LENGTHS = (3, 4, 1)
HEADS = ("regression", "classification")


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class FireConfig:
    s1x1: int
    e1x1: int
    e3x3: int

    def __post_init__(self):
        if min(self.s1x1, self.e1x1, self.e3x3) < 1:
            raise ValueError(f"fire filter counts must be >= 1: {self}")
        if not self.s1x1 < self.e1x1 + self.e3x3:
            raise ValueError(f"squeeze width must be below expand width: {self}")

    @property
    def out_channels(self) -> int:
        return self.e1x1 + self.e3x3


# SqueezeNet v1.0 fire2..fire9 widths
_PAPER_FIRES = (
    ((16, 64, 64), (16, 64, 64), (32, 128, 128)),
    ((32, 128, 128), (48, 192, 192), (48, 192, 192), (64, 256, 256)),
    ((64, 256, 256),),
)


@dataclass(frozen=True)
class NetworkConfig:
    input_channels: int = 1
    patch_size: int = 32
    conv1: tuple[int, int, int] = (16, 3, 2)  # filters, kernel, stride
    conv1_pad: int = 1
    pool: tuple[int, int] = (2, 2)  # window, stride
    fire_stages: tuple[tuple[FireConfig, ...], ...] = ()
    embed_channels: int = 64
    head: str = "regression"
    num_classes: int = 5
    preset: str = "micro"
    input_scale: float = 1.0
    embed_relu: bool = True

    def __post_init__(self):
        if self.input_channels not in (1, 3):
            raise ValueError("input_channels must be 1 or 3")
        if self.head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}")
        if tuple(len(s) for s in self.fire_stages) != STAGE_LENGTHS:
            raise ValueError(f"fire stages must have lengths {STAGE_LENGTHS}")
        stages = tuple(tuple(f if isinstance(f, FireConfig) else FireConfig(*f) for f in s)
                       for s in self.fire_stages)
        object.__setattr__(self, "fire_stages", stages)
        object.__setattr__(self, "conv1", tuple(self.conv1))
        object.__setattr__(self, "pool", tuple(self.pool))
        self.spatial_sizes()  # raises if the patch is too small

    @property
    def output_width(self) -> int:
        return 1 if self.head == "regression" else self.num_classes

    def spatial_sizes(self) -> list[int]:
        """Spatial size after conv1 and after each of the three pools."""
        _, k, s = self.conv1
        size = F.conv_output_size(self.patch_size, k, s, self.conv1_pad)
        sizes = [size]
        pk, ps = self.pool
        for _ in STAGE_LENGTHS:
            if size < pk:
                raise ValueError(f"patch size {self.patch_size} too small for this network")
            size = (size - pk) // ps + 1
            sizes.append(size)
        return sizes

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        d = dict(d)
        d["fire_stages"] = tuple(tuple(FireConfig(**f) for f in s) for s in d["fire_stages"])
        return cls(**d)


def micro_config(head: str = "regression", input_channels: int = 1, patch_size: int = 32) -> NetworkConfig:
    """Desk-scale preset: 16-filter 3x3 conv1 and fire widths at 1/8 of SqueezeNet.

    The two heads differ in input scale and in the ReLU after the 1x1
    embedding conv. Without that ReLU the classifier stays at chance; with
    it the regressor often collapses to a constant output.
    """
    fires = tuple(tuple(FireConfig(s // 8, e1 // 8, e3 // 8) for s, e1, e3 in st) for st in _PAPER_FIRES)
    cls = head == "classification"
    return NetworkConfig(input_channels, patch_size, (16, 3, 2), 1, (2, 2), fires, 64, head, 5, "micro",
                         input_scale=1 / 32 if cls else 1 / 64, embed_relu=cls)


def paper_config(head: str = "regression", input_channels: int = 1, patch_size: int = 64) -> NetworkConfig:
    fires = tuple(tuple(FireConfig(*f) for f in st) for st in _PAPER_FIRES)
    return NetworkConfig(input_channels, patch_size, (96, 7, 2), 0, (3, 2), fires, 512, head, 5, "paper",
                         input_scale=1 / 64)


PRESETS = {"micro": micro_config, "paper": paper_config}


class Model:
    def __init__(self, config: NetworkConfig, net: Sequential, format_version: int = FORMAT_VERSION):
        self.config = config
        self.net = net
        self.format_version = format_version

    def parameters(self) -> list[tuple[str, LayerParams]]:
        return self.net.params()

    def parameter_count(self) -> int:
        return sum(p.weights.size + p.bias.size for _, p in self.parameters())

    @property
    def dtype(self):
        return self.parameters()[0][1].weights.dtype

    def forward(self, batch: np.ndarray) -> np.ndarray:
        cfg = self.config
        if batch.ndim != 4 or batch.shape[1:] != (cfg.input_channels, cfg.patch_size, cfg.patch_size):
            raise ValueError(
                f"expected N x {cfg.input_channels} x {cfg.patch_size} x {cfg.patch_size}, got {batch.shape}"
            )
        x = batch.astype(self.dtype, copy=False)
        if cfg.input_scale != 1.0:
            x = x * self.dtype.type(cfg.input_scale)
        return self.net.forward(x)

    __call__ = forward

    def backward(self, grad: np.ndarray) -> np.ndarray:
        return self.net.backward(grad)

    def zero_grad(self) -> None:
        self.net.zero_grad()


def _layer_stack(cfg: NetworkConfig, seed: int, dtype) -> list:
    filters, k, stride = cfg.conv1
    pk, ps = cfg.pool
    layers = [
        ("conv1", Conv2d.init(cfg.input_channels, filters, k, derive_seed(seed, 1), stride, cfg.conv1_pad, dtype)),
        ("relu1", ReLU()),
        ("pool1", MaxPool2d(pk, ps)),
    ]
    c_in = filters
    fire_no = 2
    for stage_no, stage in enumerate(cfg.fire_stages):
        if stage_no:
            layers.append((f"pool{stage_no + 1}", MaxPool2d(pk, ps)))
        for fc in stage:
            layers.append((f"fire{fire_no}", Fire.init(c_in, fc.s1x1, fc.e1x1, fc.e3x3,
                                                       derive_seed(seed, 100 + fire_no), dtype)))
            c_in = fc.out_channels
            fire_no += 1
    layers.append(("conv10", Conv2d.init(c_in, cfg.embed_channels, 1, derive_seed(seed, 10), dtype=dtype)))
    if cfg.embed_relu:
        layers.append(("relu10", ReLU()))
    layers += [
        ("gap", GlobalAvgPool()),
        ("fc", Linear.init(cfg.embed_channels, cfg.output_width, derive_seed(seed, 11), dtype)),
    ]
    return layers


def build_network(cfg: NetworkConfig, seed: int = 0, dtype=np.float32) -> Model:
    """Kaiming-initialised network; every layer draws from its own derived seed."""
    return Model(cfg, Sequential(_layer_stack(cfg, seed, dtype)))


def fire_forward(x: np.ndarray, cfg: FireConfig, params: dict[str, LayerParams]) -> np.ndarray:
    """Stateless fire module on explicit ``squeeze1x1``/``expand1x1``/``expand3x3`` params."""
    sq = params["squeeze1x1"]
    if x.shape[1] != sq.weights.shape[1]:
        raise ValueError(f"input has {x.shape[1]} channels, squeeze expects {sq.weights.shape[1]}")
    fire = Fire(Conv2d(sq), Conv2d(params["expand1x1"]), Conv2d(params["expand3x3"], pad=1))
    if fire.out_channels != cfg.out_channels:
        raise ValueError("parameters do not match the fire config")
    return fire.forward(x)


def forward(model: Model, batch: np.ndarray) -> np.ndarray:
    return model.forward(batch)


def predict_patches(model: Model, patches: np.ndarray, chunk: int = 256) -> np.ndarray:
    outs = [model.forward(patches[i : i + chunk]) for i in range(0, len(patches), chunk)]
    if not outs:
        return np.zeros((0, model.config.output_width), dtype=model.dtype)
    return np.concatenate(outs)


def predict_sigma(model: Model, diff: DifferenceImage, n_patches: int = 16, seed: int = 0) -> EstimatorResult:
    """Mean regression output over ``n_patches`` random windows of ``diff``.

    A single-channel model applied to a colour difference estimates each
    channel on its own and averages them.
    """
    cfg = model.config
    if cfg.head != "regression":
        raise ValueError("predict_sigma needs a regression-headed model")
    if n_patches < 1:
        raise ValueError("n_patches must be >= 1")
    if cfg.input_channels == diff.channels:
        planes = [diff]
    elif cfg.input_channels == 1:
        planes = [DifferenceImage(diff.data[:, :, c], diff.sigma_true) for c in range(diff.channels)]
    else:
        raise ValueError(f"model expects {cfg.input_channels} channels, difference has {diff.channels}")
    per_channel = []
    for c, plane in enumerate(planes):
        batch = sample_patches(plane, cfg.patch_size, n_patches, derive_seed(seed, c))
        pred = predict_patches(model, batch.patches)
        per_channel.append(max(0.0, float(np.mean(pred.astype(np.float64)))))
    if len(planes) == 1 and diff.channels == cfg.input_channels and diff.channels > 1:
        per_channel = per_channel * diff.channels
    return EstimatorResult.from_channels(per_channel, "cnn")


def model_to_bytes(model: Model) -> bytes:
    config = json.dumps(model.config.to_dict(), sort_keys=True, separators=(",", ":")).encode()
    params = []
    for name, p in model.parameters():
        params.append((f"{name}.weights", p.weights))
        params.append((f"{name}.bias", p.bias))
    out = [MAGIC, struct.pack("<I", model.format_version), struct.pack("<I", len(config)), config,
           struct.pack("<I", len(params))]
    for name, arr in params:
        raw_name = name.encode()
        out.append(struct.pack("<I", len(raw_name)) + raw_name)
        out.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    body = b"".join(out)
    return body + struct.pack("<I", zlib.crc32(body))


def save_model(model: Model, path) -> None:
    Path(path).write_bytes(model_to_bytes(model))


def model_from_bytes(raw: bytes) -> Model:
    if raw[:4] != MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    if len(raw) < 12:
        raise ModelFormatError("checksum failure: file truncated")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    body, (crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) != crc:
        raise ModelFormatError("checksum failure: file corrupt or truncated")
    pos = 8
    (n,) = struct.unpack_from("<I", body, pos)
    pos += 4
    config = NetworkConfig.from_dict(json.loads(body[pos : pos + n]))
    pos += n
    model = build_network(config, seed=0)
    table = {}
    for name, p in model.parameters():
        table[f"{name}.weights"] = p.weights
        table[f"{name}.bias"] = p.bias
    (count,) = struct.unpack_from("<I", body, pos)
    pos += 4
    if count != len(table):
        raise ModelFormatError(f"file has {count} tensors, config implies {len(table)}")
    for _ in range(count):
        (ln,) = struct.unpack_from("<I", body, pos)
        pos += 4
        name = body[pos : pos + ln].decode()
        pos += ln
        (rank,) = struct.unpack_from("<I", body, pos)
        pos += 4
        shape = struct.unpack_from(f"<{rank}I", body, pos)
        pos += 4 * rank
        target = table.get(name)
        if target is None or target.shape != tuple(shape):
            raise ModelFormatError(f"tensor {name} with shape {shape} does not match the config")
        size = int(np.prod(shape)) * 4
        target[...] = np.frombuffer(body, dtype="<f4", count=size // 4, offset=pos).reshape(shape)
        pos += size
    if pos != len(body):
        raise ModelFormatError("trailing bytes after parameter table")
    return model


def load_model(path) -> Model:
    return model_from_bytes(Path(path).read_bytes())
