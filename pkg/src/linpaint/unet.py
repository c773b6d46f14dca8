"""Transformer blocks and the four-level encoder / three-level decoder around them.

Shape law: at level i the feature map has 2^(i-1) * C channels over an
H/2^(i-1) x W/2^(i-1) grid. A 7x7 convolution lifts the 3-channel masked
image to C channels, strided 3x3 convolutions step down between encoder
stages, and the decoder mirrors the path with nearest-neighbour upsampling,
skip concatenation and a 1x1 fusion convolution that halves the channels
again. Every block wraps gated linear attention and a gated feed-forward
unit in residual connections.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

from .attention import TAYLOR_MODES, AttentionConfig, ProjectionSet, gated_attention
from .autograd import Parameter
from .tensor import (
    ShapeError,
    Tensor,
    add,
    concat_channels,
    conv2d,
    depthwise_conv2d,
    gelu,
    hadamard,
    layer_norm_sites,
    nearest_upsample2x,
    tanh,
)

__all__ = [
    "FFNConfig",
    "ModelConfig",
    "InpaintingUNet",
    "CheckpointError",
    "save_checkpoint",
    "load_checkpoint",
    "compose_with_mask",
]

NORM_KINDS = ("layer", "none")

CHECKPOINT_MAGIC = b"LINPAINT-CKPT-1\n"


@dataclass
class FFNConfig:
    channels: int
    expansion: float = 2.0

    @property
    def hidden(self) -> int:
        return max(1, round(self.channels * self.expansion))


@dataclass
class ModelConfig:
    """Full architecture description; everything the checkpoint must restore."""

    base_channels: int = 32
    block_counts: tuple[int, ...] = (1, 2, 3, 4, 3, 2, 1)
    heads_per_level: tuple[int, ...] = (1, 2, 4, 8, 4, 2, 1)
    in_channels: int = 3
    out_channels: int = 3
    taylor_mode: str = "residual"
    gated: bool = True
    norm: str = "layer"
    ffn_expansion: float = 2.0
    attn_eps: float = 1e-6
    normalize_qk: bool = True
    divide: bool = True
    compose_output: bool = True

    def validate(self) -> None:
        if self.base_channels < 1:
            raise ValueError(f"base_channels must be >= 1, got {self.base_channels}")
        if len(self.block_counts) != 7 or any(b < 0 for b in self.block_counts):
            raise ValueError(f"block_counts must be 7 non-negative ints, got {self.block_counts}")
        if len(self.heads_per_level) != 7:
            raise ValueError(f"heads_per_level must have 7 entries, got {self.heads_per_level}")
        if self.taylor_mode not in TAYLOR_MODES:
            raise ValueError(f"taylor_mode must be one of {TAYLOR_MODES}")
        if self.norm not in NORM_KINDS:
            raise ValueError(f"norm must be one of {NORM_KINDS}, got {self.norm!r}")
        if self.ffn_expansion <= 0:
            raise ValueError("ffn_expansion must be > 0")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be >= 1")
        for idx, heads in enumerate(self.heads_per_level):
            c = self.level_channels(idx)
            if heads < 1 or c % heads != 0:
                raise ValueError(
                    f"level {idx}: channels {c} not divisible by heads {heads}")

    def level_channels(self, idx: int) -> int:
        """Channels at block-stack index 0..6 (enc 1..4 then dec 3..1)."""
        level = idx + 1 if idx < 4 else 7 - idx
        return self.base_channels * 2 ** (level - 1)


def _conv_params(rng: np.random.Generator, cout: int, cin: int, k: int,
                 name: str, gain: float = 1.0) -> tuple[Parameter, Parameter]:
    # Variance-preserving init (gain 1): most convolutions here feed residual
    # sums or further linear maps, not ReLU-family activations, so a sqrt(2)
    # gain would compound across the depth and saturate the output tanh.
    std = gain * math.sqrt(1.0 / (cin * k * k))
    w = Parameter(rng.normal(0.0, std, size=(cout, cin, k, k)), name=f"{name}.w")
    b = Parameter(np.zeros(cout), name=f"{name}.b")
    return w, b


class ConvLayer:
    def __init__(self, rng, cin: int, cout: int, k: int, stride: int, padding: int,
                 name: str) -> None:
        self.w, self.b = _conv_params(rng, cout, cin, k, name)
        self.stride = stride
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.w, self.b, self.stride, self.padding)

    def parameters(self) -> list[Parameter]:
        return [self.w, self.b]


class ChannelNorm:
    """Per-site normalization over channels with a learnable channel affine."""

    def __init__(self, rng, channels: int, name: str) -> None:
        self.gamma = Parameter(np.ones(channels), name=f"{name}.gamma")
        self.beta = Parameter(np.zeros(channels), name=f"{name}.beta")

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm_sites(x, self.gamma, self.beta)

    def parameters(self) -> list[Parameter]:
        return [self.gamma, self.beta]


class FeedForward:
    """Gated linear unit: two 1x1 conv + 3x3 depthwise branches, one GELU-gated."""

    # Residual-branch outputs start near zero so a fresh block is close to the
    # identity map; training only has to grow the branches it needs.
    RESIDUAL_OUT_GAIN = 0.125

    def __init__(self, rng, cfg: FFNConfig, name: str) -> None:
        c, h = cfg.channels, cfg.hidden
        self.conv_i_w, self.conv_i_b = _conv_params(rng, h, c, 1, f"{name}.conv_i")
        self.dw_i_w = Parameter(rng.normal(0.0, math.sqrt(1.0 / 9.0), size=(h, 3, 3)),
                                name=f"{name}.dw_i.w")
        self.dw_i_b = Parameter(np.zeros(h), name=f"{name}.dw_i.b")
        self.conv_g_w, self.conv_g_b = _conv_params(rng, h, c, 1, f"{name}.conv_g")
        self.dw_g_w = Parameter(rng.normal(0.0, math.sqrt(1.0 / 9.0), size=(h, 3, 3)),
                                name=f"{name}.dw_g.w")
        self.dw_g_b = Parameter(np.zeros(h), name=f"{name}.dw_g.b")
        self.conv_out_w, self.conv_out_b = _conv_params(
            rng, c, h, 1, f"{name}.conv_out", gain=self.RESIDUAL_OUT_GAIN)

    def __call__(self, x: Tensor) -> Tensor:
        branch_i = depthwise_conv2d(conv2d(x, self.conv_i_w, self.conv_i_b),
                                    self.dw_i_w, self.dw_i_b, padding=1)
        branch_g = gelu(depthwise_conv2d(conv2d(x, self.conv_g_w, self.conv_g_b),
                                         self.dw_g_w, self.dw_g_b, padding=1))
        return conv2d(hadamard(branch_i, branch_g), self.conv_out_w, self.conv_out_b)

    def parameters(self) -> list[Parameter]:
        return [self.conv_i_w, self.conv_i_b, self.dw_i_w, self.dw_i_b,
                self.conv_g_w, self.conv_g_b, self.dw_g_w, self.dw_g_b,
                self.conv_out_w, self.conv_out_b]


class TransformerBlock:
    """Pre-normalized gated attention and feed-forward, each behind a residual."""

    def __init__(self, rng, channels: int, heads: int, cfg: ModelConfig,
                 name: str) -> None:
        self.attn_cfg = AttentionConfig(
            channels=channels, heads=heads, taylor_mode=cfg.taylor_mode,
            gated=cfg.gated, eps=cfg.attn_eps, normalize_qk=cfg.normalize_qk,
            divide=cfg.divide)
        self.attn_cfg.validate()
        self.use_norm = cfg.norm == "layer"
        if self.use_norm:
            self.norm1 = ChannelNorm(rng, channels, f"{name}.norm1")
        self.proj = ProjectionSet.init(channels, rng, prefix=f"{name}.attn",
                                       out_gain=FeedForward.RESIDUAL_OUT_GAIN)
        if self.use_norm:
            self.norm2 = ChannelNorm(rng, channels, f"{name}.norm2")
        self.ffn = FeedForward(rng, FFNConfig(channels, cfg.ffn_expansion), f"{name}.ffn")

    def __call__(self, x: Tensor) -> Tensor:
        pre = self.norm1(x) if self.use_norm else x
        y = add(x, gated_attention(pre, self.proj, self.attn_cfg))
        pre2 = self.norm2(y) if self.use_norm else y
        return add(y, self.ffn(pre2))

    def parameters(self) -> list[Parameter]:
        out: list[Parameter] = []
        if self.use_norm:
            out += self.norm1.parameters()
        out += self.proj.parameters()
        if self.use_norm:
            out += self.norm2.parameters()
        out += self.ffn.parameters()
        return out


class InpaintingUNet:
    """The full encoder-decoder; operates on one 3xHxW image at a time."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator) -> None:
        config.validate()
        self.config = config
        c = config.base_channels

        self.head = ConvLayer(rng, config.in_channels, c, 7, 1, 3, "head")
        self.enc_stages: list[list[TransformerBlock]] = []
        self.down: list[ConvLayer] = []
        for level in range(1, 5):
            ch = c * 2 ** (level - 1)
            heads = config.heads_per_level[level - 1]
            blocks = [TransformerBlock(rng, ch, heads, config, f"enc{level}.block{b}")
                      for b in range(config.block_counts[level - 1])]
            self.enc_stages.append(blocks)
            if level < 4:
                self.down.append(ConvLayer(rng, ch, 2 * ch, 3, 2, 1, f"down{level}"))

        self.up: dict[int, ConvLayer] = {}
        self.fuse: dict[int, ConvLayer] = {}
        self.dec_stages: dict[int, list[TransformerBlock]] = {}
        for idx, level in enumerate((3, 2, 1)):
            ch = c * 2 ** (level - 1)
            heads = config.heads_per_level[4 + idx]
            self.up[level] = ConvLayer(rng, 2 * ch, ch, 3, 1, 1, f"dec{level}.up")
            self.fuse[level] = ConvLayer(rng, 2 * ch, ch, 1, 1, 0, f"dec{level}.fuse")
            self.dec_stages[level] = [
                TransformerBlock(rng, ch, heads, config, f"dec{level}.block{b}")
                for b in range(config.block_counts[4 + idx])]

        self.tail = ConvLayer(rng, c, config.out_channels, 7, 1, 3, "tail")

    def parameters(self) -> list[Parameter]:
        out = list(self.head.parameters())
        for level in range(1, 5):
            for block in self.enc_stages[level - 1]:
                out += block.parameters()
            if level < 4:
                out += self.down[level - 1].parameters()
        for level in (3, 2, 1):
            out += self.up[level].parameters()
            out += self.fuse[level].parameters()
            for block in self.dec_stages[level]:
                out += block.parameters()
        out += self.tail.parameters()
        return out

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def _check_input(self, im: Tensor) -> None:
        if im.data.ndim != 3 or im.shape[0] != self.config.in_channels:
            raise ShapeError(f"expected {self.config.in_channels}xHxW input, got {im.shape}")
        _, h, w = im.shape
        if h % 8 != 0 or w % 8 != 0:
            raise ShapeError(f"spatial dims must be divisible by 8, got {h}x{w}")

    def encoder_forward(self, im: Tensor) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        self._check_input(im)
        x = self.head(im)
        encs = []
        for level in range(1, 5):
            for block in self.enc_stages[level - 1]:
                x = block(x)
            encs.append(x)
            if level < 4:
                x = self.down[level - 1](x)
        return tuple(encs)

    def decoder_forward(self, encs, with_features: bool = False):
        e1, e2, e3, e4 = encs
        skips = {1: e1, 2: e2, 3: e3}
        features: dict[str, tuple[int, ...]] = {}
        x = e4
        for level in (3, 2, 1):
            x = self.up[level](nearest_upsample2x(x))
            features[f"D{level}"] = x.shape
            x = self.fuse[level](concat_channels(x, skips[level]))
            for block in self.dec_stages[level]:
                x = block(x)
            features[f"D{level}_blocks"] = x.shape
        out = tanh(self.tail(x))
        if with_features:
            return out, features
        return out

    def forward(self, im: Tensor, mask: Tensor | None = None,
                compose_output: bool | None = None) -> Tensor:
        """Run the network; optionally paste valid input pixels back over the output.

        ``im`` must already have its missing pixels zero-filled (network scale,
        [-1, 1]); ``mask`` is 1xHxW with 1 marking valid pixels.
        """
        compose = self.config.compose_output if compose_output is None else compose_output
        out = self.decoder_forward(self.encoder_forward(im))
        if compose:
            if mask is None:
                raise ValueError("compose_output needs a mask")
            out = compose_with_mask(im, out, mask)
        return out


def compose_with_mask(im: Tensor, out: Tensor, mask: Tensor) -> Tensor:
    """mask*im + (1-mask)*out, with the 1xHxW mask repeated over channels."""
    if mask.data.ndim != 3 or mask.shape[0] != 1 or mask.shape[1:] != im.shape[1:]:
        raise ShapeError(f"mask must be 1x{im.shape[1]}x{im.shape[2]}, got {mask.shape}")
    mask3 = Tensor(np.repeat(mask.data, im.shape[0], axis=0))
    inv3 = Tensor(1.0 - mask3.data)
    return add(hadamard(mask3, im), hadamard(inv3, out))


# ---------------------------------------------------------------------------
# Checkpoint format: magic line, text header, raw little-endian float64 block
# in registration order, trailing CRC32 of everything before it.


class CheckpointError(ValueError):
    """Malformed, truncated or corrupted checkpoint file."""


_CONFIG_FIELDS = [
    "base_channels", "block_counts", "heads_per_level", "in_channels",
    "out_channels", "taylor_mode", "gated", "norm", "ffn_expansion",
    "attn_eps", "normalize_qk", "divide", "compose_output",
]


def _config_to_lines(config: ModelConfig) -> list[str]:
    lines = []
    for key in _CONFIG_FIELDS:
        val = getattr(config, key)
        if isinstance(val, tuple):
            text = ",".join(str(v) for v in val)
        elif isinstance(val, bool):
            text = "true" if val else "false"
        elif isinstance(val, float):
            text = repr(val)
        else:
            text = str(val)
        lines.append(f"{key}={text}")
    return lines


def _config_from_lines(pairs: dict[str, str]) -> ModelConfig:
    def ints(text: str) -> tuple[int, ...]:
        return tuple(int(v) for v in text.split(","))

    def boolean(text: str) -> bool:
        if text not in ("true", "false"):
            raise CheckpointError(f"bad boolean {text!r} in checkpoint header")
        return text == "true"

    try:
        return ModelConfig(
            base_channels=int(pairs["base_channels"]),
            block_counts=ints(pairs["block_counts"]),
            heads_per_level=ints(pairs["heads_per_level"]),
            in_channels=int(pairs["in_channels"]),
            out_channels=int(pairs["out_channels"]),
            taylor_mode=pairs["taylor_mode"],
            gated=boolean(pairs["gated"]),
            norm=pairs["norm"],
            ffn_expansion=float(pairs["ffn_expansion"]),
            attn_eps=float(pairs["attn_eps"]),
            normalize_qk=boolean(pairs["normalize_qk"]),
            divide=boolean(pairs["divide"]),
            compose_output=boolean(pairs["compose_output"]),
        )
    except KeyError as missing:
        raise CheckpointError(f"checkpoint header missing key {missing}") from None


def save_checkpoint(model: InpaintingUNet, path: str) -> None:
    params = model.parameters()
    header = _config_to_lines(model.config)
    header.append(f"param_count={sum(p.size for p in params)}")
    blob = CHECKPOINT_MAGIC + ("\n".join(header) + "\nend-header\n").encode("ascii")
    blob += b"".join(p.data.astype("<f8").tobytes() for p in params)
    crc = zlib.crc32(blob) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(blob)
        fh.write(crc.to_bytes(4, "little"))


def load_checkpoint(path: str) -> InpaintingUNet:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(CHECKPOINT_MAGIC) + 4:
        raise CheckpointError(f"checkpoint too short: {len(raw)} bytes")
    if not raw.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError("bad checkpoint magic")
    body, crc_bytes = raw[:-4], raw[-4:]
    if zlib.crc32(body) & 0xFFFFFFFF != int.from_bytes(crc_bytes, "little"):
        raise CheckpointError("checkpoint checksum mismatch")

    rest = body[len(CHECKPOINT_MAGIC):]
    end = rest.find(b"end-header\n")
    if end < 0:
        raise CheckpointError("checkpoint header not terminated")
    pairs: dict[str, str] = {}
    for line in rest[:end].decode("ascii").splitlines():
        if not line:
            continue
        key, _, val = line.partition("=")
        pairs[key] = val
    config = _config_from_lines(pairs)
    declared = int(pairs.get("param_count", "-1"))

    model = InpaintingUNet(config, np.random.Generator(np.random.Philox(0)))
    params = model.parameters()
    total = sum(p.size for p in params)
    if declared != total:
        raise CheckpointError(
            f"checkpoint declares {declared} parameters, config implies {total}")
    data = rest[end + len(b"end-header\n"):]
    if len(data) != total * 8:
        raise CheckpointError(
            f"checkpoint data block is {len(data)} bytes, expected {total * 8}")
    offset = 0
    for p in params:
        n = p.size * 8
        p.data[...] = np.frombuffer(data[offset:offset + n], dtype="<f8").reshape(p.shape)
        offset += n
    return model
