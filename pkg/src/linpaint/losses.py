"""Training objective: reconstruction, perceptual, style and adversarial terms.

The perceptual and style terms take any feature extractor object with a
``features(image) -> list[Tensor]`` method. Pretrained backbones are out of
scope here, so a deterministic random-weight convolutional extractor stands
in; it exercises the exact same loss plumbing. The adversarial term uses a
patch discriminator whose convolution weights are spectrally normalized via
power iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autograd import Parameter
from .tensor import (
    ShapeError,
    Tensor,
    absolute,
    add,
    chw_to_nc,
    conv2d,
    leaky_relu,
    log_clamped,
    make_rng,
    matmul,
    mean_all,
    scale,
    sigmoid,
    sub,
    sum_all,
    transpose,
)

__all__ = [
    "LossWeights",
    "IdentityFeatureExtractor",
    "RandomConvFeatureExtractor",
    "l1_reconstruction",
    "perceptual_loss",
    "gram_matrix",
    "style_loss",
    "SpectralNormState",
    "power_iteration_sigma",
    "spectral_normalize",
    "PatchDiscriminator",
    "discriminator_loss",
    "generator_adversarial_loss",
    "adversarial_losses",
    "generator_loss_terms",
    "total_loss",
]


@dataclass
class LossWeights:
    reconstruction: float = 1.0
    perceptual: float = 1.0
    style: float = 250.0
    adversarial: float = 0.1

    def validate(self) -> None:
        for name in ("reconstruction", "perceptual", "style", "adversarial"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name} must be >= 0")


class IdentityFeatureExtractor:
    """Single stage returning the image itself; useful to pin down reductions."""

    def features(self, im: Tensor) -> list[Tensor]:
        return [im]


class RandomConvFeatureExtractor:
    """Fixed-seed random strided convolutions; deterministic and frozen.

    Weights are plain tensors, not parameters: gradients flow through the
    stages to the image but the extractor itself is never trained. Reported
    feature maps are scaled by ``feature_gain`` so the Gram magnitudes stay
    in the range the published style weight (250) was tuned for.
    """

    def __init__(self, seed: int = 0, in_channels: int = 3,
                 widths: tuple[int, ...] = (8, 16, 32),
                 feature_gain: float = 0.1) -> None:
        rng = make_rng(seed)
        self.feature_gain = feature_gain
        self.layers: list[tuple[Tensor, Tensor]] = []
        cin = in_channels
        for cout in widths:
            std = math.sqrt(2.0 / (cin * 9))
            w = Tensor(rng.normal(0.0, std, size=(cout, cin, 3, 3)))
            b = Tensor(np.zeros(cout))
            self.layers.append((w, b))
            cin = cout

    def features(self, im: Tensor) -> list[Tensor]:
        feats = []
        x = im
        for w, b in self.layers:
            x = leaky_relu(conv2d(x, w, b, stride=2, padding=1), 0.2)
            feats.append(scale(x, self.feature_gain))
        return feats


def l1_reconstruction(i_out: Tensor, i_g: Tensor) -> Tensor:
    """Mean absolute difference over all elements."""
    if i_out.shape != i_g.shape:
        raise ShapeError(f"shape mismatch: {i_out.shape} vs {i_g.shape}")
    return mean_all(absolute(sub(i_out, i_g)))


def perceptual_loss(i_out: Tensor, i_g: Tensor, fx) -> Tensor:
    """Sum over stages of the per-element mean absolute feature difference."""
    total: Tensor | None = None
    for f_out, f_g in zip(fx.features(i_out), fx.features(i_g)):
        term = mean_all(absolute(sub(f_out, f_g)))
        total = term if total is None else add(total, term)
    assert total is not None, "feature extractor produced no stages"
    return total


def gram_matrix(feat: Tensor) -> Tensor:
    """Channel co-activation matrix: G[a,b] = sum_hw F[a]F[b] / (C*H*W)."""
    if feat.data.ndim != 3:
        raise ShapeError(f"gram_matrix needs CxHxW, got {feat.shape}")
    c, h, w = feat.shape
    flat = chw_to_nc(feat)                       # (H*W) x C
    return scale(matmul(transpose(flat), flat), 1.0 / (c * h * w))


def style_loss(i_out: Tensor, i_g: Tensor, fx) -> Tensor:
    """Mean over stages of the entrywise L1 distance between Gram matrices."""
    terms = []
    for f_out, f_g in zip(fx.features(i_out), fx.features(i_g)):
        terms.append(sum_all(absolute(sub(gram_matrix(f_out), gram_matrix(f_g)))))
    total = terms[0]
    for t in terms[1:]:
        total = add(total, t)
    return scale(total, 1.0 / len(terms))


# ---------------------------------------------------------------------------
# Spectral normalization


@dataclass
class SpectralNormState:
    """Persistent left singular-vector estimate for one weight matrix."""

    u: np.ndarray
    power_iters: int = 1

    @classmethod
    def init(cls, rows: int, rng: np.random.Generator, power_iters: int = 1
             ) -> "SpectralNormState":
        u = rng.normal(size=rows)
        return cls(u=u / np.linalg.norm(u), power_iters=power_iters)


def power_iteration_sigma(w: np.ndarray, state: SpectralNormState,
                          eps: float = 1e-12) -> float:
    """Largest-singular-value estimate; updates state.u in place (kept unit norm)."""
    if w.ndim != 2:
        raise ShapeError(f"power iteration needs a matrix, got shape {w.shape}")
    if state.power_iters < 1:
        raise ValueError("power_iters must be >= 1")
    u = state.u
    v = None
    for _ in range(state.power_iters):
        v = w.T @ u
        nv = np.linalg.norm(v)
        if nv < eps:                       # effectively zero matrix
            return 0.0
        v = v / nv
        u = w @ v
        nu = np.linalg.norm(u)
        if nu < eps:
            return 0.0
        u = u / nu
    state.u = u
    return float(u @ (w @ v))


def spectral_normalize(w: np.ndarray, state: SpectralNormState,
                       eps: float = 1e-12) -> np.ndarray:
    """w divided by its estimated spectral norm; zero matrices pass unchanged."""
    sigma = power_iteration_sigma(w, state, eps)
    if sigma < eps:
        return w
    return w / sigma


# ---------------------------------------------------------------------------
# Patch discriminator


class PatchDiscriminator:
    """Stride-2 convolution stack scoring local patches, not a single scalar.

    Channels 64 -> 128 -> 256 -> 512 with kernel 4 and leaky-ReLU slope 0.2,
    then a 1-channel scoring convolution. Every convolution weight is divided
    by its power-iteration spectral-norm estimate at call time; the estimate
    is treated as a constant in the backward pass.
    """

    WIDTHS = (64, 128, 256, 512)

    def __init__(self, rng: np.random.Generator, in_channels: int = 3,
                 base_width: int | None = None, power_iters: int = 1,
                 init_power_iters: int = 60) -> None:
        widths = self.WIDTHS if base_width is None else tuple(
            base_width * 2 ** i for i in range(4))
        self.layers: list[tuple[Parameter, Parameter, SpectralNormState, int]] = []
        cin = in_channels
        for i, cout in enumerate(widths):
            self._add_layer(rng, cin, cout, stride=2, tag=f"disc.conv{i}",
                            power_iters=power_iters, init_power_iters=init_power_iters)
            cin = cout
        self._add_layer(rng, cin, 1, stride=1, tag="disc.score",
                        power_iters=power_iters, init_power_iters=init_power_iters)

    def _add_layer(self, rng, cin: int, cout: int, stride: int, tag: str,
                   power_iters: int, init_power_iters: int) -> None:
        std = math.sqrt(2.0 / (cin * 16))
        w = Parameter(rng.normal(0.0, std, size=(cout, cin, 4, 4)), name=f"{tag}.w")
        b = Parameter(np.zeros(cout), name=f"{tag}.b")
        state = SpectralNormState.init(cout, rng, power_iters)
        # Converge u up front so the very first sigma estimates are accurate.
        for _ in range(init_power_iters):
            power_iteration_sigma(w.data.reshape(w.shape[0], -1), state)
        self.layers.append((w, b, state, stride))

    def forward(self, im: Tensor) -> Tensor:
        x = im
        last = len(self.layers) - 1
        for i, (w, b, state, stride) in enumerate(self.layers):
            sigma = power_iteration_sigma(w.data.reshape(w.shape[0], -1), state)
            w_used = scale(w, 1.0 / sigma) if sigma > 1e-12 else w
            x = conv2d(x, w_used, b, stride=stride, padding=1)
            if i != last:
                x = leaky_relu(x, 0.2)
        return x

    def parameters(self) -> list[Parameter]:
        out: list[Parameter] = []
        for w, b, _, _ in self.layers:
            out += [w, b]
        return out


# ---------------------------------------------------------------------------
# Adversarial terms (non-saturating, logistic scores, logs clamped at 1e-12)


def _mean_log_sigmoid(scores: Tensor) -> Tensor:
    return mean_all(log_clamped(sigmoid(scores)))


def discriminator_loss(disc: PatchDiscriminator, real: Tensor,
                       fake_detached: Tensor) -> Tensor:
    """-[mean log s(D(real)) + mean log(1 - s(D(fake)))]; fake must be detached."""
    term_real = _mean_log_sigmoid(disc.forward(real))
    term_fake = mean_all(log_clamped(sigmoid(scale(disc.forward(fake_detached), -1.0))))
    return scale(add(term_real, term_fake), -1.0)


def generator_adversarial_loss(disc: PatchDiscriminator, fake: Tensor) -> Tensor:
    """-mean log s(D(fake)): the non-saturating generator objective."""
    return scale(_mean_log_sigmoid(disc.forward(fake)), -1.0)


def adversarial_losses(disc: PatchDiscriminator, i_g: Tensor,
                       i_out: Tensor) -> tuple[Tensor, Tensor]:
    """(discriminator loss, generator loss); the discriminator side sees the
    generated image detached so no gradient can reach the generator there."""
    loss_d = discriminator_loss(disc, i_g, i_out.detach())
    loss_g = generator_adversarial_loss(disc, i_out)
    return loss_d, loss_g


def generator_loss_terms(i_out: Tensor, i_g: Tensor, fx,
                         disc: PatchDiscriminator) -> dict[str, Tensor]:
    return {
        "rec": l1_reconstruction(i_out, i_g),
        "perc": perceptual_loss(i_out, i_g, fx),
        "style": style_loss(i_out, i_g, fx),
        "adv": generator_adversarial_loss(disc, i_out),
    }


def total_loss(i_out: Tensor, i_g: Tensor, fx, disc: PatchDiscriminator,
               weights: LossWeights) -> Tensor:
    """Weighted sum of the four generator-side terms."""
    weights.validate()
    terms = generator_loss_terms(i_out, i_g, fx, disc)
    total = scale(terms["rec"], weights.reconstruction)
    total = add(total, scale(terms["perc"], weights.perceptual))
    total = add(total, scale(terms["style"], weights.style))
    total = add(total, scale(terms["adv"], weights.adversarial))
    return total
