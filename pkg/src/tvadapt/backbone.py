"""Frozen two-tower encoder: per-frame ViT over video, transformer over text.

Each video frame is patchified, given a CLS token and positional
embedding, and pushed through pre-norm attention/MLP blocks that treat
frames independently. The text tower embeds integer tokens, appends an
EOS token, and reads the sentence feature at the EOS position. All
weights are frozen stand-ins for a pretrained model; adapters attach at
per-layer hook points (a feature-modulation hook after each block and a
pluggable attention operation inside each block).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .exceptions import ConfigError, InputError
from .tensor import ParamStore, Tensor, rng_for


@dataclass(frozen=True)
class VisualConfig:
    layers: int
    dim: int
    heads: int
    patch: int
    frame_h: int
    frame_w: int
    frames: int
    channels: int = 3

    def __post_init__(self):
        if self.frame_h % self.patch or self.frame_w % self.patch:
            raise ConfigError(
                f"frame {self.frame_h}x{self.frame_w} not divisible by patch {self.patch}"
            )
        if self.dim % self.heads:
            raise ConfigError(f"dim {self.dim} not divisible by heads {self.heads}")
        for field in ("layers", "dim", "heads", "patch", "frames", "channels"):
            if getattr(self, field) < 1:
                raise ConfigError(f"visual config field {field} must be positive")

    @property
    def patches(self):
        """Patches per frame: N = H * W / P**2."""
        return (self.frame_h // self.patch) * (self.frame_w // self.patch)


@dataclass(frozen=True)
class TextConfig:
    layers: int
    dim: int
    vocab: int
    max_words: int
    heads: int = 4

    def __post_init__(self):
        if self.dim < 1 or self.vocab < 2:
            raise ConfigError("text dim must be positive and vocab must exceed the EOS id")
        if self.dim % self.heads:
            raise ConfigError(f"text dim {self.dim} not divisible by heads {self.heads}")

    @property
    def eos_id(self):
        return self.vocab - 1


class LayerFeatures:
    """Per-layer token features x of shape (..., T, N+1, D).

    Splits exactly into the frame CLS features (token 0) and the patch
    features (tokens 1..N); concatenating the two views restores x.
    """

    def __init__(self, x):
        self.x = x

    @property
    def frame_feats(self):
        return self.x[..., 0, :]

    @property
    def patch_feats(self):
        return self.x[..., 1:, :]


_BLOCK_SHAPES = (
    ("ln1_g", "ones", ("D",)),
    ("ln1_b", "zeros", ("D",)),
    ("wq", "proj", ("D", "D")),
    ("bq", "zeros", ("D",)),
    ("wk", "proj", ("D", "D")),
    ("bk", "zeros", ("D",)),
    ("wv", "proj", ("D", "D")),
    ("bv", "zeros", ("D",)),
    ("wo", "proj", ("D", "D")),
    ("bo", "zeros", ("D",)),
    ("ln2_g", "ones", ("D",)),
    ("ln2_b", "zeros", ("D",)),
    ("mlp_w1", "proj", ("D", "4D")),
    ("mlp_b1", "zeros", ("4D",)),
    ("mlp_w2", "proj4", ("4D", "D")),
    ("mlp_b2", "zeros", ("D",)),
)


def _block_param(kind, shape, rng):
    if kind == "ones":
        return np.ones(shape)
    if kind == "zeros":
        return np.zeros(shape)
    # scaled Gaussian, std 1/sqrt(fan_in)
    return rng.normal(size=shape) / np.sqrt(shape[0])


def _init_blocks(store, prefix, layers, dim, seed):
    dims = {"D": dim, "4D": 4 * dim}
    for layer in range(1, layers + 1):
        for name, kind, shape_spec in _BLOCK_SHAPES:
            shape = tuple(dims[s] for s in shape_spec)
            rng = rng_for(seed, prefix, layer, name)
            store.add(f"{prefix}/block{layer}/{name}", Tensor(_block_param(kind, shape, rng)), frozen=True)


def init_backbone(store, vcfg, tcfg, seed):
    """Register all frozen tower parameters under ``backbone/``."""
    pdim = vcfg.patch * vcfg.patch * vcfg.channels
    rng = rng_for(seed, "backbone/visual/stem")
    store.add("backbone/visual/patch_w", Tensor(rng.normal(size=(pdim, vcfg.dim)) / np.sqrt(pdim)), frozen=True)
    store.add("backbone/visual/patch_b", Tensor(np.zeros(vcfg.dim)), frozen=True)
    store.add("backbone/visual/cls", Tensor(rng.normal(size=(1, vcfg.dim)) / np.sqrt(vcfg.dim)), frozen=True)
    store.add(
        "backbone/visual/pos",
        Tensor(rng.normal(size=(vcfg.patches + 1, vcfg.dim)) / np.sqrt(vcfg.dim)),
        frozen=True,
    )
    _init_blocks(store, "backbone/visual", vcfg.layers, vcfg.dim, seed)

    rng = rng_for(seed, "backbone/text/stem")
    store.add("backbone/text/embed", Tensor(rng.normal(size=(tcfg.vocab, tcfg.dim)) / np.sqrt(tcfg.dim)), frozen=True)
    store.add(
        "backbone/text/pos",
        Tensor(rng.normal(size=(tcfg.max_words + 1, tcfg.dim)) / np.sqrt(tcfg.dim)),
        frozen=True,
    )
    _init_blocks(store, "backbone/text", tcfg.layers, tcfg.dim, seed)


def freeze_backbone(store):
    """Flag every backbone entry frozen so backward never touches it."""
    store.freeze("backbone/")


def attention_core(q, k, v, heads):
    """Scaled dot-product attention over the second-to-last axis.

    q, k, v: (..., S, D). D is split across heads, attended per head at
    1/sqrt(D/heads) scale, and concatenated back.
    """
    *lead, s, d = q.shape
    dh = d // heads

    def split(t):
        t = T.reshape(t, (*lead, s, heads, dh))
        return T.swapaxes(t, -3, -2)

    qh, kh, vh = split(q), split(k), split(v)
    scores = T.matmul(qh, T.swapaxes(kh, -1, -2)) * (1.0 / np.sqrt(dh))
    weights = T.softmax(scores, axis=-1)
    ctx = T.matmul(weights, vh)
    return T.reshape(T.swapaxes(ctx, -3, -2), (*lead, s, d))


def vanilla_attention(x_in, q, k, v, heads):
    """Per-frame multi-head self-attention over all N+1 tokens."""
    return attention_core(q, k, v, heads)


def vit_block(x, store, prefix, heads, attention_fn):
    """Pre-norm residual block: x + Attn(LN(x)), then + MLP(LN(.)).

    ``attention_fn(x_in, q, k, v, heads)`` receives the block input
    (pre-norm) alongside the projected triplet so that replacement
    attention operations can score patches on the raw features.
    """
    p = lambda name: store[f"{prefix}/{name}"]
    h = T.layer_norm(x, p("ln1_g"), p("ln1_b"))
    q = T.linear(h, p("wq"), p("bq"))
    k = T.linear(h, p("wk"), p("bk"))
    v = T.linear(h, p("wv"), p("bv"))
    ctx = attention_fn(x, q, k, v, heads)
    x = x + T.linear(ctx, p("wo"), p("bo"))
    h = T.layer_norm(x, p("ln2_g"), p("ln2_b"))
    h = T.linear(T.gelu(T.linear(h, p("mlp_w1"), p("mlp_b1"))), p("mlp_w2"), p("mlp_b2"))
    return x + h


def patchify(video, store, vcfg):
    """Embed raw frames into (..., T, N+1, D) token features.

    Non-overlapping P x P patches in row-major order are linearly
    projected, the frozen CLS token is prepended at position 0, and the
    positional embedding is added.
    """
    video = np.asarray(video, dtype=np.float64)
    t_ax = video.ndim - 4
    expected = (vcfg.frames, vcfg.frame_h, vcfg.frame_w, vcfg.channels)
    if video.ndim < 4 or video.shape[t_ax:] != expected:
        raise ConfigError(
            f"video shape {video.shape} does not end with T x H x W x C = {expected}"
        )
    lead = video.shape[:t_ax]
    p = vcfg.patch
    gh, gw = vcfg.frame_h // p, vcfg.frame_w // p
    patches = video.reshape(*lead, vcfg.frames, gh, p, gw, p, vcfg.channels)
    patches = np.moveaxis(patches, t_ax + 2, t_ax + 3)
    patches = patches.reshape(*lead, vcfg.frames, vcfg.patches, p * p * vcfg.channels)

    x = T.linear(Tensor(patches), store["backbone/visual/patch_w"], store["backbone/visual/patch_b"])
    cls = T.broadcast_to(store["backbone/visual/cls"], (*lead, vcfg.frames, 1, vcfg.dim))
    x = T.concat([cls, x], axis=-2)
    return x + store["backbone/visual/pos"]


def encode_video(video, store, vcfg, modulate=None, attention=None):
    """Run the video tower, applying per-layer adapter hooks.

    ``modulate`` maps layer index -> callable(x) applied to the block
    output before it feeds the next block; ``attention`` maps layer
    index -> replacement attention operation. Returns the per-layer
    features and the final frame CLS sequence (..., T, D).
    """
    modulate = modulate or {}
    attention = attention or {}
    for hooks in (modulate, attention):
        for layer in hooks:
            if not 1 <= layer <= vcfg.layers:
                raise ConfigError(f"hook layer {layer} outside [1, {vcfg.layers}]")
    x = patchify(video, store, vcfg)
    features = []
    for layer in range(1, vcfg.layers + 1):
        fn = attention.get(layer, vanilla_attention)
        x = vit_block(x, store, f"backbone/visual/block{layer}", vcfg.heads, fn)
        if layer in modulate:
            x = modulate[layer](x)
        features.append(LayerFeatures(x))
    return features, x[..., 0, :]


def encode_text(tokens, store, tcfg, modulate=None, modulate_tokens=None):
    """Run the text tower over integer tokens (EOS appended internally).

    Accepts one caption (1-D) or a batch of equal-length captions (2-D).
    ``modulate`` maps layer index -> callable(w) applied to the sentence
    (EOS) feature after each block; word features are left alone unless
    the word-level ablation hook ``modulate_tokens`` is supplied.
    Returns per-layer sentence features and the final (Q, D_t) feature.
    """
    modulate = modulate or {}
    modulate_tokens = modulate_tokens or {}
    for hooks in (modulate, modulate_tokens):
        for layer in hooks:
            if not 1 <= layer <= tcfg.layers:
                raise ConfigError(f"hook layer {layer} outside [1, {tcfg.layers}]")
    tokens = np.asarray(tokens, dtype=np.intp)
    single = tokens.ndim == 1
    if single:
        tokens = tokens[None, :]
    if tokens.ndim != 2:
        raise InputError(f"tokens must be 1-D or 2-D, got shape {tokens.shape}")
    if tokens.shape[1] > tcfg.max_words:
        raise InputError(
            f"caption length {tokens.shape[1]} exceeds max {tcfg.max_words}"
        )
    if tokens.size and (tokens.min() < 0 or tokens.max() >= tcfg.vocab):
        raise InputError("token id outside vocabulary")

    q = tokens.shape[0]
    seq = np.concatenate([tokens, np.full((q, 1), tcfg.eos_id, dtype=np.intp)], axis=1)
    x = T.take(store["backbone/text/embed"], seq, axis=0)
    x = x + store["backbone/text/pos"][: seq.shape[1], :]

    sentence_feats = []
    for layer in range(1, tcfg.layers + 1):
        x = vit_block(x, store, f"backbone/text/block{layer}", tcfg.heads, vanilla_attention)
        if layer in modulate_tokens:
            x = modulate_tokens[layer](x)
        if layer in modulate:
            w = modulate[layer](x[:, -1:, :])
            x = T.concat([x[:, :-1, :], w], axis=1)
        sentence_feats.append(x[:, -1, :])
    return sentence_feats, x[:, -1, :]
