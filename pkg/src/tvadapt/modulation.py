"""Low-rank feature modulation for the frozen towers.

Per adapted layer the video tower gets a learnable scale/shift pair,
each factorized along the temporal axis as a rank-R product
(c = c_a . c_b with c_a: T x R, c_b: R x D), applied multiplicatively
and additively to the block output: u = c * x + s, with one modulation
row per frame shared by all N+1 tokens of that frame. The text tower
gets a full-rank sentence-level pair (1 x D_t) per layer; word features
are never modulated.

Alternative decompositions (per-token spatial-temporal factors, and a
single factorization shared across layers) are provided as ablation
modes, plus an off mode that leaves features untouched. Initialization
is exact-identity: the composed scale is bitwise ones and the composed
shift bitwise zeros, so a freshly attached adapter preserves the frozen
model's function.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from . import tensor as T
from .exceptions import ConfigError, DimensionError
from .tensor import Tensor, rng_for


class DecomposeMode(str, Enum):
    TEMPORAL = "temporal"
    SPATIAL_TEMPORAL = "spatial_temporal"
    SPATIAL_TEMPORAL_LAYER = "spatial_temporal_layer"
    NONE = "none"


def _identity_factors(rng, a_shape, b_shape, shift):
    """Factor pair whose product is exactly ones (scale) or zeros (shift).

    The leading factor is an indicator on rank slot 0 (or all zeros for
    the shift), so the noisy rows of the trailing factor are annihilated
    and the composition is exact in floating point.
    """
    a = np.zeros(a_shape)
    b = rng.normal(size=b_shape) * 1e-3
    if not shift:
        a[..., 0] = 1.0
        b[0] = 1.0
    return a, b


class VideoModulation:
    """Scale/shift modulation of video features at a set of layers."""

    def __init__(self, store, mode, layers, rank, frames, tokens, dim, seed):
        self.mode = DecomposeMode(mode)
        self.layers = sorted(layers)
        self.rank = rank
        self.frames = frames
        self.tokens = tokens
        self.dim = dim
        self.params = {}
        if self.mode is DecomposeMode.NONE:
            return
        if not 1 <= rank <= min(frames, dim):
            raise ConfigError(f"rank {rank} outside [1, min(T={frames}, D={dim})]")

        if self.mode is DecomposeMode.SPATIAL_TEMPORAL_LAYER:
            m = len(self.layers)
            for tag in ("c", "s"):
                rng = rng_for(seed, "lorm/stl", tag)
                a = np.zeros((m, rank))
                b = rng.normal(size=(rank, frames, tokens, rank)) * 1e-3
                c = rng.normal(size=(rank, dim)) * 1e-3
                if tag == "c":
                    a[:, 0] = 1.0
                    b[0] = 0.0
                    b[0, :, :, 0] = 1.0
                    c[0] = 1.0
                for suffix, arr in (("a", a), ("b", b), ("c", c)):
                    name = f"adapter/lorm/shared/{tag}_{suffix}"
                    self.params[f"{tag}_{suffix}"] = store.add(name, Tensor(arr))
            return

        for layer in self.layers:
            entry = {}
            for tag in ("c", "s"):
                rng = rng_for(seed, "lorm", layer, tag)
                if self.mode is DecomposeMode.TEMPORAL:
                    a_shape = (frames, rank)
                else:
                    a_shape = (frames, tokens, rank)
                a, b = _identity_factors(rng, a_shape, (rank, dim), shift=(tag == "s"))
                entry[f"{tag}_a"] = store.add(f"adapter/lorm/layer{layer}/{tag}_a", Tensor(a))
                entry[f"{tag}_b"] = store.add(f"adapter/lorm/layer{layer}/{tag}_b", Tensor(b))
            self.params[layer] = entry

    def compose(self, layer):
        """Composed (scale, shift) tensors for one layer.

        Temporal mode: (T, D) each. Per-token modes: (T, N+1, D) each.
        """
        if self.mode is DecomposeMode.NONE:
            raise ConfigError("compose called with modulation disabled")
        if layer not in self.layers:
            raise ConfigError(f"layer {layer} has no modulation attached")
        if self.mode is DecomposeMode.SPATIAL_TEMPORAL_LAYER:
            m = self.layers.index(layer)
            out = []
            for tag in ("c", "s"):
                a = self.params[f"{tag}_a"]
                b = self.params[f"{tag}_b"]
                c = self.params[f"{tag}_c"]
                bc = T.matmul(T.reshape(b, (self.rank * self.frames * self.tokens, self.rank)), c)
                bc = T.reshape(bc, (self.rank, self.frames * self.tokens * self.dim))
                full = T.matmul(a, bc)
                full = T.reshape(full, (len(self.layers), self.frames, self.tokens, self.dim))
                out.append(full[m])
            return tuple(out)
        entry = self.params[layer]
        out = []
        for tag in ("c", "s"):
            a, b = entry[f"{tag}_a"], entry[f"{tag}_b"]
            if self.mode is DecomposeMode.TEMPORAL:
                out.append(T.matmul(a, b))
            else:
                flat = T.matmul(T.reshape(a, (self.frames * self.tokens, self.rank)), b)
                out.append(T.reshape(flat, (self.frames, self.tokens, self.dim)))
        return tuple(out)

    def apply(self, layer, x):
        """Affine calibration of block output x: u = scale * x + shift."""
        if self.mode is DecomposeMode.NONE or layer not in self.layers:
            return x
        c, s = self.compose(layer)
        if self.mode is DecomposeMode.TEMPORAL:
            return modulate_video(x, c, s)
        return c * x + s


class TextModulation:
    """Sentence-level scale/shift per text layer (full rank, 1 x D_t)."""

    def __init__(self, store, layers, dim, seed, lowrank=False, rank=3, positions=0):
        self.layers = sorted(layers)
        self.dim = dim
        self.lowrank = lowrank
        self.params = {}
        for layer in self.layers:
            entry = {
                "c_t": store.add(f"adapter/textmod/layer{layer}/c_t", Tensor(np.ones((1, dim)))),
                "s_t": store.add(f"adapter/textmod/layer{layer}/s_t", Tensor(np.zeros((1, dim)))),
            }
            if lowrank:
                # appendix ablation: word-level low-rank modulation over token positions
                rng = rng_for(seed, "textmod/lowrank", layer)
                wa, wb = _identity_factors(rng, (positions, rank), (rank, dim), shift=False)
                sa, sb = _identity_factors(rng, (positions, rank), (rank, dim), shift=True)
                entry["w_a"] = store.add(f"adapter/textmod/layer{layer}/w_a", Tensor(wa))
                entry["w_b"] = store.add(f"adapter/textmod/layer{layer}/w_b", Tensor(wb))
                entry["v_a"] = store.add(f"adapter/textmod/layer{layer}/v_a", Tensor(sa))
                entry["v_b"] = store.add(f"adapter/textmod/layer{layer}/v_b", Tensor(sb))
            self.params[layer] = entry

    def apply(self, layer, w):
        if layer not in self.params:
            return w
        entry = self.params[layer]
        return entry["c_t"] * w + entry["s_t"]

    def apply_wordlevel(self, layer, x):
        """Word-level low-rank variant (ablation flag only)."""
        if not self.lowrank or layer not in self.params:
            return x
        entry = self.params[layer]
        n = x.shape[-2]
        cw = T.matmul(entry["w_a"], entry["w_b"])[:n]
        sw = T.matmul(entry["v_a"], entry["v_b"])[:n]
        return cw * x + sw


def compose_modulation(mod, layer):
    """Eq.-style composition for the temporal mode: (c, s) each T x D."""
    return mod.compose(layer)


def modulate_video(x, c_v, s_v):
    """u = c_v * x + s_v with frame-row modulation broadcast over tokens."""
    if c_v.shape != s_v.shape or c_v.ndim != 2:
        raise DimensionError(f"modulation shapes {c_v.shape} / {s_v.shape} must match T x D")
    if x.shape[-3] != c_v.shape[0] or x.shape[-1] != c_v.shape[1]:
        raise DimensionError(
            f"features {x.shape} incompatible with modulation {c_v.shape}"
        )
    t, d = c_v.shape
    return T.reshape(c_v, (t, 1, d)) * x + T.reshape(s_v, (t, 1, d))


def modulate_text(w, text_mod, layer):
    """z = c_t * w + s_t at the sentence level."""
    return text_mod.apply(layer, w)


def compose_variant(mod, layer):
    """Modulation tensors for whichever decomposition mode is active."""
    return mod.compose(layer)


def identity_init(mod):
    """Reset a modulation object so it is exactly the identity map."""
    if isinstance(mod, TextModulation):
        for entry in mod.params.values():
            entry["c_t"].data[:] = 1.0
            entry["s_t"].data[:] = 0.0
            if "w_a" in entry:
                for k in ("w_a", "v_a"):
                    entry[k].data[:] = 0.0
                entry["w_a"].data[..., 0] = 1.0
                entry["w_b"].data[0] = 1.0
        return
    if mod.mode is DecomposeMode.NONE:
        return
    if mod.mode is DecomposeMode.SPATIAL_TEMPORAL_LAYER:
        for tag in ("c", "s"):
            a = mod.params[f"{tag}_a"].data
            b = mod.params[f"{tag}_b"].data
            c = mod.params[f"{tag}_c"].data
            a[:] = 0.0
            if tag == "c":
                a[:, 0] = 1.0
                b[0] = 0.0
                b[0, :, :, 0] = 1.0
                c[0] = 1.0
        return
    for entry in mod.params.values():
        for tag in ("c", "s"):
            a = entry[f"{tag}_a"].data
            a[:] = 0.0
            if tag == "c":
                a[..., 0] = 1.0
                entry["c_b"].data[0] = 1.0
