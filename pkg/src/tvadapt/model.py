"""Assembles the frozen towers with the trainable adapter set.

Trainable pieces: per-layer video scale/shift factors, per-layer text
scale/shift, the layer-shared warp offsets, the shared visual-to-text
projection (used by sentence selection, patch selection, and the
retrieval head), and the loss temperature. Everything else is frozen.

Video encoding with warped attention needs the most video-aligned
candidate sentence per video. That is picked from a gradient-free
preliminary pass (vanilla attention, current modulation): selection is
a hard argmax, so re-deriving it without a tape changes no gradients.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .attention import (
    OffsetParams,
    SelectionMode,
    WarpAxes,
    asa_block_attention,
    selection_masks,
)
from .backbone import encode_text, encode_video, freeze_backbone, init_backbone
from .exceptions import InputError
from .modulation import DecomposeMode, TextModulation, VideoModulation
from .retrieval import similarity, contrastive_loss, text_embedding, video_embedding
from .tensor import ParamStore, Tensor, no_grad, rng_for

ADAPTER_GROUPS = {
    "lorm_visual": "adapter/lorm/",
    "lorm_text": "adapter/textmod/",
    "asa_offsets": "adapter/asa/",
    "proj": "adapter/proj/",
    "temperature": "adapter/temperature/",
}


def build_adapters(config, store):
    """Register all trainable adapter parameters; returns the handles.

    Kept separate from backbone construction so parameter counting can
    instantiate adapters at full scale without allocating tower weights.
    """
    vcfg, tcfg = config.visual(), config.text()
    video_mod = VideoModulation(
        store, config.decompose, config.visual_adapter_layers(), config.rank,
        vcfg.frames, vcfg.patches + 1, vcfg.dim, config.seed,
    )
    text_layers = config.text_adapter_layers() if config.text_modulation else []
    text_mod = TextModulation(
        store, text_layers, tcfg.dim, config.seed,
        lowrank=config.text_lowrank, rank=config.text_rank, positions=tcfg.max_words + 1,
    )
    offsets = None
    if config.asa:
        offsets = OffsetParams(store, vcfg.patches, vcfg.frames, config.warp_axes, config.seed)
    rng = rng_for(config.seed, "adapter/proj")
    proj_w = store.add("adapter/proj/w", Tensor(rng.normal(size=(vcfg.dim, tcfg.dim)) / np.sqrt(vcfg.dim)))
    proj_b = store.add("adapter/proj/b", Tensor(np.zeros(tcfg.dim)))
    log_tau = store.add("adapter/temperature/log_tau", Tensor(np.array([2.0])))
    if not config.train_head:
        store.freeze("adapter/proj/")
        store.freeze("adapter/temperature/")
    return video_mod, text_mod, offsets, proj_w, proj_b, log_tau


class AdapterModel:
    def __init__(self, config):
        self.config = config
        self.vcfg = config.visual()
        self.tcfg = config.text()
        self.store = ParamStore()
        init_backbone(self.store, self.vcfg, self.tcfg, config.seed)
        freeze_backbone(self.store)
        (self.video_mod, self.text_mod, self.offsets,
         self.proj_w, self.proj_b, self.log_tau) = build_adapters(config, self.store)

    # -- encoding ------------------------------------------------------------

    def _video_hooks(self):
        if self.video_mod.mode is DecomposeMode.NONE:
            return {}
        return {
            layer: (lambda x, l=layer: self.video_mod.apply(l, x))
            for layer in self.video_mod.layers
        }

    def _text_hooks(self):
        hooks = {
            layer: (lambda w, l=layer: self.text_mod.apply(l, w))
            for layer in self.text_mod.layers
        }
        token_hooks = {}
        if self.config.text_lowrank:
            token_hooks = {
                layer: (lambda x, l=layer: self.text_mod.apply_wordlevel(l, x))
                for layer in self.text_mod.layers
            }
        return hooks, token_hooks

    def encode_texts(self, tokens):
        """Normalized sentence embeddings (Q, D_t) for a token batch."""
        hooks, token_hooks = self._text_hooks()
        _, z = encode_text(tokens, self.store, self.tcfg, modulate=hooks,
                           modulate_tokens=token_hooks)
        return text_embedding(z)

    def _pick_sentences(self, videos, candidates):
        """Index of the most video-aligned candidate per video (no grad)."""
        with no_grad():
            _, f_last = encode_video(videos, self.store, self.vcfg, modulate=self._video_hooks())
        pooled = f_last.data.mean(axis=-2)
        probe = pooled @ self.proj_w.data + self.proj_b.data
        scores = probe @ np.asarray(candidates).T
        return scores.argmax(axis=-1)

    def encode_video_features(self, videos, candidates=None, sel_key=("eval",)):
        """Per-layer features and final frame features, all hooks applied.

        ``candidates``: detached (Q, D_t) sentence embeddings used by
        text-conditioned selection -- the batch's sentences in training,
        the full query set at evaluation.
        """
        videos = np.asarray(videos, dtype=np.float64)
        if videos.ndim == 4:
            videos = videos[None]
        cfg = self.config
        attention = {}
        if cfg.asa:
            mode = SelectionMode(cfg.selection)
            w_star = None
            if mode in (SelectionMode.TEXT_TOP_K, SelectionMode.TEXT_BOTTOM_K):
                if candidates is None:
                    raise InputError("text-conditioned selection needs candidate sentences")
                idx = self._pick_sentences(videos, candidates)
                w_star = np.asarray(candidates)[idx]
            sel_rng = rng_for(cfg.seed, "randsel", *sel_key)
            axes = WarpAxes(cfg.warp_axes)

            def make_attention(layer):
                def attend(x_in, q, k, v, heads):
                    mask = selection_masks(
                        mode, cfg.top_k, x_in.data[..., 1:, :], w_star=w_star,
                        proj_w=self.proj_w.data, proj_b=self.proj_b.data,
                        cls_feats=x_in.data[..., 0, :], rng=sel_rng,
                    )
                    return asa_block_attention(
                        x_in, q, k, v, heads, self.offsets, mask,
                        axes=axes, interp=cfg.warp_interp,
                    )
                return attend

            attention = {layer: make_attention(layer) for layer in cfg.visual_adapter_layers()}
        return encode_video(videos, self.store, self.vcfg,
                            modulate=self._video_hooks(), attention=attention)

    def encode_videos(self, videos, candidates=None, sel_key=("eval",)):
        """Normalized video embeddings (V, D_t)."""
        videos = np.asarray(videos, dtype=np.float64)
        if videos.ndim == 4:
            videos = videos[None]
        _, f_last = self.encode_video_features(videos, candidates, sel_key)
        emb = video_embedding(f_last, self.proj_w, self.proj_b)
        return T.reshape(emb, (videos.shape[0], self.tcfg.dim))

    # -- objective -------------------------------------------------------------

    def batch_scores(self, videos, tokens, sel_key=("eval",)):
        """(similarity Tensor, video emb, text emb) for paired batches."""
        z = self.encode_texts(tokens)
        v = self.encode_videos(videos, candidates=z.data, sel_key=sel_key)
        return similarity(v, z), v, z

    def batch_loss(self, videos, tokens, sel_key):
        scores, _, _ = self.batch_scores(videos, tokens, sel_key=sel_key)
        return contrastive_loss(scores, self.log_tau)

    # -- bookkeeping -------------------------------------------------------------

    def group_counts(self, trainable=True):
        return {
            name: self.store.num_elements(trainable=trainable, prefix=prefix)
            for name, prefix in ADAPTER_GROUPS.items()
        }

    def backbone_hash(self):
        return self.store.hash_bytes("backbone/")
