"""Trainable-parameter accounting with closed-form cross-checks.

Adapter tensors are instantiated (cheap at any scale) and enumerated
per group; each group count is verified against the closed form implied
by the factor shapes. The frozen backbone size is computed from the
same shape table the tower construction uses, without materializing
weights, so full-scale configurations can be audited instantly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import WarpAxes
from .backbone import _BLOCK_SHAPES
from .exceptions import ConsistencyError
from .model import ADAPTER_GROUPS, build_adapters
from .modulation import DecomposeMode
from .tensor import ParamStore


def _block_elements(dim):
    dims = {"D": dim, "4D": 4 * dim}
    return sum(int(np.prod([dims[s] for s in shape])) for _, _, shape in _BLOCK_SHAPES)


def backbone_elements(config):
    """Closed-form frozen parameter count for both towers."""
    vcfg, tcfg = config.visual(), config.text()
    pdim = vcfg.patch * vcfg.patch * vcfg.channels
    visual = (
        pdim * vcfg.dim + vcfg.dim  # patch projection
        + vcfg.dim  # CLS
        + (vcfg.patches + 1) * vcfg.dim  # positions
        + vcfg.layers * _block_elements(vcfg.dim)
    )
    text = (
        tcfg.vocab * tcfg.dim
        + (tcfg.max_words + 1) * tcfg.dim
        + tcfg.layers * _block_elements(tcfg.dim)
    )
    return visual + text


def closed_forms(config):
    """Per-group trainable counts implied by the adapter factor shapes."""
    vcfg, tcfg = config.visual(), config.text()
    t, s, d, r = vcfg.frames, vcfg.patches + 1, vcfg.dim, config.rank
    n_layers = len(config.visual_adapter_layers())
    mode = DecomposeMode(config.decompose)
    if mode is DecomposeMode.TEMPORAL:
        lorm_visual = n_layers * 2 * (t * r + r * d)
    elif mode is DecomposeMode.SPATIAL_TEMPORAL:
        lorm_visual = n_layers * 2 * (t * s * r + r * d)
    elif mode is DecomposeMode.SPATIAL_TEMPORAL_LAYER:
        lorm_visual = 2 * (n_layers * r + r * t * s * r + r * d)
    else:
        lorm_visual = 0

    lorm_text = 0
    if config.text_modulation:
        text_layers = len(config.text_adapter_layers())
        lorm_text = text_layers * 2 * tcfg.dim
        if config.text_lowrank:
            lorm_text += text_layers * 2 * (
                (tcfg.max_words + 1) * config.text_rank + config.text_rank * tcfg.dim
            )

    offsets = 0
    if config.asa:
        axes = WarpAxes(config.warp_axes)
        if axes is not WarpAxes.TEMPORAL_ONLY:
            offsets += vcfg.patches
        if axes is not WarpAxes.SPATIAL_ONLY:
            offsets += vcfg.frames

    head_trainable = config.train_head
    return {
        "lorm_visual": lorm_visual,
        "lorm_text": lorm_text,
        "asa_offsets": offsets,
        "proj": (vcfg.dim * tcfg.dim + tcfg.dim) if head_trainable else 0,
        "temperature": 1 if head_trainable else 0,
    }


@dataclass
class CountReport:
    groups: dict
    trainable_total: int
    backbone_total: int

    @property
    def trainable_fraction(self):
        return self.trainable_total / (self.trainable_total + self.backbone_total)

    def table(self):
        lines = [f"{'group':<14}{'params':>12}"]
        for name, count in self.groups.items():
            lines.append(f"{name:<14}{count:>12,}")
        lines.append(f"{'trainable':<14}{self.trainable_total:>12,}")
        lines.append(f"{'backbone':<14}{self.backbone_total:>12,}")
        lines.append(f"{'fraction':<14}{self.trainable_fraction:>12.4%}")
        return "\n".join(lines)


def count_params(config):
    """Enumerate adapter tensors per group and cross-check closed forms."""
    store = ParamStore()
    build_adapters(config, store)
    enumerated = {
        name: store.num_elements(trainable=True, prefix=prefix)
        for name, prefix in ADAPTER_GROUPS.items()
    }
    expected = closed_forms(config)
    for name in expected:
        if enumerated[name] != expected[name]:
            raise ConsistencyError(
                f"{name}: enumerated {enumerated[name]} != closed form {expected[name]}"
            )
    return CountReport(
        groups=enumerated,
        trainable_total=sum(enumerated.values()),
        backbone_total=backbone_elements(config),
    )
