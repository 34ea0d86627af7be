"""Experiment configuration: typed fields, flat key=value files, presets."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from .attention import SelectionMode, WarpAxes
from .backbone import TextConfig, VisualConfig
from .exceptions import ConfigError
from .modulation import DecomposeMode


@dataclass
class ExperimentConfig:
    seed: int = 0
    # visual tower
    layers: int = 4
    dim_v: int = 32
    heads_v: int = 4
    patch: int = 4
    frame_h: int = 8
    frame_w: int = 8
    frames: int = 6
    channels: int = 3
    # text tower
    text_layers: int = 3
    dim_t: int = 24
    heads_t: int = 4
    vocab: int = 64
    max_words: int = 8
    # adapters
    rank: int = 3
    top_k: int = 3
    selection: str = "text_top_k"
    warp_axes: str = "both"
    decompose: str = "temporal"
    adapter_layers: str = "all"
    warp_interp: str = "bilinear"
    asa: bool = True
    text_modulation: bool = True
    text_lowrank: bool = False
    text_rank: int = 3
    train_head: bool = True
    # optimizer
    lr: float = 1e-4
    warmup: float = 0.1
    epochs: int = 5
    batch_size: int = 8
    # synthetic data
    pairs: int = 16
    data_seed: int = -1
    # inference post-processing
    dsl: bool = False
    dsl_inv_temp: float = 100.0

    def __post_init__(self):
        self.validate()

    # -- derived views -----------------------------------------------------

    def visual(self):
        return VisualConfig(
            layers=self.layers, dim=self.dim_v, heads=self.heads_v, patch=self.patch,
            frame_h=self.frame_h, frame_w=self.frame_w, frames=self.frames,
            channels=self.channels,
        )

    def text(self):
        return TextConfig(
            layers=self.text_layers, dim=self.dim_t, vocab=self.vocab,
            max_words=self.max_words, heads=self.heads_t,
        )

    def visual_adapter_layers(self):
        return _layer_set(self.adapter_layers, self.layers)

    def text_adapter_layers(self):
        # explicit lists are validated against the visual tower; the text
        # tower takes whatever part of the selection it has layers for
        return _layer_set(self.adapter_layers, self.text_layers, clip=True)

    @property
    def effective_data_seed(self):
        return self.seed if self.data_seed < 0 else self.data_seed

    def validate(self):
        vcfg = self.visual()
        self.text()
        try:
            SelectionMode(self.selection)
            WarpAxes(self.warp_axes)
            decompose = DecomposeMode(self.decompose)
        except ValueError as err:
            raise ConfigError(str(err))
        if decompose is not DecomposeMode.NONE and not 1 <= self.rank <= min(self.frames, self.dim_v):
            raise ConfigError(
                f"rank {self.rank} outside [1, min(T={self.frames}, D_v={self.dim_v})]"
            )
        if not 0 <= self.top_k <= vcfg.patches:
            raise ConfigError(f"top_k {self.top_k} outside [0, N={vcfg.patches}]")
        if self.warp_interp not in ("bilinear", "nearest"):
            raise ConfigError(f"unknown warp_interp {self.warp_interp!r}")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if not 0.0 <= self.warmup <= 1.0:
            raise ConfigError("warmup fraction must lie in [0, 1]")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.pairs < 2:
            raise ConfigError("need at least 2 synthetic pairs")
        if self.dsl_inv_temp <= 0:
            raise ConfigError("dsl_inv_temp must be positive")
        if self.text_lowrank and not self.text_modulation:
            raise ConfigError("text_lowrank requires text_modulation")
        if self.text_lowrank and not 1 <= self.text_rank <= min(self.max_words + 1, self.dim_t):
            raise ConfigError(
                f"text_rank {self.text_rank} outside [1, min(words+1, D_t)]"
            )
        self.visual_adapter_layers()
        self.text_adapter_layers()


def _layer_set(spec, total, clip=False):
    """Parse an adapter layer selector: all | last4 | comma list (1-based)."""
    if spec == "all":
        return list(range(1, total + 1))
    if spec == "last4":
        return list(range(max(1, total - 3), total + 1))
    try:
        layers = sorted({int(tok) for tok in spec.split(",") if tok.strip()})
    except ValueError:
        raise ConfigError(f"cannot parse adapter_layers {spec!r}")
    if not layers:
        raise ConfigError("adapter_layers selected no layers")
    if clip:
        return [l for l in layers if 1 <= l <= total]
    if layers[0] < 1 or layers[-1] > total:
        raise ConfigError(f"adapter_layers {layers} outside [1, {total}]")
    return layers


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _parse_value(field, raw):
    raw = raw.strip()
    if field.type == "bool":
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"cannot parse boolean {field.name} = {raw!r}")
    if field.type == "int":
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"cannot parse integer {field.name} = {raw!r}")
    if field.type == "float":
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"cannot parse float {field.name} = {raw!r}")
    return raw


def loads(text):
    """Parse the flat ``key = value`` config format; unknown keys error."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = body.split("=", 1)
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate config key {key!r}")
        values[key] = _parse_value(_FIELDS[key], raw)
    return ExperimentConfig(**values)


def load(path):
    with open(path, "r", encoding="utf-8") as fh:
        return loads(fh.read())


def dumps(config):
    lines = [f"{name} = {value}" for name, value in asdict(config).items()]
    return "\n".join(lines) + "\n"


def save(config, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(config))


def toy_config(**overrides):
    """Desk-scale defaults small enough for whole-model gradient checks."""
    return ExperimentConfig(**overrides)


def vit_b32_shaped_config(**overrides):
    """Adapter shapes matching a CLIP ViT-B/32 backbone (count checks only)."""
    base = dict(
        layers=12, dim_v=768, heads_v=12, patch=32, frame_h=224, frame_w=224,
        frames=12, channels=3,
        text_layers=12, dim_t=512, heads_t=8, vocab=49408, max_words=76,
    )
    base.update(overrides)
    return ExperimentConfig(**base)
