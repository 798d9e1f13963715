"""Hierarchical multi-head segmentation network.

Image encoder (with four skip "details"), a context encoder made of
bidirectional 1D dilated blocks, and a single decoder whose penultimate
features feed one 1x1 head per hierarchy level.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..tensorcore import (
    LayerSpec,
    ShapeError,
    Tensor,
    add_n,
    concat_channels,
    conv2d,
    conv_transpose2d,
    maxpool2d,
    relu,
    softmax_ce_map,
)
from .schema import ClassSchema, get_schema

VARIANTS = ("highres", "noprior", "lowres", "dilated2d", "lowres_tl")
ENCODER_STRIDE = 16


@dataclass
class NetworkConfig:
    variant: str = "highres"
    base_width: int = 8
    dilation_rates: Tuple[int, ...] = (1, 2, 4, 8)
    num_bdb: int = 4
    schema: str = "document"
    lowres_size: int = 232
    desk_scale: int = 1
    seed: int = 0

    def __post_init__(self):
        self.dilation_rates = tuple(int(r) for r in self.dilation_rates)
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if len(self.dilation_rates) != 4 or any(
            b <= a for a, b in zip(self.dilation_rates, self.dilation_rates[1:])
        ) or self.dilation_rates[0] < 1:
            raise ValueError(f"dilation_rates must be 4 strictly increasing positive ints, got {self.dilation_rates}")
        if self.num_bdb < 0:
            raise ValueError("num_bdb must be >= 0")
        if self.variant == "lowres_tl" and self.schema != "tl":
            self.schema = "tl"
        get_schema(self.schema)
        if self.desk_scale < 1 or self.base_width % self.desk_scale:
            raise ValueError(f"base_width {self.base_width} not divisible by desk_scale {self.desk_scale}")
        if self.width < 1:
            raise ValueError("effective width must be >= 1")

    @property
    def width(self) -> int:
        return self.base_width // self.desk_scale

    @property
    def class_schema(self) -> ClassSchema:
        return get_schema(self.schema)

    @property
    def uses_prior(self) -> bool:
        return self.variant in ("highres", "dilated2d")

    @property
    def single_pass(self) -> bool:
        return self.variant in ("lowres", "lowres_tl")

    @property
    def in_channels(self) -> int:
        return 1 + (self.class_schema.prior_channels if self.uses_prior else 0)

    def to_dict(self) -> Dict:
        d = asdict(self)
        d["dilation_rates"] = list(self.dilation_rates)
        return d

    @classmethod
    def from_dict(cls, d: Dict) -> "NetworkConfig":
        return cls(**d)


@dataclass
class FeaturePack:
    trunk: Tensor
    details: Tuple[Tensor, Tensor, Tensor, Tensor]
    scales: Tuple[int, int, int, int] = (1, 2, 4, 8)
    trunk_scale: int = ENCODER_STRIDE


def _conv(cin, cout, k=3, stride=1):
    return LayerSpec("conv", kh=k, kw=k, cin=cin, cout=cout, stride=stride)


def layer_table(config: NetworkConfig) -> Dict[str, LayerSpec]:
    """Ordered name -> spec map of every parametrised layer."""
    b = config.width
    layers: Dict[str, LayerSpec] = {}
    layers["enc.c1"] = _conv(config.in_channels, b)
    layers["enc.c2"] = _conv(b, b)
    layers["enc.c3"] = _conv(b, 2 * b, stride=2)
    layers["enc.c4"] = _conv(2 * b, 4 * b)
    layers["enc.c5"] = _conv(4 * b, 8 * b)
    layers["enc.c6"] = _conv(8 * b, 16 * b)

    c = 16 * b
    branch = c // 4
    for k in range(config.num_bdb):
        for axis in ("v", "h"):
            for i, r in enumerate(config.dilation_rates):
                if config.variant == "dilated2d":
                    spec = LayerSpec("conv", kh=3, kw=3, cin=c, cout=branch, dilation=(r, r))
                elif axis == "v":
                    spec = LayerSpec("conv", kh=9, kw=1, cin=c, cout=branch, dilation=(r, 1))
                else:
                    spec = LayerSpec("conv", kh=1, kw=9, cin=c, cout=branch, dilation=(1, r))
                layers[f"ce{k}.{axis}.r{i}"] = spec
            layers[f"ce{k}.{axis}.fuse"] = _conv(4 * branch, c, k=1)

    # decoder: (upsample, conv, concat detail) from 1/16 back to full resolution
    skip = {4: 16 * b, 3: 8 * b, 2: 4 * b, 1: b}
    cin = c
    for s in (4, 3, 2, 1):
        up = skip[s] // 2
        layers[f"dec.up{s}"] = LayerSpec("conv_transpose", kh=2, kw=2, cin=cin, cout=up, stride=2)
        layers[f"dec.c{s}"] = _conv(up, up)
        cin = up + skip[s]
    layers["dec.pen"] = _conv(cin, cin)
    for li, n in enumerate(config.class_schema.class_counts):
        layers[f"head.{li}"] = _conv(cin, n, k=1)
    return layers


def _fan_in(spec: LayerSpec) -> int:
    if spec.kind == "conv_transpose":
        return spec.cin * max(1, (spec.kh * spec.kw) // (spec.stride * spec.stride))
    return spec.fan_in


class SegNet:
    def __init__(self, config: NetworkConfig, params: Dict[str, Tensor]):
        self.config = config
        self.schema = config.class_schema
        self.layers = layer_table(config)
        self.params = params
        for name, spec in self.layers.items():
            w = params[f"{name}.w"]
            if w.shape != spec.weight_shape:
                raise ShapeError(f"parameter {name}.w has shape {w.shape}, expected {spec.weight_shape}")

    # ----------------------------------------------------------------- layers
    def _apply(self, name: str, x: Tensor, activate: bool = True) -> Tensor:
        spec = self.layers[name]
        w, b = self.params[f"{name}.w"], self.params[f"{name}.b"]
        if spec.kind == "conv_transpose":
            y = conv_transpose2d(x, spec, w, b)
        else:
            y = conv2d(x, spec, w, b)
        return relu(y) if activate else y

    def encode_image(self, x: Tensor) -> FeaturePack:
        if x.data.ndim != 4 or x.shape[1] != self.config.in_channels:
            raise ShapeError(f"expected input (B, {self.config.in_channels}, H, W), got {x.shape}")
        h, w = x.shape[2:]
        if h % ENCODER_STRIDE or w % ENCODER_STRIDE:
            raise ShapeError(f"input {h}x{w} is not divisible by the encoder stride {ENCODER_STRIDE}")
        d1 = self._apply("enc.c2", self._apply("enc.c1", x))
        d2 = self._apply("enc.c4", self._apply("enc.c3", d1))
        d3 = self._apply("enc.c5", maxpool2d(d2))
        d4 = self._apply("enc.c6", maxpool2d(d3))
        trunk = maxpool2d(d4)
        return FeaturePack(trunk, (d1, d2, d3, d4))

    def bdb(self, x: Tensor, k: int) -> Tensor:
        """One vertical-then-horizontal bank of four parallel dilated convs."""
        for axis in ("v", "h"):
            branches = [self._apply(f"ce{k}.{axis}.r{i}", x) for i in range(len(self.config.dilation_rates))]
            x = self._apply(f"ce{k}.{axis}.fuse", concat_channels(branches))
        return x

    def context_encode(self, x: Tensor) -> Tensor:
        for k in range(self.config.num_bdb):
            x = self.bdb(x, k)
        return x

    def decode(self, trunk: Tensor, details: Sequence[Tensor]) -> List[Tensor]:
        x = trunk
        for s in (4, 3, 2, 1):
            x = self._apply(f"dec.c{s}", self._apply(f"dec.up{s}", x))
            detail = details[s - 1]
            if detail.shape[2:] != x.shape[2:]:
                raise ShapeError(f"detail_{s} is {detail.shape[2:]}, decoder stage is {x.shape[2:]}")
            x = concat_channels([x, detail])
        pen = self._apply("dec.pen", x)
        return [self._apply(f"head.{li}", pen, activate=False) for li in range(self.schema.num_levels)]

    def forward(self, x: Tensor) -> List[Tensor]:
        pack = self.encode_image(x)
        return self.decode(self.context_encode(pack.trunk), pack.details)

    __call__ = forward

    # ----------------------------------------------------------------- bookkeeping
    def parameter_count(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    def load_state_dict(self, tensors: Dict[str, np.ndarray]) -> None:
        for k, p in self.params.items():
            if k not in tensors:
                raise KeyError(f"checkpoint lacks parameter {k}")
            if tensors[k].shape != p.shape:
                raise ShapeError(f"checkpoint {k} has shape {tensors[k].shape}, expected {p.shape}")
            p.data = np.array(tensors[k], dtype=np.float32)

    def config_blob(self) -> bytes:
        return json.dumps({"network": self.config.to_dict(), "schema": self.schema.to_dict()},
                          sort_keys=True).encode("utf-8")


def build(config: NetworkConfig, seed: Optional[int] = None) -> SegNet:
    """Fan-in scaled uniform init (He), zero biases, deterministic per seed."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    params: Dict[str, Tensor] = {}
    for name, spec in layer_table(config).items():
        bound = np.sqrt(6.0 / _fan_in(spec))
        w = rng.uniform(-bound, bound, size=spec.weight_shape).astype(np.float32)
        params[f"{name}.w"] = Tensor(w, requires_grad=True, name=f"{name}.w")
        params[f"{name}.b"] = Tensor(np.zeros(spec.cout, np.float32), requires_grad=True, name=f"{name}.b")
    return SegNet(config, params)


def loss_terms(logits: Sequence[Tensor], gt: Sequence[np.ndarray], schema: ClassSchema) -> List[Tensor]:
    """Per-level mean pixel cross-entropy."""
    if len(logits) != schema.num_levels or len(gt) != schema.num_levels:
        raise ShapeError(f"expected {schema.num_levels} levels, got {len(logits)} logits / {len(gt)} masks")
    terms = []
    for li, (lg, labels) in enumerate(zip(logits, gt)):
        labels = np.asarray(labels)
        n_cls = schema.class_counts[li]
        if lg.shape[1] != n_cls:
            raise ShapeError(f"level {li} logits have {lg.shape[1]} channels, schema has {n_cls}")
        if labels.size and (labels.min() < 0 or labels.max() >= n_cls):
            raise ValueError(f"level {li} label outside class set [0, {n_cls})")
        terms.append(softmax_ce_map(lg, labels))
    return terms


def hierarchical_loss(logits: Sequence[Tensor], gt: Sequence[np.ndarray], schema: ClassSchema) -> Tensor:
    """Unweighted sum over levels of per-pixel softmax cross-entropy."""
    return add_n(loss_terms(logits, gt, schema))


def save_model(net: SegNet, path) -> None:
    from ..tensorcore import save_checkpoint

    save_checkpoint(path, net.config_blob(), net.state_dict())


def load_model(path) -> SegNet:
    """Rebuild a network from the config blob and weights of a checkpoint file."""
    from ..tensorcore import load_checkpoint

    blob, tensors = load_checkpoint(path)
    meta = json.loads(blob.decode("utf-8"))
    net = build(NetworkConfig.from_dict(meta["network"]))
    net.load_state_dict(tensors)
    return net
