"""Feature-tapped MLPs, a classifier head, a small VAE and their task losses."""
from __future__ import annotations

import json
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import tensor as T
from .tensor import Record, ShapeError, Tensor

ACTIVATIONS = ("tanh", "relu", "none")
_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


@dataclass(frozen=True)
class LayerSpec:
    name: str
    in_width: int
    out_width: int
    activation: str = "tanh"

    def __post_init__(self):
        if not _NAME.match(self.name):
            raise ValueError(f"layer name {self.name!r} is not an identifier")
        if self.in_width < 1 or self.out_width < 1:
            raise ValueError(f"layer {self.name}: widths must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"layer {self.name}: activation must be one of {ACTIVATIONS}")


def _activate(x: Tensor, kind: str) -> Tensor:
    if kind == "tanh":
        return T.tanh(x)
    if kind == "relu":
        return T.relu(x)
    return x


def _dense(x: Tensor, spec: LayerSpec, params: Mapping[str, Tensor], prefix: str) -> Tensor:
    w = params[f"{prefix}{spec.name}.weight"]
    b = params[f"{prefix}{spec.name}.bias"]
    return _activate(T.bias_add(T.matmul(x, w), b), spec.activation)


class FeatureNet:
    """Stack of dense layers; outputs of the ``taps`` layers are exported as features."""

    def __init__(self, layers: Sequence[LayerSpec], taps: Sequence[str] | None = None):
        layers = list(layers)
        if not layers:
            raise ValueError("FeatureNet needs at least one layer")
        names = [l.name for l in layers]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate layer names in {names}")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_width != nxt.in_width:
                raise ValueError(
                    f"layer {nxt.name} expects width {nxt.in_width}, "
                    f"but {prev.name} produces {prev.out_width}")
        taps = list(names if taps is None else taps)
        order = {n: i for i, n in enumerate(names)}
        missing = [t for t in taps if t not in order]
        if missing:
            raise ValueError(f"unknown tap layers {missing}")
        idx = [order[t] for t in taps]
        if idx != sorted(set(idx)):
            raise ValueError("taps must be a subsequence of the layer order")
        self.layers = layers
        self.taps = taps
        self.params: dict[str, np.ndarray] = {}
        for l in layers:
            self.params[f"{l.name}.weight"] = np.zeros((l.in_width, l.out_width))
            self.params[f"{l.name}.bias"] = np.zeros(l.out_width)

    @property
    def in_width(self) -> int:
        return self.layers[0].in_width

    @property
    def out_width(self) -> int:
        return self.layers[-1].out_width

    def apply(self, x: Tensor, params: Mapping[str, Tensor], prefix: str = ""):
        feats = []
        taps = set(self.taps)
        for spec in self.layers:
            x = _dense(x, spec, params, prefix)
            if spec.name in taps:
                feats.append(x)
        return x, feats


class _Composite:
    """Flat, prefixed view over the parameter dicts of the parts of a model."""

    parts: dict

    @property
    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, part in self.parts.items():
            for name, arr in part.items():
                out[f"{prefix}.{name}"] = arr
        return out

    def set_params(self, values: Mapping[str, np.ndarray]):
        for prefix, part in self.parts.items():
            for name in part:
                key = f"{prefix}.{name}"
                new = np.array(values[key], dtype=np.float64)
                if new.shape != part[name].shape:
                    raise ShapeError(f"{key}: expected {part[name].shape}, got {new.shape}")
                part[name] = new


def _head_params(spec: LayerSpec) -> dict[str, np.ndarray]:
    return {f"{spec.name}.weight": np.zeros((spec.in_width, spec.out_width)),
            f"{spec.name}.bias": np.zeros(spec.out_width)}


class ClassifierModel(_Composite):
    def __init__(self, features: FeatureNet, n_classes: int):
        if n_classes < 2:
            raise ValueError("a classifier needs at least 2 classes")
        self.features = features
        self.head = LayerSpec("head", features.out_width, n_classes, "none")
        self._head = _head_params(self.head)

    @property
    def parts(self):
        return {"features": self.features.params, "head": self._head}

    @property
    def in_width(self) -> int:
        return self.features.in_width

    @property
    def n_classes(self) -> int:
        return self.head.out_width


class VAEModel(_Composite):
    """MLP encoder -> (mu, log_var) heads -> reparameterized latent -> MLP decoder."""

    def __init__(self, encoder: FeatureNet, decoder: FeatureNet, latent_width: int):
        if decoder.in_width != latent_width:
            raise ValueError("decoder input width must equal the latent width")
        if decoder.out_width != encoder.in_width:
            raise ValueError("decoder output width must equal the data width")
        self.encoder = encoder
        self.decoder = decoder
        self.latent_width = latent_width
        self.mu_head = LayerSpec("mu", encoder.out_width, latent_width, "none")
        self.logvar_head = LayerSpec("logvar", encoder.out_width, latent_width, "none")
        self._heads = {**_head_params(self.mu_head), **_head_params(self.logvar_head)}

    @property
    def parts(self):
        return {"encoder": self.encoder.params, "heads": self._heads, "decoder": self.decoder.params}

    @property
    def in_width(self) -> int:
        return self.encoder.in_width


def mlp_classifier(in_width: int = 2, hidden: Sequence[int] = (32, 32, 16), n_classes: int = 3,
                   activation: str = "tanh", taps: Sequence[str] | None = None) -> ClassifierModel:
    """Default toy classifier: every hidden layer is tapped unless ``taps`` says otherwise."""
    widths = [in_width, *hidden]
    layers = [LayerSpec(f"h{i + 1}", a, b, activation) for i, (a, b) in enumerate(zip(widths, widths[1:]))]
    return ClassifierModel(FeatureNet(layers, taps), n_classes)


def mlp_vae(data_width: int, hidden: Sequence[int] = (16, 16), latent_width: int = 2,
            activation: str = "tanh", taps: Sequence[str] | None = None) -> VAEModel:
    """Mirrored MLP VAE; distillation taps sit on encoder hidden layers only."""
    enc_w = [data_width, *hidden]
    enc = FeatureNet([LayerSpec(f"e{i + 1}", a, b, activation)
                      for i, (a, b) in enumerate(zip(enc_w, enc_w[1:]))], taps)
    dec_w = [latent_width, *reversed(hidden)]
    dec_layers = [LayerSpec(f"d{i + 1}", a, b, activation) for i, (a, b) in enumerate(zip(dec_w, dec_w[1:]))]
    dec_layers.append(LayerSpec("out", dec_w[-1], data_width, "none"))
    return VAEModel(enc, FeatureNet(dec_layers, taps=[]), latent_width)


def init_params(model, seed: int):
    """Zero-mean normal weights with std 1/sqrt(fan_in); zero biases.  Returns ``model``."""
    rng = np.random.default_rng(seed)
    new = {}
    for name, arr in model.params.items():
        if name.endswith(".weight"):
            new[name] = rng.standard_normal(arr.shape) / np.sqrt(arr.shape[0])
        else:
            new[name] = np.zeros(arr.shape)
    _assign(model, new)
    return model


def _assign(model, values: Mapping[str, np.ndarray]):
    if isinstance(model, FeatureNet):
        for name in model.params:
            model.params[name] = np.array(values[name], dtype=np.float64)
    else:
        model.set_params(values)


@dataclass
class Forward:
    """Result of one forward pass: output, tapped features and the bound leaves."""

    output: object
    features: list[Tensor]
    input: Tensor
    params: dict[str, Tensor] = field(default_factory=dict)


def _bind(model, record: Record | None, track_params: bool) -> dict[str, Tensor]:
    if record is not None and track_params:
        return {k: record.leaf(v) for k, v in model.params.items()}
    return {k: Tensor(v) for k, v in model.params.items()}


def forward_with_features(model, x, record: Record | None = None, *, track_params: bool = True,
                          noise: np.ndarray | None = None) -> Forward:
    """Run ``model`` on a batch, returning output plus tapped features.

    ``x`` may be an array (registered as a leaf of ``record`` when one is
    given) or an existing Tensor.  With ``track_params=False`` parameters enter
    as constants, which is what input-gradient oracles want.

    For a :class:`VAEModel` the output is ``(reconstruction, mu, log_var)``;
    ``noise`` supplies the reparameterization draw (``None`` decodes the mean).
    """
    if not isinstance(x, Tensor):
        x = record.leaf(x) if record is not None else Tensor(x)
    if x.value.ndim != 2 or x.shape[0] < 1:
        raise ShapeError(f"expected a (batch, width) input, got shape {x.shape}")
    if x.shape[1] != model.in_width:
        raise ShapeError(f"input width {x.shape[1]} does not match model width {model.in_width}")
    params = _bind(model, record, track_params)

    if isinstance(model, ClassifierModel):
        h, feats = model.features.apply(x, params, "features.")
        logits = _dense(h, model.head, params, "head.")
        return Forward(logits, feats, x, params)
    if isinstance(model, VAEModel):
        h, feats = model.encoder.apply(x, params, "encoder.")
        mu = _dense(h, model.mu_head, params, "heads.")
        log_var = _dense(h, model.logvar_head, params, "heads.")
        z = mu if noise is None else _reparam(mu, log_var, noise)
        recon, _ = model.decoder.apply(z, params, "decoder.")
        return Forward((recon, mu, log_var), feats, x, params)
    if isinstance(model, FeatureNet):
        out, feats = model.apply(x, params)
        return Forward(out, feats, x, params)
    raise TypeError(f"unsupported model type {type(model).__name__}")


def classification_loss(logits: Tensor, labels, reduction: str = "mean") -> Tensor:
    """Softmax cross-entropy, averaged (or summed) over the batch.

    Evaluated as ``logsumexp(z) - z_y`` with a detached per-row max shift so
    extreme logits stay finite.
    """
    labels = np.asarray(labels)
    if logits.value.ndim != 2:
        raise ShapeError(f"logits must be (batch, classes), got {logits.shape}")
    n, c = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"{labels.shape[0] if labels.ndim else 0} labels for {n} logit rows")
    if not np.issubdtype(labels.dtype, np.integer) or labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"labels must be integers in [0, {c})")
    onehot = np.zeros((n, c))
    onehot[np.arange(n), labels] = 1.0
    shift = logits.value.max(axis=1)
    shifted = T.subtract(logits, Tensor(np.repeat(shift[:, None], c, axis=1)))
    lse = T.log(T.sum(T.exp(shifted), axis=1))
    picked = T.sum(T.multiply(shifted, Tensor(onehot)), axis=1)
    per_sample = T.subtract(lse, picked)
    return T.mean(per_sample) if reduction == "mean" else T.sum(per_sample)


def vae_loss(reconstruction: Tensor, target, mu: Tensor, log_var: Tensor) -> Tensor:
    """Reconstruction MSE plus KL(q || N(0, I)), KL averaged over the batch, weight 1."""
    target = T.as_tensor(target)
    if reconstruction.shape != target.shape:
        raise ShapeError(f"reconstruction {reconstruction.shape} vs target {target.shape}")
    if mu.shape != log_var.shape:
        raise ShapeError(f"mu {mu.shape} vs log_var {log_var.shape}")
    mse = T.mean(T.square(T.subtract(reconstruction, target)))
    inner = T.subtract(T.add(T.exp(log_var), T.square(mu)), T.add(T.constant_like(mu, 1.0), log_var))
    batch = mu.shape[0] if mu.value.ndim else 1
    kl = T.scale(T.sum(inner), 0.5 / batch)
    return T.add(mse, kl)


def _reparam(mu: Tensor, log_var: Tensor, xi: np.ndarray) -> Tensor:
    xi = np.asarray(xi, dtype=np.float64)
    if xi.shape != mu.shape:
        raise ShapeError(f"noise {xi.shape} vs mu {mu.shape}")
    std = T.exp(T.scale(log_var, 0.5))
    return T.add(mu, T.multiply(std, Tensor(xi)))


def reparameterize(mu, log_var, seed: int) -> Tensor:
    """``mu + exp(log_var / 2) * xi`` with standard-normal ``xi`` drawn from ``seed``."""
    mu, log_var = T.as_tensor(mu), T.as_tensor(log_var)
    if mu.shape != log_var.shape:
        raise ShapeError(f"mu {mu.shape} vs log_var {log_var.shape}")
    xi = np.random.default_rng(seed).standard_normal(mu.shape)
    return _reparam(mu, log_var, xi)


# ---------------------------------------------------------------------------
# parameter files: <u64 LE manifest length><JSON manifest><float64 LE values>
# ---------------------------------------------------------------------------

PARAM_FORMAT = "icpd-params"


def save_params(model, path) -> None:
    params = model.params
    manifest = {
        "format": PARAM_FORMAT,
        "version": 1,
        "dtype": "<f8",
        "tensors": [{"name": k, "shape": list(v.shape)} for k, v in params.items()],
    }
    head = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for v in params.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_params(path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    if len(blob) < 8:
        raise ValueError(f"{path}: truncated parameter file")
    (n,) = struct.unpack("<Q", blob[:8])
    manifest = json.loads(blob[8:8 + n].decode("utf-8"))
    if manifest.get("format") != PARAM_FORMAT:
        raise ValueError(f"{path}: not an {PARAM_FORMAT} file")
    out = {}
    offset = 8 + n
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        chunk = blob[offset:offset + 8 * count]
        if len(chunk) != 8 * count:
            raise ValueError(f"{path}: truncated data for {entry['name']}")
        out[entry["name"]] = np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(shape)
        offset += 8 * count
    if offset != len(blob):
        raise ValueError(f"{path}: {len(blob) - offset} trailing bytes")
    return out


def load_into(model, path):
    _assign(model, load_params(path))
    return model
