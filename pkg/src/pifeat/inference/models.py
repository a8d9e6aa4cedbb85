"""The three forward-only architectures and their weight layouts.

``baseline_se3``
    bi-LSTM(32) -> bi-LSTM(128) -> dense(6) at every timestep.
``ionet_polar``
    bi-LSTM(128) -> bi-LSTM(256) -> dense(2) on the last timestep.
``embedded_cnn``
    input viewed as a ``(T, F, 1)`` map -> conv 3x3x16 + ReLU -> conv 1x1x4
    + ReLU -> flatten -> dense(2).

Tensor names for the recurrent models follow ``torch.nn.LSTM``
(``lstm1.weight_ih_l0``, ``..._reverse``) so a PyTorch state dict exports
one-to-one. Dense weights are ``(out, in)``; conv kernels are
``(kh, kw, C_in, C_out)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..dataset import PolarOdometry
from ..errors import ArchitectureMismatch, ShapeMismatch
from .archive import WeightArchive
from .layers import LstmParams, conv2d_forward, dense_forward, lstm_forward

ARCHITECTURES = ("baseline_se3", "ionet_polar", "embedded_cnn")
INPUT_DIMS = {"raw": 6, "averaged": 6, "preintegrated": 9}
HIDDEN_SIZES = {"baseline_se3": (32, 128), "ionet_polar": (128, 256)}
CNN_KERNELS = ((3, 3, 16), (1, 1, 4))


@dataclass(frozen=True)
class ModelSpec:
    architecture: str
    input_kind: str = "preintegrated"
    window: int = 200
    n: int = 10

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ArchitectureMismatch(f"unknown architecture {self.architecture!r}")
        if self.input_kind not in INPUT_DIMS:
            raise ArchitectureMismatch(f"unknown input kind {self.input_kind!r}")
        if self.input_kind != "raw" and self.window % self.n:
            raise ArchitectureMismatch(f"window {self.window} not divisible by n={self.n}")

    @property
    def input_dim(self) -> int:
        return INPUT_DIMS[self.input_kind]

    @property
    def steps(self) -> int:
        return self.window if self.input_kind == "raw" else self.window // self.n

    @property
    def input_shape(self) -> tuple[int, int]:
        return (self.steps, self.input_dim)

    @property
    def output_dim(self) -> int:
        return 6 if self.architecture == "baseline_se3" else 2

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        return HIDDEN_SIZES.get(self.architecture, ())

    def metadata(self) -> dict:
        meta = {
            "architecture": self.architecture,
            "input_kind": self.input_kind,
            "integration_factor": self.n,
            "window": self.window,
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
        }
        if self.architecture == "embedded_cnn":
            meta.update(conv_kernels=[list(k) for k in CNN_KERNELS], conv_activation="relu", head="flatten_dense")
        else:
            meta.update(hidden_sizes=list(self.hidden_sizes), head="per_step" if self.architecture == "baseline_se3" else "last_step")
        return meta

    @classmethod
    def from_metadata(cls, meta: dict) -> ModelSpec:
        try:
            return cls(meta["architecture"], meta["input_kind"], int(meta["window"]), int(meta["integration_factor"]))
        except KeyError as exc:
            raise ArchitectureMismatch(f"archive metadata lacks {exc}") from None

    def tensor_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes: dict[str, tuple[int, ...]] = {}
        if self.architecture == "embedded_cnn":
            (k1h, k1w, c1), (k2h, k2w, c2) = CNN_KERNELS
            ho = self.steps - k1h + 1 - k2h + 1
            wo = self.input_dim - k1w + 1 - k2w + 1
            if ho < 1 or wo < 1:
                raise ArchitectureMismatch(f"input {self.input_shape} too small for the CNN kernels")
            shapes["conv1.kernel"] = (k1h, k1w, 1, c1)
            shapes["conv1.bias"] = (c1,)
            shapes["conv2.kernel"] = (k2h, k2w, c1, c2)
            shapes["conv2.bias"] = (c2,)
            shapes["dense.weight"] = (self.output_dim, ho * wo * c2)
            shapes["dense.bias"] = (self.output_dim,)
            return shapes
        d = self.input_dim
        for layer, h in enumerate(self.hidden_sizes, start=1):
            for suffix in ("", "_reverse"):
                shapes[f"lstm{layer}.weight_ih_l0{suffix}"] = (4 * h, d)
                shapes[f"lstm{layer}.weight_hh_l0{suffix}"] = (4 * h, h)
                shapes[f"lstm{layer}.bias_ih_l0{suffix}"] = (4 * h,)
                shapes[f"lstm{layer}.bias_hh_l0{suffix}"] = (4 * h,)
            d = 2 * h
        shapes["head.weight"] = (self.output_dim, d)
        shapes["head.bias"] = (self.output_dim,)
        return shapes

    def parameter_count(self) -> int:
        return sum(math.prod(s) for s in self.tensor_shapes().values())


def init_archive(spec: ModelSpec, seed: int | None = 0, scale: float | None = None) -> WeightArchive:
    """Archive with uniform random weights (``seed=None`` gives all zeros).

    Default scale is ``1/sqrt(fan_in)`` per tensor, as PyTorch initialises LSTMs.
    """
    rng = None if seed is None else np.random.default_rng(seed)
    tensors = {}
    for name, shape in sorted(spec.tensor_shapes().items()):
        if rng is None:
            tensors[name] = np.zeros(shape, dtype=np.float32)
            continue
        if scale is not None:
            s = scale
        elif name.startswith("lstm"):
            s = 1.0 / math.sqrt(shape[1] if "weight_hh" in name else (shape[0] // 4))
        elif name.endswith("kernel"):
            s = 1.0 / math.sqrt(math.prod(shape[:3]))
        else:
            fan_in = shape[1] if len(shape) == 2 else shape[0]
            s = 1.0 / math.sqrt(fan_in)
        tensors[name] = rng.uniform(-s, s, shape).astype(np.float32)
    return WeightArchive(tensors, spec.metadata())


def check_archive(spec: ModelSpec, archive: WeightArchive) -> None:
    arch = archive.metadata.get("architecture")
    if arch != spec.architecture:
        raise ArchitectureMismatch(f"archive holds {arch!r}, model spec is {spec.architecture!r}")
    meta_spec = ModelSpec.from_metadata(archive.metadata)
    if meta_spec != spec:
        raise ArchitectureMismatch(f"archive was built for {meta_spec}, not {spec}")
    expected = spec.tensor_shapes()
    got = set(archive.tensors)
    if got != set(expected):
        missing = sorted(set(expected) - got)
        extra = sorted(got - set(expected))
        raise ArchitectureMismatch(f"tensor set mismatch; missing {missing}, unexpected {extra}")
    for name, shape in expected.items():
        if archive.tensors[name].shape != shape:
            raise ShapeMismatch(f"{name}: expected {shape}, got {archive.tensors[name].shape}")


def _lstm_params(archive: WeightArchive, layer: int, reverse: bool) -> LstmParams:
    sfx = "_reverse" if reverse else ""
    p = f"lstm{layer}."
    return LstmParams(
        archive[p + "weight_ih_l0" + sfx],
        archive[p + "weight_hh_l0" + sfx],
        archive[p + "bias_ih_l0" + sfx],
        archive[p + "bias_hh_l0" + sfx],
    )


def _forward(spec: ModelSpec, archive: WeightArchive, x: np.ndarray, debug: bool) -> np.ndarray:
    def finite(a: np.ndarray, where: str) -> np.ndarray:
        if debug and not np.all(np.isfinite(a)):
            raise FloatingPointError(f"non-finite activations after {where}")
        return a

    if spec.architecture == "embedded_cnn":
        y = conv2d_forward(x[:, :, None], archive["conv1.kernel"], archive["conv1.bias"])
        y = finite(y, "conv1")
        y = finite(conv2d_forward(y, archive["conv2.kernel"], archive["conv2.bias"]), "conv2")
        return finite(dense_forward(y.reshape(-1), archive["dense.weight"], archive["dense.bias"]), "dense")
    y = x
    for layer in range(1, len(spec.hidden_sizes) + 1):
        y = lstm_forward(y, _lstm_params(archive, layer, False), _lstm_params(archive, layer, True))
        y = finite(y, f"lstm{layer}")
    if spec.architecture == "ionet_polar":
        y = y[-1]
    return finite(dense_forward(y, archive["head.weight"], archive["head.bias"]), "head")


def run_model(spec: ModelSpec, archive: WeightArchive, inputs, debug: bool = False):
    """Evaluate a model on one window.

    Returns a ``(T, 6)`` float32 array of per-step se(3) tangents for
    ``baseline_se3`` and a :class:`PolarOdometry` for the polar models.
    """
    check_archive(spec, archive)
    x = np.asarray(inputs, dtype=np.float32)
    if x.ndim != 2:
        raise ShapeMismatch(f"model input must be 2-D (T, F), got shape {x.shape}")
    if x.shape != spec.input_shape:
        raise ArchitectureMismatch(f"archive expects input {spec.input_shape}, got {x.shape}")
    y = _forward(spec, archive, x, debug)
    if spec.architecture == "baseline_se3":
        return y
    return PolarOdometry(float(y[0]), float(y[1]))
