"""CONV/FC lowering to GEMM and SA-sized tiling.

Tensor layouts (all row-major, flattened or shaped):

* CONV weights ``(out_channels, in_channels, kernel_h, kernel_w)``
* CONV inputs ``(in_channels, input_h, input_w)`` (batch 1)
* FC weights ``(out_features, in_features)``
* FC inputs ``(batch, in_features)``

The GEMM is ``O = W @ X`` with ``W`` of shape ``M x K`` and ``X`` of shape
``K x N``. For CONV, ``K`` is flattened channel-major, then kernel row, then
kernel column, identically for weight rows and input columns.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .matrix import as_matrix


@dataclass(frozen=True)
class OperatorSpec:
    kind: str  # "CONV" or "FC"
    in_channels: int = 0
    out_channels: int = 0
    kernel_h: int = 1
    kernel_w: int = 1
    input_h: int = 1
    input_w: int = 1
    stride: int = 1
    padding: int = 0
    in_features: int = 0
    out_features: int = 0
    batch: int = 1
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", self.kind.upper())
        if self.kind == "CONV":
            counts = (self.in_channels, self.out_channels, self.kernel_h, self.kernel_w,
                      self.input_h, self.input_w, self.stride)
            if min(counts) < 1 or self.padding < 0:
                raise ValueError(f"CONV counts must be positive: {self}")
            for size, k in ((self.input_h, self.kernel_h), (self.input_w, self.kernel_w)):
                span = size + 2 * self.padding - k
                if span < 0 or span % self.stride:
                    raise ValueError(
                        f"input {size} with kernel {k}, padding {self.padding}, stride "
                        f"{self.stride} does not give an integer output size"
                    )
        elif self.kind == "FC":
            if min(self.in_features, self.out_features, self.batch) < 1:
                raise ValueError(f"FC counts must be positive: {self}")
        else:
            raise ValueError(f"operator kind must be CONV or FC, got {self.kind!r}")

    @classmethod
    def conv(cls, in_channels, out_channels, kernel, input_hw, stride=1, padding=0, name=""):
        kh, kw = (kernel, kernel) if isinstance(kernel, int) else kernel
        ih, iw = (input_hw, input_hw) if isinstance(input_hw, int) else input_hw
        return cls("CONV", in_channels, out_channels, kh, kw, ih, iw, stride, padding, name=name)

    @classmethod
    def fc(cls, in_features, out_features, batch=1, name=""):
        return cls("FC", in_features=in_features, out_features=out_features, batch=batch, name=name)

    @classmethod
    def from_dict(cls, d: dict) -> "OperatorSpec":
        return cls(**d)

    def to_dict(self) -> dict:
        keep = ("kind", "name") + (
            ("in_channels", "out_channels", "kernel_h", "kernel_w", "input_h", "input_w", "stride", "padding")
            if self.kind == "CONV" else ("in_features", "out_features", "batch")
        )
        d = asdict(self)
        return {k: d[k] for k in keep if k != "name" or d[k]}

    @property
    def out_h(self) -> int:
        return (self.input_h + 2 * self.padding - self.kernel_h) // self.stride + 1

    @property
    def out_w(self) -> int:
        return (self.input_w + 2 * self.padding - self.kernel_w) // self.stride + 1

    @property
    def gemm_dims(self) -> tuple[int, int, int]:
        """``(M, K, N)`` of the lowered GEMM."""
        if self.kind == "FC":
            return self.out_features, self.in_features, self.batch
        return (self.out_channels, self.in_channels * self.kernel_h * self.kernel_w,
                self.out_h * self.out_w)

    @property
    def weight_size(self) -> int:
        m, k, _ = self.gemm_dims
        return m * k

    @property
    def input_size(self) -> int:
        if self.kind == "FC":
            return self.batch * self.in_features
        return self.in_channels * self.input_h * self.input_w


def load_operator(path) -> OperatorSpec:
    with open(path) as fh:
        return OperatorSpec.from_dict(json.load(fh))


def _flat(tensor, size: int, what: str) -> np.ndarray:
    a = np.asarray(tensor, dtype=np.float32).reshape(-1)
    if a.size != size:
        raise ValueError(f"{what} has {a.size} elements, expected {size}")
    return a


def im2col_weights(spec: OperatorSpec, kernel) -> np.ndarray:
    """``out_channels x (in_channels*kh*kw)``; row i is filter i flattened."""
    if spec.kind != "CONV":
        raise ValueError("im2col_weights needs a CONV operator")
    m, k, _ = spec.gemm_dims
    return _flat(kernel, m * k, "kernel tensor").reshape(m, k).copy()


def im2col_inputs(spec: OperatorSpec, inputs) -> np.ndarray:
    """``(in_channels*kh*kw) x (out_h*out_w)``; column j is the receptive field of pixel j."""
    if spec.kind != "CONV":
        raise ValueError("im2col_inputs needs a CONV operator")
    x = _flat(inputs, spec.input_size, "input tensor").reshape(spec.in_channels, spec.input_h, spec.input_w)
    p, s = spec.padding, spec.stride
    if p:
        x = np.pad(x, ((0, 0), (p, p), (p, p)))
    oh, ow = spec.out_h, spec.out_w
    cols = np.empty((spec.in_channels, spec.kernel_h, spec.kernel_w, oh, ow), dtype=np.float32)
    for ky in range(spec.kernel_h):
        for kx in range(spec.kernel_w):
            cols[:, ky, kx] = x[:, ky:ky + s * (oh - 1) + 1:s, kx:kx + s * (ow - 1) + 1:s]
    return cols.reshape(spec.gemm_dims[1], oh * ow)


def lower_operator(spec: OperatorSpec, weights, inputs) -> tuple[np.ndarray, np.ndarray]:
    """Return the GEMM operands ``(W, X)`` of an operator."""
    if spec.kind == "CONV":
        return im2col_weights(spec, weights), im2col_inputs(spec, inputs)
    m, k, n = spec.gemm_dims
    w = _flat(weights, m * k, "FC weights").reshape(m, k).copy()
    x = _flat(inputs, n * k, "FC inputs").reshape(n, k).T.copy()
    return w, x


@dataclass
class TileGrid:
    """A matrix cut into ``tile_rows x tile_cols`` blocks, zero-padded at the edges."""

    tile_rows: int
    tile_cols: int
    rows: int
    cols: int
    tiles: list

    @property
    def grid_rows(self) -> int:
        return -(-self.rows // self.tile_rows)

    @property
    def grid_cols(self) -> int:
        return -(-self.cols // self.tile_cols)

    def tile(self, i: int, j: int) -> np.ndarray:
        return self.tiles[i * self.grid_cols + j]

    def reassemble(self) -> np.ndarray:
        full = np.zeros((self.grid_rows * self.tile_rows, self.grid_cols * self.tile_cols), dtype=np.float32)
        for i in range(self.grid_rows):
            for j in range(self.grid_cols):
                full[i * self.tile_rows:(i + 1) * self.tile_rows,
                     j * self.tile_cols:(j + 1) * self.tile_cols] = self.tile(i, j)
        return full[: self.rows, : self.cols].copy()


def tile_matrix(m, tile_rows: int, tile_cols: int) -> TileGrid:
    if tile_rows < 1 or tile_cols < 1:
        raise ValueError("tile dims must be >= 1")
    m = as_matrix(m)
    rows, cols = m.shape
    gr, gc = -(-rows // tile_rows), -(-cols // tile_cols)
    padded = np.zeros((gr * tile_rows, gc * tile_cols), dtype=np.float32)
    padded[:rows, :cols] = m
    tiles = [
        padded[i * tile_rows:(i + 1) * tile_rows, j * tile_cols:(j + 1) * tile_cols].copy()
        for i in range(gr) for j in range(gc)
    ]
    return TileGrid(tile_rows, tile_cols, rows, cols, tiles)
