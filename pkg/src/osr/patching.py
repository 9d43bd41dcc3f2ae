"""Analysis patches, scan grids and overlap-averaged reassembly.

An analysis patch for the output point ``(i, j)`` holds ``L_t`` rows reaching
upward from row ``i`` and ``N_x`` columns spanning ``j - n_L .. j + n_R``.
``AnalysisPatch.data[k, l]`` is ``Y[i - k, j - n_L + l]``. The recurrent model
consumes the rows top to bottom, so the batched helpers here return
*time-ordered* sequences: row ``t`` of a sequence is image row
``i - (L_t - 1) + t``.

Indices falling outside the image are mirrored with the edge sample repeated
(``d c b a | a b c d | d c b a``), the same convention the blur uses.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PATCH2PIXEL",
    "PATCH2PATCH",
    "PatchGeometry",
    "AnalysisPatch",
    "Accumulator",
    "mirror_index",
    "extract_patch",
    "patch_sequences",
    "target_sequences",
    "iterate_anchors",
    "training_anchors",
    "scatter_patch",
    "scatter_patches",
    "select_output_pixel",
    "apply_patchwise",
]

PATCH2PIXEL = "p2x"
PATCH2PATCH = "p2p"
_MODE_ALIASES = {
    "p2x": PATCH2PIXEL, "patch2pixel": PATCH2PIXEL,
    "p2p": PATCH2PATCH, "patch2patch": PATCH2PATCH,
}


@dataclass(frozen=True)
class PatchGeometry:
    L_t: int = 9
    N_x: int = 9
    n_L: int | None = None
    n_R: int | None = None
    mode: str = PATCH2PATCH
    stride: int | None = None

    def __post_init__(self):
        mode = _MODE_ALIASES.get(str(self.mode).lower())
        if mode is None:
            raise ValueError(f"unknown patch mode {self.mode!r}")
        object.__setattr__(self, "mode", mode)
        if self.L_t < 1 or self.N_x < 1:
            raise ValueError("patch dimensions must be >= 1")
        n_L = (self.N_x - 1) // 2 if self.n_L is None else self.n_L
        n_R = self.N_x - 1 - n_L if self.n_R is None else self.n_R
        if n_L < 0 or n_R < 0 or n_L + n_R != self.N_x - 1:
            raise ValueError(f"need n_L + n_R == N_x - 1, got {n_L} + {n_R} != {self.N_x - 1}")
        object.__setattr__(self, "n_L", n_L)
        object.__setattr__(self, "n_R", n_R)
        stride = max(1, self.N_x // 2) if self.stride is None else self.stride
        if stride < 1:
            raise ValueError("stride must be >= 1")
        object.__setattr__(self, "stride", stride)
        if self.L_t < 7 or self.N_x < 7:
            warnings.warn(f"analysis patch {self.L_t}x{self.N_x} is below the recommended 7x7",
                          stacklevel=3)

    @property
    def P(self) -> int:
        """Width of each decoded time step."""
        return 1 if self.mode == PATCH2PIXEL else self.N_x

    @property
    def output_shape(self) -> tuple[int, int]:
        """Shape of one estimate handed to :func:`scatter_patch`."""
        return (1, 1) if self.mode == PATCH2PIXEL else (self.L_t, self.N_x)

    def to_dict(self) -> dict:
        return {"L_t": self.L_t, "N_x": self.N_x, "n_L": self.n_L, "n_R": self.n_R,
                "mode": self.mode, "stride": self.stride}

    @classmethod
    def from_dict(cls, d: dict) -> "PatchGeometry":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return cls(**{k: d[k] for k in ("L_t", "N_x", "n_L", "n_R", "mode", "stride")})


@dataclass
class AnalysisPatch:
    data: np.ndarray
    anchor: tuple[int, int]

    @property
    def sequence(self) -> np.ndarray:
        """Rows in time order (topmost image row first)."""
        return self.data[::-1]


@dataclass
class Accumulator:
    sum_plane: np.ndarray
    weight_plane: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.weight_plane is None:
            self.weight_plane = np.zeros_like(self.sum_plane)

    @classmethod
    def zeros(cls, h: int, w: int) -> "Accumulator":
        return cls(np.zeros((h, w)), np.zeros((h, w)))

    def merge(self, other: "Accumulator") -> "Accumulator":
        return Accumulator(self.sum_plane + other.sum_plane, self.weight_plane + other.weight_plane)

    def finalize(self) -> np.ndarray:
        out = np.zeros_like(self.sum_plane)
        hit = self.weight_plane > 0
        out[hit] = self.sum_plane[hit] / self.weight_plane[hit]
        return out


def mirror_index(idx, n: int):
    """Map any integer index onto ``0..n-1`` by symmetric reflection."""
    m = np.mod(idx, 2 * n)
    return np.where(m >= n, 2 * n - 1 - m, m)


def _check_anchor(shape, i, j):
    h, w = shape
    if not (0 <= i < h and 0 <= j < w):
        raise IndexError(f"anchor ({i}, {j}) outside {h}x{w} plane")


def extract_patch(plane, geom: PatchGeometry, i: int, j: int) -> AnalysisPatch:
    plane = np.asarray(plane, dtype=np.float64)
    _check_anchor(plane.shape, i, j)
    h, w = plane.shape
    rows = mirror_index(i - np.arange(geom.L_t), h)
    cols = mirror_index(j + np.arange(-geom.n_L, geom.n_R + 1), w)
    return AnalysisPatch(plane[rows[:, None], cols[None, :]], (int(i), int(j)))


def _footprint(geom: PatchGeometry, anchors: np.ndarray, width: int):
    anchors = np.asarray(anchors, dtype=np.int64).reshape(-1, 2)
    rows = anchors[:, :1] - (geom.L_t - 1) + np.arange(geom.L_t)[None, :]
    if width == 1:
        cols = anchors[:, 1:2]
    else:
        cols = anchors[:, 1:2] - geom.n_L + np.arange(geom.N_x)[None, :]
    return rows, cols


def patch_sequences(plane, geom: PatchGeometry, anchors) -> np.ndarray:
    """Time-ordered input sequences, shape ``(B, L_t, N_x)``."""
    plane = np.asarray(plane)
    h, w = plane.shape
    rows, cols = _footprint(geom, anchors, geom.N_x)
    return plane[mirror_index(rows, h)[:, :, None], mirror_index(cols, w)[:, None, :]]


def target_sequences(plane, geom: PatchGeometry, anchors) -> np.ndarray:
    """Time-ordered training targets, shape ``(B, L_t, P)``.

    Patch2Pixel targets are the output column segment ending at ``(i, j)``;
    Patch2Patch targets cover the same footprint as the input patch.
    """
    plane = np.asarray(plane)
    h, w = plane.shape
    rows, cols = _footprint(geom, anchors, geom.P)
    return plane[mirror_index(rows, h)[:, :, None], mirror_index(cols, w)[:, None, :]]


def _grid(extent: int, size: int, stride: int) -> np.ndarray:
    last = max(extent - size, 0)
    # a step wider than the patch would leave uncovered gaps
    starts = list(range(0, last + 1, min(stride, size)))
    if starts[-1] != last:
        starts.append(last)
    return np.array(starts, dtype=np.int64)


def iterate_anchors(h: int, w: int, geom: PatchGeometry) -> np.ndarray:
    """Anchors ``(i, j)`` of a full scan, row-major, as a ``(K, 2)`` array.

    Patch2Pixel visits every pixel. Patch2Patch places footprints on a stride
    grid kept inside the image, with the last row and column of footprints
    forced so every pixel is covered.
    """
    if h < 1 or w < 1:
        raise ValueError("image dimensions must be >= 1")
    if geom.mode == PATCH2PIXEL:
        ii, jj = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    else:
        tops = _grid(h, geom.L_t, geom.stride)
        lefts = _grid(w, geom.N_x, geom.stride)
        ii, jj = np.meshgrid(np.minimum(tops + geom.L_t - 1, h - 1),
                             np.minimum(lefts + geom.n_L, w - 1), indexing="ij")
    return np.stack([ii.ravel(), jj.ravel()], axis=1)


def training_anchors(h: int, w: int, geom: PatchGeometry) -> np.ndarray:
    """Every anchor usable for training.

    Patch2Pixel uses all pixels; Patch2Patch uses every footprint lying fully
    inside the image so targets never come from mirrored samples.
    """
    if geom.mode == PATCH2PIXEL:
        return iterate_anchors(h, w, geom)
    if h < geom.L_t or w < geom.N_x:
        raise ValueError(f"image {h}x{w} smaller than patch {geom.L_t}x{geom.N_x}")
    ii, jj = np.meshgrid(np.arange(geom.L_t - 1, h), np.arange(geom.n_L, w - geom.n_R),
                         indexing="ij")
    return np.stack([ii.ravel(), jj.ravel()], axis=1)


def scatter_patches(acc: Accumulator, estimates, anchors, geom: PatchGeometry) -> Accumulator:
    """Add a batch of estimates into ``acc``.

    ``estimates`` has shape ``(B,) + geom.output_shape``; footprint pixels
    outside the image are dropped.
    """
    est = np.asarray(estimates, dtype=np.float64)
    anchors = np.asarray(anchors, dtype=np.int64).reshape(-1, 2)
    if est.shape[1:] != geom.output_shape or est.shape[0] != anchors.shape[0]:
        raise ValueError(f"estimates {est.shape} do not match {anchors.shape[0]} anchors "
                         f"of output shape {geom.output_shape}")
    h, w = acc.sum_plane.shape
    if geom.mode == PATCH2PIXEL:
        rows, cols = anchors[:, :1], anchors[:, 1:2]
    else:
        rows, cols = _footprint(geom, anchors, geom.N_x)
    r = np.broadcast_to(rows[:, :, None], est.shape)
    c = np.broadcast_to(cols[:, None, :], est.shape)
    keep = (r >= 0) & (r < h) & (c >= 0) & (c < w)
    np.add.at(acc.sum_plane, (r[keep], c[keep]), est[keep])
    np.add.at(acc.weight_plane, (r[keep], c[keep]), 1.0)
    return acc


def scatter_patch(acc: Accumulator, patch_estimate, anchor, geom: PatchGeometry) -> Accumulator:
    est = np.asarray(patch_estimate, dtype=np.float64)
    if est.shape != geom.output_shape:
        raise ValueError(f"estimate shape {est.shape} != {geom.output_shape}")
    return scatter_patches(acc, est[None], np.asarray(anchor)[None], geom)


def select_output_pixel(segment) -> float:
    seg = np.asarray(segment, dtype=np.float64).ravel()
    if seg.size == 0:
        raise ValueError("empty output segment")
    return float(seg[-1])


def apply_patchwise(plane, geom: PatchGeometry, predict, batch_size: int = 4096) -> np.ndarray:
    """Decompose ``plane``, map each sequence through ``predict``, reassemble.

    ``predict`` takes time-ordered inputs ``(B, L_t, N_x)`` and returns
    time-ordered outputs ``(B, L_t, P)``. Patch2Pixel keeps the last time
    step of each output; Patch2Patch averages overlapping footprints.
    """
    plane = np.asarray(plane, dtype=np.float64)
    h, w = plane.shape
    anchors = iterate_anchors(h, w, geom)
    acc = Accumulator.zeros(h, w)
    for start in range(0, len(anchors), batch_size):
        chunk = anchors[start:start + batch_size]
        out = np.asarray(predict(patch_sequences(plane, geom, chunk)), dtype=np.float64)
        if geom.mode == PATCH2PIXEL:
            out = out[:, -1:, -1:]
        scatter_patches(acc, out, chunk, geom)
    return acc.finalize()
