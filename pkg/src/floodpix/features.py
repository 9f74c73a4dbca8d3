"""Water indexes, HSV decompositions, and composable per-pixel feature spaces.

A feature-space name is ``[SAR_] block (+ block)*`` over the blocks
OPT, O3, S2, RGB, RGBN, HSV(RGB), HSV(O3), cNDWI, cAWEI and SAR, where the
``SAR_`` prefix separates the SAR channels from the optical part of a
combined space. Raw optical blocks and HSV inputs are reflectance-scaled
(value / 10000) and clamped to [0, 1]; water indexes are computed on the
unclamped scaled values since they are ratios or small linear forms; SAR
channels are affinely mapped from decibels into [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import bands as B
from .raster import LABEL_WATER, LabelGrid, Tile
from .speckle import lee_sigma_filter

OPTICAL_SCALE = 10000.0
DEFAULT_SAR_BOUNDS = (-30.0, 0.0)

INDEX_KINDS = ("NDWI", "MNDWI", "AWEI", "AWEISH")

INDEX_BANDS = {
    "NDWI": (B.GREEN, B.NIR),
    "MNDWI": (B.GREEN, B.SWIR1),
    "AWEI": (B.GREEN, B.NIR, B.SWIR1, B.SWIR2),
    "AWEISH": (B.BLUE, B.GREEN, B.NIR, B.SWIR1, B.SWIR2),
}


class FeatureError(Exception):
    pass


@dataclass(frozen=True)
class Block:
    """One named transform block of a feature space."""

    name: str
    kind: str  # "raw" | "index" | "hsv" | "sar"
    payload: tuple[str, ...]

    @property
    def width(self) -> int:
        return len(self.payload)

    @property
    def column_names(self) -> tuple[str, ...]:
        if self.kind == "hsv":
            return tuple(f"{self.name}:{c}" for c in ("H", "S", "V"))
        return self.payload


def _raw(name: str, band_ids: tuple[str, ...]) -> Block:
    return Block(name, "raw", band_ids)


_OPT_BANDS = tuple(b for b in B.OPTICAL_BANDS if b not in B.COARSE_BANDS)
_O3_TRIPLE = (B.SWIR2, B.NIR, B.RED)  # SWIR-2 -> R slot, NIR -> G, Red -> B
_RGB_TRIPLE = (B.RED, B.GREEN, B.BLUE)

BLOCK_TABLE = {
    "OPT": _raw("OPT", _OPT_BANDS),
    "O3": _raw("O3", _O3_TRIPLE),
    "S2": _raw("S2", B.OPTICAL_BANDS),
    "RGB": _raw("RGB", _RGB_TRIPLE),
    "RGBN": _raw("RGBN", (B.RED, B.GREEN, B.BLUE, B.NIR)),
    "HSV(RGB)": Block("HSV(RGB)", "hsv", _RGB_TRIPLE),
    "HSV(O3)": Block("HSV(O3)", "hsv", _O3_TRIPLE),
    "cNDWI": Block("cNDWI", "index", ("NDWI", "MNDWI")),
    "cAWEI": Block("cAWEI", "index", ("AWEI", "AWEISH")),
}

SAR_BLOCK = Block("SAR", "sar", B.SAR_BANDS)

# The 23 named feature spaces evaluated by the experiment harness.
CANONICAL_FEATURE_SPACES = (
    "SAR",
    "OPT",
    "O3",
    "S2",
    "RGB",
    "RGBN",
    "HSV(RGB)",
    "HSV(O3)",
    "cNDWI",
    "cAWEI",
    "cAWEI+cNDWI",
    "HSV(O3)+cAWEI+cNDWI",
    "SAR_OPT",
    "SAR_O3",
    "SAR_S2",
    "SAR_RGB",
    "SAR_RGBN",
    "SAR_HSV(RGB)",
    "SAR_HSV(O3)",
    "SAR_cNDWI",
    "SAR_cAWEI",
    "SAR_cAWEI+cNDWI",
    "SAR_HSV(O3)+cAWEI+cNDWI",
)


@dataclass(frozen=True)
class FeatureSpaceSpec:
    name: str
    blocks: tuple[Block, ...]
    dimensionality: int

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(c for block in self.blocks for c in block.column_names)

    @property
    def uses_sar(self) -> bool:
        return any(block.kind == "sar" for block in self.blocks)

    def required_bands(self) -> tuple[str, ...]:
        needed: list[str] = []
        for block in self.blocks:
            if block.kind in ("raw", "hsv", "sar"):
                wanted = block.payload
            else:
                wanted = tuple(b for kind in block.payload for b in INDEX_BANDS[kind])
            for band in wanted:
                if band not in needed:
                    needed.append(band)
        return tuple(needed)


def parse_feature_space(name: str) -> FeatureSpaceSpec:
    """Parse a feature-space name into its ordered transform blocks."""
    text = name.strip()
    if not text:
        raise FeatureError("empty feature-space name")
    blocks: list[Block] = []
    optical_part = text
    if text == "SAR":
        return FeatureSpaceSpec(name="SAR", blocks=(SAR_BLOCK,), dimensionality=SAR_BLOCK.width)
    if text.startswith("SAR_"):
        blocks.append(SAR_BLOCK)
        optical_part = text[len("SAR_") :]
        if not optical_part:
            raise FeatureError(f"nothing follows the SAR_ prefix in {name!r}")
    for token in optical_part.split("+"):
        token = token.strip()
        if token == "SAR" or token.startswith("SAR_"):
            raise FeatureError(f"duplicate or misplaced SAR block in {name!r}")
        if token not in BLOCK_TABLE:
            raise FeatureError(f"unknown feature block {token!r} in {name!r}")
        blocks.append(BLOCK_TABLE[token])
    spec_blocks = tuple(blocks)
    return FeatureSpaceSpec(
        name=format_feature_space(spec_blocks),
        blocks=spec_blocks,
        dimensionality=sum(b.width for b in spec_blocks),
    )


def format_feature_space(blocks: Sequence[Block]) -> str:
    names = [b.name for b in blocks]
    if names and names[0] == "SAR":
        if len(names) == 1:
            return "SAR"
        return "SAR_" + "+".join(names[1:])
    return "+".join(names)


def normalize_band(band: np.ndarray, modality: str, sar_bounds=DEFAULT_SAR_BOUNDS) -> np.ndarray:
    """Map a band into [0, 1]; optical by reflectance scale, SAR affinely from dB."""
    grid = np.asarray(band, dtype=np.float64)
    if modality == B.OPTICAL:
        return np.clip(grid / OPTICAL_SCALE, 0.0, 1.0)
    if modality == B.SAR:
        lo, hi = sar_bounds
        if not hi > lo:
            raise FeatureError(f"bad SAR normalization bounds {sar_bounds!r}")
        return np.clip((grid - lo) / (hi - lo), 0.0, 1.0)
    raise FeatureError(f"unknown modality {modality!r}")


def compute_index(kind: str, tile: Tile) -> np.ndarray:
    """Evaluate one water index on a tile's reflectance-scaled bands."""
    if kind not in INDEX_BANDS:
        raise FeatureError(f"unknown index kind {kind!r}")
    for band in INDEX_BANDS[kind]:
        if band not in tile.bands:
            raise FeatureError(f"index {kind} needs band {band} missing on tile {tile.tile_id!r}")
    scaled = {band: np.asarray(tile.bands[band], dtype=np.float64) / OPTICAL_SCALE for band in INDEX_BANDS[kind]}
    if kind == "NDWI":
        num = scaled[B.GREEN] - scaled[B.NIR]
        den = scaled[B.GREEN] + scaled[B.NIR]
        return _safe_ratio(num, den)
    if kind == "MNDWI":
        num = scaled[B.GREEN] - scaled[B.SWIR1]
        den = scaled[B.GREEN] + scaled[B.SWIR1]
        return _safe_ratio(num, den)
    if kind == "AWEI":
        return 4.0 * (scaled[B.GREEN] - scaled[B.SWIR1]) - 0.25 * (scaled[B.NIR] + 11.0 * scaled[B.SWIR2])
    # AWEISH
    return (
        scaled[B.BLUE]
        + 2.5 * scaled[B.GREEN]
        - 1.5 * (scaled[B.NIR] + scaled[B.SWIR1])
        - 0.25 * scaled[B.SWIR2]
    )


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    # A vanishing denominator marks a pixel that is neither water- nor
    # land-like; score it 0.
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den != 0)
    return out


def hsv_transform(r: np.ndarray, g: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Hexcone HSV decomposition of normalized channels; H is scaled to [0, 1)."""
    channels = []
    for name, chan in (("r", r), ("g", g), ("b", b)):
        arr = np.asarray(chan, dtype=np.float64)
        finite = arr[np.isfinite(arr)]
        if finite.size and (finite.min() < -1e-6 or finite.max() > 1.0 + 1e-6):
            raise FeatureError(f"hsv input channel {name} outside [0, 1]")
        channels.append(np.clip(arr, 0.0, 1.0))
    r, g, b = channels
    v = np.maximum(np.maximum(r, g), b)
    mn = np.minimum(np.minimum(r, g), b)
    c = v - mn
    chromatic = c > 0
    safe_c = np.where(chromatic, c, 1.0)
    h6 = np.zeros_like(v)
    r_max = chromatic & (r == v)
    g_max = chromatic & ~r_max & (g == v)
    b_max = chromatic & ~r_max & ~g_max
    h6 = np.where(r_max, (g - b) / safe_c, h6)
    h6 = np.where(g_max, 2.0 + (b - r) / safe_c, h6)
    h6 = np.where(b_max, 4.0 + (r - g) / safe_c, h6)
    h = np.where(chromatic, (h6 / 6.0) % 1.0, 0.0)
    s = np.where(chromatic, c / np.where(v > 0, v, 1.0), 0.0)
    return h, s, v


@dataclass(frozen=True)
class TileSlice:
    tile_id: str
    region: str
    start: int
    stop: int


@dataclass
class FeatureMatrix:
    """Valid pixels of a tile set as rows of a dense feature matrix."""

    values: np.ndarray  # float32 (N, d)
    column_names: tuple[str, ...]
    labels: np.ndarray  # uint8 (N,), 0=dry 1=water
    tile_slices: list[TileSlice]
    pixel_index: np.ndarray  # uint32 flat pixel index within each tile

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def tile_rows(self, tile_slice: TileSlice) -> slice:
        return slice(tile_slice.start, tile_slice.stop)


def _block_grids(
    block: Block,
    tile: Tile,
    speckle: bool,
    sar_bounds,
    speckle_params: dict | None,
) -> list[np.ndarray]:
    if block.kind == "sar":
        grids = []
        for band in block.payload:
            grid = tile.band(band)
            if speckle:
                grid = lee_sigma_filter(grid, **(speckle_params or {}))
            grids.append(normalize_band(grid, B.SAR, sar_bounds))
        return grids
    if block.kind == "raw":
        return [normalize_band(tile.band(band), B.OPTICAL) for band in block.payload]
    if block.kind == "index":
        return [compute_index(kind, tile) for kind in block.payload]
    # hsv
    triple = [normalize_band(tile.band(band), B.OPTICAL) for band in block.payload]
    return list(hsv_transform(*triple))


def compute_feature_grids(
    spec: FeatureSpaceSpec,
    tile: Tile,
    speckle: bool = False,
    sar_bounds=DEFAULT_SAR_BOUNDS,
    speckle_params: dict | None = None,
) -> np.ndarray:
    """Full-tile feature cube of shape (height, width, dimensionality)."""
    for band in spec.required_bands():
        if band not in tile.bands:
            raise FeatureError(f"feature space {spec.name!r} needs band {band} missing on tile {tile.tile_id!r}")
    grids: list[np.ndarray] = []
    for block in spec.blocks:
        grids.extend(_block_grids(block, tile, speckle, sar_bounds, speckle_params))
    return np.stack(grids, axis=-1)


def build_feature_matrix(
    spec: FeatureSpaceSpec,
    tiles: Sequence[tuple[Tile, LabelGrid]],
    speckle: bool = False,
    sar_bounds=DEFAULT_SAR_BOUNDS,
    speckle_params: dict | None = None,
) -> FeatureMatrix:
    """Stack the valid pixels of every tile into one labelled feature matrix."""
    if not tiles:
        raise FeatureError("no tiles given")
    chunks = []
    label_chunks = []
    slices = []
    index_chunks = []
    start = 0
    for tile, label_grid in tiles:
        cube = compute_feature_grids(spec, tile, speckle, sar_bounds, speckle_params)
        mask = tile.valid_mask
        rows = cube[mask].astype(np.float32)
        if not np.isfinite(rows).all():
            raise FeatureError(f"non-finite feature values on valid pixels of tile {tile.tile_id!r}")
        chunks.append(rows)
        label_chunks.append((label_grid.labels[mask] == LABEL_WATER).astype(np.uint8))
        index_chunks.append(np.flatnonzero(mask.ravel()).astype(np.uint32))
        stop = start + rows.shape[0]
        slices.append(TileSlice(tile.tile_id, tile.region, start, stop))
        start = stop
    values = np.concatenate(chunks, axis=0) if chunks else np.empty((0, spec.dimensionality), np.float32)
    return FeatureMatrix(
        values=values,
        column_names=spec.column_names,
        labels=np.concatenate(label_chunks),
        tile_slices=slices,
        pixel_index=np.concatenate(index_chunks),
    )
