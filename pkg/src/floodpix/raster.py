"""Tile and label ingestion, split manifests, and dataset statistics.

On-disk raster format: little-endian float32, row-major, band-sequential
binary payload (``<stem>.f32``) next to a JSON sidecar (``<stem>.json``)
with ``{width, height, band_ids, tile_id, region}``. Labels are int8
payloads (``<stem>.i8``, -1=NoData, 0=Dry, 1=Water) with a
``{width, height}`` sidecar. A split manifest is a JSON array of entries
``{tile_id, region, rasters: [...], labels: ...}`` with paths relative to
a data root.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .bands import validate_band_id

LABEL_NODATA = -1
LABEL_DRY = 0
LABEL_WATER = 1

SPLIT_NAMES = ("train", "valid", "test", "bolivia")

RASTER_SUFFIX = ".f32"
LABEL_SUFFIX = ".i8"


class RasterError(Exception):
    """Raised for unreadable, inconsistent or truncated raster data."""


@dataclass
class LabelGrid:
    """Per-pixel ground truth; int8 grid of {-1: NoData, 0: Dry, 1: Water}."""

    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int8)
        if self.labels.ndim != 2:
            raise RasterError("label grid must be 2-D")
        bad = ~np.isin(self.labels, (LABEL_NODATA, LABEL_DRY, LABEL_WATER))
        if bad.any():
            raise RasterError("label grid contains values outside {-1, 0, 1}")

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


@dataclass
class Tile:
    """One multi-band raster chip; all band grids share height x width."""

    tile_id: str
    region: str
    bands: dict[str, np.ndarray]
    valid_mask: np.ndarray

    def __post_init__(self):
        shape = self.valid_mask.shape
        for band_id, grid in self.bands.items():
            if grid.shape != shape:
                raise RasterError(
                    f"tile {self.tile_id!r}: band {band_id!r} shape {grid.shape} != {shape}"
                )

    @property
    def height(self) -> int:
        return self.valid_mask.shape[0]

    @property
    def width(self) -> int:
        return self.valid_mask.shape[1]

    def band(self, band_id: str) -> np.ndarray:
        try:
            return self.bands[band_id]
        except KeyError:
            raise RasterError(
                f"tile {self.tile_id!r} is missing band {band_id!r}"
            ) from None


@dataclass
class ManifestEntry:
    tile_id: str
    region: str
    rasters: list[Path]
    labels: Path


@dataclass
class SplitManifest:
    split_name: str
    entries: list[ManifestEntry]

    def __post_init__(self):
        seen = set()
        for entry in self.entries:
            if entry.tile_id in seen:
                raise RasterError(
                    f"duplicate tile_id {entry.tile_id!r} in split {self.split_name!r}"
                )
            seen.add(entry.tile_id)


@dataclass
class DatasetStats:
    """Class fractions over all pixels and region fractions over valid area."""

    class_fractions: dict[str, float]
    region_fractions: dict[str, float]
    total_pixels: int = 0
    valid_pixels: int = 0
    class_counts: dict[str, int] = field(default_factory=dict)
    region_counts: dict[str, int] = field(default_factory=dict)


def write_raster(stem: Path, bands: dict[str, np.ndarray], tile_id: str, region: str) -> Path:
    """Write a band map to ``<stem>.f32`` + ``<stem>.json``; returns the payload path."""
    stem = Path(stem)
    band_ids = list(bands)
    grids = []
    height = width = None
    for band_id in band_ids:
        validate_band_id(band_id)
        grid = np.asarray(bands[band_id], dtype="<f4")
        if grid.ndim != 2:
            raise RasterError(f"band {band_id!r} is not a 2-D grid")
        if height is None:
            height, width = grid.shape
        elif grid.shape != (height, width):
            raise RasterError(f"band {band_id!r} shape {grid.shape} != {(height, width)}")
        grids.append(grid)
    payload = stem.with_suffix(RASTER_SUFFIX)
    stem.parent.mkdir(parents=True, exist_ok=True)
    np.concatenate([g.reshape(1, height, width) for g in grids]).tofile(payload)
    sidecar = {
        "width": int(width),
        "height": int(height),
        "band_ids": band_ids,
        "tile_id": tile_id,
        "region": region,
    }
    stem.with_suffix(".json").write_text(json.dumps(sidecar, indent=2) + "\n")
    return payload


def read_raster(payload: Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a canonical raster payload; returns (band map, sidecar dict)."""
    payload = Path(payload)
    sidecar_path = payload.with_suffix(".json")
    if not payload.exists():
        raise RasterError(f"raster payload not found: {payload}")
    if not sidecar_path.exists():
        raise RasterError(f"raster sidecar not found: {sidecar_path}")
    sidecar = json.loads(sidecar_path.read_text())
    width, height = int(sidecar["width"]), int(sidecar["height"])
    band_ids = list(sidecar["band_ids"])
    for band_id in band_ids:
        try:
            validate_band_id(band_id)
        except ValueError as exc:
            raise RasterError(f"{sidecar_path}: {exc}") from None
    data = np.fromfile(payload, dtype="<f4")
    expected = width * height * len(band_ids)
    if data.size != expected:
        raise RasterError(
            f"{payload}: payload holds {data.size} values, expected {expected}"
        )
    cube = data.reshape(len(band_ids), height, width)
    return {band_id: cube[i] for i, band_id in enumerate(band_ids)}, sidecar


def write_labels(stem: Path, grid: np.ndarray) -> Path:
    stem = Path(stem)
    grid = np.asarray(grid, dtype=np.int8)
    if grid.ndim != 2:
        raise RasterError("label grid must be 2-D")
    stem.parent.mkdir(parents=True, exist_ok=True)
    payload = stem.with_suffix(LABEL_SUFFIX)
    grid.tofile(payload)
    sidecar = {"width": int(grid.shape[1]), "height": int(grid.shape[0])}
    stem.with_suffix(".json").write_text(json.dumps(sidecar, indent=2) + "\n")
    return payload


def read_labels(payload: Path) -> LabelGrid:
    payload = Path(payload)
    sidecar_path = payload.with_suffix(".json")
    if not payload.exists():
        raise RasterError(f"label payload not found: {payload}")
    if not sidecar_path.exists():
        raise RasterError(f"label sidecar not found: {sidecar_path}")
    sidecar = json.loads(sidecar_path.read_text())
    width, height = int(sidecar["width"]), int(sidecar["height"])
    data = np.fromfile(payload, dtype=np.int8)
    if data.size != width * height:
        raise RasterError(
            f"{payload}: payload holds {data.size} values, expected {width * height}"
        )
    return LabelGrid(data.reshape(height, width))


def save_manifest(path: Path, entries: Iterable[dict]) -> Path:
    """Write a manifest as a JSON array of entry dicts with relative paths."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(list(entries), indent=2, sort_keys=True) + "\n")
    return path


def load_manifest(path: Path, data_root: Path | None = None, split_name: str | None = None) -> SplitManifest:
    """Load and validate a split manifest; every referenced path must resolve."""
    path = Path(path)
    if not path.exists():
        raise RasterError(f"manifest not found: {path}")
    root = Path(data_root) if data_root is not None else path.parent
    raw = json.loads(path.read_text())
    if not isinstance(raw, list):
        raise RasterError(f"{path}: manifest must be a JSON array of entries")
    entries = []
    for item in raw:
        rasters = [root / p for p in item["rasters"]]
        labels = root / item["labels"]
        for candidate in [*rasters, labels]:
            if not candidate.exists():
                raise RasterError(f"{path}: referenced file not found: {candidate}")
        entries.append(
            ManifestEntry(
                tile_id=str(item["tile_id"]),
                region=str(item["region"]),
                rasters=rasters,
                labels=labels,
            )
        )
    if split_name is None:
        split_name = path.stem
    return SplitManifest(split_name=split_name, entries=entries)


def load_tile(entry: ManifestEntry) -> tuple[Tile, LabelGrid]:
    """Load one manifest entry into a Tile plus its LabelGrid.

    The validity mask is false wherever the label is NoData or any band
    value is non-finite. Dimensions of every raster and the label grid
    must agree.
    """
    label_grid = read_labels(entry.labels)
    shape = label_grid.labels.shape
    bands: dict[str, np.ndarray] = {}
    for raster_path in entry.rasters:
        band_map, sidecar = read_raster(raster_path)
        if (int(sidecar["height"]), int(sidecar["width"])) != shape:
            raise RasterError(
                f"{raster_path}: raster is {sidecar['height']}x{sidecar['width']}"
                f" but labels {entry.labels} are {shape[0]}x{shape[1]}"
            )
        for band_id, grid in band_map.items():
            if band_id in bands:
                raise RasterError(f"{raster_path}: duplicate band {band_id!r} for tile {entry.tile_id!r}")
            bands[band_id] = grid
    if not bands:
        raise RasterError(f"entry {entry.tile_id!r} references no raster bands")
    valid = label_grid.labels != LABEL_NODATA
    for grid in bands.values():
        valid &= np.isfinite(grid)
    tile = Tile(tile_id=entry.tile_id, region=entry.region, bands=bands, valid_mask=valid)
    return tile, label_grid


def iter_tiles(manifest: SplitManifest):
    for entry in manifest.entries:
        yield load_tile(entry)


def dataset_statistics(*manifests: SplitManifest) -> DatasetStats:
    """Class fractions over all pixels (NoData included) and region fractions over valid area."""
    if not manifests or not any(m.entries for m in manifests):
        raise RasterError("dataset_statistics needs at least one tile")
    class_counts = {"dry": 0, "water": 0, "nodata": 0}
    region_counts: dict[str, int] = {}
    total = 0
    for manifest in manifests:
        for entry in manifest.entries:
            tile, label_grid = load_tile(entry)
            labels = label_grid.labels
            total += labels.size
            class_counts["dry"] += int(np.count_nonzero(labels == LABEL_DRY))
            class_counts["water"] += int(np.count_nonzero(labels == LABEL_WATER))
            class_counts["nodata"] += int(np.count_nonzero(labels == LABEL_NODATA))
            valid = int(np.count_nonzero(tile.valid_mask))
            region_counts[tile.region] = region_counts.get(tile.region, 0) + valid
    valid_total = sum(region_counts.values())
    class_fractions = {k: v / total for k, v in class_counts.items()}
    region_fractions = {k: (v / valid_total if valid_total else 0.0) for k, v in sorted(region_counts.items())}
    return DatasetStats(
        class_fractions=class_fractions,
        region_fractions=region_fractions,
        total_pixels=total,
        valid_pixels=valid_total,
        class_counts=class_counts,
        region_counts=dict(sorted(region_counts.items())),
    )


def merge_statistics(parts: Sequence[DatasetStats]) -> DatasetStats:
    """Pixel-count-weighted merge of disjoint statistics."""
    if not parts:
        raise RasterError("nothing to merge")
    class_counts = {"dry": 0, "water": 0, "nodata": 0}
    region_counts: dict[str, int] = {}
    total = 0
    for part in parts:
        total += part.total_pixels
        for key in class_counts:
            class_counts[key] += part.class_counts[key]
        for region, count in part.region_counts.items():
            region_counts[region] = region_counts.get(region, 0) + count
    valid_total = sum(region_counts.values())
    return DatasetStats(
        class_fractions={k: v / total for k, v in class_counts.items()},
        region_fractions={k: v / valid_total for k, v in sorted(region_counts.items())},
        total_pixels=total,
        valid_pixels=valid_total,
        class_counts=class_counts,
        region_counts=dict(sorted(region_counts.items())),
    )
