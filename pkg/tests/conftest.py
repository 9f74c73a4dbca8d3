import numpy as np
import pytest

from floodpix.raster import LABEL_DRY, LABEL_NODATA, LabelGrid, Tile
from floodpix.synthetic import generate_correlated_dataset, generate_dataset


def make_tile(bands, labels=None, tile_id="t0", region="alpha"):
    """Tile + LabelGrid from raw band grids; labels default to all-dry."""
    first = next(iter(bands.values()))
    shape = np.asarray(first).shape
    if labels is None:
        labels = np.full(shape, LABEL_DRY, dtype=np.int8)
    labels = np.asarray(labels, dtype=np.int8)
    band_arrays = {k: np.asarray(v, dtype=np.float32) for k, v in bands.items()}
    valid = labels != LABEL_NODATA
    for grid in band_arrays.values():
        valid &= np.isfinite(grid)
    tile = Tile(tile_id=tile_id, region=region, bands=band_arrays, valid_mask=valid)
    return tile, LabelGrid(labels)


def constant_bands(shape, values):
    return {band: np.full(shape, value, dtype=np.float32) for band, value in values.items()}


@pytest.fixture(scope="session")
def synth_root(tmp_path_factory):
    """Shared separable synthetic dataset (20 tiles + 2 bolivia, 64x64)."""
    root = tmp_path_factory.mktemp("synth")
    generate_dataset(root, seed=7)
    return root


@pytest.fixture(scope="session")
def correlated_root(tmp_path_factory):
    """Correlated-feature variant used for the recall-ranking checks."""
    root = tmp_path_factory.mktemp("synth_corr")
    generate_correlated_dataset(root, seed=11)
    return root


@pytest.fixture(scope="session", autouse=True)
def warm_numba_kernels():
    """Compile the JIT kernels once up front so timed tests measure the
    algorithms rather than LLVM."""
    from floodpix.accel import NUMBA_ENABLED

    if not NUMBA_ENABLED:
        return
    rng = np.random.default_rng(0)
    values = rng.normal(size=(64, 2)).astype(np.float32)
    labels = (values[:, 0] > 0).astype(np.uint8)
    from floodpix.classifiers import fit_sgd
    from floodpix.gbdt import GBDTParams, fit_gbdt, predict_gbdt
    from floodpix.speckle import lee_sigma_filter

    model = fit_gbdt(values, labels, GBDTParams(n_trees=2, max_leaves=2), seed=0)
    predict_gbdt(model, values)
    fit_sgd(values, labels, seed=0)
    lee_sigma_filter(np.ones((8, 8), dtype=np.float32))

