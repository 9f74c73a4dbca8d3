import colorsys

import numpy as np
import pytest

from conftest import make_tile
from floodpix import bands as B
from floodpix.features import (
    CANONICAL_FEATURE_SPACES,
    FeatureError,
    build_feature_matrix,
    compute_index,
    hsv_transform,
    normalize_band,
    parse_feature_space,
)
from floodpix.raster import LABEL_DRY, LABEL_NODATA, LABEL_WATER

# name -> dimensionality, all 23 canonical spaces
EXPECTED_DIMS = {
    "SAR": 2, "OPT": 10, "O3": 3, "S2": 13, "RGB": 3, "RGBN": 4,
    "HSV(RGB)": 3, "HSV(O3)": 3, "cNDWI": 2, "cAWEI": 2,
    "cAWEI+cNDWI": 4, "HSV(O3)+cAWEI+cNDWI": 7,
    "SAR_OPT": 12, "SAR_O3": 5, "SAR_S2": 15, "SAR_RGB": 5, "SAR_RGBN": 6,
    "SAR_HSV(RGB)": 5, "SAR_HSV(O3)": 5, "SAR_cNDWI": 4, "SAR_cAWEI": 4,
    "SAR_cAWEI+cNDWI": 6, "SAR_HSV(O3)+cAWEI+cNDWI": 9,
}


def _index_tile(**reflectances):
    # reflectances given on the 0..1 scale; bands stored at x10000
    shape = (4, 4)
    bands = {band: np.full(shape, value * 10000.0) for band, value in reflectances.items()}
    return make_tile(bands)[0]


class TestIndexes:
    def test_ndwi_zero_when_green_equals_nir(self):
        tile = _index_tile(B3=0.2, B8=0.2)
        assert np.all(compute_index("NDWI", tile) == 0.0)

    def test_ndwi_direct_arithmetic(self):
        tile = _index_tile(B3=0.3, B8=0.1)
        np.testing.assert_allclose(compute_index("NDWI", tile), 0.5, atol=1e-12)

    def test_mndwi_direct_arithmetic(self):
        tile = _index_tile(B3=0.3, B11=0.1)
        np.testing.assert_allclose(compute_index("MNDWI", tile), 0.5, atol=1e-12)

    def test_awei_direct_arithmetic(self):
        tile = _index_tile(B3=0.2, B11=0.1, B8=0.1, B12=0.0)
        np.testing.assert_allclose(compute_index("AWEI", tile), 0.375, atol=1e-12)

    def test_aweish_direct_arithmetic(self):
        tile = _index_tile(B2=0.1, B3=0.2, B8=0.1, B11=0.1, B12=0.0)
        np.testing.assert_allclose(compute_index("AWEISH", tile), 0.3, atol=1e-12)

    def test_zero_denominator_scores_zero(self):
        tile = _index_tile(B3=0.0, B8=0.0)
        assert np.all(compute_index("NDWI", tile) == 0.0)

    def test_missing_band_raises(self):
        tile = _index_tile(B3=0.3)
        with pytest.raises(FeatureError, match="B8"):
            compute_index("NDWI", tile)

    def test_normalized_difference_bounded(self):
        rng = np.random.default_rng(0)
        tile = make_tile({
            B.GREEN: rng.uniform(1.0, 9000.0, size=(32, 32)),
            B.NIR: rng.uniform(1.0, 9000.0, size=(32, 32)),
            B.SWIR1: rng.uniform(1.0, 9000.0, size=(32, 32)),
        })[0]
        for kind in ("NDWI", "MNDWI"):
            values = compute_index(kind, tile)
            assert values.min() >= -1.0 and values.max() <= 1.0


class TestHSV:
    def test_pure_red(self):
        h, s, v = hsv_transform(np.array([1.0]), np.array([0.0]), np.array([0.0]))
        assert (h[0], s[0], v[0]) == (0.0, 1.0, 1.0)

    def test_gray_has_zero_saturation_and_hue(self):
        h, s, v = hsv_transform(np.array([0.5]), np.array([0.5]), np.array([0.5]))
        assert (h[0], s[0], v[0]) == (0.0, 0.0, 0.5)

    def test_pure_green_hue_is_one_third(self):
        h, s, v = hsv_transform(np.array([0.0]), np.array([1.0]), np.array([0.0]))
        np.testing.assert_allclose([h[0], s[0], v[0]], [1.0 / 3.0, 1.0, 1.0], atol=1e-12)

    def test_matches_colorsys_on_random_triples(self):
        rng = np.random.default_rng(3)
        rgb = rng.random((10_000, 3))
        h, s, v = hsv_transform(rgb[:, 0], rgb[:, 1], rgb[:, 2])
        expected = np.array([colorsys.rgb_to_hsv(*row) for row in rgb])
        np.testing.assert_allclose(np.stack([h, s, v], axis=1), expected, atol=1e-12)

    def test_round_trip_reconstruction(self):
        rng = np.random.default_rng(4)
        rgb = rng.random((10_000, 3))
        h, s, v = hsv_transform(rgb[:, 0], rgb[:, 1], rgb[:, 2])
        back = np.array([colorsys.hsv_to_rgb(hi, si, vi) for hi, si, vi in zip(h, s, v)])
        assert np.abs(back - rgb).max() < 1e-6

    def test_out_of_range_input_rejected(self):
        with pytest.raises(FeatureError):
            hsv_transform(np.array([1.5]), np.array([0.0]), np.array([0.0]))

    def test_tolerated_epsilon_excursion(self):
        h, s, v = hsv_transform(np.array([1.0 + 5e-7]), np.array([0.0]), np.array([0.0]))
        assert v[0] == 1.0


class TestNormalize:
    def test_optical_scale_endpoint(self):
        assert normalize_band(np.array([10000.0]), B.OPTICAL)[0] == 1.0

    def test_optical_clamps_outliers(self):
        assert normalize_band(np.array([25000.0]), B.OPTICAL)[0] == 1.0

    def test_sar_low_endpoint(self):
        assert normalize_band(np.array([-30.0]), B.SAR)[0] == 0.0

    def test_sar_bounds_overridable(self):
        assert normalize_band(np.array([-20.0]), B.SAR, sar_bounds=(-20.0, 0.0))[0] == 0.0


class TestParse:
    @pytest.mark.parametrize("name", CANONICAL_FEATURE_SPACES)
    def test_canonical_names_parse_and_roundtrip(self, name):
        spec = parse_feature_space(name)
        assert spec.name == name
        assert spec.dimensionality == EXPECTED_DIMS[name]
        assert parse_feature_space(spec.name) == spec
        assert len(spec.column_names) == spec.dimensionality

    def test_all_23_names_covered(self):
        assert len(CANONICAL_FEATURE_SPACES) == 23
        assert set(CANONICAL_FEATURE_SPACES) == set(EXPECTED_DIMS)

    @pytest.mark.parametrize("bad", ["", "FOO", "SAR_", "SAR_SAR", "RGB+SAR", "SAR_RGB+SAR", "SAR_SAR_RGB"])
    def test_malformed_names_rejected(self, bad):
        with pytest.raises(FeatureError):
            parse_feature_space(bad)

    def test_block_order_preserved(self):
        spec = parse_feature_space("SAR_HSV(O3)+cAWEI+cNDWI")
        assert [b.name for b in spec.blocks] == ["SAR", "HSV(O3)", "cAWEI", "cNDWI"]
        assert spec.column_names[:2] == ("VV", "VH")
        assert spec.column_names[5:] == ("AWEI", "AWEISH", "NDWI", "MNDWI")

    def test_o3_is_swir2_nir_red_in_listing_order(self):
        assert parse_feature_space("O3").column_names == ("B12", "B8", "B4")
        assert parse_feature_space("HSV(O3)").blocks[0].payload == ("B12", "B8", "B4")
        assert parse_feature_space("RGB").column_names == ("B4", "B3", "B2")
        assert parse_feature_space("OPT").column_names == (
            "B2", "B3", "B4", "B5", "B6", "B7", "B8", "B8A", "B11", "B12")


def _full_tile(shape=(16, 16), seed=0, labels=None):
    rng = np.random.default_rng(seed)
    bands = {band: rng.uniform(100.0, 9000.0, size=shape) for band in B.OPTICAL_BANDS}
    bands.update({band: rng.uniform(-28.0, -2.0, size=shape) for band in B.SAR_BANDS})
    return make_tile(bands, labels=labels)


class TestBuildMatrix:
    def test_rgb_on_fully_valid_512_tile(self):
        rng = np.random.default_rng(1)
        bands = {band: rng.uniform(0.0, 5000.0, size=(512, 512)) for band in ("B2", "B3", "B4")}
        tile, labels = make_tile(bands)
        matrix = build_feature_matrix(parse_feature_space("RGB"), [(tile, labels)])
        assert matrix.values.shape == (262144, 3)

    def test_cndwi_column_names(self):
        tile, labels = _full_tile()
        matrix = build_feature_matrix(parse_feature_space("cNDWI"), [(tile, labels)])
        assert matrix.column_names == ("NDWI", "MNDWI")

    def test_nodata_rows_dropped_exactly(self):
        grid_labels = np.full((16, 16), LABEL_DRY, dtype=np.int8)
        grid_labels[:8] = LABEL_NODATA
        tile, labels = _full_tile(labels=grid_labels)
        matrix = build_feature_matrix(parse_feature_space("SAR"), [(tile, labels)])
        assert matrix.n_rows == int(tile.valid_mask.sum()) == 16 * 16 // 2

    @pytest.mark.parametrize("name", CANONICAL_FEATURE_SPACES)
    def test_column_count_matches_dimensionality(self, name):
        tile, labels = _full_tile(shape=(8, 8))
        spec = parse_feature_space(name)
        matrix = build_feature_matrix(spec, [(tile, labels)])
        assert matrix.n_features == spec.dimensionality
        assert np.isfinite(matrix.values).all()

    def test_tile_order_permutes_rows_only(self):
        tiles = []
        for s in (1, 2, 3):
            tile, labels = _full_tile(seed=s, shape=(8, 8))
            tile.tile_id = f"t{s}"
            tiles.append((tile, labels))
        spec = parse_feature_space("SAR_cNDWI")
        forward = build_feature_matrix(spec, tiles)
        backward = build_feature_matrix(spec, tiles[::-1])
        assert np.array_equal(np.sort(forward.values, axis=0), np.sort(backward.values, axis=0))
        by_tile_fwd = {ts.tile_id: forward.values[ts.start : ts.stop] for ts in forward.tile_slices}
        by_tile_bwd = {ts.tile_id: backward.values[ts.start : ts.stop] for ts in backward.tile_slices}
        for tile_id in by_tile_fwd:
            assert np.array_equal(by_tile_fwd[tile_id], by_tile_bwd[tile_id])

    def test_labels_and_provenance_align(self):
        grid_labels = np.full((8, 8), LABEL_DRY, dtype=np.int8)
        grid_labels[0, :3] = LABEL_WATER
        tile, labels = _full_tile(shape=(8, 8), labels=grid_labels)
        matrix = build_feature_matrix(parse_feature_space("SAR"), [(tile, labels)])
        assert int(matrix.labels.sum()) == 3
        assert matrix.pixel_index[:3].tolist() == [0, 1, 2]

    def test_missing_band_propagates(self):
        tile, labels = make_tile({B.GREEN: np.full((4, 4), 500.0)})
        with pytest.raises(FeatureError):
            build_feature_matrix(parse_feature_space("cNDWI"), [(tile, labels)])

    def test_speckle_flag_changes_sar_features(self):
        rng = np.random.default_rng(5)
        bands = {band: rng.normal(-15.0, 3.0, size=(16, 16)) for band in B.SAR_BANDS}
        tile, labels = make_tile(bands)
        spec = parse_feature_space("SAR")
        plain = build_feature_matrix(spec, [(tile, labels)])
        filtered = build_feature_matrix(spec, [(tile, labels)], speckle=True)
        assert not np.array_equal(plain.values, filtered.values)
        assert filtered.values.std() < plain.values.std()
