"""The numba kernels and their numpy fallbacks must agree bit for bit."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from floodpix.accel import NUMBA_AVAILABLE, resolve_use_numba
from floodpix.gbdt import bin_features, logistic_grad_hess
from floodpix.gbdt.kernels import build_histograms, scan_best_split, tree_outputs_codes, tree_outputs_raw
from floodpix.gbdt.tree import grow_tree_leafwise

pytestmark = pytest.mark.skipif(not NUMBA_AVAILABLE, reason="numba not installed")


@pytest.fixture(scope="module")
def fixture_data():
    rng = np.random.default_rng(0)
    n, d = 4000, 4
    values = rng.normal(size=(n, d)).astype(np.float32)
    labels = ((values[:, 0] + values[:, 2]) > 0).astype(np.float64)
    margins = rng.normal(scale=0.4, size=n)
    grad, hess = logistic_grad_hess(margins, labels)
    bins = bin_features(values, max_bins=64)
    rows = np.sort(rng.choice(n, size=2500, replace=False))
    return values, grad, hess, bins, rows


class TestDualPaths:
    def test_histograms_identical(self, fixture_data):
        _, grad, hess, bins, rows = fixture_data
        a = build_histograms(bins.codes, rows, grad, hess, bins.max_bins, use_numba=True)
        b = build_histograms(bins.codes, rows, grad, hess, bins.max_bins, use_numba=False)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_split_scan_identical(self, fixture_data):
        _, grad, hess, bins, rows = fixture_data
        hist = build_histograms(bins.codes, rows, grad, hess, bins.max_bins, use_numba=True)
        assert scan_best_split(*hist, bins.n_bins, 1.0, use_numba=True) == scan_best_split(
            *hist, bins.n_bins, 1.0, use_numba=False
        )

    def test_traversal_identical(self, fixture_data):
        values, grad, hess, bins, rows = fixture_data
        tree = grow_tree_leafwise(rows, grad, hess, bins, max_leaves=16, lam=1.0)
        assert np.array_equal(
            tree_outputs_codes(tree, bins.codes, use_numba=True),
            tree_outputs_codes(tree, bins.codes, use_numba=False),
        )
        assert np.array_equal(
            tree_outputs_raw(tree, values, use_numba=True),
            tree_outputs_raw(tree, values, use_numba=False),
        )

    def test_zero_denominator_candidates_skipped_on_both_paths(self):
        # underflowed hessians with lam == 0 must not divide by zero nor
        # win the scan on either path
        values = np.array([[0.0], [1.0], [2.0], [3.0]], dtype=np.float32)
        bins = bin_features(values, max_bins=8)
        grad = np.array([0.0, 0.0, -0.5, 0.5])
        hess = np.array([0.0, 0.0, 0.25, 0.25])
        hist = build_histograms(bins.codes, np.arange(4), grad, hess, bins.max_bins, use_numba=False)
        result = scan_best_split(*hist, bins.n_bins, 0.0, use_numba=True)
        assert result == scan_best_split(*hist, bins.n_bins, 0.0, use_numba=False)
        assert result[:2] == (0, 2)  # the one candidate with nonzero hessian mass on both sides

        saturated = build_histograms(bins.codes, np.arange(4), grad, np.zeros(4), bins.max_bins, use_numba=False)
        assert scan_best_split(*saturated, bins.n_bins, 0.0, use_numba=True) == (-1, -1, 0.0)
        assert scan_best_split(*saturated, bins.n_bins, 0.0, use_numba=False) == (-1, -1, 0.0)

    def test_sgd_epoch_identical(self):
        from floodpix.classifiers import fit_sgd, model_to_json

        rng = np.random.default_rng(1)
        values = rng.normal(size=(500, 3)).astype(np.float32)
        labels = (values[:, 0] > 0).astype(np.uint8)
        a = fit_sgd(values, labels, loss="modified_huber", seed=2, use_numba=True)
        b = fit_sgd(values, labels, loss="modified_huber", seed=2, use_numba=False)
        assert model_to_json(a) == model_to_json(b)


class TestEnvFlag:
    def test_resolve_override(self):
        assert resolve_use_numba(True) is True
        assert resolve_use_numba(False) is False

    def test_disabled_env_runs_fallback_with_same_results(self, tmp_path):
        script = (
            "import numpy as np\n"
            "from floodpix.accel import using_numba\n"
            "from floodpix.gbdt import fit_gbdt, GBDTParams, model_to_json\n"
            "rng = np.random.default_rng(0)\n"
            "x = rng.normal(size=(300, 2)).astype(np.float32)\n"
            "y = (x[:, 0] > 0).astype(np.uint8)\n"
            "m = fit_gbdt(x, y, GBDTParams(n_trees=4, max_leaves=4), seed=0)\n"
            "print(using_numba())\n"
            "open(r'%s', 'w').write(model_to_json(m))\n"
        )
        outputs = {}
        for flag in ("0", "1"):
            out_file = tmp_path / f"model_{flag}.json"
            env = dict(os.environ, FLOODPIX_NUMBA=flag)
            proc = subprocess.run(
                [sys.executable, "-c", script % out_file],
                capture_output=True, text=True, env=env, check=True,
            )
            outputs[flag] = (proc.stdout.strip(), json.loads(out_file.read_text()))
        assert outputs["0"][0] == "False"
        assert outputs["1"][0] == "True"
        assert outputs["0"][1] == outputs["1"][1]

    def test_bad_env_value_rejected(self):
        proc = subprocess.run(
            [sys.executable, "-c", "import floodpix"],
            capture_output=True, text=True, env=dict(os.environ, FLOODPIX_NUMBA="sideways"),
        )
        assert proc.returncode != 0
        assert "FLOODPIX_NUMBA" in proc.stderr
