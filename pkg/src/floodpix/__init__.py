"""Pixel-wise flood inundation mapping with classical machine learning.

Composable optical/SAR feature spaces, five pixel classifiers including a
from-scratch leaf-wise histogram GBDT, a segmentation metric algebra with
mean/total/region-wise aggregation, and a seeded grid-search experiment
harness.
"""

__version__ = "0.1.0"

from .accel import using_numba  # noqa: F401
