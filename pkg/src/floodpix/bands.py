"""Band identities for the supported sensors and their canonical channel order.

Optical channels follow the Sentinel-2 numbering (13 bands, B1..B12 with
the narrow-NIR B8A between B8 and B9); SAR channels are the two Sentinel-1
polarizations. The tuple positions below define the stable channel index
used by the band-sequential raster payloads.
"""

OPTICAL_BANDS = (
    "B1", "B2", "B3", "B4", "B5", "B6", "B7", "B8", "B8A", "B9", "B10", "B11", "B12",
)
SAR_BANDS = ("VV", "VH")
ALL_BANDS = OPTICAL_BANDS + SAR_BANDS

OPTICAL_INDEX = {band: i for i, band in enumerate(OPTICAL_BANDS)}
SAR_INDEX = {band: i for i, band in enumerate(SAR_BANDS)}

# Semantic roles used by water indexes and color transforms.
BLUE = "B2"
GREEN = "B3"
RED = "B4"
NIR = "B8"
SWIR1 = "B11"
SWIR2 = "B12"

# 60 m resolution bands; the OPT feature block drops these.
COARSE_BANDS = ("B1", "B9", "B10")

OPTICAL = "optical"
SAR = "sar"


def is_sar_band(band_id: str) -> bool:
    return band_id in SAR_INDEX


def is_optical_band(band_id: str) -> bool:
    return band_id in OPTICAL_INDEX


def validate_band_id(band_id: str) -> str:
    if band_id not in OPTICAL_INDEX and band_id not in SAR_INDEX:
        raise ValueError(f"unknown band id: {band_id!r}")
    return band_id


def band_modality(band_id: str) -> str:
    validate_band_id(band_id)
    return SAR if band_id in SAR_INDEX else OPTICAL
