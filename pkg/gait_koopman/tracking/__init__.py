"""Tracking layer: detection selection, track smoothing and crop geometry."""

from gait_koopman.tracking.smoothing import (
    Box,
    CropRegion,
    CubicFit,
    DetectionSeries,
    TrackSeries,
    fit_cubic,
    read_detections_csv,
    select_largest,
    smooth_track,
    square_crop,
    window_starts,
    write_track_csv,
)

__all__ = [
    "Box",
    "CropRegion",
    "CubicFit",
    "DetectionSeries",
    "TrackSeries",
    "fit_cubic",
    "read_detections_csv",
    "select_largest",
    "smooth_track",
    "square_crop",
    "window_starts",
    "write_track_csv",
]
