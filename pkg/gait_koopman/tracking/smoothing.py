"""Person-track post-processing: largest detection, windowed cubic smoothing, square crops."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from logging import Logger, getLogger
from pathlib import Path

import numpy as np
import pandas as pd
from numpy.polynomial import Polynomial
from numpy.typing import ArrayLike, NDArray

from gait_koopman.config import SmoothingConfig
from gait_koopman.errors import EmptyTrackError, ParseError

logger: Logger = getLogger(__name__)

DETECTION_COLUMNS = ["frame", "x", "y", "w", "h", "confidence"]
TRACK_COLUMNS = ["frame", "x", "y", "size", "clamped"]
CHANNELS = ("x", "y", "size")


@dataclass(frozen=True)
class Box:
    """Axis-aligned detection box in pixels, given by its center."""

    x: float
    y: float
    width: float
    height: float
    confidence: float = 1.0

    def __post_init__(self) -> None:
        if not all(np.isfinite([self.x, self.y, self.width, self.height, self.confidence])):
            raise ValueError("Box values must be finite")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"Box dimensions must be positive, got {self.width}x{self.height}")

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def size(self) -> float:
        """Side of the minimum enclosing square."""
        return max(self.width, self.height)


@dataclass
class DetectionSeries:
    """Detections per frame; an empty list marks a frame without detections.

    Args:
        frames: Strictly increasing frame indices
        boxes: One list of boxes per frame
    """

    frames: list[int]
    boxes: list[list[Box]]

    def __post_init__(self) -> None:
        if len(self.frames) != len(self.boxes):
            raise ValueError("Detection series needs one box list per frame")
        if any(b <= a for a, b in zip(self.frames, self.frames[1:])):
            raise ValueError("Detection frame indices must be strictly increasing")

    def __len__(self) -> int:
        return len(self.frames)


@dataclass
class TrackSeries:
    """Per-frame (x, y, size) track; NaN marks a missing frame.

    Args:
        frames: Frame indices
        x: Center x per frame
        y: Center y per frame
        size: Square side per frame
        clamped: Whether the size was raised to the lower clamp
    """

    frames: NDArray[np.int64]
    x: NDArray[np.float64]
    y: NDArray[np.float64]
    size: NDArray[np.float64]
    clamped: NDArray[np.bool_] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.frames = np.asarray(self.frames, dtype=np.int64)
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        self.size = np.asarray(self.size, dtype=np.float64)
        n = len(self.frames)
        if self.clamped is None:
            self.clamped = np.zeros(n, dtype=bool)
        self.clamped = np.asarray(self.clamped, dtype=bool)
        if not all(len(a) == n for a in (self.x, self.y, self.size, self.clamped)):
            raise ValueError("Track channels must have one value per frame")

    def __len__(self) -> int:
        return len(self.frames)

    def channel(self, name: str) -> NDArray[np.float64]:
        return getattr(self, name)

    def missing(self) -> NDArray[np.bool_]:
        return ~(np.isfinite(self.x) & np.isfinite(self.y) & np.isfinite(self.size))

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"frame": self.frames, "x": self.x, "y": self.y, "size": self.size, "clamped": self.clamped}
        )


def select_largest(detections: DetectionSeries) -> TrackSeries:
    """Keep the largest-area box per frame; empty frames become missing.

    Raises:
        EmptyTrackError: If no frame has a detection
    """
    n = len(detections)
    x, y, size = np.full(n, np.nan), np.full(n, np.nan), np.full(n, np.nan)
    for i, boxes in enumerate(detections.boxes):
        if not boxes:
            continue
        largest = max(boxes, key=lambda b: b.area)
        x[i], y[i], size[i] = largest.x, largest.y, largest.size
    if np.all(np.isnan(x)):
        raise EmptyTrackError("Detection series has no detections")
    return TrackSeries(frames=np.array(detections.frames), x=x, y=y, size=size)


@dataclass(frozen=True)
class CubicFit:
    """Least-squares polynomial on a centered and scaled time axis.

    Args:
        scaled_coefficients: Ascending coefficients in u = (t - center) / scale
        center: Midpoint of the fitted time range
        scale: Half-width of the fitted time range (1 for a single time value)
    """

    scaled_coefficients: NDArray[np.float64]
    center: float
    scale: float

    @property
    def degree(self) -> int:
        return len(self.scaled_coefficients) - 1

    @property
    def coefficients(self) -> NDArray[np.float64]:
        """Ascending coefficients c0..c3 in raw t (zero-padded for lower degrees)."""
        shift = Polynomial([-self.center / self.scale, 1.0 / self.scale])
        raw = Polynomial(self.scaled_coefficients)(shift).coef
        padded = np.zeros(max(4, len(raw)))
        padded[: len(raw)] = raw
        return padded

    def __call__(self, t: ArrayLike) -> NDArray[np.float64]:
        u = (np.asarray(t, dtype=np.float64) - self.center) / self.scale
        return Polynomial(self.scaled_coefficients)(u)


def fit_cubic(t: ArrayLike, v: ArrayLike, degree: int = 3) -> CubicFit:
    """Fit a polynomial through (t, v) by normal equations on a [-1, 1] basis.

    With fewer than degree + 1 distinct times the degree drops to
    (distinct times - 1).

    Raises:
        ValueError: If there are no points or the inputs are malformed
    """
    t = np.asarray(t, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if t.ndim != 1 or t.shape != v.shape:
        raise ValueError(f"Times and values need equal 1-D shapes, got {t.shape} and {v.shape}")
    if t.size == 0:
        raise ValueError("Cannot fit a polynomial to zero points")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
        raise ValueError("Fit points must be finite")

    distinct = len(np.unique(t))
    fitted_degree = min(degree, distinct - 1)
    if fitted_degree < degree:
        logger.debug(f"Only {distinct} distinct times, fitting degree {fitted_degree}")
    lo, hi = float(t.min()), float(t.max())
    center = 0.5 * (lo + hi)
    scale = 0.5 * (hi - lo) if hi > lo else 1.0

    basis = np.vander((t - center) / scale, fitted_degree + 1, increasing=True)
    coefficients = np.linalg.solve(basis.T @ basis, basis.T @ v)
    return CubicFit(scaled_coefficients=coefficients, center=center, scale=scale)


def window_starts(n_frames: int, window: int, stride: int) -> list[int]:
    """Start indices of the sliding windows; the last window always ends at the track end."""
    if n_frames <= window:
        return [0]
    starts = list(range(0, n_frames - window + 1, stride))
    if starts[-1] + window < n_frames:
        starts.append(n_frames - window)
    return starts


def _smooth_channel(
    t: NDArray[np.float64], values: NDArray[np.float64], starts: list[int], window: int, degree: int
) -> NDArray[np.float64]:
    totals = np.zeros(len(t))
    counts = np.zeros(len(t))
    for start in starts:
        span = slice(start, start + window)
        observed = np.isfinite(values[span])
        if not observed.any():
            continue
        fit = fit_cubic(t[span][observed], values[span][observed], degree=degree)
        totals[span] += fit(t[span])
        counts[span] += 1
    smoothed = np.full(len(t), np.nan)
    covered = counts > 0
    smoothed[covered] = totals[covered] / counts[covered]
    if not covered.all():
        smoothed[~covered] = np.interp(t[~covered], t[covered], smoothed[covered])
    return smoothed


def smooth_track(track: TrackSeries, config: SmoothingConfig | None = None) -> TrackSeries:
    """Sliding-window polynomial smoothing with overlap averaging.

    Every channel is fitted independently per window; a frame's value is the
    mean of the evaluations of all windows covering it, which also fills
    missing frames. The size channel is clamped to config.min_size.

    Args:
        track: Raw track, possibly with missing frames
        config: Window, stride, degree and clamp settings

    Returns:
        Smoothed TrackSeries without missing values

    Raises:
        EmptyTrackError: If the track has no observed frame
    """
    config = config or SmoothingConfig()
    if len(track) == 0 or track.missing().all():
        raise EmptyTrackError("Track has no observed frames to smooth")

    t = track.frames.astype(np.float64)
    starts = window_starts(len(track), config.window, config.stride)
    logger.debug(f"Smoothing {len(track)} frames with {len(starts)} windows")
    smoothed = {
        name: _smooth_channel(t, track.channel(name), starts, config.window, config.degree)
        for name in CHANNELS
    }
    clamped = smoothed["size"] < config.min_size
    if clamped.any():
        logger.warning(f"Clamped size to {config.min_size} on {int(clamped.sum())} frames")
    return TrackSeries(
        frames=track.frames.copy(),
        x=smoothed["x"],
        y=smoothed["y"],
        size=np.maximum(smoothed["size"], config.min_size),
        clamped=clamped,
    )


@dataclass(frozen=True)
class CropRegion:
    """Square crop geometry and the resize factor to the network resolution."""

    left: float
    top: float
    side: float
    scale: float
    clamped: bool = False

    @property
    def right(self) -> float:
        return self.left + self.side

    @property
    def bottom(self) -> float:
        return self.top + self.side


def square_crop(
    x: float,
    y: float,
    size: float,
    frame_width: float,
    frame_height: float,
    resolution: int = 224,
) -> CropRegion:
    """Square of side `size` centered at (x, y), shifted to lie inside the frame.

    A side larger than the shorter frame dimension is reduced to it and the
    clamp flag is set.

    Raises:
        ValueError: If the size or frame dimensions are not positive
    """
    if not (size > 0 and frame_width > 0 and frame_height > 0):
        raise ValueError(f"Size and frame dimensions must be positive, got {size}, {frame_width}x{frame_height}")
    side = float(size)
    clamped = False
    limit = float(min(frame_width, frame_height))
    if side > limit:
        logger.warning(f"Crop side {side:.1f} exceeds frame {frame_width}x{frame_height}, clamping to {limit}")
        side, clamped = limit, True
    left = float(np.clip(x - side / 2.0, 0.0, frame_width - side))
    top = float(np.clip(y - side / 2.0, 0.0, frame_height - side))
    return CropRegion(left=left, top=top, side=side, scale=resolution / side, clamped=clamped)


def _parser_line(error: Exception) -> int | None:
    match = re.search(r"line (\d+)", str(error))
    return int(match.group(1)) if match else None


def read_detections_csv(path: str | Path) -> DetectionSeries:
    """Read `frame,x,y,w,h,confidence` rows into a detection series.

    Frames between the first and last listed frame that have no row become
    empty frames, as do rows whose box columns are blank.

    Raises:
        ParseError: With the offending line number on malformed rows
    """
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.ParserError as e:
        raise ParseError(str(e).strip(), line=_parser_line(e)) from e
    except pd.errors.EmptyDataError as e:
        raise ParseError("track file is empty", line=1) from e

    missing = [c for c in DETECTION_COLUMNS if c not in df.columns]
    if missing:
        raise ParseError(f"missing columns {missing}", line=1)

    by_frame: dict[int, list[Box]] = {}
    last_frame: int | None = None
    for i, row in enumerate(df[DETECTION_COLUMNS].itertuples(index=False)):
        line = i + 2
        frame_text, *box_text = [str(v).strip() for v in row]
        try:
            frame = int(frame_text)
        except ValueError as e:
            raise ParseError(f"invalid frame index '{frame_text}'", line=line) from e
        if last_frame is not None and frame < last_frame:
            raise ParseError(f"frame {frame} after frame {last_frame}", line=line)
        last_frame = frame
        boxes = by_frame.setdefault(frame, [])
        if all(text == "" for text in box_text[:4]):
            continue
        try:
            x, y, w, h = (float(text) for text in box_text[:4])
            confidence = float(box_text[4]) if box_text[4] else 1.0
            boxes.append(Box(x, y, w, h, confidence))
        except ValueError as e:
            raise ParseError(f"invalid detection: {e}", line=line) from e

    if not by_frame:
        raise EmptyTrackError("Track file has no rows")
    frames = list(range(min(by_frame), max(by_frame) + 1))
    return DetectionSeries(frames=frames, boxes=[by_frame.get(f, []) for f in frames])


def write_track_csv(track: TrackSeries, path: str | Path) -> None:
    """Write `frame,x,y,size,clamped` rows."""
    df = track.to_dataframe()
    df["clamped"] = df["clamped"].astype(int)
    df.to_csv(path, index=False, columns=TRACK_COLUMNS, float_format="%.17g")
    logger.info(f"Wrote {len(df)} track rows to {path}")
