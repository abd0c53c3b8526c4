"""Readers and writers for every on-disk artifact.

Binary formats (PFM float maps, PGM label masks) round-trip bitwise;
text formats (point CSVs) round-trip to 9 significant digits; JSON
reports are key-sorted so reruns are byte-identical.  Readers accept a
path or a binary file object and never raise anything but the typed
``FormatError`` subclasses on malformed input.
"""

from __future__ import annotations

import json
import math
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .calibration import ControlPoint, RawSlamPoint
from .distancing import FrameReport, PairDistance, Risk
from .errors import (
    LabelOverflow,
    MalformedHeader,
    NonFiniteValue,
    ParseError,
    SchemaMismatch,
    TruncatedPayload,
)
from .geometry import CameraIntrinsics, Pixel, Point3, Pose
from .people import PersonMeasurement
from .scaling import ScaleParams

_WHITESPACE = b" \t\n\r\x0b\x0c"


@contextmanager
def _binary(path_or_file, mode: str):
    if hasattr(path_or_file, "read") or hasattr(path_or_file, "write"):
        yield path_or_file
    else:
        with open(path_or_file, mode) as f:
            yield f


def _name_of(f) -> str:
    return str(getattr(f, "name", "<stream>"))


# -- PFM float maps -----------------------------------------------------------

def _read_header_token(f, path: str, *, allow_comments: bool = False) -> bytes:
    """Next whitespace-delimited header token; consumes the single
    whitespace byte that terminates it."""
    token = b""
    while True:
        c = f.read(1)
        if not c:
            if token:
                return token
            raise MalformedHeader("unexpected end of header", path=path)
        if allow_comments and not token and c == b"#":
            while c and c != b"\n":
                c = f.read(1)
            continue
        if c in _WHITESPACE:
            if token:
                return token
            continue
        token += c
        if len(token) > 32:
            raise MalformedHeader("header token too long", path=path)


def _parse_dim(token: bytes, what: str, path: str) -> int:
    try:
        value = int(token.decode("ascii"))
    except (UnicodeDecodeError, ValueError):
        raise MalformedHeader(f"invalid {what}: {token!r}", path=path) from None
    if value < 1:
        raise MalformedHeader(f"{what} must be at least 1, got {value}", path=path)
    return value


def read_pfm(path_or_file) -> np.ndarray:
    """Read a grayscale PFM file into a float32 (height, width) array.

    Header: ``Pf``, then ``width height``, then a scale whose sign gives
    the payload byte order (negative = little-endian).  The payload
    stores rows bottom-to-top.  Color ``PF`` files are rejected.
    """
    with _binary(path_or_file, "rb") as f:
        path = _name_of(f)
        magic = f.read(2)
        if magic != b"Pf":
            raise MalformedHeader(
                f"expected grayscale PFM magic b'Pf', got {magic!r}", path=path
            )
        width = _parse_dim(_read_header_token(f, path), "width", path)
        height = _parse_dim(_read_header_token(f, path), "height", path)
        scale_token = _read_header_token(f, path)
        try:
            scale = float(scale_token.decode("ascii"))
        except (UnicodeDecodeError, ValueError):
            raise MalformedHeader(
                f"invalid scale: {scale_token!r}", path=path
            ) from None
        if scale == 0 or not math.isfinite(scale):
            raise MalformedHeader(f"invalid scale: {scale}", path=path)
        expected = width * height * 4
        payload = f.read(expected)
        if len(payload) < expected:
            raise TruncatedPayload(
                f"expected {expected} payload bytes, got {len(payload)}", path=path
            )
        dtype = "<f4" if scale < 0 else ">f4"
        values = np.frombuffer(payload, dtype=dtype).astype(np.float32)
        if not np.isfinite(values).all():
            raise NonFiniteValue("payload contains NaN or infinity", path=path)
        return np.flipud(values.reshape(height, width)).copy()


def write_pfm(values: np.ndarray, path_or_file) -> None:
    """Write a float map as grayscale little-endian PFM (scale -1.0)."""
    arr = np.asarray(values)
    if arr.ndim != 2:
        raise ValueError(f"PFM maps must be 2-D, got shape {arr.shape}")
    arr = arr.astype(np.float32)
    if not np.isfinite(arr).all():
        raise NonFiniteValue("refusing to write NaN or infinity")
    with _binary(path_or_file, "wb") as f:
        height, width = arr.shape
        f.write(f"Pf\n{width} {height}\n-1.0\n".encode("ascii"))
        f.write(np.flipud(arr).astype("<f4").tobytes())


# -- PGM label masks ----------------------------------------------------------

def read_label_mask(path_or_file) -> np.ndarray:
    """Read a binary PGM (P5, maxval 255) as an instance-label image."""
    with _binary(path_or_file, "rb") as f:
        path = _name_of(f)
        magic = f.read(2)
        if magic != b"P5":
            raise MalformedHeader(
                f"expected binary PGM magic b'P5', got {magic!r}", path=path
            )
        width = _parse_dim(
            _read_header_token(f, path, allow_comments=True), "width", path
        )
        height = _parse_dim(
            _read_header_token(f, path, allow_comments=True), "height", path
        )
        maxval_token = _read_header_token(f, path, allow_comments=True)
        try:
            maxval = int(maxval_token.decode("ascii"))
        except (UnicodeDecodeError, ValueError):
            raise MalformedHeader(
                f"invalid maxval: {maxval_token!r}", path=path
            ) from None
        if maxval != 255:
            raise MalformedHeader(
                f"only 8-bit label masks are supported (maxval 255), got {maxval}",
                path=path,
            )
        expected = width * height
        payload = f.read(expected)
        if len(payload) < expected:
            raise TruncatedPayload(
                f"expected {expected} payload bytes, got {len(payload)}", path=path
            )
        return (
            np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()
        )


def write_label_mask(labels: np.ndarray, path_or_file) -> None:
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ValueError(f"label masks must be 2-D, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValueError(f"label masks must be integer, got dtype {arr.dtype}")
    if arr.size and arr.min() < 0:
        raise ValueError("labels must be non-negative")
    if arr.size and arr.max() > 255:
        raise LabelOverflow("more than 255 instances cannot be stored in PGM")
    with _binary(path_or_file, "wb") as f:
        height, width = arr.shape
        f.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        f.write(arr.astype(np.uint8).tobytes())


# -- point CSVs ---------------------------------------------------------------

@dataclass(frozen=True)
class CsvSchema:
    name: str
    columns: tuple[str, ...]


RAW_SLAM_SCHEMA = CsvSchema("raw_slam_points", ("u", "v", "depth_m", "confidence"))
CONTROL_POINT_SCHEMA = CsvSchema("control_points", ("u", "v", "depth_m"))
BOARD_SCHEMA = CsvSchema("board_correspondences", ("X", "Y", "Z", "u", "v"))
GROUND_SCHEMA = CsvSchema("ground_correspondences", ("u", "v", "X_m", "Y_m"))


def read_points_csv(path_or_file, schema: CsvSchema) -> list[tuple[float, ...]]:
    """Parse a comma-separated point file against a column schema.

    ``#`` lines are comments; an initial line whose cells are all
    non-numeric is treated as an optional header.  Raises
    ``SchemaMismatch`` on wrong column counts and ``ParseError`` (with
    the line number) on unparseable cells.
    """
    with _binary(path_or_file, "rb") as f:
        path = _name_of(f)
        raw = f.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not valid UTF-8: {exc}", path=path) from None

    rows: list[tuple[float, ...]] = []
    saw_data = False
    for line_no, line in enumerate(text.split("\n"), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        cells = [c.strip() for c in line.split(",")]
        if not saw_data and not any(_is_number(c) for c in cells):
            continue  # optional header line
        saw_data = True
        if len(cells) != len(schema.columns):
            raise SchemaMismatch(
                f"expected {len(schema.columns)} columns "
                f"({', '.join(schema.columns)}), got {len(cells)}",
                path=path,
                line=line_no,
            )
        values = []
        for col, cell in zip(schema.columns, cells):
            try:
                value = float(cell)
            except ValueError:
                raise ParseError(
                    f"column {col}: cannot parse {cell!r}", path=path, line=line_no
                ) from None
            if not math.isfinite(value):
                raise ParseError(
                    f"column {col}: non-finite value {cell!r}",
                    path=path,
                    line=line_no,
                )
            values.append(value)
        rows.append(tuple(values))
    return rows


def _is_number(cell: str) -> bool:
    try:
        return math.isfinite(float(cell))
    except ValueError:
        return False


def _format_value(value: float) -> str:
    return f"{value:.9g}"


def write_points_csv(
    rows: Sequence[Sequence[float]], path_or_file, schema: CsvSchema
) -> None:
    """Write rows with a header line, LF endings and 9 significant digits."""
    lines = [",".join(schema.columns)]
    for row in rows:
        if len(row) != len(schema.columns):
            raise ValueError(
                f"row has {len(row)} values, schema {schema.name} "
                f"needs {len(schema.columns)}"
            )
        lines.append(",".join(_format_value(float(v)) for v in row))
    data = ("\n".join(lines) + "\n").encode("utf-8")
    with _binary(path_or_file, "wb") as f:
        f.write(data)


def _int_cell(value: float, what: str, path: str, row: int) -> int:
    if value != int(value):
        raise ParseError(f"{what} must be an integer, got {value}", path=path, line=row)
    return int(value)


def read_raw_slam_points(path_or_file) -> list[RawSlamPoint]:
    path = _name_of(path_or_file) if hasattr(path_or_file, "read") else str(path_or_file)
    points = []
    for i, (u, v, depth, conf) in enumerate(
        read_points_csv(path_or_file, RAW_SLAM_SCHEMA), start=1
    ):
        try:
            points.append(
                RawSlamPoint(pixel=Pixel(u, v), depth=depth, confidence=conf)
            )
        except ValueError as exc:
            raise ParseError(str(exc), path=path, line=i) from None
    return points


def write_raw_slam_points(points: Sequence[RawSlamPoint], path_or_file) -> None:
    rows = [(p.pixel.u, p.pixel.v, p.depth, p.confidence) for p in points]
    write_points_csv(rows, path_or_file, RAW_SLAM_SCHEMA)


def read_control_points(path_or_file) -> list[ControlPoint]:
    path = _name_of(path_or_file) if hasattr(path_or_file, "read") else str(path_or_file)
    points = []
    for i, (u, v, depth) in enumerate(
        read_points_csv(path_or_file, CONTROL_POINT_SCHEMA), start=1
    ):
        try:
            points.append(
                ControlPoint(
                    u=_int_cell(u, "u", path, i),
                    v=_int_cell(v, "v", path, i),
                    depth=depth,
                )
            )
        except ValueError as exc:
            raise ParseError(str(exc), path=path, line=i) from None
    return points


def write_control_points(points: Sequence[ControlPoint], path_or_file) -> None:
    rows = [(p.u, p.v, p.depth) for p in points]
    write_points_csv(rows, path_or_file, CONTROL_POINT_SCHEMA)


# -- JSON artifacts -----------------------------------------------------------

def write_json(data, path_or_file) -> None:
    """Key-sorted JSON so byte-identical reruns produce byte-identical files."""
    text = json.dumps(data, sort_keys=True, indent=2) + "\n"
    with _binary(path_or_file, "wb") as f:
        f.write(text.encode("utf-8"))


_dump_json = write_json


def _load_json(path_or_file):
    with _binary(path_or_file, "rb") as f:
        path = _name_of(f)
        raw = f.read()
    try:
        return json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"invalid JSON: {exc}", path=path) from None


def write_intrinsics(k: CameraIntrinsics, path_or_file) -> None:
    _dump_json(k.to_dict(), path_or_file)


def read_intrinsics(path_or_file) -> CameraIntrinsics:
    data = _load_json(path_or_file)
    try:
        return CameraIntrinsics.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaMismatch(f"invalid intrinsics: {exc}") from None


def write_pose(pose: Pose, path_or_file) -> None:
    _dump_json(pose.to_dict(), path_or_file)


def read_pose(path_or_file) -> Pose:
    data = _load_json(path_or_file)
    try:
        return Pose.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaMismatch(f"invalid pose: {exc}") from None


def report_to_dict(report: FrameReport) -> dict:
    return {
        "frame_id": report.frame_id,
        "scale": {"alpha": report.scale.alpha, "beta": report.scale.beta},
        "control_points_used": report.control_points_used,
        "persons": [
            {
                "id": p.instance_id,
                "centroid": [p.centroid_pixel.u, p.centroid_pixel.v],
                "position": [p.position.x, p.position.y, p.position.z],
            }
            for p in report.persons
        ],
        "pairs": [
            {
                "a": pair.id_a,
                "b": pair.id_b,
                "distance_m": pair.distance,
                "risk": pair.risk.value,
            }
            for pair in report.pairs
        ],
    }


def report_from_dict(data: dict) -> FrameReport:
    try:
        persons = tuple(
            PersonMeasurement(
                instance_id=int(p["id"]),
                centroid_pixel=Pixel(*[float(c) for c in p["centroid"]]),
                position=Point3(*[float(c) for c in p["position"]]),
            )
            for p in data["persons"]
        )
        pairs = tuple(
            PairDistance(
                id_a=int(pair["a"]),
                id_b=int(pair["b"]),
                distance=float(pair["distance_m"]),
                risk=Risk(pair["risk"]),
            )
            for pair in data["pairs"]
        )
        return FrameReport(
            frame_id=str(data["frame_id"]),
            persons=persons,
            pairs=pairs,
            scale=ScaleParams(
                alpha=float(data["scale"]["alpha"]),
                beta=float(data["scale"]["beta"]),
            ),
            control_points_used=int(data["control_points_used"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaMismatch(f"invalid frame report: {exc}") from None


def write_report(report: FrameReport, path_or_file) -> None:
    _dump_json(report_to_dict(report), path_or_file)


def read_report(path_or_file) -> FrameReport:
    return report_from_dict(_load_json(path_or_file))


# -- PPM overlays -------------------------------------------------------------

def write_ppm(rgb: np.ndarray, path_or_file) -> None:
    """Write an (h, w, 3) uint8 image as binary PPM (P6)."""
    arr = np.asarray(rgb)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        raise ValueError("PPM overlays must be (h, w, 3) uint8 arrays")
    with _binary(path_or_file, "wb") as f:
        height, width = arr.shape[:2]
        f.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        f.write(arr.tobytes())


# -- pipeline configuration ---------------------------------------------------

_CONFIG_PATH_KEYS = (
    "fixed_intrinsics",
    "mobile_intrinsics",
    "pose",
    "control_points",
)
_CONFIG_VALUE_KEYS = {
    "confidence_threshold": float,
    "dangerous_below": float,
    "safe_above": float,
    "min_pixels": int,
    "trim_fraction": float,
    "frames": str,
    "masks": str,
}


@dataclass(frozen=True)
class PipelineConfig:
    """Defaults for the CLI: artifact paths plus thresholds.

    Paths are resolved relative to the config file's directory and must
    exist at load time.
    """

    fixed_intrinsics: str | None = None
    mobile_intrinsics: str | None = None
    pose: str | None = None
    control_points: str | None = None
    confidence_threshold: float = 1.0
    dangerous_below: float = 1.0
    safe_above: float = 2.0
    min_pixels: int = 50
    trim_fraction: float = 0.0
    frames: str | None = None
    masks: str | None = None


def load_config(path) -> PipelineConfig:
    data = _load_json(path)
    if not isinstance(data, dict):
        raise SchemaMismatch("config must be a JSON object", path=str(path))
    base = Path(path).parent
    kwargs = {}
    for key, value in data.items():
        if key in _CONFIG_PATH_KEYS:
            resolved = str((base / str(value)).resolve())
            if not Path(resolved).is_file():
                raise ParseError(
                    f"referenced file does not exist: {value}", path=str(path)
                )
            kwargs[key] = resolved
        elif key in _CONFIG_VALUE_KEYS:
            try:
                kwargs[key] = _CONFIG_VALUE_KEYS[key](value)
            except (TypeError, ValueError) as exc:
                raise SchemaMismatch(
                    f"invalid value for {key}: {exc}", path=str(path)
                ) from None
        else:
            raise SchemaMismatch(f"unknown config key: {key}", path=str(path))
    return PipelineConfig(**kwargs)
