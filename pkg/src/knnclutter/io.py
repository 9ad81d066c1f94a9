"""CSV and JSON file formats.

Pattern files are comma-separated with a mandatory header holding ``x`` and
``y`` columns and an optional ``label`` column (``clutter`` / ``feature``).
Every writer goes through :func:`atomic_write` so readers never see a
partially written file.
"""
from __future__ import annotations

import csv
import errno
import hashlib
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .errors import LengthMismatch, PatternParseError
from .pattern import CLUTTER, FEATURE, PointPattern, Window

LABEL_VALUES = {CLUTTER: False, FEATURE: True}


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    if not path.parent.is_dir():
        raise FileNotFoundError(errno.ENOENT, "output directory does not exist", str(path))
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def fmt(v) -> str:
    """Shortest round-tripping text for a number; empty for missing values."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return ""
    return repr(v)


def _csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([c if isinstance(c, str) else fmt(c) for c in row])
    return buf.getvalue()


def bounding_window(points: np.ndarray) -> Window:
    """Bounding box of the points, padded where it would be degenerate."""
    if len(points) == 0:
        return Window.square(0.0, 1.0)
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    pad = np.where(hi > lo, 0.0, 0.5)
    return Window(lo[0] - pad[0], hi[0] + pad[0], lo[1] - pad[1], hi[1] + pad[1])


def read_pattern_csv(path, window: Optional[Window] = None) -> PointPattern:
    """Parse a pattern file.

    Raises
    ------
    PatternParseError
        With the offending line number, on a missing header column,
        non-numeric coordinate or unknown label.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PatternParseError(f"{path}: empty file, expected a header") from None
        cols = [h.strip().lower() for h in header]
        for need in ("x", "y"):
            if need not in cols:
                raise PatternParseError(f"{path}:1: header lacks column {need!r}")
        ix, iy = cols.index("x"), cols.index("y")
        il = cols.index("label") if "label" in cols else None
        pts, labels = [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(cols):
                raise PatternParseError(
                    f"{path}:{line}: expected {len(cols)} fields, got {len(row)}"
                )
            try:
                x, y = float(row[ix]), float(row[iy])
            except ValueError:
                raise PatternParseError(
                    f"{path}:{line}: non-numeric coordinate {row[ix]!r}, {row[iy]!r}"
                ) from None
            if not (math.isfinite(x) and math.isfinite(y)):
                raise PatternParseError(f"{path}:{line}: non-finite coordinate")
            pts.append((x, y))
            if il is not None:
                lab = row[il].strip().lower()
                if lab not in LABEL_VALUES:
                    raise PatternParseError(
                        f"{path}:{line}: unknown label {row[il]!r} "
                        f"(expected {CLUTTER!r} or {FEATURE!r})"
                    )
                labels.append(LABEL_VALUES[lab])
    points = np.array(pts, dtype=float).reshape(-1, 2)
    if window is None:
        window = bounding_window(points)
    truth = np.array(labels, dtype=bool) if il is not None else None
    return PointPattern(points, window, truth=truth)


def pattern_csv_text(pattern: PointPattern) -> str:
    if pattern.truth is None:
        return _csv_text(("x", "y"), pattern.points.tolist())
    rows = (
        (x, y, FEATURE if t else CLUTTER)
        for (x, y), t in zip(pattern.points.tolist(), pattern.truth.tolist())
    )
    return _csv_text(("x", "y", "label"), rows)


def write_pattern_csv(pattern: PointPattern, path) -> None:
    atomic_write(path, pattern_csv_text(pattern))


LABEL_COLUMNS = ("index", "x", "y", "is_feature", "delta")


def write_labels_csv(path, pattern: PointPattern, is_feature, delta=None, index=None) -> None:
    """Labels file: one row per point of ``pattern`` in input order.

    ``index`` defaults to ``pattern.parent_index`` (the row in the input file
    when the pattern came straight from :func:`read_pattern_csv`). ``delta``
    may be ``None`` for composed labels, which leaves the column empty.
    """
    is_feature = np.asarray(is_feature, dtype=bool)
    if len(is_feature) != pattern.n:
        raise LengthMismatch("one label per point is required")
    index = pattern.parent_index if index is None else np.asarray(index)
    dl = [None] * pattern.n if delta is None else np.asarray(delta, dtype=float).tolist()
    rows = (
        (int(i), x, y, bool(f), d)
        for i, (x, y), f, d in zip(index.tolist(), pattern.points.tolist(), is_feature.tolist(), dl)
    )
    atomic_write(path, _csv_text(LABEL_COLUMNS, rows))


def _parse_flag(text: str, path, line) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", FEATURE):
        return True
    if t in ("0", "false", CLUTTER):
        return False
    raise PatternParseError(f"{path}:{line}: cannot read {text!r} as a label")


def read_labels_csv(path) -> np.ndarray:
    """Predicted feature flags from a labels file (``is_feature`` column)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise PatternParseError(f"{path}: empty file, expected a header") from None
        if "is_feature" not in header:
            raise PatternParseError(f"{path}:1: header lacks column 'is_feature'")
        col = header.index("is_feature")
        out = []
        for row in reader:
            if not row:
                continue
            if len(row) <= col:
                raise PatternParseError(f"{path}:{reader.line_num}: missing is_feature field")
            out.append(_parse_flag(row[col], path, reader.line_num))
    return np.array(out, dtype=bool)


def read_truth_csv(path) -> np.ndarray:
    """Truth flags from a pattern file with a ``label`` column, or a labels file."""
    with open(path, newline="", encoding="utf-8") as fh:
        header = [h.strip().lower() for h in next(csv.reader(fh), [])]
    if "label" in header:
        pattern = read_pattern_csv(path)
        return np.asarray(pattern.truth)
    return read_labels_csv(path)


def curve_csv_text(k_set: Sequence[int], s: Sequence[float]) -> str:
    return _csv_text(("k", "entropy"), zip(k_set, np.asarray(s, dtype=float).tolist()))


def table_csv_text(columns: Sequence[str], rows: List[dict]) -> str:
    return _csv_text(columns, ([row.get(c) for c in columns] for row in rows))


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    atomic_write(path, dump_json(obj))


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
