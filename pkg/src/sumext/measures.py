"""Finite atomic measures, boxes, and normalization into the unit-cube frame."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


class InputError(ValueError):
    """Malformed measure input (bad weight, bad row, empty data)."""


# ---------------------------------------------------------------------------
# boxes


@dataclass(frozen=True)
class Box:
    """Axis-parallel box with half-open membership (lo, hi] per coordinate."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in np.reshape(self.lo, -1)))
        object.__setattr__(self, "hi", tuple(float(v) for v in np.reshape(self.hi, -1)))

    @property
    def n(self) -> int:
        return len(self.lo)

    @property
    def lo_arr(self):
        return np.array(self.lo)

    @property
    def hi_arr(self):
        return np.array(self.hi)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo_arr + self.hi_arr)

    @property
    def sides(self) -> np.ndarray:
        return self.hi_arr - self.lo_arr

    @property
    def diam(self) -> float:
        return float(np.linalg.norm(self.sides))

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    def contains(self, pts) -> np.ndarray:
        pts = np.reshape(np.asarray(pts, float), (-1, self.n))
        return np.all((pts > self.lo_arr) & (pts <= self.hi_arr), axis=1)

    def contains_closed(self, pts) -> np.ndarray:
        pts = np.reshape(np.asarray(pts, float), (-1, self.n))
        return np.all((pts >= self.lo_arr) & (pts <= self.hi_arr), axis=1)

    def dilate(self, factor: float) -> "Box":
        c = self.center
        half = 0.5 * factor * self.sides
        return Box(c - half, c + half)

    def intersect(self, other: "Box") -> "Box | None":
        lo = np.maximum(self.lo_arr, other.lo_arr)
        hi = np.minimum(self.hi_arr, other.hi_arr)
        if np.any(hi <= lo):
            return None
        return Box(lo, hi)

    def meets(self, other: "Box") -> bool:
        """Closures intersect."""
        return bool(np.all(self.lo_arr <= other.hi_arr) and np.all(other.lo_arr <= self.hi_arr))

    def to_json(self):
        return {"lo": list(self.lo), "hi": list(self.hi)}


def unit_box(n: int) -> Box:
    return Box(np.zeros(n), np.ones(n))


# ---------------------------------------------------------------------------
# frame


@dataclass(frozen=True)
class Frame:
    """x_normalized = 0.5 + (x_raw - shift) / scale; finite weights gain scale^(mp - n)."""

    shift: tuple
    scale: float
    weight_factor: float

    def forward(self, x):
        x = np.asarray(x, float)
        return 0.5 + (x - np.asarray(self.shift)) / self.scale

    def inverse(self, y):
        y = np.asarray(y, float)
        return np.asarray(self.shift) + self.scale * (y - 0.5)

    def to_json(self):
        return {"shift": list(self.shift), "scale": self.scale, "weight_factor": self.weight_factor}


def identity_frame(n: int) -> Frame:
    return Frame(tuple([0.5] * n), 1.0, 1.0)


# ---------------------------------------------------------------------------
# measure


@dataclass(frozen=True)
class AtomicMeasure:
    locations: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    frame: Frame = None
    merge_log: tuple = field(default=(), compare=False)

    def __post_init__(self):
        loc = np.asarray(self.locations, float)
        if loc.ndim == 1:
            loc = loc.reshape(-1, 1)
        w = np.asarray(self.weights, float).reshape(-1)
        v = np.asarray(self.values, float).reshape(-1)
        if not (loc.shape[0] == w.shape[0] == v.shape[0]):
            raise InputError("locations, weights and values differ in length")
        if np.any(~(w > 0)):
            raise InputError("atom weights must be positive (or inf)")
        if not np.all(np.isfinite(loc)):
            raise InputError("atom locations must be finite")
        for arr in (loc, w, v):
            arr.setflags(write=False)
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "values", v)
        if self.frame is None:
            object.__setattr__(self, "frame", identity_frame(loc.shape[1] if loc.size else 1))

    @property
    def n(self) -> int:
        return self.locations.shape[1]

    def __len__(self):
        return self.locations.shape[0]

    @property
    def infinite(self) -> np.ndarray:
        """Exact-interpolation flag per atom."""
        return np.isinf(self.weights)

    def select(self, mask) -> "AtomicMeasure":
        mask = np.asarray(mask)
        return AtomicMeasure(self.locations[mask], self.weights[mask], self.values[mask], self.frame)

    def restrict(self, box: Box) -> "AtomicMeasure":
        return self.select(box.contains(self.locations))

    def indices_in(self, box: Box) -> np.ndarray:
        return np.flatnonzero(box.contains(self.locations))

    def mass(self, box: Box | None = None) -> float:
        w = self.weights if box is None else self.weights[box.contains(self.locations)]
        if w.size == 0:
            return 0.0
        if np.any(np.isinf(w)):
            return math.inf
        return float(np.sum(w))

    def scale(self, t: float, p: float) -> "AtomicMeasure":
        if not t > 0:
            raise ValueError("scale factor must be positive")
        w = np.where(np.isinf(self.weights), self.weights, self.weights * t**p)
        return AtomicMeasure(self.locations, w, self.values, self.frame)

    def with_values(self, values) -> "AtomicMeasure":
        return AtomicMeasure(self.locations, self.weights, values, self.frame)

    def to_json(self):
        return [
            {"x": list(map(float, x)), "w": ("inf" if math.isinf(w) else float(w)), "f": float(f)}
            for x, w, f in zip(self.locations, self.weights, self.values)
        ]


def merge_duplicates(locations, weights, values):
    """Merge atoms at identical locations: weights add (inf wins), values are weight-averaged."""
    locations = np.asarray(locations, float)
    if locations.ndim == 1:
        locations = locations.reshape(-1, 1)
    groups = {}
    for i, x in enumerate(map(tuple, locations)):
        groups.setdefault(x, []).append(i)
    out_x, out_w, out_f, notes = [], [], [], []
    for x, idx in groups.items():
        w = np.asarray(weights, float)[idx]
        f = np.asarray(values, float)[idx]
        if len(idx) == 1:
            out_x.append(x)
            out_w.append(w[0])
            out_f.append(f[0])
            continue
        inf = np.isinf(w)
        if inf.any():
            fi = f[inf]
            if np.ptp(fi) > 0:
                raise InputError(f"infeasible: conflicting exact values at location {x}")
            wt, ft = math.inf, float(fi[0])
        else:
            wt = float(w.sum())
            ft = float(np.dot(w, f) / wt)
        msg = f"merged {len(idx)} atoms at {x}: weight {wt}, value {ft}"
        log.info(msg)
        notes.append(msg)
        out_x.append(x)
        out_w.append(wt)
        out_f.append(ft)
    return np.array(out_x, float), np.array(out_w, float), np.array(out_f, float), tuple(notes)


def normalize(locations, weights, values, m: int, p: float) -> AtomicMeasure:
    """Map atoms affinely into (1/10)Q° and rescale finite weights by scale^(mp - n).

    The factor makes J(f, mu) on normalized data equal scale^(mp-n) times the raw value,
    so every ratio between such quantities is unchanged.
    """
    locations = np.asarray(locations, float)
    if locations.size == 0:
        raise InputError("empty measure")
    if locations.ndim == 1:
        locations = locations.reshape(-1, 1)
    x, w, f, notes = merge_duplicates(locations, weights, values)
    n = x.shape[1]
    lo, hi = x.min(axis=0), x.max(axis=0)
    shift = 0.5 * (lo + hi)
    span = float(np.max(hi - lo))
    scale = span / 0.1 if span > 0 else 1.0
    wf = scale ** (m * p - n)
    frame = Frame(tuple(shift), scale, wf)
    y = frame.forward(x)
    w2 = np.where(np.isinf(w), w, w * wf)
    return AtomicMeasure(y, w2, f, frame, notes)


# ---------------------------------------------------------------------------
# input files


def _parse_weight(token: str, where: str) -> float:
    t = token.strip().lower()
    if t in ("inf", "+inf", "infinity"):
        return math.inf
    try:
        w = float(t)
    except ValueError as exc:
        raise InputError(f"{where}: weight {token!r} is not a number or 'inf'") from exc
    if not (w > 0) or math.isinf(w):
        raise InputError(f"{where}: weight must be positive, got {token!r}")
    return w


def read_csv(path, n: int | None = None):
    """CSV with columns x_1..x_n, weight, value.  A header row is optional."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and any(c.strip().lower().startswith(("x", "weight", "w")) for c in row[:1]):
                continue
            rows.append((lineno, row))
    if not rows:
        raise InputError(f"{path}: no atoms")
    width = len(rows[0][1])
    dim = width - 2 if n is None else n
    if dim < 1 or width != dim + 2:
        raise InputError(f"{path}: expected {dim + 2} columns, found {width}")
    xs, ws, fs = [], [], []
    for lineno, row in rows:
        where = f"{path}:{lineno}"
        if len(row) != width:
            raise InputError(f"{where}: expected {width} columns, found {len(row)}")
        try:
            xs.append([float(c) for c in row[:dim]])
            fs.append(float(row[dim + 1]))
        except ValueError as exc:
            raise InputError(f"{where}: {exc}") from exc
        ws.append(_parse_weight(row[dim], where))
    return np.array(xs), np.array(ws), np.array(fs)


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if isinstance(data, dict) and "atoms" in data:
        data = data["atoms"]
    if not isinstance(data, list) or not data:
        raise InputError(f"{path}: expected a non-empty list of atoms")
    xs, ws, fs = [], [], []
    for i, item in enumerate(data):
        where = f"{path}[{i}]"
        try:
            xs.append([float(v) for v in np.reshape(item["x"], -1)])
            fs.append(float(item["f"]))
            ws.append(_parse_weight(str(item["w"]), where))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"{where}: {exc}") from exc
    if len({len(x) for x in xs}) != 1:
        raise InputError(f"{path}: atoms have mixed dimensions")
    return np.array(xs), np.array(ws), np.array(fs)


def read_atoms(path, n: int | None = None):
    if str(path).lower().endswith(".json"):
        return read_json(path)
    return read_csv(path, n)
