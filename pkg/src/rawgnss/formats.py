"""Text file formats shared by the command line and the validation tools.

Pose CSV
    ``week,tow,ecef_x,ecef_y,ecef_z,qw,qx,qy,qz`` one pose per line; the header
    line is optional on input and always written. The row index (from 0) is
    the frame id used by feature files.
Fix CSV
    ``week,tow,ecef_x,ecef_y,ecef_z,vx,vy,vz,clock_bias_m,hdop,vdop,n_sats,mode``
Feature CSV (orientation checks)
    first line ``fx,fy,cx,cy`` values, then the header
    ``frame_id,feature_id,u_px,v_px,ecef_x,ecef_y,ecef_z``.
Track CSV (refinement)
    first line ``fx,fy,cx,cy`` values, then the header
    ``frame_id,feature_id,u_px,v_px,depth_m``.

Floats are written with ``repr`` (shortest round-trip form), which makes every
writer deterministic and lossless.
"""
from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError
from .frames import GlobalPose, GnssTime, Quaternion

POSE_HEADER = "week,tow,ecef_x,ecef_y,ecef_z,qw,qx,qy,qz"
FIX_HEADER = "week,tow,ecef_x,ecef_y,ecef_z,vx,vy,vz,clock_bias_m,hdop,vdop,n_sats,mode"
FEATURE_HEADER = "frame_id,feature_id,u_px,v_px,ecef_x,ecef_y,ecef_z"
TRACK_HEADER = "frame_id,feature_id,u_px,v_px,depth_m"


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _f(v) -> str:
    return repr(float(v))


def _finite(text: str, what: str, lineno: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise InputError(f"line {lineno}: bad {what} {text!r}") from None
    if not math.isfinite(v):
        raise InputError(f"line {lineno}: non-finite {what}")
    return v


# --- poses ------------------------------------------------------------------

def format_poses(poses) -> str:
    lines = [POSE_HEADER]
    for p in poses:
        q = p.orientation
        lines.append(",".join([str(p.time.week), _f(p.time.tow), *(_f(c) for c in p.position),
                               _f(q.w), _f(q.x), _f(q.y), _f(q.z)]))
    return "\n".join(lines) + "\n"


def parse_poses(text: str) -> list:
    poses = []
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.replace(" ", "") == POSE_HEADER:
            continue
        parts = line.split(",")
        if len(parts) != 9:
            raise InputError(f"line {n}: expected 9 pose fields, got {len(parts)}")
        vals = [_finite(v, "pose field", n) for v in parts[1:]]
        try:
            t = GnssTime(int(parts[0]), vals[0])
            q = Quaternion.from_array(vals[4:8])
        except ValueError as exc:
            raise InputError(f"line {n}: {exc}") from None
        poses.append(GlobalPose(np.array(vals[1:4]), q, t))
    return poses


# --- fixes ------------------------------------------------------------------

@dataclass
class FixRecord:
    time: GnssTime
    position: np.ndarray
    velocity: np.ndarray | None
    clock_bias: float
    hdop: float | None
    vdop: float | None
    n_sats: int
    mode: str


def format_fixes(solutions) -> str:
    lines = [FIX_HEADER]
    for s in solutions:
        vel = s.velocity if s.velocity is not None else (None, None, None)
        dop = s.dop
        lines.append(",".join([
            str(s.time.week), _f(s.time.tow), *(_f(c) for c in s.position),
            *("" if v is None else _f(v) for v in vel), _f(s.clock_bias),
            "" if dop is None else _f(dop.hdop), "" if dop is None else _f(dop.vdop),
            str(s.n_sats_used), s.mode,
        ]))
    return "\n".join(lines) + "\n"


def parse_fixes(text: str) -> list:
    out = []
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.replace(" ", "") == FIX_HEADER:
            continue
        parts = line.split(",")
        if len(parts) != 13:
            raise InputError(f"line {n}: expected 13 fix fields, got {len(parts)}")

        def opt(v, what):
            return None if not v.strip() else _finite(v, what, n)

        vel = [opt(v, "velocity") for v in parts[5:8]]
        try:
            t = GnssTime(int(parts[0]), _finite(parts[1], "tow", n))
            n_sats = int(parts[11])
        except ValueError as exc:
            raise InputError(f"line {n}: {exc}") from None
        out.append(FixRecord(
            time=t,
            position=np.array([_finite(v, "position", n) for v in parts[2:5]]),
            velocity=None if any(v is None for v in vel) else np.array(vel),
            clock_bias=_finite(parts[8], "clock bias", n),
            hdop=opt(parts[9], "hdop"), vdop=opt(parts[10], "vdop"),
            n_sats=n_sats, mode=parts[12].strip(),
        ))
    return out


def parse_positions(text: str) -> list:
    """Fix or pose CSV into ``(time, position, hdop, vdop)`` tuples."""
    first = next((ln for ln in text.splitlines() if ln.strip()), "")
    if first.replace(" ", "") == FIX_HEADER or len(first.split(",")) == 13:
        return [(f.time, f.position, f.hdop, f.vdop) for f in parse_fixes(text)]
    return [(p.time, p.position, None, None) for p in parse_poses(text)]


# --- features -----------------------------------------------------------------

@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0 and self.cx > 0 and self.cy > 0):
            raise ValueError("intrinsics must be positive")


def _intrinsics(line: str) -> Intrinsics:
    parts = line.split(",")
    if len(parts) != 4:
        raise InputError("line 1: intrinsics line needs fx,fy,cx,cy")
    try:
        return Intrinsics(*(_finite(v, "intrinsic", 1) for v in parts))
    except ValueError as exc:
        raise InputError(f"line 1: {exc}") from None


def _table(text: str, header: str, ncols: int):
    lines = text.splitlines()
    if not lines:
        raise InputError("empty feature file")
    intr = _intrinsics(lines[0])
    rows = []
    for n, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.replace(" ", "") == header:
            continue
        parts = line.split(",")
        if len(parts) != ncols:
            raise InputError(f"line {n}: expected {ncols} fields, got {len(parts)}")
        try:
            ids = (int(parts[0]), int(parts[1]))
        except ValueError:
            raise InputError(f"line {n}: bad frame or feature id") from None
        rows.append((*ids, *(_finite(v, "value", n) for v in parts[2:])))
    return intr, rows


def format_features(intr: Intrinsics, rows) -> str:
    """``rows``: (frame_id, feature_id, u, v, x, y, z)."""
    lines = [",".join(_f(v) for v in (intr.fx, intr.fy, intr.cx, intr.cy)), FEATURE_HEADER]
    for r in rows:
        lines.append(",".join([str(int(r[0])), str(int(r[1])), *(_f(v) for v in r[2:7])]))
    return "\n".join(lines) + "\n"


def parse_features(text: str):
    return _table(text, FEATURE_HEADER, 7)


def format_tracks(intr: Intrinsics, rows) -> str:
    """``rows``: (frame_id, feature_id, u, v, depth)."""
    lines = [",".join(_f(v) for v in (intr.fx, intr.fy, intr.cx, intr.cy)), TRACK_HEADER]
    for r in rows:
        lines.append(",".join([str(int(r[0])), str(int(r[1])), *(_f(v) for v in r[2:5])]))
    return "\n".join(lines) + "\n"


def parse_tracks(text: str):
    intr, rows = _table(text, TRACK_HEADER, 5)
    for r in rows:
        if r[4] <= 0.0:
            raise InputError(f"feature {r[1]} in frame {r[0]} has non-positive depth")
    return intr, rows


# --- flat key-value configuration ------------------------------------------------

def parse_key_values(text: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment. Values stay strings."""
    out = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"line {n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise InputError(f"line {n}: empty key")
        if key in out:
            raise InputError(f"line {n}: duplicate key {key!r}")
        out[key] = value.strip().strip('"')
    return out
