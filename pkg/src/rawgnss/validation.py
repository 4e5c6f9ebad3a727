"""Accuracy assessment: grid altitude statistics, DOP-scaled horizontal error,
orientation error from reprojection residuals, and A/B comparison."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BehindCamera,
    MissingDop,
    NoQualifiedCells,
    RankDeficient,
    SpecMismatch,
    Underdetermined,
)
from .formats import Intrinsics
from .frames import Geodetic, GlobalPose, ecef_to_geodetic, geodetic_to_ecef, ned_matrix, skew

PERCENTILES = (50.0, 68.0, 95.0, 99.0)


# --- grid altitude ------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Cell layout on the east/north plane tangent at ``origin``.

    ``axes`` optionally pins the tangent-plane rows (north, east, down) so that
    cell assignment stays fixed when the origin is moved.
    """

    origin: Geodetic | None = None
    cell_size: float = 5.0
    min_passes: int = 3
    min_distinct_drives: int = 2
    bin_width: float = 0.25
    axes: tuple | None = None

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")
        if self.min_passes < 2:
            raise ValueError("min_passes must be at least 2")
        if self.min_distinct_drives < 1:
            raise ValueError("min_distinct_drives must be at least 1")
        if not self.bin_width > 0:
            raise ValueError("bin_width must be positive")

    def resolved(self, positions) -> "GridSpec":
        """Spec with the origin defaulted to the centroid of ``positions``."""
        if self.origin is not None:
            return self
        centroid = np.mean(np.asarray(positions, dtype=float), axis=0)
        return GridSpec(ecef_to_geodetic(centroid), self.cell_size, self.min_passes,
                        self.min_distinct_drives, self.bin_width, self.axes)

    def frame(self) -> np.ndarray:
        if self.axes is not None:
            return np.asarray(self.axes, dtype=float).reshape(3, 3)
        return ned_matrix(self.origin)

    def as_dict(self) -> dict:
        return {
            "origin": None if self.origin is None else list(map(float, self.origin)),
            "cell_size": self.cell_size, "min_passes": self.min_passes,
            "min_distinct_drives": self.min_distinct_drives, "bin_width": self.bin_width,
            "axes": None if self.axes is None else [float(v) for v in np.ravel(self.axes)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        origin = None if d.get("origin") is None else Geodetic(*d["origin"])
        axes = None if d.get("axes") is None else tuple(d["axes"])
        return cls(origin, d["cell_size"], d["min_passes"], d["min_distinct_drives"],
                   d.get("bin_width", 0.25), axes)


@dataclass(frozen=True)
class GridFix:
    drive: object
    time: object
    position: np.ndarray
    vdop: float | None = None
    hdop: float | None = None


@dataclass
class CellStats:
    index: tuple
    n_fixes: int
    n_drives: int
    n_passes: int
    mean_alt: float
    deviations: list


@dataclass
class GridReport:
    spec: GridSpec
    cells: list
    deviations: np.ndarray
    rmse: float
    sigma: float             # de-meaning corrected
    percentiles: dict
    histogram: list          # (bin_left, bin_right, count)
    excluded_cells: int = 0

    def as_dict(self) -> dict:
        return {
            "spec": self.spec.as_dict(),
            "n_cells": len(self.cells),
            "excluded_cells": self.excluded_cells,
            "n_fixes": int(self.deviations.size),
            "rmse_m": self.rmse,
            "sigma_m": self.sigma,
            "percentiles_abs_m": {f"p{k:g}": v for k, v in self.percentiles.items()},
            "deviations_m": [float(v) for v in self.deviations],
            "cells": [{"index": list(c.index), "n_fixes": c.n_fixes, "n_drives": c.n_drives,
                       "n_passes": c.n_passes, "mean_alt_m": c.mean_alt} for c in self.cells],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridReport":
        dev = np.array(d["deviations_m"], dtype=float)
        return cls(GridSpec.from_dict(d["spec"]), [], dev, float(d["rmse_m"]), float(d["sigma_m"]),
                   {float(k[1:]): v for k, v in d["percentiles_abs_m"].items()},
                   histogram(dev, d["spec"].get("bin_width", 0.25)), d.get("excluded_cells", 0))


def histogram(values, bin_width: float, edges=None) -> list:
    values = np.asarray(values, dtype=float)
    if edges is None:
        top = max(float(np.max(np.abs(values))) if values.size else 0.0, bin_width)
        n = int(math.ceil(top / bin_width))
        edges = np.arange(-n, n + 1) * bin_width
    counts, _ = np.histogram(values, bins=edges)
    return [(float(a), float(b), int(c)) for a, b, c in zip(edges[:-1], edges[1:], counts)]


def _passes(times_in_cell, drive_index) -> int:
    """Number of maximal runs of consecutive drive epochs inside the cell."""
    idx = sorted(drive_index[t] for t in times_in_cell)
    return 1 + sum(1 for a, b in zip(idx, idx[1:]) if b != a + 1)


def grid_altitude_report(fixes, spec: GridSpec | None = None) -> GridReport:
    """Altitude spread of fixes that fall into the same road cell.

    ``fixes`` is an iterable of :class:`GridFix`. Altitude is the up
    coordinate in the tangent plane at the grid origin. A pass is a maximal
    run of consecutive fixes of one drive inside a cell.
    """
    fixes = sorted(fixes, key=lambda f: (str(f.drive), f.time))
    if not fixes:
        raise NoQualifiedCells("no fixes given")
    pos = np.array([f.position for f in fixes], dtype=float)
    spec = (spec or GridSpec()).resolved(pos)
    frame = spec.frame()
    rel = (pos - geodetic_to_ecef(spec.origin)) @ frame.T
    north, east, alt = rel[:, 0], rel[:, 1], -rel[:, 2]

    drive_index = defaultdict(dict)
    for f in fixes:
        drive_index[f.drive].setdefault(f.time, len(drive_index[f.drive]))
    buckets = defaultdict(list)
    for i, f in enumerate(fixes):
        key = (int(math.floor(east[i] / spec.cell_size)), int(math.floor(north[i] / spec.cell_size)))
        buckets[key].append(i)

    cells, excluded = [], 0
    for key in sorted(buckets):
        members = buckets[key]
        by_drive = defaultdict(list)
        for i in members:
            by_drive[fixes[i].drive].append(fixes[i].time)
        n_passes = sum(_passes(ts, drive_index[d]) for d, ts in by_drive.items())
        if n_passes < spec.min_passes or len(by_drive) < spec.min_distinct_drives:
            excluded += 1
            continue
        vals = [float(alt[i]) for i in members]
        mean = math.fsum(vals) / len(vals)
        cells.append(CellStats(key, len(vals), len(by_drive), n_passes, mean, [v - mean for v in vals]))
    if not cells:
        raise NoQualifiedCells(f"no cell reaches {spec.min_passes} passes from "
                               f"{spec.min_distinct_drives} drives ({excluded} cells excluded)")

    dev = np.array([d for c in cells for d in c.deviations])
    sq = math.fsum(float(d) * float(d) for d in dev)
    dof = sum(c.n_fixes - 1 for c in cells)
    absdev = np.abs(dev)
    return GridReport(
        spec=spec, cells=cells, deviations=dev,
        rmse=math.sqrt(sq / dev.size),
        sigma=math.sqrt(sq / dof) if dof > 0 else 0.0,
        percentiles={p: float(np.percentile(absdev, p)) for p in PERCENTILES},
        histogram=histogram(dev, spec.bin_width),
        excluded_cells=excluded,
    )


@dataclass
class Comparison:
    rmse_a: float
    rmse_b: float
    reduction_fraction: float
    overlay: list             # (bin_left, bin_right, count_a, count_b)

    def as_dict(self) -> dict:
        return {"rmse_candidate_m": self.rmse_a, "rmse_baseline_m": self.rmse_b,
                "altitude_rmse_reduction": self.reduction_fraction}


def compare_solutions(report_a: GridReport, report_b: GridReport) -> Comparison:
    """Candidate ``a`` against baseline ``b``: ``1 - rmse_a / rmse_b``."""
    if report_a.spec != report_b.spec:
        raise SpecMismatch("reports were built with different grid specs")
    reduction = 0.0 if report_a.rmse == report_b.rmse else 1.0 - report_a.rmse / report_b.rmse
    bw = report_a.spec.bin_width
    both = np.concatenate([report_a.deviations, report_b.deviations])
    edges = np.array([b[0] for b in histogram(both, bw)] + [histogram(both, bw)[-1][1]])
    ha, hb = histogram(report_a.deviations, bw, edges), histogram(report_b.deviations, bw, edges)
    overlay = [(a[0], a[1], a[2], b[2]) for a, b in zip(ha, hb)]
    return Comparison(report_a.rmse, report_b.rmse, reduction, overlay)


def horizontal_error_estimate(fixes, assumed_uere: float | None = None,
                              grid_report: GridReport | None = None) -> dict:
    """Predicted north/east RMSE from per-fix HDOP and a range error.

    Without ``assumed_uere`` the range error is the vertical one implied by
    ``grid_report``: its altitude sigma divided by the RMS VDOP of ``fixes``.
    """
    fixes = list(fixes)
    if not fixes or any(f.hdop is None for f in fixes):
        raise MissingDop("every fix needs an HDOP")
    hdop = np.array([f.hdop for f in fixes], dtype=float)
    if assumed_uere is None:
        if grid_report is None or any(f.vdop is None for f in fixes):
            raise MissingDop("deriving the UERE needs a grid report and VDOP on every fix")
        vdop = np.array([f.vdop for f in fixes], dtype=float)
        assumed_uere = grid_report.sigma / math.sqrt(float(np.mean(vdop ** 2)))
    sigma_h = hdop * assumed_uere
    axis = math.sqrt(float(np.mean(sigma_h ** 2)) / 2.0)
    return {"north_rmse": axis, "east_rmse": axis, "uere": float(assumed_uere),
            "horizontal_rmse": math.sqrt(2.0) * axis}


# --- reprojection and orientation ----------------------------------------------

@dataclass(frozen=True)
class Feature2D3D:
    frame_id: int
    feature_id: int
    u: float
    v: float
    point: np.ndarray
    intrinsics: Intrinsics

    def __post_init__(self):
        p = np.asarray(self.point, dtype=float)
        if p.shape != (3,) or not np.all(np.isfinite(p)):
            raise ValueError("world point must be a finite 3-vector")
        object.__setattr__(self, "point", p)


def project(rotation, position, point, intr: Intrinsics):
    """Pixel and camera-frame point of an ECEF ``point``; raises BehindCamera."""
    local = rotation @ (np.asarray(point, dtype=float) - position)
    if local[0] <= 0.0:
        raise BehindCamera(f"point at depth {local[0]:.3f} m")
    return np.array([intr.fx * local[1] / local[0] + intr.cx,
                     intr.fy * local[2] / local[0] + intr.cy]), local


def projection_jacobian(local, intr: Intrinsics) -> np.ndarray:
    """d(u, v) / d(local point) for the pinhole model."""
    f, r, d = local
    return np.array([[-intr.fx * r / f ** 2, intr.fx / f, 0.0],
                     [-intr.fy * d / f ** 2, 0.0, intr.fy / f]])


def orientation_jacobian(local, intr: Intrinsics) -> np.ndarray:
    """d(u, v) / d(dtheta) for a body-frame perturbation, at dtheta = 0."""
    return projection_jacobian(local, intr) @ skew(local)


@dataclass
class Residuals:
    values: np.ndarray        # (n_used, 2)
    used: list                # indices into the input features
    behind: list              # indices flagged behind the camera


def reprojection_residuals(pose: GlobalPose, features) -> Residuals:
    """Projected minus observed pixel for each feature in front of the camera."""
    rot = pose.rotation()
    vals, used, behind = [], [], []
    for i, ft in enumerate(features):
        try:
            px, _ = project(rot, pose.position, ft.point, ft.intrinsics)
        except BehindCamera:
            behind.append(i)
            continue
        vals.append(px - (ft.u, ft.v))
        used.append(i)
    return Residuals(np.array(vals).reshape(-1, 2), used, behind)


def frame_orientation_error(pose: GlobalPose, features):
    """Stacked least squares ``dtheta = J^+ r`` for one frame.

    ``dtheta`` is the orientation error of ``pose`` (roll, pitch, yaw about
    its forward/right/down axes): the perturbation which, applied to the
    true pose, would produce the observed residuals.
    """
    rot = pose.rotation()
    rows, res = [], []
    for ft in features:
        try:
            px, local = project(rot, pose.position, ft.point, ft.intrinsics)
        except BehindCamera:
            continue
        rows.append(orientation_jacobian(local, ft.intrinsics))
        res.append(px - (ft.u, ft.v))
    if len(rows) < 2:
        raise Underdetermined(f"{len(rows)} usable features, 2 needed")
    j = np.vstack(rows)
    r = np.concatenate(res)
    sv = np.linalg.svd(j, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise RankDeficient("stacked orientation Jacobian has rank < 3")
    return np.linalg.lstsq(j, r, rcond=None)[0]


@dataclass
class OrientationErrorEstimate:
    per_frame: dict           # frame id -> rad 3-vector
    rmse: np.ndarray          # rad, (roll, pitch, yaw)
    skipped: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        deg = np.degrees(self.rmse)
        return {
            "rmse_rad": {"roll": float(self.rmse[0]), "pitch": float(self.rmse[1]), "yaw": float(self.rmse[2])},
            "rmse_deg": {"roll": float(deg[0]), "pitch": float(deg[1]), "yaw": float(deg[2])},
            "frames": len(self.per_frame),
            "per_frame_rad": {str(k): [float(x) for x in v] for k, v in sorted(self.per_frame.items())},
            "skipped": {str(k): v for k, v in sorted(self.skipped.items())},
        }


def orientation_rmse(poses, features) -> OrientationErrorEstimate:
    """Per-frame orientation error and its RMSE over frames.

    ``poses`` maps (or indexes) frame id to :class:`GlobalPose`; frames that
    cannot be solved are reported in ``skipped``.
    """
    by_frame = defaultdict(list)
    for ft in features:
        by_frame[ft.frame_id].append(ft)
    per_frame, skipped = {}, {}
    for fid in sorted(by_frame):
        try:
            pose = poses[fid]
        except (KeyError, IndexError):
            skipped[fid] = "no pose"
            continue
        try:
            per_frame[fid] = frame_orientation_error(pose, by_frame[fid])
        except (Underdetermined, RankDeficient) as exc:
            skipped[fid] = type(exc).__name__
    if not per_frame:
        raise Underdetermined("no frame has enough usable features")
    est = np.array(list(per_frame.values()))
    return OrientationErrorEstimate(per_frame, np.sqrt(np.mean(est ** 2, axis=0)), skipped)
