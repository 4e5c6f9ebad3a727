"""Map-based pose correction by alternating feature averaging and relocalization.

Each iteration back-projects every observation through its frame's pose and
stored depth, takes a robust mean per feature over drives (E step), then
re-fits every frame's 6-DOF pose to the averaged map by Gauss-Newton on the
reprojection error (M step).

Computation happens relative to an anchor (the centroid of the input pose
positions) so that poses never pick up round-off from large ECEF values, and
output positions are the input positions plus the accumulated correction.
"""
from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientObservations, Underconstrained
from .formats import Intrinsics
from .frames import GlobalPose, Quaternion, rodrigues, skew
from .validation import projection_jacobian

log = logging.getLogger(__name__)

CHI3_MEDIAN = 1.5382    # median of the chi distribution with 3 degrees of freedom
GN_TOL = 1e-8
GN_MAX_ITER = 25
MIN_TRACKS_PER_FRAME = 4


@dataclass(frozen=True)
class Observation:
    drive: int
    frame: int
    u: float
    v: float
    depth: float


@dataclass
class FeatureTrack:
    feature_id: int
    observations: list
    world: np.ndarray | None = None     # anchor-relative
    inliers: int = 0

    @property
    def drives(self) -> set:
        return {o.drive for o in self.observations}


@dataclass
class DriveInput:
    poses: list                # GlobalPose per frame id
    tracks: list               # (frame_id, feature_id, u, v, depth)
    intrinsics: Intrinsics


@dataclass
class _Frame:
    rotation: np.ndarray
    offset: np.ndarray          # correction added to the input position
    base: np.ndarray            # input position relative to the anchor

    @property
    def position(self) -> np.ndarray:
        return self.base + self.offset


@dataclass
class RefinementState:
    iteration: int
    frames: dict               # (drive, frame) -> _Frame
    tracks: dict               # feature id -> FeatureTrack
    errors: list               # mean reprojection error (px) of accepted iterations
    flagged: dict = field(default_factory=dict)
    dropped_tracks: int = 0


@dataclass
class RefinementResult:
    state: RefinementState
    poses: list                # per drive, list of GlobalPose
    trace: list                # (iteration, mean_error_px, accepted)
    reason: str


def _back_project(frame: _Frame, obs: Observation, intr: Intrinsics) -> np.ndarray:
    ray = np.array([1.0, (obs.u - intr.cx) / intr.fx, (obs.v - intr.cy) / intr.fy])
    return frame.position + frame.rotation.T @ (obs.depth * ray)


def robust_mean(points, trim_sigma: float = 3.0):
    """Mean of the points within ``trim_sigma`` radial sigmas of the geometric median.

    The spread is estimated from the median distance to the geometric median,
    so the result is unchanged by rotations and translations of the input.
    Returns ``(mean, n_inliers)``.
    """
    pts = np.asarray(points, dtype=float)
    centre = pts.mean(axis=0)
    for _ in range(100):
        d = np.linalg.norm(pts - centre, axis=1)
        if np.any(d < 1e-12):
            break
        w = 1.0 / d
        new = (pts * w[:, None]).sum(axis=0) / w.sum()
        if np.linalg.norm(new - centre) < 1e-12:
            centre = new
            break
        centre = new
    dist = np.linalg.norm(pts - centre, axis=1)
    # radial sigma of an isotropic Gaussian is sqrt(3) times the per-axis sigma
    radial = math.sqrt(3.0) * float(np.median(dist)) / CHI3_MEDIAN
    keep = dist <= trim_sigma * radial
    if not np.any(keep):
        keep = dist <= float(np.min(dist))
    return pts[keep].mean(axis=0), int(keep.sum())


def _build(drives):
    if not drives:
        raise InsufficientObservations("no drives given")
    anchor = np.mean([p.position for d in drives for p in d.poses], axis=0)
    frames, tracks = {}, {}
    for k, d in enumerate(drives):
        for f, pose in enumerate(d.poses):
            frames[(k, f)] = _Frame(pose.rotation(), np.zeros(3), np.asarray(pose.position) - anchor)
        for frame_id, fid, u, v, depth in d.tracks:
            if (k, frame_id) not in frames:
                raise InsufficientObservations(f"drive {k} has features for unknown frame {frame_id}")
            tracks.setdefault(fid, FeatureTrack(fid, [])).observations.append(
                Observation(k, int(frame_id), float(u), float(v), float(depth)))
    return anchor, frames, tracks


def e_step_average(state: RefinementState, intrinsics, trim_sigma: float = 3.0) -> RefinementState:
    """Update each track's world estimate from the current poses.

    Tracks seen from fewer than two drives are dropped; if none survives,
    :class:`InsufficientObservations` is raised.
    """
    kept, dropped = {}, 0
    for fid, track in state.tracks.items():
        if len(track.observations) < 2 or len(track.drives) < 2:
            dropped += 1
            continue
        pts = [_back_project(state.frames[(o.drive, o.frame)], o, intrinsics[o.drive])
               for o in track.observations]
        world, n_in = robust_mean(pts, trim_sigma)
        kept[fid] = FeatureTrack(fid, track.observations, world, n_in)
    if not kept:
        raise InsufficientObservations("no feature is observed from two or more drives")
    return RefinementState(state.iteration, state.frames, kept, state.errors, state.flagged,
                           state.dropped_tracks + dropped)


def _frame_observations(state: RefinementState):
    out = defaultdict(list)
    for track in state.tracks.values():
        if track.world is None:
            continue
        for o in track.observations:
            out[(o.drive, o.frame)].append((o, track.world))
    return out


def relocalize(frame: _Frame, obs, intr: Intrinsics):
    """Gauss-Newton pose fit to 2D-3D correspondences.

    The rotation is perturbed about the body axes and the position in the
    world frame. Returns ``(frame, converged)``.
    """
    if len(obs) < MIN_TRACKS_PER_FRAME:
        raise Underconstrained(f"{len(obs)} tracks, {MIN_TRACKS_PER_FRAME} needed")
    rot, offset = frame.rotation.copy(), frame.offset.copy()
    pix = np.array([(o.u, o.v) for o, _ in obs])
    world = np.array([w for _, w in obs])
    for _ in range(GN_MAX_ITER):
        local = (world - (frame.base + offset)) @ rot.T
        front = local[:, 0] > 0.0
        if front.sum() < MIN_TRACKS_PER_FRAME:
            return frame, False
        rows, res = [], []
        for p, px in zip(local[front], pix[front]):
            jp = projection_jacobian(p, intr)
            rows.append(np.hstack([jp @ skew(p), -jp @ rot]))
            res.append((intr.fx * p[1] / p[0] + intr.cx - px[0], intr.fy * p[2] / p[0] + intr.cy - px[1]))
        j = np.vstack(rows)
        r = np.concatenate(res)
        step = -np.linalg.lstsq(j, r, rcond=None)[0]
        if np.linalg.matrix_rank(j) < 6:
            raise Underconstrained("correspondences do not constrain all six pose parameters")
        norm = float(np.linalg.norm(step))
        if norm < GN_TOL:
            return _Frame(rot, offset, frame.base), True
        rot = rodrigues(step[:3]).T @ rot
        offset = offset + step[3:]
    return frame, False


def m_step_relocalize(state: RefinementState, intrinsics) -> RefinementState:
    """Re-fit every frame to the current map; failing frames keep their pose."""
    by_frame = _frame_observations(state)
    frames, flagged = {}, dict(state.flagged)
    for key, frame in state.frames.items():
        try:
            new, ok = relocalize(frame, by_frame.get(key, []), intrinsics[key[0]])
        except Underconstrained as exc:
            flagged[key] = f"Underconstrained: {exc}"
            frames[key] = frame
            continue
        if not ok:
            flagged[key] = "NoConvergence"
        frames[key] = new
    return RefinementState(state.iteration, frames, state.tracks, state.errors, flagged,
                           state.dropped_tracks)


def mean_reprojection_error(state: RefinementState, intrinsics) -> float:
    errs = []
    for key, items in _frame_observations(state).items():
        frame = state.frames[key]
        intr = intrinsics[key[0]]
        for o, w in items:
            p = frame.rotation @ (w - frame.position)
            if p[0] <= 0.0:
                continue
            errs.append(math.hypot(intr.fx * p[1] / p[0] + intr.cx - o.u,
                                   intr.fy * p[2] / p[0] + intr.cy - o.v))
    if not errs:
        raise InsufficientObservations("no observation projects into a frame")
    return math.fsum(errs) / len(errs)


def refine(drives, max_iters: int = 10, trim_sigma: float = 3.0, rel_tol: float = 1e-4) -> RefinementResult:
    """Alternate E and M steps until the error stops improving.

    An iteration whose mean reprojection error (measured after its E step)
    exceeds the previous one is rejected and ends the loop.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    anchor, frames, tracks = _build(drives)
    intrinsics = [d.intrinsics for d in drives]
    state = e_step_average(RefinementState(0, frames, tracks, []), intrinsics, trim_sigma)
    err = mean_reprojection_error(state, intrinsics)
    state.errors = [err]
    trace = [(0, err, True)]
    reason = "max_iters"
    for it in range(1, max_iters + 1):
        cand = m_step_relocalize(state, intrinsics)
        cand = e_step_average(cand, intrinsics, trim_sigma)
        new_err = mean_reprojection_error(cand, intrinsics)
        if new_err > err:
            trace.append((it, new_err, False))
            reason = "error_increase"
            break
        trace.append((it, new_err, True))
        cand.iteration = it
        cand.errors = state.errors + [new_err]
        state = cand
        if err == 0.0 or (err - new_err) / err < rel_tol:
            reason = "converged"
            break
        err = new_err
    log.info("refinement stopped after %d iterations (%s)", state.iteration, reason)
    return RefinementResult(state, _poses_out(state, drives), trace, reason)


def _poses_out(state: RefinementState, drives) -> list:
    out = []
    for k, d in enumerate(drives):
        poses = []
        for f, pose in enumerate(d.poses):
            fr = state.frames[(k, f)]
            moved = not np.array_equal(fr.rotation, pose.rotation())
            q = Quaternion.from_matrix(fr.rotation) if moved else pose.orientation
            poses.append(GlobalPose(np.asarray(pose.position) + fr.offset, q, pose.time))
        out.append(poses)
    return out
