"""Epoch-by-epoch positioning pipeline (WLS or Kalman filter)."""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import GnssError, InputError
from ..formats import format_fixes
from ..measurements import ProcessingConfig, correct_epoch, parse_raw_records, process_epoch
from .kalman import (
    CB,
    CD,
    GB,
    POS,
    VEL,
    FilterConfig,
    init_from_wls,
    kf_predict,
    kf_update,
    plausible,
)
from .wls import PvtSolution, dop_of, finish_solution, geometry_rows, solve_position

log = logging.getLogger(__name__)

MAX_CORRECTION_PASSES = 5
PASS_TOL = 1e-4   # m; each pass shrinks the remaining step by about 3e-3


@dataclass
class RunReport:
    mode: str
    epochs: int = 0
    solutions: int = 0
    resets: int = 0
    gated: int = 0
    all_gated_epochs: int = 0
    skipped_records: Counter = field(default_factory=Counter)
    failed_epochs: Counter = field(default_factory=Counter)
    parse_skipped: int = 0
    diagnostics: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "epochs": self.epochs,
            "solutions": self.solutions,
            "resets": self.resets,
            "gated_measurements": self.gated,
            "all_gated_epochs": self.all_gated_epochs,
            "skipped_records": dict(sorted(self.skipped_records.items())),
            "failed_epochs": dict(sorted(self.failed_epochs.items())),
            "parse_skipped": self.parse_skipped,
            "diagnostics": self.diagnostics[:100],
        }


def solve_epoch_wls(measurements, iono, config: ProcessingConfig | None = None,
                    initial_guess=None) -> PvtSolution:
    """WLS fix with atmospheric corrections iterated to a self-consistent reference.

    Without ``initial_guess`` the first pass solves without elevation-dependent
    terms; each further pass recomputes masks, weights and delays at the
    previous fix. A guess only moves the first linearisation point.
    """
    config = config or ProcessingConfig()
    x = None
    if initial_guess is not None:
        try:
            used = correct_epoch(measurements, initial_guess, iono, config)
            x, it = solve_position(used, initial_guess)
        except GnssError:
            x = None
    if x is None:
        used = list(measurements)
        x, it = solve_position(used)
    for _ in range(MAX_CORRECTION_PASSES):
        corrected = correct_epoch(measurements, x[:3], iono, config)
        new, it = solve_position(corrected, x[:3])
        moved = float(np.linalg.norm(new[:3] - x[:3]))
        x, used = new, corrected
        if moved < PASS_TOL:
            break
    return finish_solution(used, x, it)


def _kf_solution(state, used, mode="kf") -> PvtSolution:
    x = state.x
    dop = None
    if len(used) >= 4:
        try:
            with_glo = len({m.is_glonass for m in used}) == 2
            dop = dop_of(geometry_rows(used, x[POS], with_glo), x[POS])
        except GnssError:
            dop = None
    idx = [0, 1, 2, CB, GB]
    return PvtSolution(
        time=state.last_time, position=x[POS].copy(), velocity=x[VEL].copy(),
        clock_bias=float(x[CB]), clock_drift=float(x[CD]), glonass_bias=float(x[GB]),
        covariance=state.P[np.ix_(idx, idx)].copy(), dop=dop, n_sats_used=len(used), mode=mode,
    )


def solve_epochs(epochs, store, iono=None, mode: str = "wls",
                 config: ProcessingConfig | None = None,
                 filter_config: FilterConfig | None = None):
    """Solve a sequence of raw epochs. Returns ``(solutions, RunReport)``."""
    if mode not in ("wls", "kf"):
        raise ValueError(f"unknown mode {mode!r}")
    config = config or ProcessingConfig()
    filter_config = filter_config or FilterConfig()
    report = RunReport(mode)
    solutions = []
    state = None
    previous = None
    for epoch in epochs:
        report.epochs += 1
        meas, skipped = process_epoch(epoch, store, config)
        report.skipped_records.update(skipped)

        if mode == "kf" and state is not None:
            gap = epoch.time - state.last_time
            if gap < 0.0 or gap > filter_config.max_gap:
                report.resets += 1
                report.diagnostics.append(f"{epoch.time}: reset after {gap:.2f} s gap")
                state = None

        if mode == "wls" or state is None:
            guess = None
            if previous is not None and 0.0 <= epoch.time - previous.time <= filter_config.max_gap:
                guess = previous.position
            try:
                sol = solve_epoch_wls(meas, iono, config, guess)
            except GnssError as exc:
                report.failed_epochs[type(exc).__name__] += 1
                previous = None
                continue
            previous = sol
            if mode == "kf":
                state = init_from_wls(sol, filter_config)
                corrected = correct_epoch(meas, sol.position, iono, config)
                sol = _kf_solution(state, corrected)
            solutions.append(sol)
            report.solutions += 1
            continue

        state = kf_predict(state, epoch.time, filter_config)
        try:
            corrected = correct_epoch(meas, state.x[POS], iono, config)
        except GnssError as exc:
            report.failed_epochs[type(exc).__name__] += 1
            state = None
            continue
        result = kf_update(state, corrected, filter_config)
        report.gated += sum(1 for i in result.innovations if i.gated)
        state = result.state
        if result.all_gated:
            report.all_gated_epochs += 1
            if state.gated_epochs >= filter_config.max_all_gated:
                report.resets += 1
                report.diagnostics.append(f"{epoch.time}: reset after repeated gating")
                state = None
                continue
        if not plausible(state, filter_config):
            report.resets += 1
            report.diagnostics.append(f"{epoch.time}: reset after implausible state")
            state = None
            continue
        used = [m for m in corrected]
        solutions.append(_kf_solution(state, used))
        report.solutions += 1
    return solutions, report


def solve_file(raw_path, store, iono=None, mode: str = "wls",
               config: ProcessingConfig | None = None,
               filter_config: FilterConfig | None = None):
    """Solve a raw record CSV file. Returns ``(solutions, report, fix_csv_text)``."""
    try:
        text = Path(raw_path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read {raw_path}: {exc}") from None
    parsed = parse_raw_records(text)
    solutions, report = solve_epochs(parsed.epochs, store, iono, mode, config, filter_config)
    report.parse_skipped = parsed.skipped
    report.diagnostics = parsed.diagnostics[:50] + report.diagnostics
    return solutions, report, format_fixes(solutions)
