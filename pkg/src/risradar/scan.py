"""Adaptive multi-target hierarchical scan.

Stage by stage, the RIS sweeps the surviving sectors' codewords, the
receiver forms a background-subtracted wideband pseudo-spectrum per
transmission, and detections decide which child sectors to inspect next.
Detection is thresholded on the sweep-normalized spectra; each detected
arrival angle is attributed to the sector that illuminates it most strongly
(argmax across the sweep), which keeps a single target on a single branch
while still following every genuinely detected angle.  Final-stage
detections become position estimates by intersecting the sector midpoint
ray from the RIS with the arrival-angle ray from the receiver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import streams
from .codebook import Codebook
from .doa import (
    SpatialSpectrum,
    coherent_covariance,
    focusing_matrix,
    mdl_source_count,
    peak_indices,
    spectrum_conventional,
    spectrum_music,
)
from .geometry import ParallelRaysError, intersect_rays, rx_angle_grid
from .scenario import Scenario
from .synthesis import (
    TrialChannels,
    background_subtract,
    build_trial_channels,
    draw_rcs,
    synthesize_calibration,
    synthesize_transmission,
)


@dataclass(frozen=True)
class TargetEstimate:
    position: np.ndarray
    aod: float
    aoa: float
    peak_value: float
    stage: int
    sector: int
    angle_index: int


@dataclass
class ScanResult:
    estimates: list[TargetEstimate]
    transmissions: int                  # sector visits only (calibration excluded)
    calibration_transmissions: int
    dropped_parallel: int
    rcs: np.ndarray
    calibration_mean: np.ndarray | None
    trace: dict | None = None
    survivors_per_stage: list[list[int]] = field(default_factory=list)


def compute_spectrum(scn: Scenario, snapshots: np.ndarray) -> SpatialSpectrum:
    """Wideband pseudo-spectrum of one transmission's snapshots (B, M, N).

    Multi-bin inputs get a narrowband preliminary pass on the center bin,
    focusing matrices toward fc, and a coherent covariance sum; the spectrum
    itself is evaluated on the receiver grid at fc.
    """
    y = np.asarray(snapshots)
    per_bin = y.transpose(1, 0, 2)  # (M, B, N)
    m_bins = per_bin.shape[0]
    grid = rx_angle_grid(scn.rx_resolution)
    freqs = scn.grid.subband_centers()

    if m_bins == 1:
        r_hat = coherent_covariance(per_bin, [np.eye(scn.rx_array.n_elements)])
    else:
        center = scn.grid.center_index
        r_c = per_bin[center].T @ per_bin[center].conj()
        prelim_spec = spectrum_conventional(r_c, scn.rx_array, grid, freqs[center])
        prelim = [float(grid[i]) for i in peak_indices(prelim_spec.values)
                  if prelim_spec.values[i] >= scn.prelim_gamma]
        prelim.append(float(grid[int(np.argmax(prelim_spec.values))]))
        focus = [focusing_matrix(scn.rx_array, freqs[m], scn.grid.fc, prelim) for m in range(m_bins)]
        r_hat = coherent_covariance(per_bin, focus)

    if scn.estimator == "music":
        n_src = scn.music_sources
        if n_src is None:
            n_obs = per_bin.shape[1] * m_bins
            eigvals = np.linalg.eigvalsh(r_hat / max(n_obs, 1))
            n_src = min(mdl_source_count(eigvals, n_obs), scn.rx_array.n_elements - 1)
        return spectrum_music(r_hat, scn.rx_array, grid, scn.grid.fc, n_src)
    return spectrum_conventional(r_hat, scn.rx_array, grid, scn.grid.fc)


def _sweep_detections(spectra: dict[int, SpatialSpectrum], gamma: float):
    """Threshold a sweep's spectra against the sweep-wide maximum.

    A detection is a spectrum peak whose value reaches gamma relative to the
    sweep maximum.  When several sectors peak at the same angle bin they are
    sightings of one reflector, so the bin is attributed to the sector that
    illuminates it most strongly (ties break toward the lower index).  The
    contest participants are all peak-holders regardless of gamma, so
    raising the threshold can only shrink the surviving set.

    Returns (detected, winners): angle-index -> winner's relative value, and
    angle-index -> winning sector, for bins whose winner reached gamma.
    """
    sweep_max = max((s.raw_max for s in spectra.values()), default=0.0)
    if sweep_max <= 0.0:
        return {}, {}
    raw = {r: s.raw_values for r, s in spectra.items()}
    holders: dict[int, list[int]] = {}
    for r in sorted(spectra):
        for i in peak_indices(spectra[r].values):
            holders.setdefault(i, []).append(r)
    winners: dict[int, int] = {}
    detected: dict[int, float] = {}
    for i, sectors in sorted(holders.items()):
        winner = max(sectors, key=lambda r: (raw[r][i], -r))
        value = raw[winner][i] / sweep_max
        if value >= gamma:
            winners[i] = winner
            detected[i] = value
    return detected, winners


def _dedup_estimates(estimates: list[TargetEstimate], radius: float) -> list[TargetEstimate]:
    """Merge estimates within `radius` meters: mean position, max peak."""
    remaining = sorted(estimates, key=lambda e: -e.peak_value)
    merged: list[TargetEstimate] = []
    used = [False] * len(remaining)
    for i, est in enumerate(remaining):
        if used[i]:
            continue
        cluster = [est]
        used[i] = True
        for j in range(i + 1, len(remaining)):
            if not used[j] and np.linalg.norm(remaining[j].position - est.position) <= radius:
                cluster.append(remaining[j])
                used[j] = True
        pos = np.mean([e.position for e in cluster], axis=0)
        merged.append(TargetEstimate(
            position=pos, aod=est.aod, aoa=est.aoa, peak_value=est.peak_value,
            stage=est.stage, sector=est.sector, angle_index=est.angle_index,
        ))
    return merged


def run_scan(
    scn: Scenario,
    codebook: Codebook,
    gamma: float | None = None,
    master_seed: int | None = None,
    trial_index: int = 0,
    rcs: np.ndarray | None = None,
    calibration_mean: np.ndarray | None = None,
    cache: TrialChannels | None = None,
    trace: bool = False,
    full: bool = False,
) -> ScanResult:
    """Run one scan trial; `full` sweeps every finest sector instead of the
    hierarchy.  Randomness is keyed on (master_seed, trial_index, component)
    so each sector's realization is fixed regardless of the visit path."""
    gamma = scn.gamma if gamma is None else gamma
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must be in (0, 1), got {gamma}")
    master_seed = scn.seed if master_seed is None else master_seed
    grid = rx_angle_grid(scn.rx_resolution)

    if rcs is None:
        rcs = draw_rcs(scn, streams.substream(master_seed, trial_index, streams.RCS))
    if cache is None and not scn.reradiation_active:
        cache = build_trial_channels(scn)

    calibration_transmissions = 0
    if scn.features.background_subtraction:
        if calibration_mean is None:
            cal = synthesize_calibration(
                scn, rcs, streams.substream(master_seed, trial_index, streams.CALIBRATION), cache=cache
            )
            calibration_mean = cal.mean(axis=0)
        calibration_transmissions = 1

    stage_list = [codebook.S] if full else list(range(1, codebook.S + 1))
    visited = list(range(1, codebook.L**codebook.S + 1)) if full else list(range(1, codebook.L + 1))

    transmissions = 0
    dropped = 0
    estimates: list[TargetEstimate] = []
    survivors_per_stage: list[list[int]] = []
    trace_doc = {"stages": [], "gamma": gamma, "full": full} if trace else None

    for s in stage_list:
        spectra: dict[int, SpatialSpectrum] = {}
        for r in visited:
            cw = codebook.codeword(s, r)
            y = synthesize_transmission(
                scn, cw.phases, rcs,
                streams.substream(master_seed, trial_index, streams.TRANSMISSION, s, r),
                cache=cache,
            )
            transmissions += 1
            if calibration_mean is not None:
                y = background_subtract(y, calibration_mean)
            spectra[r] = compute_spectrum(scn, y)

        detected, winners = _sweep_detections(spectra, gamma)
        survivors = sorted(set(winners.values()))
        survivors_per_stage.append(survivors)

        if trace_doc is not None:
            trace_doc["stages"].append({
                "stage": s,
                "visited": list(visited),
                "survivors": survivors,
                "detections": [
                    {"angle_index": i, "angle_rad": float(grid[i]), "sector": winners[i], "value": detected[i]}
                    for i in sorted(detected)
                ],
            })

        if not detected:
            break

        if s == codebook.S:
            for i in sorted(detected):
                sector = winners[i]
                aod = codebook.codeword(s, sector).midpoint
                aoa = float(grid[i])
                try:
                    pos = intersect_rays(scn.p_ris, aod, scn.p_rx, aoa)
                except ParallelRaysError:
                    dropped += 1
                    continue
                estimates.append(TargetEstimate(
                    position=pos, aod=aod, aoa=aoa, peak_value=detected[i],
                    stage=s, sector=sector, angle_index=i,
                ))
        else:
            visited = [(p - 1) * codebook.L + c for p in survivors for c in range(1, codebook.L + 1)]

    estimates = _dedup_estimates(estimates, scn.matching.dedup_m)
    if trace_doc is not None:
        trace_doc["transmissions"] = transmissions
        trace_doc["estimates"] = [
            {"position": e.position.tolist(), "aod": e.aod, "aoa": e.aoa, "peak": e.peak_value}
            for e in estimates
        ]
    return ScanResult(
        estimates=estimates,
        transmissions=transmissions,
        calibration_transmissions=calibration_transmissions,
        dropped_parallel=dropped,
        rcs=rcs,
        calibration_mean=calibration_mean,
        trace=trace_doc,
        survivors_per_stage=survivors_per_stage,
    )


def run_full_scan(
    scn: Scenario,
    codebook: Codebook,
    gamma: float | None = None,
    master_seed: int | None = None,
    trial_index: int = 0,
    **kwargs,
) -> ScanResult:
    """Baseline: one transmission per finest sector (L^S total), no pruning."""
    return run_scan(scn, codebook, gamma, master_seed, trial_index, full=True, **kwargs)
