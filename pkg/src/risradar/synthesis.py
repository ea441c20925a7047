"""Forward signal model: transmit beamforming, per-bin received snapshots
with all channel and diffraction terms, calibration signals, and background
subtraction.

Draw order inside one transmission (all from the transmission's generator):
re-radiation phases by channel then bin (only when re-radiation is active),
the path-2 displacement phase by target, then noise by snapshot then bin.
Radar cross sections are drawn once per trial and held fixed across the
trial's snapshots and transmissions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import build_ris_target_rx_channel, build_tx_ris_channel
from .diffraction import diff_path1_channel, diff_path2_channel
from .geometry import steering_vector
from .scenario import Scenario


def transmit_vector(scn: Scenario, m: int) -> np.ndarray:
    """Probing signal sqrt(P_t) / N_Tx * a_Tx(theta_RIS, f_m), unit symbol."""
    if scn.tx_power is None:
        raise ValueError("scenario.tx_power is not set (pick an SNR point first)")
    if scn.tx_power <= 0:
        raise ValueError(f"tx_power must be positive, got {scn.tx_power}")
    f = scn.grid.subband_centers()[m]
    a = steering_vector(scn.tx_array, scn.theta_ris, f)
    return math.sqrt(scn.tx_power) / scn.tx_array.n_elements * a


def draw_rcs(scn: Scenario, rng: np.random.Generator) -> np.ndarray:
    """Per-trial radar cross sections, shape (K, M); fixed within a trial."""
    m = scn.grid.n_subbands
    if scn.n_targets == 0:
        return np.zeros((0, m))
    return np.stack([t.rcs.draw(m, rng) for t in scn.targets])


def steer_phases(scn: Scenario, theta_out: float) -> np.ndarray:
    """RIS phase profile steering the incident Tx beam toward theta_out,
    designed at the carrier."""
    f = scn.grid.fc
    a_out = steering_vector(scn.ris_array, theta_out, f)
    a_in = steering_vector(scn.ris_array, scn.phi_tx, f)
    return np.angle(a_out * a_in.conj())


def retro_steer_phases(scn: Scenario) -> np.ndarray:
    """Calibration profile reflecting the incoming beam back toward the Tx."""
    return steer_phases(scn, scn.phi_tx)


@dataclass
class TrialChannels:
    """Deterministic per-trial channel pieces (valid only without re-radiation).

    Caching these across a scan's transmissions is purely an optimization:
    with re-radiation off the channel matrices contain no random draws.
    """

    x: list[np.ndarray]                      # (M) transmit vectors
    tx_after: list[np.ndarray]               # (M) H_Tx x
    h_rx: list[list[np.ndarray]]             # (K)(M) RIS->k->Rx matrices
    path1: list[np.ndarray] | None           # (M) H_diff1 x
    path2: list[list[np.ndarray]] | None     # (K)(M) H_diff2k x (no beta_d, no RCS)


def build_trial_channels(scn: Scenario) -> TrialChannels:
    if scn.reradiation_active:
        raise ValueError("channel caching requires inactive re-radiation")
    rng = np.random.default_rng(0)  # never consumed: all rerad terms vanish
    m_bins = scn.grid.n_subbands
    x = [transmit_vector(scn, m) for m in range(m_bins)]
    tx_after = [build_tx_ris_channel(scn, m, rng) @ x[m] for m in range(m_bins)]
    h_rx = [[build_ris_target_rx_channel(scn, k, m, rng) for m in range(m_bins)]
            for k in range(scn.n_targets)]
    path1 = None
    path2 = None
    if scn.blockage is not None:
        if scn.features.diffraction_path1:
            path1 = [diff_path1_channel(scn, m, rng) @ x[m] for m in range(m_bins)]
        if scn.features.diffraction_path2:
            path2 = [[diff_path2_channel(scn, k, m, rng, beta_d=0.0) @ x[m] for m in range(m_bins)]
                     for k in range(scn.n_targets)]
    return TrialChannels(x=x, tx_after=tx_after, h_rx=h_rx, path1=path1, path2=path2)


def _signal_from_cache(scn: Scenario, cache: TrialChannels, psi: np.ndarray,
                       rcs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    m_bins = scn.grid.n_subbands
    n_rx = scn.rx_array.n_elements
    sig = np.zeros((m_bins, n_rx), dtype=complex)
    for m in range(m_bins):
        reflected = psi * cache.tx_after[m]
        for k in range(scn.n_targets):
            sig[m] += rcs[k, m] * (cache.h_rx[k][m] @ reflected)
        if cache.path1 is not None:
            sig[m] += cache.path1[m]
    if cache.path2 is not None and scn.n_targets:
        betas = rng.random(scn.n_targets)
        for k in range(scn.n_targets):
            phase = np.exp(2j * math.pi * betas[k])
            for m in range(m_bins):
                sig[m] += rcs[k, m] * phase * cache.path2[k][m]
    return sig


def _signal_full(scn: Scenario, psi: np.ndarray, rcs: np.ndarray,
                 rng: np.random.Generator) -> np.ndarray:
    """Per-bin noise-free signal with fresh re-radiation draws, in the
    documented channel-major order."""
    m_bins = scn.grid.n_subbands
    n_rx = scn.rx_array.n_elements
    x = [transmit_vector(scn, m) for m in range(m_bins)]
    h_tx = [build_tx_ris_channel(scn, m, rng) for m in range(m_bins)]
    h_rx = [[build_ris_target_rx_channel(scn, k, m, rng) for m in range(m_bins)]
            for k in range(scn.n_targets)]
    p1 = p2 = None
    if scn.blockage is not None:
        if scn.features.diffraction_path1:
            p1 = [diff_path1_channel(scn, m, rng) for m in range(m_bins)]
        if scn.features.diffraction_path2:
            p2 = [[diff_path2_channel(scn, k, m, rng, beta_d=0.0) for m in range(m_bins)]
                  for k in range(scn.n_targets)]
    sig = np.zeros((m_bins, n_rx), dtype=complex)
    for m in range(m_bins):
        reflected = psi * (h_tx[m] @ x[m])
        for k in range(scn.n_targets):
            sig[m] += rcs[k, m] * (h_rx[k][m] @ reflected)
        if p1 is not None:
            sig[m] += p1[m] @ x[m]
    if p2 is not None and scn.n_targets:
        betas = rng.random(scn.n_targets)
        for k in range(scn.n_targets):
            phase = np.exp(2j * math.pi * betas[k])
            for m in range(m_bins):
                sig[m] += rcs[k, m] * phase * (p2[k][m] @ x[m])
    return sig


def synthesize_transmission(
    scn: Scenario,
    phases: np.ndarray,
    rcs: np.ndarray,
    rng: np.random.Generator,
    n_snapshots: int | None = None,
    cache: TrialChannels | None = None,
) -> np.ndarray:
    """Received snapshots for one RIS configuration, shape (B, M, N_Rx).

    All signal paths share the scenario's gain normalization factor; noise
    is complex circular Gaussian with per-bin power N0 * B_w.
    """
    b = scn.snapshots if n_snapshots is None else n_snapshots
    if b < 1:
        raise ValueError("need at least one snapshot")
    psi = np.exp(1j * np.asarray(phases, dtype=float))
    if psi.shape != (scn.ris_array.n_elements,):
        raise ValueError(f"phases must have shape ({scn.ris_array.n_elements},), got {psi.shape}")
    if scn.reradiation_active:
        sig = _signal_full(scn, psi, rcs, rng)
    else:
        if cache is None:
            cache = build_trial_channels(scn)
        sig = _signal_from_cache(scn, cache, psi, rcs, rng)
    sig = scn.gain_scale * sig

    m_bins, n_rx = sig.shape
    y = np.broadcast_to(sig, (b, m_bins, n_rx)).copy()
    if scn.features.noise:
        z = rng.standard_normal((b, m_bins, n_rx, 2))
        y += math.sqrt(scn.noise_power / 2.0) * (z[..., 0] + 1j * z[..., 1])
    return y


def synthesize_calibration(
    scn: Scenario,
    rcs: np.ndarray,
    rng: np.random.Generator,
    n_snapshots: int | None = None,
    cache: TrialChannels | None = None,
) -> np.ndarray:
    """Calibration snapshots with the RIS retro-steered toward the Tx.

    Contains the (attenuated) retro-steered target echo, both diffraction
    paths with a fresh displacement phase, and an independent noise draw;
    subtracting it from a scan snapshot removes the first diffraction path
    exactly but not the randomly-phased second one.
    """
    return synthesize_transmission(scn, retro_steer_phases(scn), rcs, rng,
                                   n_snapshots=n_snapshots, cache=cache)


def background_subtract(y: np.ndarray, y_cal: np.ndarray) -> np.ndarray:
    """Elementwise y - y_cal; shapes must broadcast on the trailing axes."""
    y = np.asarray(y)
    y_cal = np.asarray(y_cal)
    if y.shape[-2:] != y_cal.shape[-2:]:
        raise ValueError(f"bin/element dimensions differ: {y.shape} vs {y_cal.shape}")
    return y - y_cal
