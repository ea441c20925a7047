"""Wideband direction-of-arrival estimation at the receiver.

Per-bin sample covariances are aligned to the reference frequency with
unitary focusing matrices (orthogonal Procrustes against the steering
manifold at preliminary angles), coherently summed, and turned into a
normalized pseudo-spectrum by the conventional beamformer or MUSIC.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import ArrayConfig, rx_angle_grid, steering_matrix


@dataclass(frozen=True)
class SpatialSpectrum:
    """Pseudo-spectrum over the receiver angle grid, normalized to max 1.

    raw_max keeps the pre-normalization peak so several spectra can be
    compared on a common scale (the scan normalizes per sweep, not per
    transmission).  A spectrum that is identically zero stays zero.
    """

    angles: np.ndarray
    values: np.ndarray
    raw_max: float

    @property
    def raw_values(self) -> np.ndarray:
        return self.values * self.raw_max


@dataclass(frozen=True)
class Detection:
    index: int
    angle: float
    value: float


def _complete_unitary(basis: np.ndarray) -> np.ndarray:
    """Extend N x r orthonormal columns to an N x N unitary, deterministically."""
    n, r = basis.shape
    if r >= n:
        return basis[:, :n]
    q, _ = np.linalg.qr(np.hstack([basis, np.eye(n, dtype=basis.dtype)]))
    return np.hstack([basis, q[:, r:n]])


def focusing_matrix(rx_array: ArrayConfig, f_m: float, f_c: float, prelim_angles) -> np.ndarray:
    """Unitary focusing matrix aligning the f_m steering manifold to f_c.

    F = V U^H built from the SVD of A(f_c) A(f_m)^H evaluated at the
    preliminary angles; rank-deficient products get a deterministic unitary
    completion on the null directions, so f_m = f_c yields the identity.
    """
    prelim = np.atleast_1d(np.asarray(prelim_angles, dtype=float))
    if prelim.size == 0:
        raise ValueError("prelim_angles must be non-empty")
    a_c = steering_matrix(rx_array, prelim, f_c)
    a_m = steering_matrix(rx_array, prelim, f_m)
    prod = a_c @ a_m.conj().T
    u, s, vh = np.linalg.svd(prod)
    n = rx_array.n_elements
    rank = int(np.sum(s > max(s[0], 1e-300) * 1e-12))
    if rank == n:
        return u @ vh
    qu = _complete_unitary(u[:, :rank])
    qv = _complete_unitary(vh[:rank].conj().T)
    return qu @ qv.conj().T


def coherent_covariance(snapshots_per_bin: np.ndarray, focusing_matrices) -> np.ndarray:
    """Coherently averaged covariance sum_m F_m (sum_b y y^H) F_m^H.

    snapshots_per_bin has shape (M, B, N).  Sums are unnormalized (the later
    spectrum normalization absorbs the scale); the result is symmetrized so
    it is exactly Hermitian.
    """
    y = np.asarray(snapshots_per_bin)
    if y.ndim != 3:
        raise ValueError(f"expected (M, B, N) snapshots, got shape {y.shape}")
    m_bins, b_snap, _ = y.shape
    if b_snap < 1:
        raise ValueError("need at least one snapshot per bin")
    if len(focusing_matrices) != m_bins:
        raise ValueError("one focusing matrix per bin required")
    r_total = None
    for m in range(m_bins):
        r_m = y[m].T @ y[m].conj()  # sum_b y y^H
        f = focusing_matrices[m]
        term = f @ r_m @ f.conj().T
        r_total = term if r_total is None else r_total + term
    return 0.5 * (r_total + r_total.conj().T)


def _normalized(angles: np.ndarray, values: np.ndarray) -> SpatialSpectrum:
    values = np.maximum(values, 0.0)
    peak = float(values.max()) if values.size else 0.0
    if peak > 0.0:
        values = values / peak
    return SpatialSpectrum(angles=angles, values=values, raw_max=peak)


def spectrum_conventional(R: np.ndarray, rx_array: ArrayConfig, grid: np.ndarray, freq: float) -> SpatialSpectrum:
    """Conventional (Bartlett) beamformer spectrum a^H R a / (a^H a)."""
    grid = np.asarray(grid, dtype=float)
    A = steering_matrix(rx_array, grid, freq)
    vals = np.real(np.einsum("ng,ng->g", A.conj(), R @ A)) / rx_array.n_elements
    return _normalized(grid, vals)


def spectrum_music(R: np.ndarray, rx_array: ArrayConfig, grid: np.ndarray, freq: float,
                   n_sources: int) -> SpatialSpectrum:
    """MUSIC pseudo-spectrum 1 / ||E_n^H a||^2 with an n_sources signal subspace."""
    n = rx_array.n_elements
    if not 1 <= n_sources < n:
        raise ValueError(f"n_sources must be in [1, {n - 1}], got {n_sources}")
    grid = np.asarray(grid, dtype=float)
    eigvals, eigvecs = np.linalg.eigh(R)
    noise_sub = eigvecs[:, : n - n_sources]
    A = steering_matrix(rx_array, grid, freq)
    denom = np.sum(np.abs(noise_sub.conj().T @ A) ** 2, axis=0)
    denom = np.maximum(denom, 1e-300)
    return _normalized(grid, 1.0 / denom)


def mdl_source_count(eigenvalues: np.ndarray, n_snapshots: int) -> int:
    """Minimum-description-length estimate of the number of sources."""
    lam = np.sort(np.asarray(eigenvalues, dtype=float))[::-1]
    lam = np.maximum(lam, 1e-300)
    n = lam.size
    best_k, best_score = 0, np.inf
    for k in range(n):
        tail = lam[k:]
        geo = np.exp(np.mean(np.log(tail)))
        arith = np.mean(tail)
        score = -n_snapshots * (n - k) * math.log(geo / arith) + 0.5 * k * (2 * n - k) * math.log(n_snapshots)
        if score < best_score:
            best_k, best_score = k, score
    return max(best_k, 1)


def peak_indices(values: np.ndarray) -> list[int]:
    """Strict interior local maxima, with flat-top runs collapsed to their
    lowest index (deterministic tie-break toward the lower angle)."""
    v = np.asarray(values, dtype=float)
    n = v.size
    peaks = []
    i = 1
    while i < n - 1:
        j = i
        while j + 1 < n and v[j + 1] == v[i]:
            j += 1
        if v[i] > v[i - 1] and j < n - 1 and v[i] > v[j + 1]:
            peaks.append(i)
        i = j + 1
    return peaks


def detect_peaks(spectrum: SpatialSpectrum, gamma: float) -> list[Detection]:
    """All strict local maxima of a normalized spectrum with value >= gamma."""
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must be in (0, 1), got {gamma}")
    return [
        Detection(index=i, angle=float(spectrum.angles[i]), value=float(spectrum.values[i]))
        for i in peak_indices(spectrum.values)
        if spectrum.values[i] >= gamma
    ]


def doa_grid(rx_resolution: int) -> np.ndarray:
    return rx_angle_grid(rx_resolution)
