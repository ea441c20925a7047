"""Terahertz channel synthesis: free-space path loss, molecular absorption,
molecular re-radiation interference, and the cascaded MIMO channel matrices.

Per-bin MIMO channels are real-gain rank-1 outer products of steering
vectors plus an optional random-phase re-radiation matrix; propagation
phase factors are not part of the cascade (the point-to-point transfer
function exposes the phase separately through PathGain).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .constants import SPEED_OF_LIGHT
from .geometry import angles_from_positions, steering_vector

if TYPE_CHECKING:  # pragma: no cover
    from .scenario import Scenario


@dataclass(frozen=True)
class FrequencyGrid:
    """Coherent sub-band layout of the probing signal.

    Sub-band m (1-based) is centered at fc + (2m - 1 - M) * BW / (2M), i.e.
    M bins equally spaced across the total bandwidth, symmetric about fc.
    `subband_bandwidth` is the occupied (noise) bandwidth of each bin.
    """

    fc: float
    total_bandwidth: float
    n_subbands: int
    subband_bandwidth: float

    def __post_init__(self):
        if self.fc <= 0:
            raise ValueError(f"fc must be positive, got {self.fc}")
        if self.n_subbands < 1:
            raise ValueError(f"n_subbands must be >= 1, got {self.n_subbands}")
        if self.total_bandwidth < 0:
            raise ValueError("total_bandwidth must be >= 0")
        if not 0 < self.subband_bandwidth <= max(self.total_bandwidth / self.n_subbands, self.subband_bandwidth):
            raise ValueError("subband_bandwidth must be positive")
        if self.subband_bandwidth > self.total_bandwidth / self.n_subbands + 1e-9:
            raise ValueError(
                f"subband_bandwidth {self.subband_bandwidth} exceeds "
                f"total_bandwidth/M = {self.total_bandwidth / self.n_subbands}"
            )

    def subband_centers(self) -> np.ndarray:
        m = np.arange(1, self.n_subbands + 1)
        return self.fc + (2 * m - 1 - self.n_subbands) * self.total_bandwidth / (2 * self.n_subbands)

    @property
    def center_index(self) -> int:
        """0-based index of the bin used as the narrowband reference."""
        return (self.n_subbands - 1) // 2


class AbsorptionModel:
    """Combined molecular absorption coefficient kappa(f) in 1/m.

    Either a constant kappa or a table of (frequency, kappa) pairs with
    linear interpolation; frequencies outside the table clamp to the nearest
    endpoint with a warning.  The table is the already-mixed air spectrum;
    per-molecule weighting happens upstream.
    """

    def __init__(self, freqs=None, kappas=None, constant: float | None = None):
        if constant is not None:
            if constant < 0:
                raise ValueError(f"kappa must be >= 0, got {constant}")
            self._constant = float(constant)
            self._freqs = None
            self._kappas = None
        else:
            freqs = np.asarray(freqs, dtype=float)
            kappas = np.asarray(kappas, dtype=float)
            if freqs.ndim != 1 or freqs.shape != kappas.shape or freqs.size < 1:
                raise ValueError("freqs and kappas must be equal-length 1-D arrays")
            if np.any(np.diff(freqs) <= 0):
                raise ValueError("table frequencies must be strictly increasing")
            if np.any(kappas < 0):
                raise ValueError("kappa must be >= 0 everywhere")
            self._constant = None
            self._freqs = freqs
            self._kappas = kappas

    @classmethod
    def constant(cls, kappa: float) -> "AbsorptionModel":
        return cls(constant=kappa)

    @classmethod
    def from_csv(cls, path) -> "AbsorptionModel":
        """Load a two-column CSV (frequency_hz, kappa_per_m) with a header row."""
        freqs, kappas = [], []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or len(header) < 2:
                raise ValueError(f"{path}: expected header 'frequency_hz,kappa_per_m'")
            for i, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    freqs.append(float(row[0]))
                    kappas.append(float(row[1]))
                except (ValueError, IndexError) as exc:
                    raise ValueError(f"{path}:{i}: bad row {row!r}") from exc
        return cls(freqs=freqs, kappas=kappas)

    @property
    def is_zero(self) -> bool:
        if self._constant is not None:
            return self._constant == 0.0
        return bool(np.all(self._kappas == 0.0))

    def kappa(self, freq: float) -> float:
        if self._constant is not None:
            return self._constant
        if freq < self._freqs[0] or freq > self._freqs[-1]:
            warnings.warn(
                f"frequency {freq:.6g} Hz outside absorption table "
                f"[{self._freqs[0]:.6g}, {self._freqs[-1]:.6g}]; clamping",
                stacklevel=2,
            )
            freq = min(max(freq, self._freqs[0]), self._freqs[-1])
        return float(np.interp(freq, self._freqs, self._kappas))


@dataclass(frozen=True)
class PathGain:
    """Point-to-point channel gain: amplitude (c/(4 pi f d)) e^{-kappa d/2},
    propagation phase 2 pi d f / c."""

    amplitude: float
    phase: float


def fspl(freq: float, dist: float) -> float:
    """Free-space path loss (4 pi f d / c)^2 as a power ratio."""
    if not (freq > 0 and math.isfinite(freq)):
        raise ValueError(f"freq must be positive and finite, got {freq}")
    if not (dist > 0 and math.isfinite(dist)):
        raise ValueError(f"dist must be positive and finite, got {dist}")
    return (4.0 * math.pi * freq * dist / SPEED_OF_LIGHT) ** 2


def atm_loss(model: AbsorptionModel, freq: float, dist: float) -> float:
    """Atmospheric (molecular absorption) loss e^{kappa(f) d} as a power ratio."""
    if dist < 0:
        raise ValueError(f"dist must be >= 0, got {dist}")
    return math.exp(model.kappa(freq) * dist)


def channel_gain(model: AbsorptionModel, freq: float, dist: float) -> PathGain:
    if not (dist > 0 and math.isfinite(dist)):
        raise ValueError(f"dist must be positive and finite, got {dist}")
    kappa = model.kappa(freq)
    amplitude = (SPEED_OF_LIGHT / (4.0 * math.pi * freq * dist)) * math.exp(-kappa * dist / 2.0)
    phase = 2.0 * math.pi * dist * freq / SPEED_OF_LIGHT
    return PathGain(amplitude=amplitude, phase=phase)


def rerad_coefficient(model: AbsorptionModel, freq: float, dist: float, rng: np.random.Generator) -> complex:
    """Equivalent molecular re-radiation channel coefficient.

    (1 - e^{-kappa d})^{1/2} * (c / (4 pi f d)) * e^{j 2 pi beta} with beta
    drawn uniformly from [0, 1).  Exactly zero when kappa is zero.
    """
    if not (dist > 0 and math.isfinite(dist)):
        raise ValueError(f"dist must be positive and finite, got {dist}")
    kappa = model.kappa(freq)
    if kappa == 0.0:
        return 0.0 + 0.0j
    amp = math.sqrt(1.0 - math.exp(-kappa * dist)) * SPEED_OF_LIGHT / (4.0 * math.pi * freq * dist)
    beta = rng.random()
    return amp * np.exp(2j * math.pi * beta)


def rerad_matrix(
    model: AbsorptionModel, freq: float, dist: float, shape: tuple, rng: np.random.Generator
) -> np.ndarray:
    """Re-radiation interference matrix: one coefficient per antenna pair.

    All entries share the far-field amplitude at the array-origin distance;
    phases are i.i.d. uniform.  Returns exact zeros for kappa = 0 (no draws
    are consumed in that case).
    """
    kappa = model.kappa(freq)
    if kappa == 0.0:
        return np.zeros(shape, dtype=complex)
    amp = math.sqrt(1.0 - math.exp(-kappa * dist)) * SPEED_OF_LIGHT / (4.0 * math.pi * freq * dist)
    betas = rng.random(shape)
    return amp * np.exp(2j * math.pi * betas)


def build_tx_ris_channel(scn: "Scenario", m: int, rng: np.random.Generator) -> np.ndarray:
    """Per-bin channel between the transmitter and the RIS (N_RIS x N_Tx)."""
    f = scn.grid.subband_centers()[m]
    d = float(np.linalg.norm(scn.p_ris - scn.p_tx))
    gain = channel_gain(scn.absorption, f, d).amplitude
    a_ris = steering_vector(scn.ris_array, scn.phi_tx, f)
    a_tx = steering_vector(scn.tx_array, scn.theta_ris, f)
    h = gain * np.outer(a_ris, a_tx.conj())
    if scn.reradiation_active:
        h = h + rerad_matrix(scn.absorption, f, d, h.shape, rng)
    return h


def build_ris_target_rx_channel(scn: "Scenario", k: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Per-bin channel RIS -> target k -> receiver (N_Rx x N_RIS).

    The combined gain is the product of the two hop gains; the re-radiation
    term uses the total RIS->target->Rx path length.
    """
    f = scn.grid.subband_centers()[m]
    p_k = scn.targets[k].position
    d1 = float(np.linalg.norm(p_k - scn.p_ris))
    d2 = float(np.linalg.norm(scn.p_rx - p_k))
    gain = channel_gain(scn.absorption, f, d1).amplitude * channel_gain(scn.absorption, f, d2).amplitude
    theta_k = angles_from_positions(scn.p_ris, p_k)
    phi_k = angles_from_positions(scn.p_rx, p_k)
    a_rx = steering_vector(scn.rx_array, phi_k, f)
    a_ris = steering_vector(scn.ris_array, theta_k, f)
    h = gain * np.outer(a_rx, a_ris.conj())
    if scn.reradiation_active:
        h = h + rerad_matrix(scn.absorption, f, d1 + d2, h.shape, rng)
    return h
