"""2D geometry for ULA radar scenes: steering vectors, angle arithmetic,
intersection-of-lines localization, and angular-quantization error floors.

Angle convention: headings are measured against the common +x reference
line and reduced into [0, pi].  A ULA phase profile depends on cos(angle)
only, so headings +a and -a are indistinguishable; the reduction picks the
upper half plane, where all targets are assumed to live.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import SPEED_OF_LIGHT


class DegenerateGeometryError(ValueError):
    """Raised when a geometric construction is undefined (coincident points)."""


class ParallelRaysError(ValueError):
    """Raised when two localization rays are (numerically) parallel."""


#: |det W| at or below this is treated as parallel rays.
PARALLEL_DET_TOL = 1e-12


@dataclass(frozen=True)
class ArrayConfig:
    """Uniform linear array along the reference line.

    Attributes:
        n_elements: number of antenna/reflector elements (>= 1).
        spacing: inter-element spacing in meters (> 0).
    """

    n_elements: int
    spacing: float

    def __post_init__(self):
        if self.n_elements < 1:
            raise ValueError(f"n_elements must be >= 1, got {self.n_elements}")
        if not (self.spacing > 0 and math.isfinite(self.spacing)):
            raise ValueError(f"spacing must be positive and finite, got {self.spacing}")


def steering_vector(cfg: ArrayConfig, angle: float, freq: float) -> np.ndarray:
    """Unit-modulus ULA steering vector at a given angle and frequency.

    Entry i is exp(-j*2*pi*spacing*(i-1)*(freq/c)*cos(angle)).  The explicit
    frequency dependence is what produces beam squint when one phase profile
    is reused across sub-bands.
    """
    if not (math.isfinite(angle) and math.isfinite(freq)) or freq <= 0:
        raise ValueError(f"angle and freq must be finite with freq > 0, got {angle}, {freq}")
    idx = np.arange(cfg.n_elements)
    phase = -2.0 * np.pi * cfg.spacing * idx * (freq / SPEED_OF_LIGHT) * math.cos(angle)
    return np.exp(1j * phase)


def steering_matrix(cfg: ArrayConfig, angles: np.ndarray, freq: float) -> np.ndarray:
    """Stack steering vectors column-wise: shape (n_elements, len(angles))."""
    angles = np.asarray(angles, dtype=float)
    if angles.ndim != 1:
        raise ValueError("angles must be a 1-D array")
    if not math.isfinite(freq) or freq <= 0:
        raise ValueError(f"freq must be finite and positive, got {freq}")
    idx = np.arange(cfg.n_elements)[:, None]
    phase = -2.0 * np.pi * cfg.spacing * idx * (freq / SPEED_OF_LIGHT) * np.cos(angles)[None, :]
    return np.exp(1j * phase)


def steering_derivative(cfg: ArrayConfig, angle: float, freq: float) -> np.ndarray:
    """d/d(angle) of steering_vector, elementwise a_i * (+j*k_i*sin(angle))."""
    a = steering_vector(cfg, angle, freq)
    idx = np.arange(cfg.n_elements)
    k = 2.0 * np.pi * cfg.spacing * idx * (freq / SPEED_OF_LIGHT)
    return a * (1j * k * math.sin(angle))


def angles_from_positions(a, b) -> float:
    """Heading of (b - a) against the reference line, reduced into [0, pi]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = b - a
    if np.allclose(d, 0.0):
        raise DegenerateGeometryError(f"coincident points: {a} and {b}")
    return abs(math.atan2(d[1], d[0]))


def ray_direction(angle: float) -> np.ndarray:
    return np.array([math.cos(angle), math.sin(angle)])


def intersect_rays(p_ris, aod: float, p_rx, aoa: float) -> np.ndarray:
    """Intersect the line through p_ris with heading aod and the line through
    p_rx with heading aoa; returns the crossing point.

    Raises ParallelRaysError when |sin(aoa - aod)| <= PARALLEL_DET_TOL, in
    which case the caller is expected to discard the detection.
    """
    p_ris = np.asarray(p_ris, dtype=float)
    p_rx = np.asarray(p_rx, dtype=float)
    u = ray_direction(aoa)   # receiver-side unit vector
    v = ray_direction(aod)   # RIS-side unit vector
    det = v[0] * u[1] - u[0] * v[1]  # det [[u0, -v0], [u1, -v1]]
    if abs(det) <= PARALLEL_DET_TOL:
        raise ParallelRaysError(f"rays are parallel: aod={aod}, aoa={aoa}")
    q = p_ris - p_rx
    c1 = (-v[1] * q[0] + v[0] * q[1]) / det
    return p_rx + c1 * u


def aod_resolution_bound(L: int, S: int) -> float:
    """Upper bound pi/(2*L^S) on the departure-angle quantization error."""
    if L < 2 or S < 1:
        raise ValueError(f"need L >= 2 and S >= 1, got L={L}, S={S}")
    return math.pi / (2.0 * L**S)


def aoa_resolution_bound(rx_res: int) -> float:
    """Upper bound pi/(2*rx_res) on the arrival-angle quantization error."""
    if rx_res < 1:
        raise ValueError(f"rx_res must be >= 1, got {rx_res}")
    return math.pi / (2.0 * rx_res)


def sector_width(L: int, s: int) -> float:
    return math.pi / L**s


def sector_index(angle: float, L: int, s: int) -> int:
    """0-based index of the stage-s sector containing `angle` (clipped)."""
    n = L**s
    return min(max(int(angle / sector_width(L, s)), 0), n - 1)


def sector_midpoint(L: int, s: int, index: int) -> float:
    """Midpoint of the 0-based stage-s sector `index`."""
    w = sector_width(L, s)
    return (index + 0.5) * w


def rx_angle_grid(rx_res: int) -> np.ndarray:
    """Receiver DoA grid covering [0, pi] at resolution pi/rx_res (rx_res+1 points)."""
    return np.linspace(0.0, math.pi, rx_res + 1)


def nearest_grid_angle(angle: float, rx_res: int) -> float:
    grid = rx_angle_grid(rx_res)
    return float(grid[int(np.argmin(np.abs(grid - angle)))])


def deterministic_error_floor(p_ris, p_rx, target, L: int, S: int, rx_res: int) -> float:
    """High-SNR position error caused purely by angular quantization.

    The known target's true departure angle is snapped to the midpoint of the
    finest codebook sector containing it and the arrival angle to the nearest
    receiver grid point; the displaced intersection gives the floor.  This is
    exactly what a noise-free scan produces, so a noise-free RMSE should
    match this value.
    """
    p_ris = np.asarray(p_ris, dtype=float)
    p_rx = np.asarray(p_rx, dtype=float)
    target = np.asarray(target, dtype=float)
    theta = angles_from_positions(p_ris, target)
    phi = angles_from_positions(p_rx, target)
    aod_hat = sector_midpoint(L, S, sector_index(theta, L, S))
    aoa_hat = nearest_grid_angle(phi, rx_res)
    p_hat = intersect_rays(p_ris, aod_hat, p_rx, aoa_hat)
    return float(np.linalg.norm(p_hat - target))


def statistical_error_floor(
    p_ris,
    p_rx,
    target,
    L: int,
    S: int,
    rx_res: int,
    n_draws: int = 200_000,
    rng: np.random.Generator | None = None,
) -> float:
    """Monte Carlo RMSE floor with uniform angular errors.

    Departure and arrival errors are drawn independently from
    U[0, pi/(2*L^S)] and U[0, pi/(2*rx_res)] and pushed through the
    intersection.  Draws are uniform [0,1) samples scaled by the bounds, so
    with a fixed generator the floor is monotone in L, S and rx_res.
    """
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    if rng is None:
        rng = np.random.default_rng(0)
    p_ris = np.asarray(p_ris, dtype=float)
    p_rx = np.asarray(p_rx, dtype=float)
    target = np.asarray(target, dtype=float)
    theta = angles_from_positions(p_ris, target)
    phi = angles_from_positions(p_rx, target)
    d_theta = rng.random(n_draws) * aod_resolution_bound(L, S)
    d_phi = rng.random(n_draws) * aoa_resolution_bound(rx_res)

    aod = theta + d_theta
    aoa = phi + d_phi
    u = np.stack([np.cos(aoa), np.sin(aoa)], axis=1)
    v = np.stack([np.cos(aod), np.sin(aod)], axis=1)
    det = v[:, 0] * u[:, 1] - u[:, 0] * v[:, 1]
    ok = np.abs(det) > PARALLEL_DET_TOL
    q = p_ris - p_rx
    c1 = (-v[ok, 1] * q[0] + v[ok, 0] * q[1]) / det[ok]
    p_hat = p_rx[None, :] + c1[:, None] * u[ok]
    sq = np.sum((p_hat - target[None, :]) ** 2, axis=1)
    return float(np.sqrt(np.mean(sq)))
