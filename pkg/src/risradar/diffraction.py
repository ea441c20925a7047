"""Knife-edge diffraction: Fresnel integrals, obstruction geometry, loss
factor, and the two diffraction leakage channels around the blockage.

Path 1 is the equivalent direct Tx->Rx channel scaled by the knife-edge
loss; path 2 is the equivalent Tx->target->Rx bounce, again scaled by the
loss for the Tx->target chord, with a random phase modeling small target
displacements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy import special

from .channel import channel_gain, rerad_matrix
from .constants import SPEED_OF_LIGHT
from .geometry import angles_from_positions, steering_vector

if TYPE_CHECKING:  # pragma: no cover
    from .scenario import Blockage, Scenario


@dataclass(frozen=True)
class DiffractionGeometry:
    """Knife-edge geometry for one chord.

    d1/d2 split the chord at the foot of the perpendicular dropped from the
    edge tip; h is the signed obstruction depth, positive when the tip has
    crossed to the far side of the chord relative to the blockage base
    (i.e. the blockage pierces the line of sight).
    """

    d1: float
    d2: float
    h: float

    def __post_init__(self):
        if not (self.d1 > 0 and self.d2 > 0):
            raise ValueError(f"d1 and d2 must be positive, got {self.d1}, {self.d2}")


def fresnel_cs(x: float) -> tuple[float, float]:
    """Fresnel integrals (C(x), S(x)) with the pi*t^2/2 kernel."""
    if not math.isfinite(x):
        raise ValueError(f"x must be finite, got {x}")
    s, c = special.fresnel(x)
    return float(c), float(s)


def fresnel_param(geom: DiffractionGeometry, wavelength: float) -> float:
    """Fresnel parameter nu = h * sqrt((2/lambda) (1/d1 + 1/d2))."""
    if wavelength <= 0:
        raise ValueError(f"wavelength must be positive, got {wavelength}")
    return geom.h * math.sqrt((2.0 / wavelength) * (1.0 / geom.d1 + 1.0 / geom.d2))


def knife_edge_loss(nu: float) -> float:
    """Knife-edge diffraction field-amplitude ratio l(nu) in [0, ~1].

    l(0) = 0.5 exactly; l -> 1 as nu -> -inf (unobstructed) and l -> 0 as
    nu -> +inf (deep shadow).
    """
    c, s = fresnel_cs(nu)
    return math.sqrt(((1.0 - c - s) ** 2 + (c - s) ** 2) / 4.0)


def diffraction_geometry(tx, rx, blockage: "Blockage") -> DiffractionGeometry | None:
    """Knife-edge geometry for the tx->rx chord against a blockage segment.

    Returns None when the chord does not cross the blockage's supporting
    line between the endpoints (no diffraction geometry; callers treat the
    path as line-of-sight, loss 1).
    """
    tx = np.asarray(tx, dtype=float)
    rx = np.asarray(rx, dtype=float)
    base = np.asarray(blockage.base, dtype=float)
    tip = np.asarray(blockage.tip, dtype=float)

    chord = rx - tx
    length = float(np.linalg.norm(chord))
    if length == 0.0:
        raise ValueError("tx and rx coincide")
    d_hat = chord / length
    n_hat = np.array([-d_hat[1], d_hat[0]])

    # Chord must cross the infinite line through the blockage.
    edge = tip - base
    denom = chord[0] * edge[1] - chord[1] * edge[0]
    if abs(denom) < 1e-15:
        return None  # chord parallel to the blockage line
    t = ((base - tx)[0] * edge[1] - (base - tx)[1] * edge[0]) / denom
    if not 0.0 < t < 1.0:
        return None

    d1 = float(np.dot(tip - tx, d_hat))
    d2 = length - d1
    if d1 <= 0.0 or d2 <= 0.0:
        return None  # perpendicular foot outside the chord

    s_base = float(np.dot(base - tx, n_hat))
    s_tip = float(np.dot(tip - tx, n_hat))
    if s_base > 0:
        s_base, s_tip = -s_base, -s_tip
    h = abs(s_tip) if s_base == 0.0 else s_tip
    return DiffractionGeometry(d1=d1, d2=d2, h=h)


def path_loss_factor(tx, rx, blockage, wavelength: float) -> float:
    """Knife-edge amplitude factor for a chord; 1.0 without a crossing."""
    geom = diffraction_geometry(tx, rx, blockage)
    if geom is None:
        return 1.0
    return knife_edge_loss(fresnel_param(geom, wavelength))


def diff_path1_channel(scn: "Scenario", m: int, rng: np.random.Generator) -> np.ndarray:
    """First diffraction path: equivalent Tx->Rx channel times l(nu_1^m).

    Deterministic apart from its re-radiation term; this is the component
    that background subtraction removes.
    """
    f = scn.grid.subband_centers()[m]
    lam = SPEED_OF_LIGHT / f
    l_nu = path_loss_factor(scn.p_tx, scn.p_rx, scn.blockage, lam)
    d = float(np.linalg.norm(scn.p_rx - scn.p_tx))
    gain = channel_gain(scn.absorption, f, d).amplitude
    theta_a = angles_from_positions(scn.p_tx, scn.p_rx)
    phi_a = angles_from_positions(scn.p_rx, scn.p_tx)
    a_rx = steering_vector(scn.rx_array, phi_a, f)
    a_tx = steering_vector(scn.tx_array, theta_a, f)
    h = gain * np.outer(a_rx, a_tx.conj())
    if scn.reradiation_active:
        h = h + rerad_matrix(scn.absorption, f, d, h.shape, rng)
    return l_nu * h


def diff_path2_channel(
    scn: "Scenario",
    k: int,
    m: int,
    rng: np.random.Generator,
    beta_d: float | None = None,
) -> np.ndarray:
    """Second diffraction path: Tx -> target k -> Rx scaled by l(nu_2^m).

    The target's radar cross section is applied by the caller.  beta_d is
    the per-target random phase in [0, 1); when None it is drawn from rng
    (one transmission shares a single beta_d across bins).
    """
    f = scn.grid.subband_centers()[m]
    lam = SPEED_OF_LIGHT / f
    p_k = scn.targets[k].position
    l_nu = path_loss_factor(scn.p_tx, p_k, scn.blockage, lam)
    d1 = float(np.linalg.norm(p_k - scn.p_tx))
    d2 = float(np.linalg.norm(scn.p_rx - p_k))
    gain = channel_gain(scn.absorption, f, d1).amplitude * channel_gain(scn.absorption, f, d2).amplitude
    theta_b = angles_from_positions(scn.p_tx, p_k)
    phi_k = angles_from_positions(scn.p_rx, p_k)
    a_rx = steering_vector(scn.rx_array, phi_k, f)
    a_tx = steering_vector(scn.tx_array, theta_b, f)
    h = gain * np.outer(a_rx, a_tx.conj())
    if scn.reradiation_active:
        h = h + rerad_matrix(scn.absorption, f, d1 + d2, h.shape, rng)
    if beta_d is None:
        beta_d = rng.random()
    return l_nu * h * np.exp(2j * math.pi * beta_d)
