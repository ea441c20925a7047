"""Fisher information, Jacobian transformation to position space, and the
position error bound.

Parameters are ordered [theta_1..K, phi_1..K, rho_r_1..K, rho_i_1..K]; the
complex reflection coefficient is split into real and imaginary parts, so
each target contributes four rows.  Derivatives are the exact analytic
partials of the refinement model and are validated against central finite
differences in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import steering_derivative, steering_vector
from .refine import _chain_coeff, model_direction, path_distances
from .scenario import Scenario
from .synthesis import steer_phases


def mu_derivatives(scn: Scenario, thetas, phis, rhos, phases: np.ndarray, m: int,
                   distances=None):
    """Partials of the bin-m model mean w.r.t. each target's parameters.

    Returns (d_theta, d_phi, d_rho) arrays of shape (N_Rx, K); the rho
    columns are the model directions themselves (the model is linear in
    rho, so d/d rho_r = u and d/d rho_i = j u).
    """
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    phis = np.atleast_1d(np.asarray(phis, dtype=float))
    rhos = np.atleast_1d(np.asarray(rhos, dtype=complex))
    k_t = len(thetas)
    if distances is None:
        distances = [path_distances(scn, t.position) for t in scn.targets[:k_t]]
    f = scn.grid.subband_centers()[m]
    n_rx = scn.rx_array.n_elements
    d_theta = np.zeros((n_rx, k_t), dtype=complex)
    d_phi = np.zeros((n_rx, k_t), dtype=complex)
    d_rho = np.zeros((n_rx, k_t), dtype=complex)
    reflected = np.exp(1j * np.asarray(phases)) * steering_vector(scn.ris_array, scn.phi_tx, f)
    for k in range(k_t):
        coeff = _chain_coeff(scn, m, *distances[k])
        a_rx = steering_vector(scn.rx_array, phis[k], f)
        g = complex(steering_vector(scn.ris_array, thetas[k], f).conj() @ reflected)
        dg = complex(steering_derivative(scn.ris_array, thetas[k], f).conj() @ reflected)
        d_rho[:, k] = coeff * g * a_rx
        d_theta[:, k] = rhos[k] * coeff * dg * a_rx
        d_phi[:, k] = rhos[k] * coeff * g * steering_derivative(scn.rx_array, phis[k], f)
    return d_theta, d_phi, d_rho


@dataclass(frozen=True)
class BoundsReport:
    fim_channel: np.ndarray
    fim_position: np.ndarray
    peb: float
    condition_number: float
    xi: int


def fim_channel(scn: Scenario, thetas, phis, rhos, transmissions, sigma2: float | None = None,
                distances=None) -> np.ndarray:
    """Fisher information of the channel parameters.

    `transmissions` is a list of (phases, n_obs) pairs; every snapshot
    observation contributes one (2/sigma^2) Re{dmu^H dmu} term per bin.
    """
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    k_t = len(thetas)
    sigma2 = scn.noise_power if sigma2 is None else sigma2
    dim = 4 * k_t
    fim = np.zeros((dim, dim))
    for phases, n_obs in transmissions:
        if n_obs < 1:
            raise ValueError("each transmission needs n_obs >= 1")
        for m in range(scn.grid.n_subbands):
            d_theta, d_phi, d_rho = mu_derivatives(scn, thetas, phis, rhos, phases, m,
                                                   distances=distances)
            d = np.concatenate([d_theta, d_phi, d_rho, 1j * d_rho], axis=1)
            fim += n_obs * (2.0 / sigma2) * np.real(d.conj().T @ d)
    return 0.5 * (fim + fim.T)


def jacobian(scn: Scenario, positions) -> np.ndarray:
    """Jacobian G with G[p, a] = d(eta_a)/d(pos_p) mapping channel parameters
    to [x_1..K, y_1..K, rho_r.., rho_i..]; the rho block is the identity."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    k_t = positions.shape[0]
    dim = 4 * k_t
    g = np.zeros((dim, dim))
    for k, p in enumerate(positions):
        u = p - scn.p_ris
        v = p - scn.p_rx
        ru2 = float(u @ u)
        rv2 = float(v @ v)
        if ru2 == 0.0 or rv2 == 0.0:
            raise ValueError(f"target {k} coincides with an anchor")
        sign_u = 1.0 if math.atan2(u[1], u[0]) >= 0 else -1.0
        sign_v = 1.0 if math.atan2(v[1], v[0]) >= 0 else -1.0
        # theta_k column (index k), phi_k column (K + k)
        g[k, k] = sign_u * (-u[1] / ru2)            # d theta / dx
        g[k_t + k, k] = sign_u * (u[0] / ru2)       # d theta / dy
        g[k, k_t + k] = sign_v * (-v[1] / rv2)      # d phi / dx
        g[k_t + k, k_t + k] = sign_v * (v[0] / rv2)  # d phi / dy
        g[2 * k_t + k, 2 * k_t + k] = 1.0
        g[3 * k_t + k, 3 * k_t + k] = 1.0
    return g


def position_fim(scn: Scenario, positions, fim_ch: np.ndarray) -> np.ndarray:
    g = jacobian(scn, positions)
    j = g @ fim_ch @ g.T
    return 0.5 * (j + j.T)


def peb(scn: Scenario, positions, rhos, transmissions, sigma2: float | None = None) -> BoundsReport:
    """Position error bound sqrt(tr([J_pos^{-1}]_{1:2K,1:2K})).

    A numerically singular position FIM yields peb = inf rather than an
    exception; the condition number is reported either way.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    k_t = positions.shape[0]
    thetas = np.array([_angle_from(scn.p_ris, p) for p in positions])
    phis = np.array([_angle_from(scn.p_rx, p) for p in positions])
    distances = [path_distances(scn, p) for p in positions]
    fim_ch = fim_channel(scn, thetas, phis, rhos, transmissions, sigma2=sigma2,
                         distances=distances)
    j_pos = position_fim(scn, positions, fim_ch)
    cond = float(np.linalg.cond(j_pos))
    xi = int(sum(n for _, n in transmissions))
    try:
        inv = np.linalg.inv(j_pos)
        trace = float(np.trace(inv[: 2 * k_t, : 2 * k_t]))
        value = math.sqrt(trace) if trace >= 0 else math.inf
    except np.linalg.LinAlgError:
        value = math.inf
    if not math.isfinite(cond):
        value = math.inf
    return BoundsReport(fim_channel=fim_ch, fim_position=j_pos, peb=value,
                        condition_number=cond, xi=xi)


def _angle_from(anchor, p) -> float:
    from .geometry import angles_from_positions

    return angles_from_positions(anchor, p)


def default_transmissions(scn: Scenario) -> list[tuple[np.ndarray, int]]:
    """Observation set matching what the scan+refine pipeline spends on each
    target: the refinement's steered extra transmissions times the snapshot
    count (or one transmission's snapshots when refinement is off)."""
    sets = []
    for t in scn.targets:
        theta = _angle_from(scn.p_ris, t.position)
        n_tx = scn.refinement.extra_transmissions if scn.features.refinement else 1
        sets.append((steer_phases(scn, theta), n_tx * scn.snapshots))
    return sets


def rho_reference(scn: Scenario) -> np.ndarray:
    """Representative reflection coefficients for bound evaluation: the fixed
    RCS value when given, otherwise the RCS standard deviation."""
    vals = []
    for t in scn.targets:
        if t.rcs.model == "fixed":
            vals.append(float(np.mean(np.asarray(t.rcs.values))))
        else:
            vals.append(math.sqrt(t.rcs.variance))
    return np.asarray(vals, dtype=complex)


def peb_for_scenario(scn: Scenario) -> BoundsReport:
    positions = np.stack([t.position for t in scn.targets])
    return peb(scn, positions, rho_reference(scn), default_transmissions(scn))
