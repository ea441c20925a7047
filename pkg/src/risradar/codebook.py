"""Hierarchical RIS codebook: ideal sector patterns, constant-modulus
gradient-projection codeword design, beampattern evaluation, persistence.

Stage s (1-based) holds L^s codewords whose sectors partition [0, pi).
Codewords are designed at a single reference frequency (the RIS applies one
phase profile to all sub-bands), which is what creates beam squint at the
other bins.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import ArrayConfig, steering_matrix, steering_vector

CODEBOOK_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Codeword:
    """One RIS phase profile tied to an angular sector.

    phases are the per-element shifts psi; the applied reflection weights
    are exp(j * phases), unit-modulus by construction.
    """

    phases: np.ndarray
    stage: int
    index: int            # 1-based within the stage
    lo: float
    hi: float
    residual: float = 0.0
    converged: bool = True

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)


@dataclass(frozen=True)
class DesignOptions:
    max_iters: int = 2000
    rel_tol: float = 1e-8
    armijo_c: float = 1e-4
    step_scale: float = 1.0   # initial step = step_scale / lambda_max(A A^H)
    restarts: int = 3
    seed: int = 7


def sector_bounds(L: int, s: int, r: int) -> tuple[float, float]:
    """[lo, hi) of the 1-based sector r at stage s."""
    n = L**s
    if not 1 <= r <= n:
        raise ValueError(f"sector index {r} outside 1..{n}")
    w = math.pi / n
    return (r - 1) * w, r * w


def design_grid(R: int) -> np.ndarray:
    """Uniform design grid theta_r = pi * r / R for r = 0..R-1."""
    return math.pi * np.arange(R) / R


def ideal_pattern(R: int, L: int, s: int, r: int) -> np.ndarray:
    """0/1 ideal beampattern for sector r at stage s over the R-point grid.

    Sector 1 is [1...1 0...0] with R / L^s ones; sector r is that vector
    circularly shifted by (r-1) * R / L^s entries.
    """
    n = L**s
    if R % n != 0:
        raise ValueError(f"L^s = {n} must divide R = {R}")
    if not 1 <= r <= n:
        raise ValueError(f"sector index {r} outside 1..{n}")
    ones = R // n
    d = np.zeros(R)
    d[:ones] = 1.0
    return np.roll(d, (r - 1) * ones)


def constant_modulus_project(v: np.ndarray, radius: float) -> np.ndarray:
    """Project elementwise onto the circle |v_i| = radius (zeros map to +radius)."""
    mags = np.abs(v)
    out = np.where(mags > 0, v / np.where(mags > 0, mags, 1.0), 1.0)
    return radius * out


def ris_beampattern(phases: np.ndarray, grid_angles: np.ndarray, ris_array: ArrayConfig,
                    phi_tx: float, freq: float) -> np.ndarray:
    """Reflection beampattern A^H(theta, f) diag(e^{j psi}) a(phi_tx, f)."""
    a_in = steering_vector(ris_array, phi_tx, freq)
    weighted = np.exp(1j * np.asarray(phases)) * a_in
    A = steering_matrix(ris_array, np.asarray(grid_angles, dtype=float), freq)
    return A.conj().T @ weighted


def _objective(ah: np.ndarray, c: np.ndarray, d: np.ndarray) -> float:
    """Magnitude misfit || |A^H c| - d ||^2.

    The ideal pattern is a gain mask; demanding the complex field match a
    real-positive target would force constant pattern phase across the
    sector, which a phase-only array cannot sustain and which collapses the
    in-sector amplitude instead.
    """
    r = np.abs(ah @ c) - d
    return float(r @ r)


def _gradient_projection(ah: np.ndarray, d: np.ndarray, c0: np.ndarray, radius: float,
                         opts: DesignOptions) -> tuple[np.ndarray, float, bool]:
    """Minimize || |A^H c| - d ||^2 over |c_i| = radius by projected gradient
    descent with Armijo backtracking.  Returns (c, residual, converged)."""
    a = ah.conj().T
    # Largest curvature scale of the smooth part; the N x N Gram is tiny.
    lip = float(np.linalg.eigvalsh(a @ ah).max())
    alpha0 = opts.step_scale / max(lip, 1e-300)
    c = constant_modulus_project(c0, radius)
    f = _objective(ah, c, d)
    converged = False
    for _ in range(opts.max_iters):
        r = ah @ c
        mags = np.abs(r)
        phase = np.where(mags > 0, r / np.where(mags > 0, mags, 1.0), 1.0)
        grad = a @ (r - d * phase)
        gnorm2 = float(np.real(np.vdot(grad, grad)))
        if gnorm2 == 0.0:
            converged = True
            break
        alpha = alpha0
        accepted = False
        while alpha > 1e-15:
            c_new = constant_modulus_project(c - alpha * grad, radius)
            f_new = _objective(ah, c_new, d)
            step2 = float(np.real(np.vdot(c_new - c, c_new - c)))
            # Sufficient decrease for a projected step (the projection can
            # absorb most of the raw gradient direction).
            if f_new <= f - (opts.armijo_c / alpha) * step2 and f_new < f:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            converged = True  # no improving projected step along the gradient
            break
        rel_change = abs(f - f_new) / max(f, 1e-300)
        c, f = c_new, f_new
        if rel_change < opts.rel_tol:
            converged = True
            break
    return c, math.sqrt(f), converged


def feasible_level(n_elements: int, L: int, s: int) -> float:
    """Beampattern amplitude a stage-s sector can sustain under the
    constant-modulus budget: the per-sector share of the total pattern
    energy (~R for a unit-norm auxiliary vector), capped by the coherent
    peak sqrt(N)."""
    return min(math.sqrt(L**s), math.sqrt(n_elements))


def design_codeword(ideal: np.ndarray, ris_array: ArrayConfig, phi_tx: float, f_design: float,
                    stage: int = 1, index: int = 1, lo: float = 0.0, hi: float = math.pi,
                    opts: DesignOptions | None = None) -> Codeword:
    """Design the RIS phase profile whose beampattern best matches `ideal`.

    Solves the constant-modulus least-squares fit at the design frequency.
    Two deterministic starts are tried (the projected unconstrained LS
    solution and a beam steered at the sector's center-of-mass), plus seeded
    random restarts if neither converges; the best final residual wins.  The
    RIS profile is the fitted auxiliary vector divided elementwise by the
    incident steering vector.
    """
    opts = opts or DesignOptions()
    R = ideal.shape[0]
    grid = design_grid(R)
    A = steering_matrix(ris_array, grid, f_design)  # (N, R)
    ah = A.conj().T                                 # (R, N)
    n = ris_array.n_elements
    radius = 1.0 / math.sqrt(n)

    inits = []
    c0, *_ = np.linalg.lstsq(ah, ideal.astype(complex), rcond=None)
    inits.append(c0)
    support = np.flatnonzero(ideal)
    if support.size:
        center = float(np.mean(grid[support]))
        inits.append(radius * steering_vector(ris_array, center, f_design))

    best_c = best_res = best_conv = None
    for c_init in inits:
        c, res, conv = _gradient_projection(ah, ideal, c_init, radius, opts)
        if best_res is None or res < best_res:
            best_c, best_res, best_conv = c, res, conv
    if not best_conv:
        rng = np.random.default_rng(np.random.SeedSequence([opts.seed, stage, index]))
        for _ in range(opts.restarts):
            c_init = radius * np.exp(2j * math.pi * rng.random(n))
            c, res, conv = _gradient_projection(ah, ideal, c_init, radius, opts)
            if res < best_res:
                best_c, best_res, best_conv = c, res, conv

    a_in = steering_vector(ris_array, phi_tx, f_design)
    phases = np.angle(best_c * a_in.conj())
    return Codeword(phases=phases, stage=stage, index=index, lo=lo, hi=hi,
                    residual=best_res, converged=best_conv)


def steer_codeword(ris_array: ArrayConfig, phi_tx: float, f_design: float,
                   stage: int, index: int, lo: float, hi: float) -> Codeword:
    """Closed-form profile steering the reflected beam at the sector midpoint."""
    mid = 0.5 * (lo + hi)
    a_out = steering_vector(ris_array, mid, f_design)
    a_in = steering_vector(ris_array, phi_tx, f_design)
    phases = np.angle(a_out * a_in.conj())
    return Codeword(phases=phases, stage=stage, index=index, lo=lo, hi=hi,
                    residual=0.0, converged=True)


class Codebook:
    """Hierarchical set of RIS codewords, designed lazily on first access.

    `codeword(s, r)` designs and caches sector r of stage s; `materialize`
    fills every stage.  Designs are seeded per (stage, sector), so the
    result is independent of access order.
    """

    def __init__(self, L: int, S: int, R: int, ris_array: ArrayConfig, phi_tx: float,
                 f_design: float, opts: DesignOptions | None = None):
        if L < 2 or S < 1:
            raise ValueError(f"need L >= 2, S >= 1; got L={L}, S={S}")
        if R % L**S != 0:
            raise ValueError(f"L^S = {L**S} must divide R = {R}")
        self.L = L
        self.S = S
        self.R = R
        self.ris_array = ris_array
        self.phi_tx = phi_tx
        self.f_design = f_design
        self.opts = opts or DesignOptions()
        self._cache: dict[tuple[int, int], Codeword] = {}

    def codeword(self, s: int, r: int) -> Codeword:
        if not 1 <= s <= self.S:
            raise ValueError(f"stage {s} outside 1..{self.S}")
        key = (s, r)
        if key not in self._cache:
            lo, hi = sector_bounds(self.L, s, r)
            if self.L**s > self.ris_array.n_elements:
                # Below the aperture resolution the fitted optimum collapses
                # to a beam at the sector midpoint; using the closed-form
                # steer keeps all fine-stage beams exact shifted copies, so
                # ranking responses across adjacent sectors stays exact.
                self._cache[key] = steer_codeword(
                    self.ris_array, self.phi_tx, self.f_design, stage=s, index=r, lo=lo, hi=hi,
                )
            else:
                # 0/1 sector shape per the hierarchical construction, scaled
                # to the amplitude the constant-modulus budget can sustain (a
                # unit target would make the fit suppress the main beam).
                level = feasible_level(self.ris_array.n_elements, self.L, s)
                ideal = level * ideal_pattern(self.R, self.L, s, r)
                self._cache[key] = design_codeword(
                    ideal, self.ris_array, self.phi_tx, self.f_design,
                    stage=s, index=r, lo=lo, hi=hi, opts=self.opts,
                )
        return self._cache[key]

    def stage(self, s: int) -> list[Codeword]:
        return [self.codeword(s, r) for r in range(1, self.L**s + 1)]

    def materialize(self) -> "Codebook":
        for s in range(1, self.S + 1):
            self.stage(s)
        return self

    @property
    def n_codewords(self) -> int:
        return sum(self.L**s for s in range(1, self.S + 1))

    # ------------------------------------------------------------------ #
    # Persistence: versioned JSON with full-precision phases.
    # ------------------------------------------------------------------ #
    def save(self, path) -> None:
        self.materialize()
        doc = {
            "version": CODEBOOK_FORMAT_VERSION,
            "L": self.L,
            "S": self.S,
            "R": self.R,
            "design_frequency_hz": self.f_design,
            "phi_tx_rad": self.phi_tx,
            "n_ris": self.ris_array.n_elements,
            "spacing_m": self.ris_array.spacing,
            "stages": [
                [
                    {
                        "index": cw.index,
                        "lo": cw.lo,
                        "hi": cw.hi,
                        "residual": cw.residual,
                        "converged": cw.converged,
                        "phases": cw.phases.tolist(),
                    }
                    for cw in self.stage(s)
                ]
                for s in range(1, self.S + 1)
            ],
        }
        Path(path).write_text(json.dumps(doc))

    @classmethod
    def load(cls, path) -> "Codebook":
        doc = json.loads(Path(path).read_text())
        if doc.get("version") != CODEBOOK_FORMAT_VERSION:
            raise ValueError(f"unsupported codebook version {doc.get('version')!r}")
        cb = cls(
            L=doc["L"],
            S=doc["S"],
            R=doc["R"],
            ris_array=ArrayConfig(doc["n_ris"], doc["spacing_m"]),
            phi_tx=doc["phi_tx_rad"],
            f_design=doc["design_frequency_hz"],
        )
        for s, stage in enumerate(doc["stages"], start=1):
            for entry in stage:
                cb._cache[(s, entry["index"])] = Codeword(
                    phases=np.asarray(entry["phases"], dtype=float),
                    stage=s,
                    index=entry["index"],
                    lo=entry["lo"],
                    hi=entry["hi"],
                    residual=entry["residual"],
                    converged=entry["converged"],
                )
        return cb


def design_codebook(L: int, S: int, R: int, ris_array: ArrayConfig, phi_tx: float,
                    f_design: float, opts: DesignOptions | None = None,
                    lazy: bool = True) -> Codebook:
    cb = Codebook(L, S, R, ris_array, phi_tx, f_design, opts)
    if not lazy:
        cb.materialize()
    return cb
