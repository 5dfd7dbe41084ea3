"""Hamiltonian-level quantities: effective Hamiltonian, resolvent, mean wave function."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SensorModel
from .numerics import DEFAULT_TOL, eigvals, jordan_structure, solve


@dataclass(frozen=True)
class HamiltonianSpectrum:
    eigenvalues: np.ndarray
    admissible: bool
    splitting: float
    real_splitting: float


def effective_hamiltonian(model: SensorModel) -> np.ndarray:
    """H0 + eps*H1 - i*kappa*1 - (i/2) sum_j gamma_j H_noise,j^2.

    The last term is the Ito drift of the multiplicative noise; it governs
    the ensemble-averaged wave function.
    """
    n = model.dim
    H = model.hamiltonian - 1j * model.kappa * np.eye(n)
    for ch in model.channels:
        H = H - 0.5j * ch.gamma * (ch.h_noise @ ch.h_noise)
    return H


def greens_operator(model: SensorModel, omega: float) -> np.ndarray:
    """Resolvent ``(omega*1 - H_eff)^-1``; raises SingularMatrixError on a real eigenvalue."""
    n = model.dim
    return solve(float(omega) * np.eye(n) - effective_hamiltonian(model), np.eye(n, dtype=complex))


def steady_wavefunction(model: SensorModel, omega: float | None = None) -> np.ndarray:
    """Envelope ``G(omega)|P>`` of the long-time mean wave function (physical state: envelope*exp(-i omega t))."""
    omega = model.pump_frequency if omega is None else omega
    return greens_operator(model, omega) @ model.pump


def hamiltonian_spectrum(model: SensorModel, tol: float = DEFAULT_TOL) -> HamiltonianSpectrum:
    """Spectrum of H_eff with admissibility flag and splittings.

    Splittings are measured between numerically distinct eigenvalue clusters,
    so an exact EP (whose computed eigenvalues are split by rounding) reports 0.
    """
    H = effective_hamiltonian(model)
    w = eigvals(H)
    reps = np.array([c.eigenvalue for c in jordan_structure(H, tol).clusters])
    diff = np.abs(reps[:, None] - reps[None, :])
    rdiff = np.abs(reps.real[:, None] - reps.real[None, :])
    scale = max(1.0, float(np.max(np.abs(w))))
    return HamiltonianSpectrum(
        eigenvalues=w,
        admissible=bool(np.all(w.imag < -1e-12 * scale)),
        splitting=float(diff.max()),
        real_splitting=float(rdiff.max()),
    )
