"""Liouville-space description of the noisy sensor.

Vectorization is column stacking: ``vec(X)[c*n + r] = X[r, c]``, so for
n = 2 the order is (rho11, rho21, rho12, rho22). With this convention

    vec(A X B) = (B^T kron A) vec(X),

and the superoperator ``X -> -i(H X - X H^dag) + sum_j g_j N_j X N_j^dag``
is ``-i(1 kron H - conj(H) kron 1) + sum_j g_j conj(N_j) kron N_j``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import effective_hamiltonian, greens_operator
from .model import MicrocavityParams, SensorModel, tip_noise_coefficients
from .numerics import DEFAULT_TOL, JordanStructure, eigvals, jordan_structure, kron, solve

VEC_CONVENTION = "column-stacking"


def vec(X) -> np.ndarray:
    return np.asarray(X).reshape(-1, order="F")


def unvec(v, n: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    if n is None:
        n = int(round(np.sqrt(v.size)))
    if n * n != v.size:
        raise ValueError(f"vector of length {v.size} is not a vectorized square matrix")
    return v.reshape(n, n, order="F")


@dataclass(frozen=True)
class LiouvilleOperator:
    matrix: np.ndarray
    dim: int
    convention: str = VEC_CONVENTION

    def apply(self, X) -> np.ndarray:
        return unvec(self.matrix @ vec(X), self.dim)

    def eigenvalues(self) -> np.ndarray:
        return eigvals(self.matrix)


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, positive semidefinite up to tolerance; the trace is not conserved."""

    matrix: np.ndarray

    @property
    def hermiticity_error(self) -> float:
        M = self.matrix
        return float(np.linalg.norm(M - M.conj().T))

    @property
    def min_eigenvalue(self) -> float:
        M = self.matrix
        return float(np.linalg.eigvalsh(0.5 * (M + M.conj().T)).min())

    def is_psd(self, tol=1e-10) -> bool:
        return self.min_eigenvalue >= -tol * max(1.0, float(np.abs(np.trace(self.matrix))))

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def __getitem__(self, idx):
        return self.matrix[idx]


def _hamiltonian_part(H: np.ndarray) -> np.ndarray:
    n = H.shape[0]
    eye = np.eye(n)
    return -1j * (kron(eye, H) - kron(H.conj(), eye))


def build_liouvillian_nojump(model: SensorModel) -> LiouvilleOperator:
    """L' = -i(1 kron H_eff - conj(H_eff) kron 1): the Liouvillian without the jump term."""
    return LiouvilleOperator(_hamiltonian_part(effective_hamiltonian(model)), model.dim)


def build_liouvillian(model: SensorModel) -> LiouvilleOperator:
    """Full superoperator L rho = -i(H_eff rho - rho H_eff^dag) + sum_j g_j N_j rho N_j^dag."""
    L = _hamiltonian_part(effective_hamiltonian(model))
    for ch in model.channels:
        if ch.gamma:
            L = L + ch.gamma * kron(ch.h_noise.conj(), ch.h_noise)
    return LiouvilleOperator(L, model.dim)


def pump_operator(model: SensorModel, omega: float | None = None) -> np.ndarray:
    """Hermitian pump P(w) = -i(|P><P| G^dag(w) - G(w) |P><P|)."""
    omega = model.pump_frequency if omega is None else omega
    if not np.any(model.pump):
        return np.zeros((model.dim, model.dim), complex)
    G = greens_operator(model, omega)
    PP = np.outer(model.pump, model.pump.conj())
    return -1j * (PP @ G.conj().T - G @ PP)


def pump_supervector(model: SensorModel, omega: float | None = None) -> np.ndarray:
    return vec(pump_operator(model, omega))


@dataclass(frozen=True)
class StationaryState:
    rho: DensityMatrix
    residual: float
    stable: bool
    max_real_part: float


def stationary_state(model: SensorModel, omega: float | None = None) -> StationaryState:
    """Solve L rho + P(w) = 0.

    Raises SingularMatrixError if L is (numerically) singular. For an unstable
    L the solution is still returned, with ``stable=False``: it exists but does
    not attract generic initial conditions.
    """
    L = build_liouvillian(model)
    p = pump_supervector(model, omega)
    x = solve(L.matrix, -p)
    rho = unvec(x, model.dim)
    residual = float(np.linalg.norm(L.matrix @ x + p))
    mre = float(L.eigenvalues().real.max())
    return StationaryState(DensityMatrix(rho), residual, mre < 0, mre)


@dataclass(frozen=True)
class StabilityReport:
    max_real_part: float
    stable: bool
    critical_rate: float
    spectrum: np.ndarray


def liouville_spectrum(model: SensorModel) -> StabilityReport:
    """Liouville spectrum, stability flag and critical damping rate.

    Uniform damping kappa shifts every Liouville eigenvalue by -2*kappa, so
    the critical rate is half the largest real part of the kappa = 0 spectrum.
    A negative critical rate means the model is stable without any damping.
    """
    w = build_liouvillian(model).eigenvalues()
    w0 = w if model.kappa == 0 else build_liouvillian(model.replace(kappa=0.0)).eigenvalues()
    mre = float(w.real.max())
    return StabilityReport(mre, mre < 0, float(w0.real.max()) / 2, w)


def pt_dimer_critical_rate(alpha: float, gamma: float) -> float:
    """Leading-order critical damping alpha^(2/3) gamma^(1/3) of the noisy PT dimer."""
    return alpha ** (2.0 / 3.0) * gamma ** (1.0 / 3.0)


def pt_dimer_liouville_asymptotics(alpha: float, gamma: float) -> np.ndarray:
    """Small-gamma Liouville eigenvalues of the dimer at the EP (eps = kappa = 0).

    The isolated eigenvalue -2*gamma plus the cube-root triplet
    2 alpha^(2/3) gamma^(1/3) exp(2 pi i (l-1)/3) - 2 gamma/3, l = 0, 1, 2.
    """
    r = 2 * alpha ** (2.0 / 3.0) * gamma ** (1.0 / 3.0)
    trip = [r * np.exp(2j * np.pi * (l - 1) / 3) - 2 * gamma / 3 for l in range(3)]
    return np.array([-2 * gamma] + trip)


def microcavity_sigma2(p: MicrocavityParams) -> complex:
    """sigma^2 = a1 b1 + a2 b2, so that H_noise,j^2 summed gives sigma^2 * 1."""
    return sum(a * b for a, b in (tip_noise_coefficients(p.m, t) for t in p.tips))


def microcavity_stability_bound(p: MicrocavityParams) -> float:
    """Largest noise strength gamma keeping the undamped microcavity stable (lowest order).

    gamma_max = Gamma0^3 / (2 (|a1|^2 + |a2|^2) |A0|^2); infinite when the tips
    are noiseless or the modes are decoupled.
    """
    G0 = p.Gamma0
    if G0 <= 0:
        raise ValueError("Gamma0 = -2 Im Omega0 must be positive")
    asum = sum(abs(tip_noise_coefficients(p.m, t)[0]) ** 2 for t in p.tips)
    denom = 2 * asum * abs(complex(p.A0)) ** 2
    if denom == 0:
        return float("inf")
    return G0**3 / denom


def microcavity_liouville_asymptotics(p: MicrocavityParams) -> np.ndarray:
    """Small-gamma Liouville eigenvalues of the microcavity at eps = kappa = 0."""
    G0 = p.Gamma0
    asum = sum(abs(tip_noise_coefficients(p.m, t)[0]) ** 2 for t in p.tips)
    r = (2 * p.gamma * asum * abs(complex(p.A0)) ** 2) ** (1.0 / 3.0)
    trip = [-G0 - np.exp(2j * np.pi * (l + 0.5) / 3) * r for l in range(3)]
    return np.array([-G0 - p.gamma * microcavity_sigma2(p).real] + trip)


@dataclass(frozen=True)
class DegeneracyReport:
    hamiltonian: JordanStructure
    liouvillian: JordanStructure
    tol: float


def degeneracy_report(model: SensorModel, tol: float = DEFAULT_TOL, strict: bool = False) -> DegeneracyReport:
    H = jordan_structure(effective_hamiltonian(model), tol, strict=strict)
    L = jordan_structure(build_liouvillian(model).matrix, tol, strict=strict)
    return DegeneracyReport(H, L, tol)
