"""Noisy non-Hermitian sensor models and builders for the two benchmark systems.

All dimensional quantities are rates in s^-1 (or in units of a reference rate
when working dimensionless). Noise operators are dimensionless.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .numerics import as_cmatrix, as_cvector, eigvals


@dataclass(frozen=True)
class NoiseChannel:
    """One white-noise source ``xi_j(t) * h_noise`` with <xi xi'> = gamma delta(t-t')."""

    h_noise: np.ndarray
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "h_noise", as_cmatrix(self.h_noise, "h_noise"))
        g = float(self.gamma)
        if not np.isfinite(g) or g < 0:
            raise ValueError(f"gamma must be finite and >= 0, got {self.gamma}")
        object.__setattr__(self, "gamma", g)


@dataclass(frozen=True)
class SensorModel:
    """Full problem statement: H = h0 + epsilon*h1, noise channels, damping, pump.

    ``kappa`` is kept separate from ``h0``; it enters the effective
    Hamiltonian as ``-i*kappa*1``.
    """

    h0: np.ndarray
    h1: np.ndarray
    epsilon: float = 0.0
    channels: tuple[NoiseChannel, ...] = ()
    kappa: float = 0.0
    pump: np.ndarray | None = None
    pump_frequency: float = 0.0

    def __post_init__(self):
        h0 = as_cmatrix(self.h0, "h0")
        n = h0.shape[0]
        h1 = as_cmatrix(self.h1, "h1")
        if h1.shape != h0.shape:
            raise ValueError(f"h1 has shape {h1.shape}, expected {h0.shape}")
        channels = tuple(self.channels)
        for j, ch in enumerate(channels):
            if ch.h_noise.shape != h0.shape:
                raise ValueError(f"channel {j} h_noise has shape {ch.h_noise.shape}, expected {h0.shape}")
        pump = np.zeros(n, complex) if self.pump is None else as_cvector(self.pump, "pump")
        if pump.shape != (n,):
            raise ValueError(f"pump has length {pump.size}, expected {n}")
        for name in ("epsilon", "kappa", "pump_frequency"):
            v = float(getattr(self, name))
            if not np.isfinite(v):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if self.kappa < 0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")
        for k, v in (("h0", h0), ("h1", h1), ("channels", channels), ("pump", pump)):
            object.__setattr__(self, k, v)

    @property
    def dim(self) -> int:
        return self.h0.shape[0]

    @property
    def hamiltonian(self) -> np.ndarray:
        return self.h0 + self.epsilon * self.h1

    def replace(self, **changes) -> "SensorModel":
        return dataclasses.replace(self, **changes)

    def with_gamma(self, gamma) -> "SensorModel":
        """Same model with every channel strength set to ``gamma``."""
        chans = tuple(NoiseChannel(c.h_noise, gamma) for c in self.channels)
        return self.replace(channels=chans)


@dataclass(frozen=True)
class PTDimerParams:
    omega0: float = 1.0
    alpha: float = 1.0
    epsilon: float = 0.0
    gamma: float = 0.0
    kappa: float = 0.0
    pump: tuple = (0.0, 0.0)
    pump_frequency: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "gamma", "kappa"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class Tip:
    """Local scatterer on the cavity rim: parity-resolved shifts 2V, 2U and angle beta."""

    V: complex
    U: complex
    beta: float


@dataclass(frozen=True)
class MicrocavityParams:
    Omega0: complex
    A0: complex
    Omega1: complex = 0.0
    A1: complex = 0.0
    B1: complex = 0.0
    epsilon: float = 0.0
    m: int = 1
    tips: tuple[Tip, Tip] = field(default_factory=lambda: (Tip(0.0, 0.0, 0.0), Tip(0.0, 0.0, 0.0)))
    gamma: float = 0.0
    kappa: float = 0.0
    pump: tuple = (0.0, 0.0)
    pump_frequency: float = 0.0

    def __post_init__(self):
        if not complex(self.Omega0).imag < 0:
            raise ValueError("Im(Omega0) must be negative (decay rate Gamma0 = -2 Im Omega0 > 0)")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m}")
        if len(self.tips) != 2:
            raise ValueError("exactly two tips are required")
        if self.gamma < 0 or self.kappa < 0:
            raise ValueError("gamma and kappa must be >= 0")

    @property
    def Gamma0(self) -> float:
        return -2.0 * complex(self.Omega0).imag


def build_pt_dimer(p: PTDimerParams) -> SensorModel:
    """PT-symmetric dimer at its EP, coupling detuned by ``epsilon``, with on-site detuning noise."""
    w0, a = p.omega0, p.alpha
    h0 = np.array([[w0 - 1j * a, a], [a, w0 + 1j * a]])
    h1 = np.array([[0, 1], [1, 0]], dtype=complex)
    noise = NoiseChannel(np.diag([1.0, -1.0]).astype(complex), p.gamma)
    return SensorModel(h0, h1, p.epsilon, (noise,), p.kappa, np.asarray(p.pump, complex), p.pump_frequency)


def tip_noise_coefficients(m: int, tip: Tip) -> tuple[complex, complex]:
    """(a_j, b_j): first-order response of the backscattering amplitudes to d(beta_j)."""
    d = complex(tip.V) - complex(tip.U)
    a = -2 * m * d * np.exp(-2j * m * tip.beta)
    b = -2 * m * d * np.exp(2j * m * tip.beta)
    return complex(a), complex(b)


def tip_noise_operator(m: int, tip: Tip) -> np.ndarray:
    a, b = tip_noise_coefficients(m, tip)
    return np.array([[0, 1j * a], [-1j * b, 0]])


def two_tip_hamiltonian(p: MicrocavityParams, base: complex) -> np.ndarray:
    """Two-mode Hamiltonian of a whispering-gallery resonance perturbed by the two tips."""
    m = p.m
    omega = complex(base) + sum(complex(t.V) + complex(t.U) for t in p.tips)
    A = sum((complex(t.V) - complex(t.U)) * np.exp(-2j * m * t.beta) for t in p.tips)
    B = sum((complex(t.V) - complex(t.U)) * np.exp(2j * m * t.beta) for t in p.tips)
    return np.array([[omega, A], [B, omega]])


def build_microcavity(p: MicrocavityParams) -> SensorModel:
    """Microtoroid at an EP from fully asymmetric backscattering, with two noisy tips."""
    h0 = np.array([[p.Omega0, p.A0], [0, p.Omega0]], dtype=complex)
    h1 = np.array([[p.Omega1, p.A1], [p.B1, p.Omega1]], dtype=complex)
    chans = tuple(NoiseChannel(tip_noise_operator(p.m, t), p.gamma) for t in p.tips)
    return SensorModel(h0, h1, p.epsilon, chans, p.kappa, np.asarray(p.pump, complex), p.pump_frequency)


@dataclass(frozen=True)
class ValidationReport:
    dimension_ok: bool
    admissible: bool
    heff_eigenvalues: np.ndarray
    messages: tuple[str, ...]

    def __bool__(self):
        return self.dimension_ok and self.admissible


def validate(model: SensorModel) -> ValidationReport:
    """Check shapes and that every eigenvalue of H_eff decays (Im < 0).

    Zero imaginary parts count as inadmissible: at an EP they allow polynomial
    growth of the mean wave function.
    """
    from .dynamics import effective_hamiltonian

    msgs = []
    n = model.dim
    dim_ok = model.h1.shape == (n, n) and model.pump.shape == (n,) and all(
        c.h_noise.shape == (n, n) for c in model.channels
    )
    if not dim_ok:
        msgs.append("dimension mismatch")
    w = eigvals(effective_hamiltonian(model))
    scale = max(1.0, float(np.max(np.abs(w))))
    admissible = bool(np.all(w.imag < -1e-12 * scale))
    if not admissible:
        msgs.append(f"H_eff has eigenvalue with Im >= 0 (max Im = {w.imag.max():.3e})")
    return ValidationReport(dim_ok, admissible, w, tuple(msgs))
