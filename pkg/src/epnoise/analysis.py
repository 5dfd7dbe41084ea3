"""Experiments built on the core modules: pump sweeps, eigenvalue flows, scaling fits."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats
from scipy.optimize import linear_sum_assignment

from .dynamics import effective_hamiltonian
from .errors import BelowNoiseFloorError, MixedSpectrumError, NumericalError
from .liouville import LiouvilleOperator, build_liouvillian, stationary_state
from .model import SensorModel
from .numerics import DEFAULT_TOL, as_cmatrix, eigvals, jordan_structure
from .stochastic import TrajectoryConfig, rk4_matrices, simulate_trajectory

SWEEP_MODES = ("steady", "sde", "both")
TARGETS = ("hamiltonian", "liouvillian")


@dataclass(frozen=True)
class SpectrumSweep:
    omegas: np.ndarray
    steady: np.ndarray | None
    sde: np.ndarray | None
    h_eff_eigenvalues: np.ndarray
    flags: tuple[str, ...]
    observable: int = 0

    @property
    def n_flagged(self) -> int:
        return sum(1 for f in self.flags if f)


def frequency_sweep(model: SensorModel, omegas, mode: str = "steady", config: TrajectoryConfig | None = None,
                    observable: int = 0, threads: int = 1) -> SpectrumSweep:
    """Intensity |psi_obs|^2 response versus pump frequency.

    ``steady``: rho_obs,obs of the stationary state at each frequency.
    ``sde``: time average over [burn_in, t_end] of one stochastic trajectory per
    frequency (trajectory index = grid index). Failures are flagged per point.
    """
    if mode not in SWEEP_MODES:
        raise ValueError(f"mode must be one of {SWEEP_MODES}")
    omegas = np.asarray(omegas, dtype=float)
    if omegas.ndim != 1 or np.any(np.diff(omegas) <= 0):
        raise ValueError("omega grid must be strictly increasing")
    if mode != "steady" and config is None:
        raise ValueError("sde mode needs a TrajectoryConfig")
    flags = [""] * len(omegas)

    steady = None
    if mode in ("steady", "both"):
        steady = np.full(len(omegas), np.nan)
        for i, w in enumerate(omegas):
            try:
                st = stationary_state(model, w)
            except NumericalError as exc:
                flags[i] = f"singular: {exc}"
                continue
            steady[i] = st.rho[observable, observable].real
            if not st.stable:
                flags[i] = "unstable"

    sde = None
    if mode in ("sde", "both"):
        def point(i):
            return simulate_trajectory(model, omegas[i], config, traj_index=i, raise_on_divergence=False)

        if threads > 1:
            with ThreadPoolExecutor(threads) as ex:
                results = list(ex.map(point, range(len(omegas))))
        else:
            results = [point(i) for i in range(len(omegas))]
        sde = np.array([np.nan if r.diverged else r.window_average[observable] for r in results])
        for i, r in enumerate(results):
            if r.diverged:
                flags[i] = (flags[i] + "; " if flags[i] else "") + f"diverged at t={r.diverged_time:.6g}"

    return SpectrumSweep(omegas, steady, sde, eigvals(effective_hamiltonian(model)), tuple(flags), observable)


def find_peaks(x, y) -> list[tuple[float, float]]:
    """Interior local maxima of ``y(x)`` refined by a parabola through three points."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    peaks = []
    for i in range(1, len(y) - 1):
        if y[i] > y[i - 1] and y[i] >= y[i + 1]:
            x0, x1, x2 = x[i - 1], x[i], x[i + 1]
            y0, y1, y2 = y[i - 1], y[i], y[i + 1]
            den = (x0 - x1) * (x0 - x2) * (x1 - x2)
            A = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / den
            B = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / den
            if A < 0:
                xv = -B / (2 * A)
                C = y1 - A * x1**2 - B * x1
                peaks.append((float(xv), float(A * xv**2 + B * xv + C)))
            else:
                peaks.append((float(x1), float(y1)))
    return peaks


@dataclass(frozen=True)
class ScalingFit:
    strengths: np.ndarray
    splittings: np.ndarray
    exponent: float
    halfwidth: float
    r_squared: float
    reference: complex
    target: str


def _operator(model: SensorModel, target: str) -> np.ndarray:
    if target == "hamiltonian":
        return effective_hamiltonian(model)
    if target == "liouvillian":
        return build_liouvillian(model).matrix
    raise ValueError(f"target must be one of {TARGETS}")


def scaling_exponent(model_factory: Callable[[float], SensorModel], grid, target: str = "hamiltonian",
                     tol: float = DEFAULT_TOL) -> ScalingFit:
    """Power-law exponent of the eigenvalue splitting versus perturbation strength.

    The reference is the most degenerate eigenvalue cluster of the unperturbed
    operator (strength 0); the splitting at strength s is the largest distance
    from that reference among the cluster-many eigenvalues closest to it.
    """
    grid = np.asarray(grid, float)
    if np.any(grid <= 0):
        raise ValueError("strengths must be positive for a log-log fit")
    M0 = _operator(model_factory(0.0), target)
    js = jordan_structure(M0, tol)
    cl = max(js.clusters, key=lambda c: (c.multiplicity, -abs(c.eigenvalue)))
    ref, m = cl.eigenvalue, cl.multiplicity
    splits = []
    for s in grid:
        M = _operator(model_factory(float(s)), target)
        w = eigvals(M)
        near = w[np.argsort(np.abs(w - ref), kind="stable")[:m]]
        sp = float(np.max(np.abs(near - ref)))
        floor = 1e3 * np.finfo(float).eps * np.linalg.norm(M, 2)
        if sp < floor:
            raise BelowNoiseFloorError(f"splitting {sp:.3e} at strength {s:.3e} is below {floor:.3e}")
        splits.append(sp)
    splits = np.array(splits)
    fit = stats.linregress(np.log(grid), np.log(splits))
    tq = stats.t.ppf(0.975, len(grid) - 2) if len(grid) > 2 else np.inf
    return ScalingFit(grid, splits, float(fit.slope), float(tq * fit.stderr), float(fit.rvalue**2), ref, target)


@dataclass(frozen=True)
class EigenFlow:
    grid: np.ndarray
    hamiltonian: np.ndarray   # (P, n) branch-continued eigenvalues of H_eff
    liouvillian: np.ndarray   # (P, n^2) branch-continued eigenvalues of L
    ambiguous: tuple[tuple[int, str], ...] = field(default=())


def _match(prev, cur, k, label, ambiguous, tie=1e-12):
    D = np.abs(prev[:, None] - cur[None, :])
    rows, cols = linear_sum_assignment(D)
    for i in range(len(prev)):
        d = np.sort(D[i])
        if len(d) > 1 and d[1] - d[0] < tie:
            ambiguous.append((k, label))
            break
    out = np.empty_like(cur)
    out[rows] = cur[cols]
    return out


def eigen_flow(model_factory: Callable[[float], SensorModel], grid) -> EigenFlow:
    """Eigenvalues of H_eff and L along a parameter grid, continued branch by branch.

    Consecutive points are matched by the minimum-total-distance assignment;
    near-ties (within 1e-12) are recorded in ``ambiguous`` as (index, operator).
    """
    grid = np.asarray(grid, float)
    H, L, amb = [], [], []
    for k, s in enumerate(grid):
        model = model_factory(float(s))
        h = eigvals(effective_hamiltonian(model))
        l = build_liouvillian(model).eigenvalues()
        if k:
            h = _match(H[-1], h, k, "hamiltonian", amb)
            l = _match(L[-1], l, k, "liouvillian", amb)
        H.append(h)
        L.append(l)
    return EigenFlow(grid, np.array(H), np.array(L), tuple(amb))


@dataclass(frozen=True)
class EpOrderEstimate:
    degree: int
    slope: float
    times: np.ndarray
    norms: np.ndarray
    gamma: float


def ep_order_from_dynamics(L, v0, gamma_offset: float | None = None, window=None,
                           n_samples: int = 40, tol: float = DEFAULT_TOL) -> EpOrderEstimate:
    """Polynomial degree of ||exp(L t) v0|| * exp(Gamma t) at late times.

    All eigenvalues must share the real part -Gamma. The growth exponent is
    the log-log slope over ``window`` (default [100, 10^4] / ||L||, where the
    leading power dominates), rounded to the nearest integer.
    """
    M = as_cmatrix(L.matrix if isinstance(L, LiouvilleOperator) else L, "L")
    N = M.shape[0]
    scale = float(np.linalg.norm(M, 2)) or 1.0
    reps = np.array([c.eigenvalue for c in jordan_structure(M, tol).clusters])
    if np.ptp(reps.real) > 1e-6 * scale:
        raise MixedSpectrumError(f"eigenvalue real parts span {np.ptp(reps.real):.3e}")
    gamma = -float(reps.real.mean()) if gamma_offset is None else float(gamma_offset)
    t_a, t_b = window if window is not None else (100.0 / scale, 1e4 / scale)
    h = 0.05 / scale
    R, _ = rk4_matrices(M + gamma * np.eye(N), h)
    steps = np.unique(np.round(np.geomspace(t_a / h, t_b / h, n_samples)).astype(int))
    v0 = np.asarray(v0, complex)
    norms = np.array([np.linalg.norm(np.linalg.matrix_power(R, int(k)) @ v0) for k in steps])
    times = steps * h
    slope = float(np.polyfit(np.log(times), np.log(norms), 1)[0])
    return EpOrderEstimate(int(round(slope)), slope, times, norms, gamma)
