"""Stochastic trajectories of the noisy Schroedinger equation and the master-equation oracle.

The Ito SDE

    i d psi = H_eff psi dt + sum_j N_j psi dW_j + exp(-i w t) P dt,
    <dW_i dW_j> = gamma_j delta_ij dt,

is integrated with Euler-Maruyama. By default the integration runs in a frame
rotating at the carrier frequency Re tr(H)/n (psi = exp(-i w_c t) phi), which
is exact but removes the O(w_c^2 dt) drift bias of the lab-frame scheme.
A Stratonovich Heun integrator of the
physical equation (bare H, no drift correction) is available as a cross-check.

Every trajectory draws its Gaussian increments from its own Philox stream
keyed by (master_seed, traj_index), and ensemble means are accumulated in
trajectory-index order, so results do not depend on thread scheduling.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from .dynamics import effective_hamiltonian
from .errors import DivergedError, EmptyWindowError
from .liouville import DensityMatrix, build_liouvillian, pump_supervector, unvec, vec
from .model import SensorModel

CHUNK = 1 << 16
SCHEMES = ("ito", "stratonovich")
FRAMES = ("rotating", "lab")


@dataclass(frozen=True)
class TrajectoryConfig:
    dt: float
    t_end: float
    burn_in: float = 0.0
    n_traj: int = 1
    master_seed: int = 0
    record_stride: int = 1
    psi0: tuple | None = None
    scheme: str = "ito"
    guard: float | None = None
    frame: str = "rotating"

    def __post_init__(self):
        if not 0 < self.dt < self.t_end:
            raise ValueError("need 0 < dt < t_end")
        if not 0 <= self.burn_in < self.t_end:
            raise ValueError("need 0 <= burn_in < t_end")
        if self.n_traj < 1 or self.record_stride < 1:
            raise ValueError("n_traj and record_stride must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.frame not in FRAMES:
            raise ValueError(f"frame must be one of {FRAMES}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass(frozen=True)
class TrajectoryResult:
    times: np.ndarray
    states: np.ndarray          # (T, n)
    observables: np.ndarray     # (T, n): |psi_i|^2
    window_average: np.ndarray  # (n,): mean |psi_i|^2 over every step in [burn_in, t_end]
    diverged: bool = False
    diverged_time: float | None = None


@dataclass(frozen=True)
class EnsembleResult:
    times: np.ndarray
    mean_state: np.ndarray         # (T, n)
    mean_state_stderr: np.ndarray  # (T, n)
    rho: np.ndarray                # (T, n, n)
    stderr: np.ndarray             # (T, n): standard error of rho_ii
    window_averages: np.ndarray    # (n_ok, n): per-trajectory window means
    n_traj: int
    n_diverged: int

    @property
    def diverged_fraction(self) -> float:
        return self.n_diverged / self.n_traj

    def density(self, k: int) -> DensityMatrix:
        return DensityMatrix(self.rho[k])

    def window_mean(self) -> tuple[np.ndarray, np.ndarray]:
        """Ensemble mean of the per-trajectory window averages and its standard error."""
        W = self.window_averages
        n = W.shape[0]
        se = W.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.full(W.shape[1], np.inf)
        return W.mean(axis=0), se


@numba.njit(cache=True, nogil=True)
def _matvec(M, x, out):
    n = x.shape[0]
    for i in range(n):
        s = 0j
        for j in range(n):
            s += M[i, j] * x[j]
        out[i] = s


@numba.njit(cache=True, nogil=True)
def _run_chunk(psi, k0, nsteps, dt, H, Hn, sq, Z, pump, omega, stride, rec, rec_pos,
               avg_start, acc, guard2, heun):
    """Advance ``psi`` by ``nsteps`` steps in place.

    Returns (number of records written, accumulated window samples, step of divergence or -1).
    """
    n = psi.shape[0]
    K = Hn.shape[0]
    hp = np.empty(n, np.complex128)
    tmp = np.empty(n, np.complex128)
    inc = np.empty(n, np.complex128)
    pred = np.empty(n, np.complex128)
    dW = np.empty(K, np.float64)
    nacc = 0
    for s in range(nsteps):
        k = k0 + s
        t = k * dt
        for j in range(K):
            dW[j] = sq[j] * Z[s, j]
        ph = np.exp(-1j * omega * t)
        # drift and noise at the left point
        _matvec(H, psi, hp)
        for i in range(n):
            inc[i] = -1j * (hp[i] + ph * pump[i]) * dt
        for j in range(K):
            if dW[j] != 0.0:
                _matvec(Hn[j], psi, tmp)
                for i in range(n):
                    inc[i] += -1j * tmp[i] * dW[j]
        if heun:
            for i in range(n):
                pred[i] = psi[i] + inc[i]
            ph2 = np.exp(-1j * omega * (t + dt))
            _matvec(H, pred, hp)
            for i in range(n):
                inc[i] = 0.5 * inc[i] - 0.5j * (hp[i] + ph2 * pump[i]) * dt
            for j in range(K):
                if dW[j] != 0.0:
                    _matvec(Hn[j], pred, tmp)
                    for i in range(n):
                        inc[i] += -0.5j * tmp[i] * dW[j]
        norm2 = 0.0
        for i in range(n):
            psi[i] += inc[i]
            norm2 += psi[i].real ** 2 + psi[i].imag ** 2
        if not norm2 <= guard2:
            return rec_pos, nacc, k + 1
        kk = k + 1
        if kk >= avg_start:
            for i in range(n):
                acc[i] += psi[i].real ** 2 + psi[i].imag ** 2
            nacc += 1
        if kk % stride == 0:
            for i in range(n):
                rec[rec_pos, i] = psi[i]
            rec_pos += 1
    return rec_pos, nacc, -1


def trajectory_rng(master_seed: int, traj_index: int) -> np.random.Generator:
    """Counter-based stream for one trajectory, independent of all others."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(traj_index),))
    return np.random.Generator(np.random.Philox(ss))


def _guard(model, H, psi0, config):
    if config.guard is not None:
        return float(config.guard)
    w = np.linalg.eigvals(H)
    damp = float(np.min(np.abs(w.imag)))
    hn = float(np.linalg.norm(H, 2)) or 1.0
    base = max(float(np.linalg.norm(psi0)), float(np.linalg.norm(model.pump)) / max(damp, 1e-12 * hn))
    return 1e12 * (base if base > 0 else 1.0)


def _check_resolution(model, H, dt):
    fast = float(np.linalg.norm(H, 2))
    for ch in model.channels:
        fast = max(fast, ch.gamma * float(np.linalg.norm(ch.h_noise, 2)) ** 2)
    if dt * fast > 0.1:
        warnings.warn(f"dt*max rate = {dt * fast:.3g} > 0.1; time step does not resolve the dynamics",
                      RuntimeWarning, stacklevel=3)


def _prepare(model: SensorModel, config: TrajectoryConfig):
    n = model.dim
    if config.scheme == "ito":
        H = effective_hamiltonian(model)
    else:
        H = model.hamiltonian - 1j * model.kappa * np.eye(n)
    K = len(model.channels)
    Hn = np.zeros((max(K, 1), n, n), complex)
    sq = np.zeros(max(K, 1))
    for j, ch in enumerate(model.channels):
        Hn[j] = ch.h_noise
        sq[j] = np.sqrt(ch.gamma * config.dt)
    psi0 = np.zeros(n, complex) if config.psi0 is None else np.asarray(config.psi0, complex).reshape(n)
    carrier = float(np.trace(H).real) / n if config.frame == "rotating" else 0.0
    return np.ascontiguousarray(H - carrier * np.eye(n)), Hn, sq, psi0, carrier


def _integrate(model, omega, config, traj_index, prepared):
    H, Hn, sq, psi0, carrier = prepared
    n = model.dim
    dt, N, stride = config.dt, config.n_steps, config.record_stride
    guard2 = _guard(model, H, psi0, config) ** 2
    rng = trajectory_rng(config.master_seed, traj_index)
    n_rec = N // stride + 1
    rec = np.empty((n_rec, n), complex)
    rec[0] = psi0
    rec_pos = 1
    psi = psi0.copy()
    avg_start = int(np.ceil(config.burn_in / dt - 1e-9))
    acc = np.zeros(n)
    nacc = 0
    if avg_start == 0:
        acc += np.abs(psi) ** 2
        nacc = 1
    pump = np.asarray(model.pump, complex)
    heun = config.scheme == "stratonovich"
    k = 0
    div_step = -1
    while k < N:
        m = min(CHUNK, N - k)
        Z = rng.standard_normal((m, Hn.shape[0]))
        rec_pos, na, div_step = _run_chunk(psi, k, m, dt, H, Hn, sq, Z, pump, float(omega) - carrier, stride,
                                           rec, rec_pos, avg_start, acc, guard2, heun)
        nacc += na
        if div_step >= 0:
            break
        k += m
    times = np.arange(rec_pos) * stride * dt
    states = rec[:rec_pos]
    if carrier:
        states = states * np.exp(-1j * carrier * times)[:, None]
    wavg = acc / nacc if nacc else np.full(n, np.nan)
    return TrajectoryResult(
        times=times,
        states=states,
        observables=np.abs(states) ** 2,
        window_average=wavg,
        diverged=div_step >= 0,
        diverged_time=div_step * dt if div_step >= 0 else None,
    )


def simulate_trajectory(model: SensorModel, omega: float | None, config: TrajectoryConfig,
                        traj_index: int = 0, raise_on_divergence: bool = True) -> TrajectoryResult:
    """One stochastic trajectory, recorded every ``record_stride`` steps.

    Raises DivergedError if the norm of psi crosses the overflow guard, which
    is expected for models whose Liouvillian is unstable.
    """
    omega = model.pump_frequency if omega is None else omega
    prepared = _prepare(model, config)
    _check_resolution(model, prepared[0], config.dt)
    res = _integrate(model, omega, config, traj_index, prepared)
    if res.diverged and raise_on_divergence:
        raise DivergedError(f"trajectory {traj_index} diverged at t = {res.diverged_time:.6g}",
                            time=res.diverged_time)
    return res


def ensemble_density(model: SensorModel, omega: float | None, config: TrajectoryConfig,
                     threads: int = 1) -> EnsembleResult:
    """Ensemble mean wave function and density-matrix estimator over ``config.n_traj`` runs.

    Diverged trajectories are counted and left out of the averages; if all
    diverge a DivergedError is raised. Means are updated incrementally in
    trajectory order, which makes the result independent of ``threads`` and
    exact when all trajectories coincide.
    """
    omega = model.pump_frequency if omega is None else omega
    prepared = _prepare(model, config)
    _check_resolution(model, prepared[0], config.dt)
    n = model.dim
    T = config.n_steps // config.record_stride + 1
    mean = np.zeros((T, n), complex)
    dyad = np.zeros((T, n, n), complex)
    m2 = np.zeros((T, n))  # Welford sum of squares of |psi_i|^2
    wavgs = []
    count = 0
    n_div = 0
    first_div = None

    def job(idx):
        return _integrate(model, omega, config, idx, prepared)

    def consume(res):
        nonlocal count, n_div, first_div
        if res.diverged:
            n_div += 1
            first_div = res.diverged_time if first_div is None else min(first_div, res.diverged_time)
            return
        count += 1
        psi = res.states
        d = psi[:, :, None] * psi[:, None, :].conj()
        inten = np.abs(psi) ** 2
        delta = inten - dyad.diagonal(axis1=1, axis2=2).real
        mean[:] += (psi - mean) / count
        dyad[:] += (d - dyad) / count
        m2[:] += delta * (inten - dyad.diagonal(axis1=1, axis2=2).real)
        wavgs.append(res.window_average)

    if threads <= 1:
        for i in range(config.n_traj):
            consume(job(i))
    else:
        with ThreadPoolExecutor(threads) as ex:
            batch = 4 * threads
            for start in range(0, config.n_traj, batch):
                for res in ex.map(job, range(start, min(start + batch, config.n_traj))):
                    consume(res)

    if count == 0:
        raise DivergedError(f"all {config.n_traj} trajectories diverged", time=first_div)
    times = np.arange(T) * config.record_stride * config.dt
    if count > 1:
        var = m2 / (count - 1)
        stderr = np.sqrt(np.maximum(var, 0) / count)
        mvar = np.maximum(dyad.diagonal(axis1=1, axis2=2).real - np.abs(mean) ** 2, 0) * count / (count - 1)
        mstderr = np.sqrt(mvar / count)
    else:
        stderr = np.full((T, n), np.inf)
        mstderr = np.full((T, n), np.inf)
    return EnsembleResult(
        times=times,
        mean_state=mean,
        mean_state_stderr=mstderr,
        rho=dyad,
        stderr=stderr,
        window_averages=np.array(wavgs),
        n_traj=config.n_traj,
        n_diverged=n_div,
    )


def time_average(result: TrajectoryResult, window) -> np.ndarray:
    """Arithmetic mean of the recorded observables with times inside ``window``."""
    t_a, t_b = window
    mask = (result.times >= t_a) & (result.times <= t_b)
    if not mask.any():
        raise EmptyWindowError(f"no recorded samples in [{t_a}, {t_b}]")
    return result.observables[mask].mean(axis=0)


def rk4_matrices(L: np.ndarray, dt: float):
    """(R, S) with one classical RK4 step of v' = L v + p equal to R v + S p."""
    N = L.shape[0]
    I = np.eye(N, dtype=complex)
    hL = dt * L
    hL2 = hL @ hL
    hL3 = hL2 @ hL
    R = I + hL + hL2 / 2 + hL3 / 6 + hL3 @ hL / 24
    S = dt * (I + hL / 2 + hL2 / 6 + hL3 / 24)
    return R, S


@dataclass(frozen=True)
class MasterTrajectory:
    times: np.ndarray
    rho: np.ndarray  # (T, n, n)

    def density(self, k: int) -> DensityMatrix:
        return DensityMatrix(self.rho[k])


def propagate_linear(L: np.ndarray, v0, dt: float, n_steps: int, p=None, record_stride: int = 1):
    """RK4 propagation of v' = L v + p; returns the recorded vectors (every ``record_stride`` steps)."""
    R, S = rk4_matrices(L, dt)
    q = S @ p if p is not None else np.zeros(L.shape[0], complex)
    v = np.array(v0, dtype=complex)
    out = [v.copy()]
    for k in range(1, n_steps + 1):
        v = R @ v + q
        if k % record_stride == 0:
            out.append(v.copy())
    return np.array(out)


def master_propagate(model: SensorModel, omega: float | None, rho0, dt: float, t_end: float,
                     record_stride: int = 1) -> MasterTrajectory:
    """Integrate d rho/dt = L rho + P(w) with classical RK4 from ``rho0``."""
    L = build_liouvillian(model).matrix
    if dt * np.linalg.norm(L, 2) > 0.1:
        warnings.warn("dt*||L|| > 0.1; RK4 step may be inaccurate", RuntimeWarning, stacklevel=2)
    p = pump_supervector(model, omega)
    rho0 = rho0.matrix if isinstance(rho0, DensityMatrix) else np.asarray(rho0, complex)
    N = int(round(t_end / dt))
    vs = propagate_linear(L, vec(rho0), dt, N, p, record_stride)
    times = np.arange(len(vs)) * record_stride * dt
    return MasterTrajectory(times, np.array([unvec(v, model.dim) for v in vs]))
