"""Quantum states, Fubini-Study geometry and Schrödinger-type flows.

Units are dimensionless with hbar = 1. States are plain complex numpy arrays
whose last axis is the Hilbert-space index, so most functions here accept a
single state ``(d,)`` or a stack of states ``(n, d)`` and broadcast.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    DegenerateSpeed,
    DimensionMismatch,
    NegativeVariance,
    NonFiniteState,
    NonRealResidual,
    NotHermitian,
    UnderResolvedWarning,
)

NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-12
DEGENERACY_FLOOR = 1e-12
VARIANCE_CLAMP = 1e-14
MAX_DIM = 64


def inner(a, b):
    """<a|b> along the last axis (antilinear in the first argument)."""
    return np.sum(np.conj(a) * b, axis=-1)


def as_state(amplitudes, normalize: bool = False) -> np.ndarray:
    """Validate (and optionally normalize) a state vector.

    Raises ValueError when the vector is not normalized within ``NORM_TOL``
    and ``normalize`` is False.
    """
    psi = np.array(amplitudes, dtype=complex)
    if psi.ndim != 1 or psi.shape[0] < 2:
        raise DimensionMismatch(f"state must be a vector of dimension >= 2, got shape {psi.shape}")
    if not np.all(np.isfinite(psi)):
        raise NonFiniteState("state has non-finite amplitudes")
    norm = np.linalg.norm(psi)
    if normalize:
        if norm == 0.0:
            raise ValueError("cannot normalize the zero vector")
        psi = psi / norm
    elif abs(norm - 1.0) > NORM_TOL:
        raise ValueError(f"state is not normalized (norm - 1 = {norm - 1.0:.3e})")
    psi.setflags(write=False)
    return psi


def as_hermitian(entries) -> np.ndarray:
    """Validate a dense Hermitian matrix; returns a read-only complex copy."""
    A = np.array(entries, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"operator must be square, got shape {A.shape}")
    if A.shape[0] > MAX_DIM:
        raise DimensionMismatch(f"dimension {A.shape[0]} exceeds cap {MAX_DIM}")
    dev = np.max(np.abs(A - A.conj().T))
    if dev >= HERMITIAN_TOL:
        raise NotHermitian(f"max |A - A^dagger| = {dev:.3e}")
    A.setflags(write=False)
    return A


def basis_state(d: int, k: int) -> np.ndarray:
    psi = np.zeros(d, dtype=complex)
    psi[k] = 1.0
    return as_state(psi)


def random_state(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random state from a complex Gaussian draw."""
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return as_state(v, normalize=True)


def _check_dims(H, *vectors):
    d = H.shape[-1]
    for v in vectors:
        if np.shape(v)[-1] != d:
            raise DimensionMismatch(f"vector dimension {np.shape(v)[-1]} does not match operator dimension {d}")


def energy_moments(psi, H):
    """Return (<H>, <H^2>) for one state or a stack of states."""
    _check_dims(H, psi)
    Hpsi = psi @ H.T
    mean = np.real(inner(psi, Hpsi))
    second = np.real(inner(Hpsi, Hpsi))
    return mean, second


def uncertainty(psi, H):
    """Energy uncertainty without input checks, for stacks of states.

    Uses ||(H - <H>)psi|| rather than the difference of moments so that values
    near the degeneracy floor are resolved instead of lost to cancellation.
    """
    Hpsi = psi @ H.T
    mean = np.real(inner(psi, Hpsi))
    resid = Hpsi - mean[..., None] * psi
    return np.sqrt(np.real(inner(resid, resid)))


def energy_uncertainty(psi, H) -> float:
    """Energy uncertainty (<H^2> - <H>^2)^(1/2) of a normalized state.

    Parameters
    ----------
    psi : array_like, shape (d,)
        Normalized state.
    H : array_like, shape (d, d)
        Hermitian operator.

    Returns
    -------
    float
        Nonnegative uncertainty. Round-off negative variances down to
        ``-VARIANCE_CLAMP`` are clamped to zero.

    Raises
    ------
    DimensionMismatch
        If the state and operator dimensions differ.
    NegativeVariance
        If the literal variance is below ``-VARIANCE_CLAMP``, which only
        happens for a non-Hermitian operator.
    """
    psi = np.asarray(psi, dtype=complex)
    H = np.asarray(H, dtype=complex)
    _check_dims(H, psi)
    Hpsi = H @ psi
    literal = np.vdot(psi, H @ Hpsi) - np.vdot(psi, Hpsi) ** 2
    if literal.real < -VARIANCE_CLAMP:
        raise NegativeVariance(f"variance {literal.real:.3e} is negative beyond round-off")
    return float(uncertainty(psi, H))


def fs_segment_length(psi1, psi2):
    """Fubini-Study geodesic distance between the rays of two states.

    Equal to ``arccos(min(1, |<psi1|psi2>|))``. It is evaluated as
    ``atan2(||psi2 - <psi1|psi2> psi1||, |<psi1|psi2>|)``, which is the same
    angle but keeps full relative precision for nearby rays where arccos
    loses about half the digits.
    """
    psi1 = np.asarray(psi1, dtype=complex)
    psi2 = np.asarray(psi2, dtype=complex)
    if psi1.shape[-1] != psi2.shape[-1]:
        raise DimensionMismatch(f"dimensions {psi1.shape[-1]} and {psi2.shape[-1]} differ")
    ov = inner(psi1, psi2)
    perp = psi2 - ov[..., None] * psi1
    return np.arctan2(np.linalg.norm(perp, axis=-1), np.abs(ov))


def fs_velocity_norm(psi, psidot):
    """Projective speed (<psidot|psidot> - |<psi|psidot>|^2)^(1/2)."""
    psi = np.asarray(psi, dtype=complex)
    psidot = np.asarray(psidot, dtype=complex)
    if psi.shape[-1] != psidot.shape[-1]:
        raise DimensionMismatch(f"dimensions {psi.shape[-1]} and {psidot.shape[-1]} differ")
    var = np.real(inner(psidot, psidot)) - np.abs(inner(psi, psidot)) ** 2
    if np.any(var < -VARIANCE_CLAMP):
        raise NegativeVariance("projected velocity has negative squared norm; is psi normalized?")
    return np.sqrt(np.maximum(var, 0.0))


def schrodinger_velocity(psi, H, sign: int = 1):
    """Velocity -i*sign*H psi (sign=+1 is the conventional forward flow)."""
    return -1j * sign * (psi @ H.T)


def nonlinear_velocity(psi, H, sign: int = 1):
    """Velocity sign*i*(H - 2<H>) psi of the norm-preserving nonlinear flow."""
    Hpsi = psi @ H.T
    mean = np.real(inner(psi, Hpsi))
    return 1j * sign * (Hpsi - 2.0 * mean[..., None] * psi)


@dataclass(frozen=True)
class QuantumTrajectory:
    times: np.ndarray
    states: np.ndarray
    # max |norm - 1| seen before any renormalization
    norm_drift: float = 0.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.states.shape[0] != self.times.shape[0]:
            raise DimensionMismatch("one state per time node is required")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def __len__(self):
        return self.times.shape[0]


class TimeDependentHamiltonian:
    """Continuous map t -> Hermitian matrix.

    ``max_frequency`` is an optional bound on the fastest angular frequency
    present (spectral spread plus drive frequency); integrators use it to warn
    about under-resolved step sizes.
    """

    def __init__(self, func: Callable[[float], np.ndarray], dim: int, max_frequency: float | None = None):
        self.func = func
        self.dim = dim
        self.max_frequency = max_frequency

    def __call__(self, t: float) -> np.ndarray:
        H = as_hermitian(self.func(t))
        if H.shape[0] != self.dim:
            raise DimensionMismatch(f"H({t}) has dimension {H.shape[0]}, expected {self.dim}")
        return H


def _check_sign(sign):
    if sign not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign}")


def _check_steps(n_steps):
    if int(n_steps) != n_steps or n_steps < 1:
        raise ValueError(f"n_steps must be a positive integer, got {n_steps}")


def propagate_schrodinger(psi0, H, t_final: float, n_steps: int, sign: int = 1) -> QuantumTrajectory:
    """Exact propagation of |psi'> = -i*sign*H|psi> on a uniform grid.

    Each node is exp(-i*sign*H*t_k)|psi0>, built from one eigendecomposition
    of H, so the per-node error is round-off only.
    """
    _check_sign(sign)
    _check_steps(n_steps)
    psi0 = as_state(psi0)
    H = np.asarray(H, dtype=complex)
    _check_dims(H, psi0)
    try:
        w, V = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise NotHermitian(f"eigendecomposition failed: {exc}") from exc
    if not np.all(np.isfinite(w)):
        raise NotHermitian("eigendecomposition produced non-finite eigenvalues")
    times = np.linspace(0.0, t_final, n_steps + 1)
    c0 = V.conj().T @ psi0
    phases = np.exp(-1j * sign * np.outer(times, w))
    states = (phases * c0) @ V.T
    drift = float(np.max(np.abs(np.linalg.norm(states, axis=1) - 1.0)))
    return QuantumTrajectory(times, states, drift, {"method": "eigendecomposition", "sign": sign})


def _rk4(rhs, y0, t0, dt, n_steps, renormalize=True):
    ys = np.empty((n_steps + 1, y0.shape[0]), dtype=complex)
    ys[0] = y0
    y = y0
    drift = 0.0
    t = t0
    for k in range(n_steps):
        k1 = rhs(t, y)
        k2 = rhs(t + dt / 2, y + dt / 2 * k1)
        k3 = rhs(t + dt / 2, y + dt / 2 * k2)
        k4 = rhs(t + dt, y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        norm = np.linalg.norm(y)
        if not np.isfinite(norm):
            raise NonFiniteState(f"state became non-finite at step {k + 1}")
        drift = max(drift, abs(norm - 1.0))
        if renormalize:
            y = y / norm
        t = t0 + (k + 1) * dt
        ys[k + 1] = y
    return ys, drift


def _warn_resolution(dt, frequency, name):
    if frequency is not None and dt * frequency > 1.0:
        warnings.warn(
            f"{name}: step {dt:.3g} under-resolves frequency {frequency:.3g} (dt*omega = {dt * frequency:.2f} > 1)",
            UnderResolvedWarning,
            stacklevel=3,
        )


def propagate_schrodinger_td(psi0, H: TimeDependentHamiltonian, t_final: float, n_steps: int) -> QuantumTrajectory:
    """RK4 integration of |psi'> = -i H(t)|psi> with per-step renormalization."""
    _check_steps(n_steps)
    psi0 = as_state(psi0)
    if psi0.shape[0] != H.dim:
        raise DimensionMismatch(f"state dimension {psi0.shape[0]} vs Hamiltonian dimension {H.dim}")
    dt = t_final / n_steps
    _warn_resolution(dt, H.max_frequency, "propagate_schrodinger_td")

    def rhs(t, y):
        return -1j * (H(t) @ y)

    states, drift = _rk4(rhs, psi0, 0.0, dt, n_steps)
    times = np.linspace(0.0, t_final, n_steps + 1)
    return QuantumTrajectory(times, states, drift, {"method": "rk4"})


def propagate_nonlinear(psi0, H, t_final: float, n_steps: int, sign: int = 1) -> QuantumTrajectory:
    """RK4 integration of |psi'> = ±i H|psi> ∓ 2i<H>|psi>.

    The flow conserves the norm exactly; ``norm_drift`` reports the largest
    per-step deviation before renormalization.
    """
    _check_sign(sign)
    _check_steps(n_steps)
    psi0 = as_state(psi0)
    H = as_hermitian(H)
    _check_dims(H, psi0)
    dt = t_final / n_steps
    # generator H - 2<H> has spectral radius at most 3 ||H||
    _warn_resolution(dt, 3.0 * np.linalg.norm(H, 2), "propagate_nonlinear")

    def rhs(t, y):
        return nonlinear_velocity(y, H, sign)

    states, drift = _rk4(rhs, psi0, 0.0, dt, n_steps)
    times = np.linspace(0.0, t_final, n_steps + 1)
    return QuantumTrajectory(times, states, drift, {"method": "rk4", "sign": sign})


def projective_residual(psi, psidot, H):
    """Pointwise stationarity residual of the projective time functional.

    Returns ``<psidot|psi>^2 + (fs_speed^2 / dE^2) * <H>^2`` which vanishes
    when the velocity satisfies the inner-product form of the Euler-Lagrange
    equation. Accepts stacks of states.

    Raises
    ------
    DegenerateSpeed
        If the energy uncertainty is at or below ``DEGENERACY_FLOOR``.
    """
    psi = np.asarray(psi, dtype=complex)
    psidot = np.asarray(psidot, dtype=complex)
    H = np.asarray(H, dtype=complex)
    _check_dims(H, psi, psidot)
    dE = uncertainty(psi, H)
    if np.any(dE <= DEGENERACY_FLOOR):
        raise DegenerateSpeed(f"energy uncertainty {np.min(dE):.3e} at or below floor {DEGENERACY_FLOOR}")
    mean, _ = energy_moments(psi, H)
    ov = inner(psidot, psi)
    speed2 = np.real(inner(psidot, psidot)) - np.abs(ov) ** 2
    return ov**2 + speed2 / dE**2 * mean**2


def extended_metric_residual(psi, psidot, H_t):
    """Residual of the time-dependent stationarity condition.

    ``<psidot|psidot> - <psidot|psi>^2 - |<psidot|psi>|^2 - <H(t)^2>`` with
    the instantaneous Hamiltonian. The real part is returned; a non-zero
    imaginary part (beyond 1e-12) means the velocity is not a candidate at all
    and raises NonRealResidual.
    """
    psi = np.asarray(psi, dtype=complex)
    psidot = np.asarray(psidot, dtype=complex)
    H_t = np.asarray(H_t, dtype=complex)
    _check_dims(H_t, psi, psidot)
    _, second = energy_moments(psi, H_t)
    ov = inner(psidot, psi)
    r = inner(psidot, psidot) - ov**2 - np.abs(ov) ** 2 - second
    if np.any(np.abs(np.imag(r)) > 1e-12):
        raise NonRealResidual(f"imaginary part {np.max(np.abs(np.imag(r))):.3e} exceeds 1e-12")
    return np.real(r)


def uncertainty_length_check(traj: QuantumTrajectory, H) -> tuple[float, float]:
    """Compare the FS length of a unitary trajectory with the integral of dE dt.

    Returns ``(fs_length, uncertainty_integral)``: the sum of geodesic segment
    lengths between consecutive states and the trapezoid integral of the
    energy uncertainty on the trajectory's time grid. With hbar = 1 and the
    FS metric ds^2 = <dpsi|dpsi> - |<dpsi|psi>|^2 the two agree.
    """
    H = np.asarray(H, dtype=complex)
    states = traj.states
    fs_length = float(np.sum(fs_segment_length(states[:-1], states[1:])))
    dE = uncertainty(states, H)
    integral = float(np.sum(0.5 * (dE[1:] + dE[:-1]) * np.diff(traj.times)))
    return fs_length, integral


def bloch_vector(states):
    """Bloch vectors (<sx>, <sy>, <sz>) of a stack of qubit states."""
    states = np.asarray(states, dtype=complex)
    if states.shape[-1] != 2:
        raise DimensionMismatch(f"Bloch vectors need qubit states, got dimension {states.shape[-1]}")
    a, b = states[..., 0], states[..., 1]
    c = np.conj(a) * b
    return np.stack([2 * c.real, 2 * c.imag, np.abs(a) ** 2 - np.abs(b) ** 2], axis=-1)


def meridian_tangent(states):
    """Unit horizontal tangent pointing along increasing polar angle.

    For psi = e^{i chi} (cos(theta/2), e^{i phi} sin(theta/2)) this is
    e^{i chi} (-sin(theta/2), e^{i phi} cos(theta/2)), which is orthogonal to
    psi and has FS speed 1/2 per unit theta. Undefined at the poles.
    """
    states = np.asarray(states, dtype=complex)
    if states.shape[-1] != 2:
        raise DimensionMismatch(f"meridians need qubit states, got dimension {states.shape[-1]}")
    a, b = states[..., 0], states[..., 1]
    ra, rb = np.abs(a), np.abs(b)
    if np.any(np.minimum(ra, rb) < DEGENERACY_FLOOR):
        raise DegenerateSpeed("meridian direction is undefined at a pole of the Bloch sphere")
    ua, ub = a / ra, b / rb
    return np.stack([-rb * ua, ra * ub], axis=-1)
