"""Monte-Carlo dynamics of a single atom in the tweezer.

Covers thermal sampling of the initial phase-space distribution, the
two-release pulse sequence used to excite and probe the radial oscillation,
the analytic shear of the scaled phase-space ellipse, and the damped-sine
extraction of the oscillation frequency from a recapture curve.

All randomness is drawn from counter-based Philox streams keyed by
(seed, stream index), so runs are reproducible and independent of how the
work is partitioned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from . import constants
from .errors import NumericalError
from .tweezer import AtomSpecies, TrapBeam, TrapCharacteristics, potential

__all__ = [
    "PhaseSpaceState",
    "PhaseSpaceEnsemble",
    "ThermalEnsemble",
    "PulseSequence",
    "RecaptureCurve",
    "EllipseStats",
    "DampedSineFit",
    "sample_thermal",
    "ellipse_stats",
    "free_flight",
    "evolve_trapped",
    "simulate_release_recapture",
    "recapture_curve",
    "fit_damped_sine",
]


@dataclass
class PhaseSpaceState:
    """Position (m) and velocity (m/s) 3-vectors; x, y radial, z axial."""

    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        if self.position.shape != (3,) or self.velocity.shape != (3,):
            raise ValueError("position and velocity must be 3-vectors")
        if not (np.all(np.isfinite(self.position)) and np.all(np.isfinite(self.velocity))):
            raise ValueError("phase-space components must be finite")


@dataclass
class PhaseSpaceEnsemble:
    """Vectorised collection of phase-space states, shape (n, 3) each."""

    positions: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        self.velocities = np.atleast_2d(np.asarray(self.velocities, dtype=float))
        if self.positions.shape != self.velocities.shape or self.positions.shape[1] != 3:
            raise ValueError("positions and velocities must both have shape (n, 3)")

    def __len__(self) -> int:
        return self.positions.shape[0]

    def __getitem__(self, i: int) -> PhaseSpaceState:
        return PhaseSpaceState(self.positions[i].copy(), self.velocities[i].copy())


@dataclass(frozen=True)
class ThermalEnsemble:
    """Sampling parameters of the initial thermal cloud."""

    temperature: float
    count: int
    seed: int = 0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.count < 1:
            raise ValueError("count must be >= 1")


@dataclass(frozen=True)
class PulseSequence:
    """Timing of the double-release sequence within the probe window."""

    first_off: float
    gap: float
    second_off: float
    probe_window: float = 50e-3

    def __post_init__(self):
        if min(self.first_off, self.gap, self.second_off, self.probe_window) < 0:
            raise ValueError("all durations must be >= 0")
        if self.first_off + self.gap + self.second_off > self.probe_window:
            raise ValueError("sequence does not fit in the probe window")


@dataclass
class RecaptureCurve:
    """Survival probability versus trap-on gap, with binomial bookkeeping."""

    gaps: np.ndarray
    survival: np.ndarray
    trials_per_point: int
    survivor_counts: np.ndarray

    def __post_init__(self):
        self.gaps = np.asarray(self.gaps, dtype=float)
        self.survival = np.asarray(self.survival, dtype=float)
        self.survivor_counts = np.asarray(self.survivor_counts, dtype=int)
        if not np.allclose(self.survival * self.trials_per_point, self.survivor_counts):
            raise ValueError("survival must equal survivor_counts / trials_per_point")


@dataclass(frozen=True)
class EllipseStats:
    """Orientation (degrees from the position axis) and long/short axis ratio."""

    angle: float
    axis_ratio: float


@dataclass
class DampedSineFit:
    """Parameters of C + A*exp(-t/tau)*sin(omega*t + phi) fitted to a curve.

    The survival oscillates at twice the atomic frequency, so the trap
    frequency is atom_frequency = frequency / 2.
    """

    frequency: float
    damping_time: float
    amplitude: float
    phase: float
    offset: float
    covariance_diagonal: dict

    @property
    def atom_frequency(self) -> float:
        return 0.5 * self.frequency

    def to_json_dict(self) -> dict:
        two_pi = 2.0 * np.pi
        return {
            "offset": self.offset,
            "amplitude": self.amplitude,
            "damping_time_us": self.damping_time * 1e6,
            "fit_frequency_kHz": self.frequency / two_pi / 1e3,
            "phase_rad": self.phase,
            "atom_frequency_kHz": self.atom_frequency / two_pi / 1e3,
            "covariance_diagonal": self.covariance_diagonal,
        }


def _stream(seed: int, index: int = 0) -> np.random.Generator:
    """Philox generator keyed by (seed, stream index)."""
    key = (int(index) << 64) | (int(seed) & 0xFFFFFFFFFFFFFFFF)
    return np.random.Generator(np.random.Philox(key=key))


def sample_thermal(
    ensemble: ThermalEnsemble,
    trap: TrapCharacteristics,
    species: AtomSpecies,
) -> PhaseSpaceEnsemble:
    """Draw a thermal cloud from the harmonic-trap Boltzmann distribution.

    Position spreads follow sqrt(k_B*T/(m*omega^2)) per axis and velocities
    sqrt(k_B*T/m); requires k_B*T < U0 so the cloud is bound.
    """
    kt = constants.k_B * ensemble.temperature
    if kt >= trap.depth:
        raise ValueError("k_B*T must be below the trap depth")
    sigma_pos = np.array(
        [
            np.sqrt(kt / species.mass) / trap.radial_frequency,
            np.sqrt(kt / species.mass) / trap.radial_frequency,
            np.sqrt(kt / species.mass) / trap.longitudinal_frequency,
        ]
    )
    sigma_v = np.sqrt(kt / species.mass)
    rng = _stream(ensemble.seed)
    positions = rng.standard_normal((ensemble.count, 3)) * sigma_pos
    velocities = rng.standard_normal((ensemble.count, 3)) * sigma_v
    return PhaseSpaceEnsemble(positions, velocities)


def ellipse_stats(radial_frequency: float, free_flight_time: float) -> EllipseStats:
    """Shape of the scaled phase-space distribution after a free flight.

    In coordinates (x, v_x/omega_r) a unit isotropic cloud shears to
    covariance [[1+s^2, s], [s, 1]] with s = omega_r * t; the long axis
    makes angle theta = arctan(2/s)/2 with the position axis and the axis
    ratio is sqrt(lambda_+/lambda_-) of that matrix.
    """
    if free_flight_time < 0:
        raise ValueError("free_flight_time must be >= 0")
    s = radial_frequency * free_flight_time
    if s == 0:
        return EllipseStats(angle=45.0, axis_ratio=1.0)
    theta = 0.5 * np.arctan(2.0 / s)
    trace = 2.0 + s**2
    lam_plus = 0.5 * (trace + np.sqrt(trace**2 - 4.0))
    lam_minus = 0.5 * (trace - np.sqrt(trace**2 - 4.0))
    return EllipseStats(angle=np.degrees(theta), axis_ratio=float(np.sqrt(lam_plus / lam_minus)))


def free_flight(state, duration: float):
    """Ballistic drift: position += velocity * duration, velocity unchanged.

    Gravity is neglected; over the microsecond releases used here it moves
    the atom by well under a nanometre.
    """
    if duration < 0:
        raise ValueError("duration must be >= 0")
    if isinstance(state, PhaseSpaceState):
        return PhaseSpaceState(state.position + state.velocity * duration, state.velocity.copy())
    return PhaseSpaceEnsemble(
        state.positions + state.velocities * duration, state.velocities.copy()
    )


def _forces(positions: np.ndarray, depth: float, beam: TrapBeam) -> np.ndarray:
    """Gradient force of the Gaussian-beam potential, shape (n, 3)."""
    x, y, z = positions[:, 0], positions[:, 1], positions[:, 2]
    z_r = beam.rayleigh_range
    q = 1.0 + (z / z_r) ** 2
    r2 = x**2 + y**2
    w0sq = beam.waist**2
    envelope = np.exp(-2.0 * r2 / (w0sq * q))
    radial = -4.0 * depth * envelope / (w0sq * q**2)
    f = np.empty_like(positions)
    f[:, 0] = radial * x
    f[:, 1] = radial * y
    f[:, 2] = -depth * envelope * (2.0 * z / z_r**2) * (1.0 / q**2 - 2.0 * r2 / (w0sq * q**3))
    return f


def evolve_trapped(
    state,
    trap: TrapCharacteristics,
    beam: TrapBeam,
    species: AtomSpecies,
    duration: float,
    step: float,
):
    """Velocity-Verlet trajectory in the full Gaussian-beam potential.

    The symplectic update keeps the energy drift bounded; the step must
    resolve the radial period with at least 50 steps.
    """
    if duration < 0:
        raise ValueError("duration must be >= 0")
    period = 2.0 * np.pi / trap.radial_frequency
    if step > period / 50.0:
        raise ValueError("step too large: need >= 50 steps per radial period")
    single = isinstance(state, PhaseSpaceState)
    if single:
        pos = state.position[None, :].copy()
        vel = state.velocity[None, :].copy()
    else:
        pos = state.positions.copy()
        vel = state.velocities.copy()
    if duration > 0:
        n_steps = max(1, int(np.ceil(duration / step)))
        dt = duration / n_steps
        inv_m = 1.0 / species.mass
        acc = _forces(pos, trap.depth, beam) * inv_m
        for _ in range(n_steps):
            vel += 0.5 * dt * acc
            pos += dt * vel
            acc = _forces(pos, trap.depth, beam) * inv_m
            vel += 0.5 * dt * acc
    if single:
        return PhaseSpaceState(pos[0], vel[0])
    return PhaseSpaceEnsemble(pos, vel)


def _total_energy(ensemble: PhaseSpaceEnsemble, depth, beam, species) -> np.ndarray:
    kinetic = 0.5 * species.mass * np.sum(ensemble.velocities**2, axis=1)
    r = np.hypot(ensemble.positions[:, 0], ensemble.positions[:, 1])
    return kinetic + potential((r, ensemble.positions[:, 2]), depth, beam)


def _survivors(
    trap, beam, species, temperature, seq, trials, seed, steps_per_period
) -> int:
    if steps_per_period < 50:
        raise ValueError("steps_per_period must be >= 50")
    cloud = sample_thermal(ThermalEnsemble(temperature, trials, seed), trap, species)
    cloud = free_flight(cloud, seq.first_off)
    step = 2.0 * np.pi / trap.radial_frequency / steps_per_period
    cloud = evolve_trapped(cloud, trap, beam, species, seq.gap, step)
    cloud = free_flight(cloud, seq.second_off)
    energy = _total_energy(cloud, trap.depth, beam, species)
    return int(np.count_nonzero(energy < 0.0))


def simulate_release_recapture(
    trap: TrapCharacteristics,
    beam: TrapBeam,
    species: AtomSpecies,
    temperature: float,
    seq: PulseSequence,
    trials: int,
    seed: int = 0,
    steps_per_period: int = 64,
) -> float:
    """Survivor fraction of the release / trapped-evolution / release sequence.

    An atom survives when its total energy in the restored potential is
    negative at the end of the second release.  Deterministic per seed.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    count = _survivors(trap, beam, species, temperature, seq, trials, seed, steps_per_period)
    return count / trials


def recapture_curve(
    trap: TrapCharacteristics,
    beam: TrapBeam,
    species: AtomSpecies,
    temperature: float,
    first_off: float,
    second_off: float,
    gaps,
    trials: int,
    seed: int = 0,
    steps_per_period: int = 64,
) -> RecaptureCurve:
    """Map the release-recapture sequence over an ascending array of gaps.

    Each point uses an independent Philox substream keyed by (seed, index),
    mirroring the experiment's fresh atoms per delay.
    """
    gaps = np.asarray(gaps, dtype=float)
    if gaps.size == 0:
        raise ValueError("gaps must be non-empty")
    if np.any(np.diff(gaps) < 0):
        raise ValueError("gaps must be ascending")
    counts = np.empty(gaps.size, dtype=int)
    for i, gap in enumerate(gaps):
        seq = PulseSequence(first_off=first_off, gap=float(gap), second_off=second_off)
        counts[i] = _survivors(
            trap, beam, species, temperature, seq, trials, (int(seed) << 16) + i, steps_per_period
        )
    return RecaptureCurve(
        gaps=gaps,
        survival=counts / trials,
        trials_per_point=trials,
        survivor_counts=counts,
    )


def _damped_sine(t, offset, amplitude, tau, omega, phase):
    return offset + amplitude * np.exp(-t / tau) * np.sin(omega * t + phase)


def fit_damped_sine(curve: RecaptureCurve) -> DampedSineFit:
    """Least-squares damped sine through a recapture curve.

    The initial frequency guess comes from the discrete Fourier peak of the
    detrended curve; the curve must hold at least 10 points spanning at
    least 1.5 oscillation periods of that guess.
    """
    t = curve.gaps
    y = curve.survival
    if t.size < 10:
        raise ValueError("need at least 10 points to fit")
    detrended = y - y.mean()
    if np.ptp(y) == 0:
        raise NumericalError("flat curve: nothing to fit")
    span = t[-1] - t[0]
    dt = span / (t.size - 1)
    spectrum = np.abs(np.fft.rfft(detrended))
    k = 1 + int(np.argmax(spectrum[1:]))
    f0 = k / (t.size * dt)
    if span * f0 < 1.5:
        raise ValueError("curve must span at least 1.5 oscillation periods")
    omega0 = 2.0 * np.pi * f0
    phase0 = np.arctan2(np.sum(detrended * np.cos(omega0 * t)), np.sum(detrended * np.sin(omega0 * t)))
    p0 = [y.mean(), np.sqrt(2.0) * detrended.std(), span, omega0, phase0]
    bounds = (
        [-1.0, 0.0, dt / 10.0, omega0 / 3.0, -2.0 * np.pi],
        [2.0, 2.0, 1e4 * span, 3.0 * omega0, 2.0 * np.pi],
    )
    try:
        params, pcov = curve_fit(
            _damped_sine, t, y, p0=p0, bounds=bounds, maxfev=20000
        )
    except RuntimeError as exc:
        raise NumericalError(f"damped-sine fit did not converge: {exc}") from exc
    offset, amplitude, tau, omega, phase = params
    names = ("offset", "amplitude", "damping_time", "frequency", "phase")
    diag = {name: float(v) for name, v in zip(names, np.diag(pcov))}
    return DampedSineFit(
        frequency=float(omega),
        damping_time=float(tau),
        amplitude=float(amplitude),
        phase=float(phase),
        offset=float(offset),
        covariance_diagonal=diag,
    )
