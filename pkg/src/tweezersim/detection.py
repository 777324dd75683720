"""Photon-counting statistics, telegraph loading dynamics and synthetic imaging.

The fluorescence of zero or one trapped atom is modelled as two Poisson
count distributions separated by the single-atom step rate; occupancy
follows a continuous-time Markov chain in which an entering atom either
fills the empty trap or, under collisional blockade, ejects itself together
with the resident atom.  Imaging renders pixel-integrated Gaussian spots
with Poisson noise and fits them back.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter
from scipy.optimize import curve_fit
from scipy.special import erf
from scipy.stats import poisson

from .errors import NumericalError

__all__ = [
    "PhotonRates",
    "TelegraphConfig",
    "TelegraphTrace",
    "BinnedCounts",
    "CountHistogram",
    "CcdModel",
    "SpotFit",
    "ThresholdResult",
    "solid_angle_fraction",
    "overall_efficiency",
    "optimal_threshold",
    "simulate_telegraph",
    "bin_counts",
    "trace_to_histogram",
    "lifetime_estimate",
    "render_ccd",
    "fit_two_gaussians",
]


@dataclass(frozen=True)
class PhotonRates:
    """Background and single-atom fluorescence rates (counts/s) and bin time (s)."""

    background_rate: float
    atom_rate: float
    bin_time: float

    def __post_init__(self):
        if min(self.background_rate, self.atom_rate, self.bin_time) < 0:
            raise ValueError("rates and bin_time must be >= 0")


@dataclass(frozen=True)
class TelegraphConfig:
    """Loading/loss rates of the occupancy process.

    With blockade=True an atom entering an occupied trap ejects both atoms,
    capping the occupancy at one; otherwise occupancy grows freely and each
    atom is lost independently at one_body_loss_rate.
    """

    loading_rate: float
    one_body_loss_rate: float
    blockade: bool = True
    duration: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if self.loading_rate < 0 or self.one_body_loss_rate < 0:
            raise ValueError("rates must be >= 0")
        if self.duration <= 0:
            raise ValueError("duration must be > 0")


@dataclass
class TelegraphTrace:
    """Piecewise-constant occupancy: occupancies[i] holds on [times[i], times[i+1])."""

    times: np.ndarray
    occupancies: np.ndarray
    duration: float

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.occupancies = np.asarray(self.occupancies, dtype=int)
        if self.times.shape != self.occupancies.shape:
            raise ValueError("times and occupancies must have equal length")

    def __iter__(self):
        return iter(zip(self.times, self.occupancies))


@dataclass
class BinnedCounts:
    """Per-time-bin photon counts with the ground-truth occupied fraction."""

    counts: np.ndarray
    occupied_fraction: np.ndarray
    bin_time: float


@dataclass
class CountHistogram:
    """Histogram of per-bin counts; occupancy_labels holds the mean true
    occupied fraction of the time bins contributing to each histogram bin."""

    bin_edges: np.ndarray
    frequencies: np.ndarray
    occupancy_labels: np.ndarray | None = None

    def __post_init__(self):
        if np.any(np.asarray(self.frequencies) < 0):
            raise ValueError("frequencies must be >= 0")


@dataclass(frozen=True)
class CcdModel:
    """Imaging chain: magnification, pixel pitch (m), exposure (s), the
    object-referred 1/e^2 spot radius (m) and the photon budget per atom."""

    magnification: float = 25.0
    pixel_pitch: float = 13e-6
    exposure: float = 0.1
    spot_waist: float = 0.9e-6
    photon_budget: float = 2700.0
    n_pixels: int = 24
    background_per_pixel: float = 0.0
    read_noise: float = 0.0

    def __post_init__(self):
        if self.magnification <= 0 or self.pixel_pitch <= 0:
            raise ValueError("magnification and pixel_pitch must be > 0")
        if self.n_pixels < 4:
            raise ValueError("n_pixels must be >= 4")
        if self.photon_budget < 0 or self.background_per_pixel < 0 or self.read_noise < 0:
            raise ValueError("photon budget, background and read noise must be >= 0")

    @property
    def object_pixel(self) -> float:
        """Pixel pitch referred to the object plane."""
        return self.pixel_pitch / self.magnification


@dataclass
class SpotFit:
    """Gaussian-spot fit in object-plane units."""

    centers: np.ndarray
    waists: np.ndarray
    amplitudes: np.ndarray
    background_level: float
    residual_rms: float
    degenerate: bool = False


@dataclass(frozen=True)
class ThresholdResult:
    threshold: int
    false_positive: float
    false_negative: float

    @property
    def confidence(self) -> float:
        return 1.0 - max(self.false_positive, self.false_negative)


def solid_angle_fraction(numerical_aperture: float) -> float:
    """Spherical-cap solid-angle fraction (1 - sqrt(1 - NA^2)) / 2."""
    if not 0 < numerical_aperture <= 1:
        raise ValueError("numerical_aperture must be in (0, 1]")
    return 0.5 * (1.0 - np.sqrt(1.0 - numerical_aperture**2))


def overall_efficiency(terms) -> tuple[float, dict]:
    """Product of labelled efficiency factors, keeping the breakdown.

    Each factor must lie in (0, 1]; an empty list is the empty product 1.
    """
    breakdown = {}
    total = 1.0
    for label, factor in terms:
        if not 0 < factor <= 1:
            raise ValueError(f"factor {label!r} must be in (0, 1]")
        breakdown[label] = factor
        total *= factor
    return total, breakdown


def optimal_threshold(lam0: float, lam1: float) -> ThresholdResult:
    """Poisson likelihood-ratio threshold between empty and occupied bins.

    Counts >= k* = ceil((lam1 - lam0)/ln(lam1/lam0)) are declared "atom";
    the tail probabilities are evaluated through the regularised incomplete
    gamma functions, which stay accurate far below double-precision scale.
    """
    if not lam1 > lam0 > 0:
        raise ValueError("need lam1 > lam0 > 0")
    k_star = int(np.ceil((lam1 - lam0) / np.log(lam1 / lam0)))
    false_positive = float(poisson.sf(k_star - 1, lam0))
    false_negative = float(poisson.cdf(k_star - 1, lam1))
    return ThresholdResult(k_star, false_positive, false_negative)


def simulate_telegraph(cfg: TelegraphConfig) -> TelegraphTrace:
    """Continuous-time Markov occupancy trace of the trap.

    Empty -> occupied at the loading rate; with blockade an entering atom
    ejects the pair (rate R) on top of one-body loss (rate gamma), so the
    occupancy never exceeds one.  Deterministic per seed.
    """
    rng = np.random.Generator(np.random.Philox(key=int(cfg.seed) & (2**128 - 1)))
    t = 0.0
    n = 0
    times = [0.0]
    occupancies = [0]
    while True:
        if cfg.blockade:
            rate = cfg.loading_rate if n == 0 else cfg.loading_rate + cfg.one_body_loss_rate
        else:
            rate = cfg.loading_rate + n * cfg.one_body_loss_rate
        if rate == 0:
            break
        t += rng.exponential(1.0 / rate)
        if t >= cfg.duration:
            break
        if cfg.blockade:
            n = 1 - n
        else:
            if rng.random() < cfg.loading_rate / rate:
                n += 1
            else:
                n -= 1
        times.append(t)
        occupancies.append(n)
    return TelegraphTrace(np.array(times), np.array(occupancies), cfg.duration)


def bin_counts(trace: TelegraphTrace, rates: PhotonRates, n_bins: int, seed: int = 0) -> BinnedCounts:
    """Poisson photon counts per time bin, integrating partial occupancy.

    A transition inside a bin contributes the atom rate for exactly the
    occupied fraction of that bin, producing the intermediate counts seen
    between the histogram modes.
    """
    if rates.bin_time <= 0:
        raise ValueError("bin_time must be > 0")
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    tau = rates.bin_time
    occupied = np.zeros(n_bins)
    edges = np.append(trace.times, trace.duration)
    for start, stop, occ in zip(edges[:-1], edges[1:], trace.occupancies):
        if occ == 0 or start >= n_bins * tau:
            continue
        stop = min(stop, n_bins * tau)
        first = int(start / tau)
        last = int(np.ceil(stop / tau))
        for b in range(first, min(last, n_bins)):
            overlap = min(stop, (b + 1) * tau) - max(start, b * tau)
            if overlap > 0:
                occupied[b] += occ * overlap
    fraction = occupied / tau
    mean = rates.background_rate * tau + rates.atom_rate * occupied
    rng = np.random.Generator(np.random.Philox(key=int(seed) & (2**128 - 1)))
    counts = rng.poisson(mean)
    return BinnedCounts(counts=counts, occupied_fraction=fraction, bin_time=tau)


def trace_to_histogram(
    trace: TelegraphTrace,
    rates: PhotonRates,
    n_bins: int,
    seed: int = 0,
) -> CountHistogram:
    """Histogram of binned counts with per-bin mean true occupancy labels."""
    binned = bin_counts(trace, rates, n_bins, seed)
    hi = int(binned.counts.max()) + 2
    edges = np.arange(hi + 1) - 0.5
    freq, _ = np.histogram(binned.counts, bins=edges)
    labels = np.zeros(hi)
    occ_sum, _ = np.histogram(binned.counts, bins=edges, weights=binned.occupied_fraction)
    nonzero = freq > 0
    labels[nonzero] = occ_sum[nonzero] / freq[nonzero]
    return CountHistogram(bin_edges=edges, frequencies=freq, occupancy_labels=labels)


def lifetime_estimate(survival) -> tuple[float, float]:
    """Exponential 1/e decay time fitted to (hold time, survival probability) pairs.

    Returns (tau, tau standard error).  Data that do not decay are rejected.
    """
    pts = np.asarray(survival, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise ValueError("need >= 3 (time, probability) points")
    t, p = pts[:, 0], pts[:, 1]
    if np.any(p <= 0) or np.any(p > 1):
        raise ValueError("probabilities must be in (0, 1]")
    slope = np.polyfit(t, np.log(p), 1)[0]
    if slope >= 0:
        raise NumericalError("survival does not decay with hold time")
    try:
        popt, pcov = curve_fit(lambda tt, tau: np.exp(-tt / tau), t, p, p0=[-1.0 / slope])
    except RuntimeError as exc:
        raise NumericalError(f"lifetime fit did not converge: {exc}") from exc
    return float(popt[0]), float(np.sqrt(pcov[0, 0]))


def _pixel_gaussian(centers_px, sigma_px, n_pixels):
    """Pixel-integrated unit-flux Gaussians: shape (n_spots, n, n)."""
    edges = np.arange(n_pixels + 1) - n_pixels / 2.0
    cx = np.asarray(centers_px)[:, 0][:, None]
    cy = np.asarray(centers_px)[:, 1][:, None]
    root2 = np.sqrt(2.0)
    fx = 0.5 * (erf((edges[1:][None, :] - cx) / (root2 * sigma_px)) - erf((edges[:-1][None, :] - cx) / (root2 * sigma_px)))
    fy = 0.5 * (erf((edges[1:][None, :] - cy) / (root2 * sigma_px)) - erf((edges[:-1][None, :] - cy) / (root2 * sigma_px)))
    return fx[:, :, None] * fy[:, None, :]


def render_ccd(atom_positions, psf, ccd: CcdModel, seed: int = 0) -> np.ndarray:
    """Synthetic CCD exposure of point emitters, pixel counts shape (n, n).

    Each atom contributes photon_budget photons distributed over pixels as
    an integrated Gaussian of 1/e^2 radius spot_waist (object-referred;
    sigma = waist/2), plus a uniform Poisson background per pixel.  psf may
    be a waist in meters or an intensity map whose profile sets the waist.
    """
    if ccd.photon_budget < 0:
        raise ValueError("photon_budget must be >= 0")
    positions = np.atleast_2d(np.asarray(atom_positions, dtype=float))
    if positions.shape[1] != 2:
        raise ValueError("atom_positions must be (n, 2) object-plane coordinates")
    n = ccd.n_pixels
    half_extent = 0.5 * n * ccd.object_pixel
    if np.any(np.abs(positions) > half_extent):
        raise ValueError("atom outside the sensor")
    edges = (np.arange(n + 1) - n / 2.0) * ccd.object_pixel
    if isinstance(psf, (int, float)):
        sigma_px = (float(psf) / 2.0) / ccd.object_pixel
        centers_px = positions / ccd.object_pixel
        signal = ccd.photon_budget * _pixel_gaussian(centers_px, sigma_px, n).sum(axis=0)
    else:
        coords = psf.axis_coordinates()
        gx, gy = np.meshgrid(coords, coords, indexing="ij")
        weights = psf.samples.ravel()
        signal = np.zeros((n, n))
        for x0, y0 in positions:
            binned, _, _ = np.histogram2d(
                (gx + x0).ravel(), (gy + y0).ravel(), bins=(edges, edges), weights=weights
            )
            signal += ccd.photon_budget * binned / weights.sum()
    mean = signal + ccd.background_per_pixel
    rng = np.random.Generator(np.random.Philox(key=int(seed) & (2**128 - 1)))
    image = rng.poisson(mean).astype(float)
    if ccd.read_noise > 0:
        image = np.clip(np.rint(image + rng.normal(0.0, ccd.read_noise, image.shape)), 0, None)
    return image.astype(int)


def _local_maxima(image, floor, min_separation=2.0):
    smoothed = uniform_filter(image, size=3)
    found = []
    for i in range(1, image.shape[0] - 1):
        for j in range(1, image.shape[1] - 1):
            patch = smoothed[i - 1 : i + 2, j - 1 : j + 2]
            if smoothed[i, j] > floor and smoothed[i, j] == patch.max() and patch.max() > patch.min():
                found.append((smoothed[i, j], i, j))
    found.sort(reverse=True)
    kept = []
    for value, i, j in found:
        if all(np.hypot(i - ki, j - kj) >= min_separation for _, ki, kj in kept):
            kept.append((value, i, j))
    return kept


def fit_two_gaussians(image: np.ndarray, ccd: CcdModel, force_single: bool = False) -> SpotFit:
    """Fit one or two pixel-integrated 2D Gaussians plus a flat background.

    Centers and 1/e^2 waists are reported in object-plane units.  The fit is
    flagged degenerate when the spot separation falls below one fitted waist.
    """
    image = np.asarray(image, dtype=float)
    n = image.shape[0]
    if image.shape != (n, n):
        raise ValueError("image must be square")
    background0 = float(np.median(image))
    floor = background0 + 3.0 * np.sqrt(max(background0, 1.0))
    maxima = _local_maxima(image, floor)
    n_spots = 1 if force_single else 2
    if not force_single and len(maxima) < 2:
        raise ValueError("need >= 2 local maxima above background (or force single-spot mode)")
    if force_single and not maxima:
        maxima = [(image.max(), *np.unravel_index(np.argmax(image), image.shape))]
    guesses = maxima[:n_spots]

    smoothing = max(ccd.spot_waist / 2.0 / ccd.object_pixel, 0.8)
    yy, xx = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    centered = lambda idx: idx - n / 2.0 + 0.5  # pixel centre in edge units

    def model(_, *params):
        bg = params[-1]
        out = np.full((n, n), bg)
        for s in range(n_spots):
            amp, cx, cy, sig = params[4 * s : 4 * s + 4]
            out += amp * _pixel_gaussian([[cx, cy]], sig, n)[0]
        return out.ravel()

    p0 = []
    lower, upper = [], []
    for value, i, j in guesses:
        p0 += [max(value - background0, 1.0) * 2.0 * np.pi * smoothing**2, centered(i), centered(j), smoothing]
        lower += [0.0, -n / 2.0, -n / 2.0, 0.2]
        upper += [np.inf, n / 2.0, n / 2.0, n / 2.0]
    p0.append(background0)
    lower.append(0.0)
    upper.append(np.inf)
    try:
        popt, _ = curve_fit(
            model, xx, image.ravel(), p0=p0, bounds=(lower, upper), maxfev=20000
        )
    except RuntimeError as exc:
        raise NumericalError(f"spot fit did not converge: {exc}") from exc
    centers = np.array([[popt[4 * s + 1], popt[4 * s + 2]] for s in range(n_spots)])
    sigmas = np.array([popt[4 * s + 3] for s in range(n_spots)])
    amplitudes = np.array([popt[4 * s] for s in range(n_spots)])
    background = float(popt[-1])
    residual = image - model(xx, *popt).reshape(n, n)
    waists = 2.0 * sigmas * ccd.object_pixel
    degenerate = False
    if n_spots == 2:
        separation = np.linalg.norm(centers[0] - centers[1]) * ccd.object_pixel
        degenerate = separation < waists.mean()
    return SpotFit(
        centers=centers * ccd.object_pixel,
        waists=waists,
        amplitudes=amplitudes,
        background_level=background,
        residual_rms=float(np.sqrt(np.mean(residual**2))),
        degenerate=degenerate,
    )
