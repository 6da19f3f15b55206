"""Wave excitation, synthetic tower response and peak-frequency extraction."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal as sps


class SignalError(ValueError):
    pass


@dataclass(frozen=True)
class JonswapConfig:
    """JONSWAP parameters. ``omega_p`` and ``band`` are in Hz."""

    alpha: float = 0.0081
    omega_p: float = 0.7
    gamma_peak: float = 2.0
    sigma_a: float = 0.07
    sigma_b: float = 0.09
    g: float = 9.81
    band: tuple[float, float] = (0.2, 3.0)

    def __post_init__(self):
        vals = (self.alpha, self.omega_p, self.gamma_peak, self.sigma_a, self.sigma_b, self.g)
        if not all(v > 0 for v in vals):
            raise SignalError("JONSWAP parameters must be positive")
        lo, hi = self.band
        if not 0 < lo < self.omega_p < hi:
            raise SignalError("band must satisfy 0 < f_lo < omega_p < f_hi")


def jonswap_density(cfg: JonswapConfig, omega):
    """Spectral density at angular frequency ``omega`` (rad/s); zero outside the band."""
    w = np.asarray(omega, dtype=float)
    if np.any(w <= 0):
        raise SignalError("omega must be positive")
    wp = 2.0 * math.pi * cfg.omega_p
    sigma = np.where(w <= wp, cfg.sigma_a, cfg.sigma_b)
    r = np.exp(-((w - wp) ** 2) / (2.0 * sigma**2 * wp**2))
    s = cfg.alpha * cfg.g**2 / w**5 * np.exp(-1.25 * (wp / w) ** 4) * cfg.gamma_peak**r
    lo, hi = (2.0 * math.pi * f for f in cfg.band)
    s = np.where((w >= lo) & (w <= hi), s, 0.0)
    return float(s) if np.ndim(s) == 0 else s


@dataclass
class TimeSeries:
    sample_rate: float
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if not self.sample_rate > 0:
            raise SignalError("sample_rate must be positive")
        if self.samples.ndim != 1 or not np.all(np.isfinite(self.samples)):
            raise SignalError("samples must be a finite 1-D array")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def save(self, path: str | Path, fmt: str = "npy") -> None:
        """``fmt="npy"``: binary with the rate in the first slot; ``"csv"``: header + column."""
        path = Path(path)
        if fmt == "npy":
            np.save(path, np.concatenate([[self.sample_rate], self.samples]))
        elif fmt == "csv":
            with open(path, "w") as fh:
                fh.write(f"# sample_rate={self.sample_rate!r}\n")
                fh.write("displacement\n")
                np.savetxt(fh, self.samples, fmt="%.17g")
        else:
            raise SignalError(f"unknown format {fmt!r}")

    @classmethod
    def load(cls, path: str | Path) -> "TimeSeries":
        path = Path(path)
        if path.suffix == ".npy":
            arr = np.load(path)
            return cls(float(arr[0]), arr[1:])
        with open(path) as fh:
            first = fh.readline()
            if not first.startswith("# sample_rate="):
                raise SignalError(f"{path}: missing sample_rate header")
            rate = float(first.split("=", 1)[1])
            fh.readline()
            return cls(rate, np.loadtxt(fh, ndmin=1))


def synthesize_response(cfg: JonswapConfig, modal_freq: float, damping_ratio: float = 0.01,
                        duration: float = 1200.0, sample_rate: float = 2048.0,
                        seed: int = 0) -> TimeSeries:
    """Displacement of a single-DOF resonator driven by a random JONSWAP sea.

    The forcing is a sum of cosines on the FFT grid of the record (spacing
    ``1 / duration``) with amplitudes ``sqrt(2 S(w) dw)`` and uniform random
    phases; each component is scaled by the resonator's receptance,
    normalised to unit static gain.
    """
    if modal_freq <= 0 or modal_freq >= sample_rate / 2:
        raise SignalError("modal frequency must lie in (0, Nyquist)")
    if not 0 < damping_ratio < 1:
        raise SignalError("damping ratio must lie in (0, 1)")
    n = int(round(duration * sample_rate))
    if n < 2:
        raise SignalError("duration too short")
    rng = np.random.default_rng(seed)
    f = np.fft.rfftfreq(n, 1.0 / sample_rate)
    w = 2.0 * math.pi * f
    dw = 2.0 * math.pi * sample_rate / n
    dens = np.zeros_like(w)
    dens[1:] = jonswap_density(cfg, w[1:])
    amp = np.sqrt(2.0 * dens * dw)
    phase = rng.uniform(0.0, 2.0 * math.pi, size=len(f))
    r = f / modal_freq
    receptance = 1.0 / (1.0 - r**2 + 2j * damping_ratio * r)
    # a cosine of amplitude a maps to rfft coefficient a * n / 2
    spectrum = amp * np.exp(1j * phase) * receptance * (n / 2.0)
    spectrum[0] = 0.0
    x = np.fft.irfft(spectrum, n)
    return TimeSeries(sample_rate, x)


@dataclass
class PeakEstimate:
    frequency: float
    prominence: float  # peak PSD over the median PSD in the search band
    freqs: np.ndarray = field(repr=False)
    psd: np.ndarray = field(repr=False)
    n_blocks: int = 0

    def is_reliable(self, threshold: float = 20.0) -> bool:
        return self.prominence >= threshold


def bandpass(ts: TimeSeries, band: tuple[float, float] = (0.1, 20.0), order: int = 4) -> np.ndarray:
    """Zero-phase Butterworth band-pass (forward-backward second-order sections)."""
    sos = sps.butter(order, band, btype="bandpass", fs=ts.sample_rate, output="sos")
    return sps.sosfiltfilt(sos, ts.samples)


def block_psd(block: np.ndarray, sample_rate: float, n_fft: int,
              window: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """One-sided, window-power-normalised PSD of one block, zero-padded to ``n_fft``.

    The normalisation makes ``sum(psd) * df`` equal ``sum((w x)^2) / sum(w^2)``.
    """
    if window is None:
        window = np.hanning(len(block))
    spec = np.fft.rfft(block * window, n_fft)
    psd = np.abs(spec) ** 2 / (sample_rate * np.sum(window**2))
    if n_fft % 2 == 0:
        psd[1:-1] *= 2.0
    else:
        psd[1:] *= 2.0
    return np.fft.rfftfreq(n_fft, 1.0 / sample_rate), psd


def averaged_psd(x: np.ndarray, sample_rate: float, block_seconds: float = 60.0,
                 overlap: float = 0.5, padded_seconds: float = 500.0):
    """Mean PSD over Hanning-windowed, overlapping, zero-padded blocks."""
    n_block = int(round(block_seconds * sample_rate))
    step = int(round(n_block * (1.0 - overlap)))
    n_fft = int(round(padded_seconds * sample_rate))
    if n_fft < n_block:
        raise SignalError("padded length shorter than block length")
    starts = range(0, len(x) - n_block + 1, step)
    if len(starts) < 2:
        raise SignalError(f"signal too short: need at least two {block_seconds:g} s blocks")
    window = np.hanning(n_block)
    total = None
    for i in starts:
        f, p = block_psd(x[i:i + n_block], sample_rate, n_fft, window)
        total = p if total is None else total + p
    return f, total / len(starts), len(starts)


def estimate_peak_frequency(ts: TimeSeries, search_band: tuple[float, float] = (0.2, 3.0),
                            filter_band: tuple[float, float] = (0.1, 20.0),
                            filter_order: int = 4, block_seconds: float = 60.0,
                            overlap: float = 0.5, padded_seconds: float = 500.0) -> PeakEstimate:
    """Peak of the block-averaged PSD after band-pass filtering.

    With the defaults (60 s Hanning blocks, 50 % overlap, padding to 500 s) the
    frequency grid spacing is 0.002 Hz.
    """
    if np.all(ts.samples == 0):
        raise SignalError("signal is identically zero")
    x = bandpass(ts, filter_band, filter_order)
    f, psd, n_blocks = averaged_psd(x, ts.sample_rate, block_seconds, overlap, padded_seconds)
    sel = (f >= search_band[0]) & (f <= search_band[1])
    fb, pb = f[sel], psd[sel]
    i = int(np.argmax(pb))
    median = float(np.median(pb))
    prominence = float(pb[i] / median) if median > 0 else math.inf
    return PeakEstimate(float(fb[i]), prominence, f, psd, n_blocks)
