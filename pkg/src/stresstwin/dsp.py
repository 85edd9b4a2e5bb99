"""Numeric signal kernels: zero-phase bandpass, z-scoring, Welch PSD, band power.

The biquad cascade application is the per-sample hot loop; scipy only
supplies the Butterworth section coefficients.
"""

from dataclasses import dataclass

import numpy as np
from scipy import signal as _scipy_signal

from ._accel import maybe_njit, select
from .errors import EmptyBand, InvalidBand, SegmentTooLong, SignalTooShort, ZeroVariance

DEFAULT_BAND = (0.5, 45.0)
DEFAULT_ORDER = 4  # Butterworth design order; bandpass realizes 4 biquads


@dataclass(frozen=True)
class PsdEstimate:
    freqs: np.ndarray
    psd: np.ndarray
    df: float


# --- biquad cascade (hot kernel pair) ---------------------------------------


@maybe_njit
def _sosfilt_loop(sos, x):
    # sample-major so each input value runs the whole cascade in registers
    n_sections = sos.shape[0]
    n = x.shape[0]
    y = np.empty(n)
    z1 = np.zeros(n_sections)
    z2 = np.zeros(n_sections)
    for i in range(n):
        v = x[i]
        for s in range(n_sections):
            yi = sos[s, 0] * v + z1[s]
            z1[s] = sos[s, 1] * v - sos[s, 4] * yi + z2[s]
            z2[s] = sos[s, 2] * v - sos[s, 5] * yi
            v = yi
        y[i] = v
    return y


def _sosfilt_scipy(sos, x):
    return _scipy_signal.sosfilt(sos, x)


_sosfilt = select(_sosfilt_loop, _sosfilt_scipy)


def design_bandpass_sos(low_hz: float, high_hz: float, fs: float, order: int = DEFAULT_ORDER):
    """Butterworth bandpass coefficients as second-order sections."""
    if low_hz >= high_hz or high_hz >= fs / 2 or low_hz < 0:
        raise InvalidBand(f"band [{low_hz}, {high_hz}] invalid for fs={fs}")
    return _scipy_signal.butter(order, [low_hz, high_hz], btype="bandpass", fs=fs, output="sos")


def bandpass_filter(
    x,
    fs: float,
    low_hz: float = DEFAULT_BAND[0],
    high_hz: float = DEFAULT_BAND[1],
    order: int = DEFAULT_ORDER,
):
    """Zero-phase bandpass: reflect-pad, filter forward, then backward.

    Output has the input's length; passband gain is ~1 because the
    forward-backward pass squares the magnitude response and cancels phase.
    """
    sos = design_bandpass_sos(low_hz, high_hz, fs, order)
    x = np.asarray(x, dtype=np.float64)
    n_poles = 2 * order
    if x.size <= 6 * n_poles:
        raise SignalTooShort(f"need more than {6 * n_poles} samples, got {x.size}")
    padlen = 3 * n_poles
    padded = np.pad(x, padlen, mode="reflect")
    y = _sosfilt(sos, padded)
    y = _sosfilt(sos, y[::-1].copy())[::-1]
    return np.ascontiguousarray(y[padlen : padlen + x.size])


def zscore(x):
    """Normalize to zero mean and unit sample standard deviation."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2:
        raise SignalTooShort("z-score needs at least 2 samples")
    mu = float(np.mean(x))
    sd = float(np.std(x, ddof=1))
    if sd == 0.0:
        raise ZeroVariance("constant input has no z-score")
    return (x - mu) / sd


def _detrend_linear(seg):
    n = seg.size
    t = np.arange(n, dtype=np.float64)
    t_mean = (n - 1) / 2.0
    denom = np.sum((t - t_mean) ** 2)
    slope = np.sum((t - t_mean) * (seg - seg.mean())) / denom
    return seg - (seg.mean() + slope * (t - t_mean))


def welch_psd(
    x,
    fs: float,
    segment_len: int,
    overlap_fraction: float = 0.5,
    window_kind: str = "hann",
    detrend: str = "linear",
) -> PsdEstimate:
    """One-sided Welch PSD: mean of windowed, detrended segment periodograms.

    Density-normalized so that sum(psd) * df approximates the signal variance.
    """
    x = np.asarray(x, dtype=np.float64)
    if segment_len > x.size:
        raise SegmentTooLong(f"segment {segment_len} longer than signal {x.size}")
    if segment_len < 4:
        raise SignalTooShort("segment must hold at least 4 samples")
    if not 0.0 <= overlap_fraction < 1.0:
        raise InvalidBand(f"overlap fraction {overlap_fraction} outside [0, 1)")

    if window_kind == "hann":
        win = np.hanning(segment_len)
    elif window_kind in ("rect", "boxcar"):
        win = np.ones(segment_len)
    else:
        raise InvalidBand(f"unknown window kind {window_kind!r}")

    step = max(1, segment_len - int(overlap_fraction * segment_len))
    scale = 1.0 / (fs * np.sum(win**2))
    n_bins = segment_len // 2 + 1
    acc = np.zeros(n_bins)
    count = 0
    for start in range(0, x.size - segment_len + 1, step):
        seg = x[start : start + segment_len]
        if detrend == "linear":
            seg = _detrend_linear(seg)
        elif detrend == "constant":
            seg = seg - seg.mean()
        spec = np.fft.rfft(seg * win)
        pxx = (spec.real**2 + spec.imag**2) * scale
        pxx[1:] *= 2.0
        if segment_len % 2 == 0:
            pxx[-1] /= 2.0  # Nyquist bin is not mirrored
        acc += pxx
        count += 1
    psd = acc / count
    freqs = np.fft.rfftfreq(segment_len, d=1.0 / fs)
    return PsdEstimate(freqs=freqs, psd=psd, df=fs / segment_len)


def band_power(psd: PsdEstimate, lo_hz: float, hi_hz: float) -> float:
    """Trapezoidal integral of the PSD over [lo_hz, hi_hz]."""
    if lo_hz < 0 or lo_hz >= hi_hz or hi_hz > psd.freqs[-1] + 1e-12:
        raise InvalidBand(f"band [{lo_hz}, {hi_hz}] outside spectrum")
    mask = (psd.freqs >= lo_hz) & (psd.freqs <= hi_hz)
    if not np.any(mask):
        raise EmptyBand(f"no bins inside [{lo_hz}, {hi_hz}] at df={psd.df}")
    return float(np.trapezoid(psd.psd[mask], psd.freqs[mask]))
