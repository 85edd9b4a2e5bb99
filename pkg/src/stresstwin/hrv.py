"""R-peak detection, RR conditioning, HRV metrics and window feature assembly.

The detector is a Pan-Tompkins style front end (5-15 Hz bandpass,
derivative, squaring, 150 ms moving integration) followed by local-maxima
selection against a rolling robust threshold, with a second lower-threshold
pass inside suspiciously long RR gaps. QT is measured with the tangent
method and rate-corrected with Bazett's formula.
"""

import math
from dataclasses import dataclass

import numpy as np

from .dsp import band_power, bandpass_filter, welch_psd, zscore
from .errors import (
    EmptyBand,
    InsufficientData,
    InvalidParam,
    LengthMismatch,
    NoMeasurableBeats,
    NoValidWindows,
    RecordTooShort,
    SignalTooShort,
    TooFewIntervals,
    ZeroVariance,
)
from .stress import relative_deviation

FEATURE_COLUMNS = (
    "ecg_sdnn",
    "ecg_bpm",
    "ecg_qtc",
    "ecg_lfhf",
    "rel_sdnn",
    "rel_bpm",
    "rel_qtc",
    "rel_lfhf",
    "noise_mean",
    "noise_std",
    "noise_skew",
    "noise_kurt",
    "noise_lfhf",
)

LF_BAND = (0.04, 0.15)
HF_BAND = (0.15, 0.40)
TACHOGRAM_HZ = 4.0
RR_ABS_BOUNDS_MS = (300.0, 2000.0)
RR_RELATIVE_TOL = 0.20
MIN_WINDOW_RR = 5
LFHF_MIN_SPAN_S = 30.0
CONTEXT_S = 60.0  # trailing buffer feeding the LF/HF estimates


@dataclass(frozen=True)
class RrSeries:
    """Beat-to-beat intervals (ms) with the start time of each interval (s)."""

    intervals_ms: np.ndarray
    onsets_s: np.ndarray

    def __len__(self) -> int:
        return int(self.intervals_ms.size)

    def span_s(self) -> float:
        if len(self) == 0:
            return 0.0
        return float(self.onsets_s[-1] + self.intervals_ms[-1] / 1000.0 - self.onsets_s[0])


@dataclass
class WindowFeatures:
    ecg_sdnn: float
    ecg_bpm: float
    ecg_qtc: float
    ecg_lfhf: float
    rel_sdnn: float
    rel_bpm: float
    rel_qtc: float
    rel_lfhf: float
    noise_mean: float
    noise_std: float
    noise_skew: float
    noise_kurt: float
    noise_lfhf: float
    window_start: float
    valid: bool

    def as_vector(self) -> np.ndarray:
        return np.array([getattr(self, c) for c in FEATURE_COLUMNS], dtype=np.float64)


@dataclass(frozen=True)
class BaselineProfile:
    sdnn: float
    bpm: float
    qtc: float
    lfhf: float
    source_record: str


def _invalid_features(window_start: float, noise_moments=None) -> WindowFeatures:
    nm = noise_moments or (math.nan, math.nan, math.nan, math.nan, math.nan)
    return WindowFeatures(
        *(math.nan,) * 8,
        noise_mean=nm[0],
        noise_std=nm[1],
        noise_skew=nm[2],
        noise_kurt=nm[3],
        noise_lfhf=nm[4],
        window_start=window_start,
        valid=False,
    )


# --- R-peak detection --------------------------------------------------------


def detect_r_peaks(
    x,
    fs: float,
    prominence_k: float = 4.0,
    refractory_s: float = 0.25,
    integration_s: float = 0.150,
    front_band=(5.0, 15.0),
    gap_factor: float = 1.8,
) -> np.ndarray:
    """R-peak sample indices in a bandpass-filtered ECG.

    May return an empty array; never raises on degenerate input.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size < int(2 * fs):
        return np.empty(0, dtype=np.int64)

    try:
        front = bandpass_filter(x, fs, front_band[0], front_band[1])
    except SignalTooShort:
        return np.empty(0, dtype=np.int64)
    deriv = np.diff(front, prepend=front[0])
    sq = deriv * deriv
    win = max(3, int(round(integration_s * fs)))
    integ = np.convolve(sq, np.ones(win) / win, mode="same")

    med, mad = _rolling_block_stats(integ, block_n=int(fs))
    scale = float(np.percentile(integ, 99))
    thr = med + np.maximum(prominence_k * mad, 0.10 * scale)
    thr_low = med + np.maximum(0.5 * prominence_k * mad, 0.05 * scale)

    maxima = _local_maxima(integ)
    ref_n = int(round(refractory_s * fs))
    kept = _select_peaks(integ, maxima, thr, ref_n)

    # second pass: hunt for missed beats inside gaps much longer than typical
    if kept.size >= 3:
        for _ in range(5):
            med_rr = float(np.median(np.diff(kept)))
            inserted = _fill_gaps(integ, maxima, kept, thr_low, med_rr, gap_factor, ref_n)
            if inserted is None:
                break
            kept = inserted

    refined = _refine_to_signal(x, kept, int(round(0.10 * fs)))
    return _dedupe(x, refined, ref_n)


def _rolling_block_stats(v, block_n: int):
    """Per-sample rolling median and MAD, computed on overlapping 5-block spans."""
    n = v.size
    n_blocks = max(1, (n + block_n - 1) // block_n)
    med_b = np.empty(n_blocks)
    mad_b = np.empty(n_blocks)
    for i in range(n_blocks):
        lo = max(0, (i - 2) * block_n)
        hi = min(n, (i + 3) * block_n)
        seg = v[lo:hi]
        m = float(np.median(seg))
        med_b[i] = m
        mad_b[i] = float(np.median(np.abs(seg - m)))
    med = np.repeat(med_b, block_n)[:n]
    mad = np.repeat(mad_b, block_n)[:n]
    return med, mad


def _local_maxima(v) -> np.ndarray:
    if v.size < 3:
        return np.empty(0, dtype=np.int64)
    core = (v[1:-1] > v[:-2]) & (v[1:-1] >= v[2:])
    return np.nonzero(core)[0] + 1


def _select_peaks(integ, maxima, thr, ref_n: int) -> np.ndarray:
    cands = maxima[integ[maxima] >= thr[maxima]]
    kept: list = []
    for idx in cands:
        if kept and idx - kept[-1] < ref_n:
            if integ[idx] > integ[kept[-1]]:
                kept[-1] = int(idx)
        else:
            kept.append(int(idx))
    return np.asarray(kept, dtype=np.int64)


def _fill_gaps(integ, maxima, kept, thr_low, med_rr, gap_factor, ref_n):
    additions = []
    for a, b in zip(kept[:-1], kept[1:]):
        if b - a <= gap_factor * med_rr:
            continue
        lo, hi = a + ref_n, b - ref_n
        in_gap = maxima[(maxima > lo) & (maxima < hi)]
        in_gap = in_gap[integ[in_gap] >= thr_low[in_gap]]
        if in_gap.size:
            additions.append(int(in_gap[np.argmax(integ[in_gap])]))
    if not additions:
        return None
    return np.sort(np.concatenate([kept, np.asarray(additions, dtype=np.int64)]))


def _refine_to_signal(x, peaks, radius: int) -> np.ndarray:
    refined = np.empty(peaks.size, dtype=np.int64)
    for i, p in enumerate(peaks):
        lo = max(0, p - radius)
        hi = min(x.size, p + radius + 1)
        refined[i] = lo + int(np.argmax(x[lo:hi]))
    return np.unique(refined)


def _dedupe(x, peaks, ref_n: int) -> np.ndarray:
    kept: list = []
    for idx in peaks:
        if kept and idx - kept[-1] < ref_n:
            if x[idx] > x[kept[-1]]:
                kept[-1] = int(idx)
        else:
            kept.append(int(idx))
    return np.asarray(kept, dtype=np.int64)


# --- RR conditioning and metrics ---------------------------------------------


def rr_from_peaks(peaks, fs: float) -> RrSeries:
    peaks = np.asarray(peaks, dtype=np.int64)
    if peaks.size < 2:
        return RrSeries(np.empty(0), np.empty(0))
    intervals = np.diff(peaks) / fs * 1000.0
    onsets = peaks[:-1] / fs
    return RrSeries(intervals_ms=intervals, onsets_s=onsets)


def filter_rr(rr: RrSeries) -> RrSeries:
    """Keep intervals inside absolute bounds and within 20% of a running median.

    The running median uses a centered window of 11 raw intervals,
    truncated at the edges. Idempotent on clean data.
    """
    iv = rr.intervals_ms
    if iv.size == 0:
        return rr
    run_med = np.empty(iv.size)
    for i in range(iv.size):
        lo = max(0, i - 5)
        run_med[i] = np.median(iv[lo : i + 6])
    keep = (
        (iv >= RR_ABS_BOUNDS_MS[0])
        & (iv <= RR_ABS_BOUNDS_MS[1])
        & (np.abs(iv - run_med) <= RR_RELATIVE_TOL * run_med)
    )
    return RrSeries(intervals_ms=iv[keep], onsets_s=rr.onsets_s[keep])


def sdnn(rr: RrSeries) -> float:
    if len(rr) < 2:
        raise TooFewIntervals("sdnn needs at least 2 intervals")
    return float(np.std(rr.intervals_ms, ddof=1))


def bpm(rr: RrSeries) -> float:
    if len(rr) < 1:
        raise TooFewIntervals("bpm needs at least 1 interval")
    return 60000.0 / float(np.mean(rr.intervals_ms))


def qtc(x, fs: float, r_peaks) -> float:
    """Median Bazett-corrected QT over beats, via the tangent method.

    Q onset is the steepest negative slope within 50 ms before R; the T end
    is where the steepest post-apex descending tangent meets the local
    isoelectric level (median of the PR segment).
    """
    x = np.asarray(x, dtype=np.float64)
    r_peaks = np.asarray(r_peaks, dtype=np.int64)
    if r_peaks.size < 2:
        raise NoMeasurableBeats("need at least 2 R-peaks")
    values = []
    for i in range(1, r_peaks.size):
        r = int(r_peaks[i])
        rr_s = (r_peaks[i] - r_peaks[i - 1]) / fs
        if not 0.3 <= rr_s <= 2.0:
            continue
        q = _q_onset(x, fs, r)
        if q is None:
            continue
        iso = _isoelectric(x, fs, r)
        if iso is None:
            continue
        t_end_s = _t_end_tangent(x, fs, r, rr_s, iso)
        if t_end_s is None:
            continue
        qt_ms = (t_end_s - q / fs) * 1000.0
        if not 200.0 <= qt_ms <= 600.0:
            continue
        values.append(qt_ms / math.sqrt(rr_s))
    if not values:
        raise NoMeasurableBeats("no beat yielded a usable QT")
    return float(np.median(values))


def _q_onset(x, fs, r):
    a = r - int(round(0.050 * fs))
    if a < 1 or r - a < 3:
        return None
    slope = x[a : r] - x[a - 1 : r - 1]
    return a + int(np.argmin(slope))


def _isoelectric(x, fs, r):
    lo = r - int(round(0.090 * fs))
    hi = r - int(round(0.050 * fs))
    if lo < 0 or hi - lo < 2:
        return None
    return float(np.median(x[lo:hi]))


def _t_end_tangent(x, fs, r, rr_s, iso):
    lo = r + int(round(0.100 * fs))
    hi = r + int(round(min(0.400, 0.7 * rr_s) * fs))
    hi = min(hi, x.size - 2)
    if hi - lo < 4:
        return None
    apex = lo + int(np.argmax(x[lo:hi]))
    d_hi = min(apex + int(round(0.160 * fs)), x.size - 1)
    if d_hi - apex < 3:
        return None
    slopes = x[apex + 1 : d_hi + 1] - x[apex:d_hi]
    k = int(np.argmin(slopes))
    slope_per_s = slopes[k] * fs
    if slope_per_s >= 0:
        return None
    s_idx = apex + k
    extension_s = (iso - x[s_idx]) / slope_per_s
    if not 0.0 <= extension_s <= 0.30:
        return None
    return s_idx / fs + extension_s


def lf_hf(rr: RrSeries, resample_hz: float = TACHOGRAM_HZ, segment_len: int = 256) -> float:
    """LF/HF power ratio of the tachogram, resampled to a uniform grid."""
    if len(rr) < 4:
        raise InsufficientData("too few intervals for a spectral estimate")
    if rr.span_s() < LFHF_MIN_SPAN_S:
        raise InsufficientData(f"tachogram spans {rr.span_s():.1f} s, need {LFHF_MIN_SPAN_S}")
    t_end = rr.onsets_s[-1]
    grid = np.arange(rr.onsets_s[0], t_end, 1.0 / resample_hz)
    if grid.size < 16:
        raise InsufficientData("resampled tachogram too short")
    tach = np.interp(grid, rr.onsets_s, rr.intervals_ms)
    tach = tach - tach.mean()
    psd = welch_psd(tach, resample_hz, min(segment_len, tach.size))
    try:
        lf = band_power(psd, *LF_BAND)
        hf = band_power(psd, *HF_BAND)
    except EmptyBand:
        return 0.0
    return lf / max(hf, 1e-12)


def noise_stats(noise, fs: float, segment_len: int = 8192):
    """(mean, sample std, Fisher g1, excess g2, LF/HF ratio) of a noise trace.

    Constant input yields zeros for the shape statistics by convention.
    """
    noise = np.asarray(noise, dtype=np.float64)
    if noise.size < 8:
        raise InvalidParam("noise stats need at least 8 samples")
    mu = float(np.mean(noise))
    std = float(np.std(noise, ddof=1))
    centered = noise - mu
    m2 = float(np.mean(centered**2))
    if m2 == 0.0:
        skew, kurt = 0.0, 0.0
    else:
        skew = float(np.mean(centered**3)) / m2**1.5
        kurt = float(np.mean(centered**4)) / m2**2 - 3.0
    psd = welch_psd(noise, fs, min(segment_len, noise.size))
    try:
        lf = band_power(psd, *LF_BAND)
        hf = band_power(psd, *HF_BAND)
        ratio = lf / max(hf, 1e-12)
    except EmptyBand:
        ratio = 0.0
    return mu, std, skew, kurt, ratio


def estimate_noise(noisy, clean, window) -> np.ndarray:
    """Sample-wise noisy minus clean over a window (NST noise is additive)."""
    if noisy.fs != clean.fs:
        raise LengthMismatch(f"sampling rates differ: {noisy.fs} vs {clean.fs}")
    a, b = noisy.channel(0), clean.channel(0)
    if a.size != b.size:
        raise LengthMismatch(f"record lengths differ: {a.size} vs {b.size}")
    return a[window] - b[window]


# --- windowing and feature assembly -----------------------------------------


def window_iter(record, window_s: float = 10.0, stride_s: float = 5.0):
    """(start_time_s, sample slice) for each full window; partial tail dropped."""
    n = record.channel(0).size
    win_n = int(round(window_s * record.fs))
    stride_n = int(round(stride_s * record.fs))
    if win_n > n:
        raise RecordTooShort(f"record holds {n} samples, window needs {win_n}")
    out = []
    for start in range(0, n - win_n + 1, stride_n):
        out.append((start / record.fs, slice(start, start + win_n)))
    return out


def _segment_absolute_features(segment, fs: float, window_s: float):
    """Absolute HRV features where the window is the trailing window_s of segment.

    The segment is bandpassed then z-scored; every downstream measure
    (adaptive peak threshold, tangent QT, RR statistics) is amplitude-scale
    invariant, so standardization only evens out per-record gain. Returns
    (sdnn, bpm, qtc, lfhf) or None when the window cannot produce valid
    features (too few beats, unmeasurable QT, under-spanned LF/HF).
    """
    try:
        filt = zscore(bandpass_filter(segment, fs))
    except (SignalTooShort, ZeroVariance):
        return None
    peaks = detect_r_peaks(filt, fs)
    rr_all = filter_rr(rr_from_peaks(peaks, fs))
    seg_dur = segment.size / fs
    w_start = seg_dur - window_s

    in_window = rr_all.onsets_s >= w_start
    rr_win = RrSeries(rr_all.intervals_ms[in_window], rr_all.onsets_s[in_window])
    if len(rr_win) < MIN_WINDOW_RR:
        return None
    try:
        v_sdnn = sdnn(rr_win)
        v_bpm = bpm(rr_win)
    except TooFewIntervals:
        return None

    w_start_idx = max(0, int(round(w_start * fs)))
    win_peaks = peaks[peaks >= w_start_idx]
    if win_peaks.size and peaks.size > win_peaks.size:
        prev = peaks[peaks < w_start_idx][-1:]
        win_peaks = np.concatenate([prev, win_peaks])
    try:
        v_qtc = qtc(filt, fs, win_peaks)
    except NoMeasurableBeats:
        return None
    try:
        v_lfhf = lf_hf(rr_all)
    except InsufficientData:
        return None

    values = (v_sdnn, v_bpm, v_qtc, v_lfhf)
    if not all(math.isfinite(v) for v in values):
        return None
    return values


def extract_window_features(
    noisy_segment,
    clean_segment,
    baseline: BaselineProfile,
    fs: float,
    window_s: float = 10.0,
    window_start: float = 0.0,
    eps: float = 1e-6,
) -> WindowFeatures:
    """Feature vector for one window.

    The segments may carry up to ``CONTEXT_S`` of leading context; the
    analysis window is their trailing ``window_s`` seconds. Absolute HRV
    comes from the noisy window, relative deviations compare against the
    clean-baseline profile, and the noise descriptors come from the
    noisy-minus-clean residual.
    """
    noisy_segment = np.asarray(noisy_segment, dtype=np.float64)
    clean_segment = np.asarray(clean_segment, dtype=np.float64)
    if noisy_segment.size != clean_segment.size:
        raise LengthMismatch("noisy and clean segments differ in length")

    win_n = int(round(window_s * fs))
    noise_full = noisy_segment - clean_segment
    noise_win = noise_full[-win_n:]
    n_mean, n_std, n_skew, n_kurt, _ = noise_stats(noise_win, fs)
    _, _, _, _, n_lfhf = noise_stats(noise_full, fs)
    moments = (n_mean, n_std, n_skew, n_kurt, n_lfhf)

    absolute = _segment_absolute_features(noisy_segment, fs, window_s)
    if absolute is None:
        return _invalid_features(window_start, moments)
    v_sdnn, v_bpm, v_qtc, v_lfhf = absolute

    return WindowFeatures(
        ecg_sdnn=v_sdnn,
        ecg_bpm=v_bpm,
        ecg_qtc=v_qtc,
        ecg_lfhf=v_lfhf,
        rel_sdnn=relative_deviation(v_sdnn, baseline.sdnn, eps),
        rel_bpm=relative_deviation(v_bpm, baseline.bpm, eps),
        rel_qtc=relative_deviation(v_qtc, baseline.qtc, eps),
        rel_lfhf=relative_deviation(v_lfhf, baseline.lfhf, eps),
        noise_mean=n_mean,
        noise_std=n_std,
        noise_skew=n_skew,
        noise_kurt=n_kurt,
        noise_lfhf=n_lfhf,
        window_start=window_start,
        valid=True,
    )


def iter_window_segments(record, window_s: float = 10.0, stride_s: float = 5.0, context_s: float = CONTEXT_S):
    """(window_start_s, segment slice) where each segment ends with its window.

    The segment includes up to ``context_s`` of trailing history, which is
    causal: it only looks backwards from the window end.
    """
    fs = record.fs
    context_n = int(round(context_s * fs))
    out = []
    for start_s, sl in window_iter(record, window_s, stride_s):
        seg_lo = max(0, sl.stop - context_n)
        out.append((start_s, slice(seg_lo, sl.stop)))
    return out


def compute_baseline(
    clean_record,
    window_s: float = 10.0,
    stride_s: float = 5.0,
    context_s: float = CONTEXT_S,
) -> BaselineProfile:
    """Median absolute features over all valid windows of the clean record."""
    ch = clean_record.channel(0)
    rows = []
    for _, seg in iter_window_segments(clean_record, window_s, stride_s, context_s):
        values = _segment_absolute_features(ch[seg], clean_record.fs, window_s)
        if values is not None:
            rows.append(values)
    if not rows:
        raise NoValidWindows(f"record {clean_record.record_name} has no valid windows")
    med = np.median(np.asarray(rows), axis=0)
    # a perfectly regular beat train yields sdnn or lf/hf of exactly zero;
    # floor keeps the profile strictly positive for the eps-guarded ratios
    med = np.maximum(med, 1e-9)
    return BaselineProfile(
        sdnn=float(med[0]),
        bpm=float(med[1]),
        qtc=float(med[2]),
        lfhf=float(med[3]),
        source_record=clean_record.record_name,
    )
