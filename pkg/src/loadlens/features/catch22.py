"""The canonical 22 time-series descriptors.

Every function takes an already standardised 1-D float array and returns a
scalar. The numerics follow the widely used C reference of the feature set
(histogram binning by truncation, FFT autocorrelation, rectangular-window
periodogram, ...) so that values agree with it to floating-point precision.
"""

from __future__ import annotations

import math

import numpy as np

FEATURE_NAMES: tuple[str, ...] = (
    "DN_HistogramMode_5",
    "DN_HistogramMode_10",
    "CO_f1ecac",
    "CO_FirstMin_ac",
    "CO_HistogramAMI_even_2_5",
    "CO_trev_1_num",
    "MD_hrv_classic_pnn40",
    "SB_BinaryStats_mean_longstretch1",
    "SB_BinaryStats_diff_longstretch0",
    "SB_TransitionMatrix_3ac_sumdiagcov",
    "PD_PeriodicityWang_th0_01",
    "CO_Embed2_Dist_tau_d_expfit_meandiff",
    "IN_AutoMutualInfoStats_40_gaussian_fmmi",
    "FC_LocalSimple_mean1_tauresrat",
    "DN_OutlierInclude_p_001_mdrmd",
    "DN_OutlierInclude_n_001_mdrmd",
    "SP_Summaries_welch_rect_area_5_1",
    "SB_MotifThree_quantile_hh",
    "SC_FluctAnal_2_rsrangefit_50_1_logi_prop_r1",
    "SC_FluctAnal_2_dfa_50_1_2_logi_prop_r1",
    "SP_Summaries_welch_rect_centroid",
    "FC_LocalSimple_mean3_stderr",
)

# Features whose value is always an integer lag or run length.
INTEGER_FEATURES = frozenset(
    {
        "CO_FirstMin_ac",
        "SB_BinaryStats_mean_longstretch1",
        "SB_BinaryStats_diff_longstretch0",
        "PD_PeriodicityWang_th0_01",
        "IN_AutoMutualInfoStats_40_gaussian_fmmi",
    }
)

# Frozen periodogram parameterisation: one rectangular segment spanning the
# whole series, FFT length = next power of two, unit sampling frequency.
WELCH_CONFIG = {
    "window": "rectangular",
    "segment_length": "n",
    "overlap": 0.5,
    "nfft": "nextpow2(n)",
    "fs": 1.0,
    "pi": 3.14159265359,
}
_PI = WELCH_CONFIG["pi"]


def _nextpow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length() if n > 1 else 1


def zscore(y: np.ndarray, ddof: int = 1) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return (y - y.mean()) / y.std(ddof=ddof)


def autocorrelations(y: np.ndarray) -> np.ndarray:
    """Normalised autocorrelation at every lag, computed by zero-padded FFT."""
    n = len(y)
    nfft = _nextpow2(n) << 1
    f = np.fft.fft(y - y.mean(), nfft)
    ac = np.fft.ifft(f * np.conj(f)).real
    return ac / ac[0]


def _first_zero(y: np.ndarray, maxtau: int | None = None) -> int:
    ac = autocorrelations(y)
    maxtau = len(y) if maxtau is None else maxtau
    nonpos = np.flatnonzero(ac[:maxtau] <= 0)
    return int(nonpos[0]) if len(nonpos) else maxtau


def _hist_counts(y: np.ndarray, n_bins: int) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = y.min(), y.max()
    step = (hi - lo) / n_bins
    idx = ((y - lo) / step).astype(np.int64)
    idx = np.clip(idx, 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    edges = np.arange(n_bins + 1) * step + lo
    return counts, edges


def histogram_mode(y: np.ndarray, n_bins: int, ties: str = "mean") -> float:
    """Centre of the most populated of ``n_bins`` equal-width bins.

    ``ties="mean"`` averages the centres of all tied bins (reference
    behaviour); ``ties="lowest"`` returns the lowest tied centre.
    """
    counts, edges = _hist_counts(y, n_bins)
    centres = (edges[:-1] + edges[1:]) * 0.5
    best = np.flatnonzero(counts == counts.max())
    if ties == "lowest":
        return float(centres[best[0]])
    total = 0.0
    for i in best:
        total += centres[i]
    return total / len(best)


def f1ecac(y: np.ndarray) -> float:
    ac = autocorrelations(y)
    n = len(y)
    thresh = 1.0 / math.exp(1)
    below = np.flatnonzero(ac[1 : n - 1] < thresh)
    if not len(below):
        return float(n)
    i = int(below[0])
    return i + (thresh - ac[i]) / (ac[i + 1] - ac[i])


def first_min_ac(y: np.ndarray) -> int:
    ac = autocorrelations(y)
    n = len(y)
    mid = ac[1 : n - 1]
    hits = np.flatnonzero((mid < ac[: n - 2]) & (mid < ac[2:n]))
    return int(hits[0]) + 1 if len(hits) else n


def histogram_ami_even_2_5(y: np.ndarray) -> float:
    tau, n_bins = 2, 5
    lo, hi = y.min(), y.max()
    step = (hi - lo + 0.2) / n_bins
    edges = lo + step * np.arange(n_bins + 1) - 0.1
    b1 = np.searchsorted(edges, y[:-tau], side="right") - 1
    b2 = np.searchsorted(edges, y[tau:], side="right") - 1
    joint = np.zeros((n_bins, n_bins))
    np.add.at(joint, (b1, b2), 1.0)
    joint /= joint.sum()
    pi = joint.sum(axis=1)
    pj = joint.sum(axis=0)
    nz = joint > 0
    return float(np.sum(joint[nz] * np.log(joint[nz] / np.outer(pi, pj)[nz])))


def trev_1_num(y: np.ndarray) -> float:
    return float(np.mean(np.diff(y) ** 3))


def pnn40(y: np.ndarray) -> float:
    d = np.abs(np.diff(y))
    return float(np.count_nonzero(d * 1000 > 40) / (len(y) - 1))


def _longest_gap(flags: np.ndarray, last_index: int) -> int:
    # Largest distance between consecutive "break" positions, where the last
    # position always counts as a break and the scan starts from index 0.
    marks = np.flatnonzero(flags)
    if not len(marks) or marks[-1] != last_index:
        marks = np.append(marks, last_index)
    prev = np.concatenate(([0], marks[:-1]))
    return int(np.max(marks - prev))


def binary_mean_longstretch1(y: np.ndarray) -> int:
    above = (y[:-1] - y.mean()) > 0
    return _longest_gap(~above, len(y) - 2)


def binary_diff_longstretch0(y: np.ndarray) -> int:
    rising = np.diff(y) >= 0
    return _longest_gap(rising, len(y) - 2)


def _quantile(y: np.ndarray, q: float) -> float:
    s = np.sort(y)
    n = len(s)
    edge = 0.5 / n
    if q < edge:
        return float(s[0])
    if q > 1 - edge:
        return float(s[-1])
    pos = n * q - 0.5
    left, right = int(math.floor(pos)), int(math.ceil(pos))
    if left == right:
        return float(s[left])
    return float(s[left] + (pos - left) * (s[right] - s[left]) / (right - left))


def coarse_grain_quantile(y: np.ndarray, n_groups: int) -> np.ndarray:
    """Map each value to a symbol 1..n_groups by equiprobable quantile bins."""
    qs = np.empty(n_groups + 1)
    start, step = 0.0, 1.0 / n_groups
    for i in range(n_groups + 1):
        qs[i] = start
        start += step
    th = np.array([_quantile(y, q) for q in qs])
    th[0] -= 1
    labels = np.zeros(len(y), dtype=np.int64)
    for i in range(n_groups):
        labels[(y > th[i]) & (y <= th[i + 1])] = i + 1
    return labels


def transition_matrix_3ac_sumdiagcov(y: np.ndarray) -> float:
    if np.all(y == y[0]):
        return math.nan
    tau = _first_zero(y)
    down = y[::tau]
    symbols = coarse_grain_quantile(down, 3) - 1
    t = np.zeros((3, 3))
    np.add.at(t, (symbols[:-1], symbols[1:]), 1.0)
    t /= len(down) - 1
    return float(np.sum(np.var(t, axis=0, ddof=1)))


def spline_residual(y: np.ndarray) -> np.ndarray:
    """Residual after a least-squares two-piece cubic spline fit.

    The spline has interior knot at ``floor(n/2) - 1`` with C2 continuity, so
    the fit is a projection onto a five-dimensional space; a scaled
    truncated-power basis spans the same space as the B-spline basis.
    """
    n = len(y)
    knot = n // 2 - 1
    x = np.arange(n, dtype=float)
    scale = max(n - 1, 1)
    u = x / scale
    k = knot / scale
    basis = np.column_stack([np.ones(n), u, u**2, u**3, np.clip(u - k, 0, None) ** 3])
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    return y - basis @ coef


def periodicity_wang_th0_01(y: np.ndarray) -> int:
    th = 0.01
    n = len(y)
    sub = spline_residual(y)
    acmax = int(math.ceil(n / 3))
    full = np.correlate(sub, sub, mode="full")[n:]
    lags = np.arange(1, acmax + 1)
    acf = full[:acmax] / (n - lags)
    trough = None
    for i in range(1, acmax - 1):
        slope_in = acf[i] - acf[i - 1]
        slope_out = acf[i + 1] - acf[i]
        if slope_in < 0 and slope_out > 0:
            trough = i
        elif slope_in > 0 and slope_out < 0:
            if trough is None:
                continue
            if acf[i] - acf[trough] < th:
                continue
            if acf[i] < 0:
                continue
            return i
    return 0


def embed2_dist_tau_d_expfit_meandiff(y: np.ndarray) -> float:
    n = len(y)
    tau = _first_zero(y)
    if tau > n / 10:
        tau = int(math.floor(n / 10))
    m = n - tau - 1
    dy = y[1 : m + 1] - y[:m]
    dyt = y[tau : tau + m] - y[tau + 1 : tau + m + 1]
    d = np.sqrt(dy * dy + dyt * dyt)
    sd = d.std(ddof=1)
    if sd < 0.001:
        return 0.0
    n_bins = int(math.ceil((d.max() - d.min()) / (3.5 * sd / m ** (1 / 3.0))))
    if n_bins == 0:
        return 0.0
    counts, edges = _hist_counts(d, n_bins)
    l = d.mean()
    centres = (edges[:-1] + edges[1:]) * 0.5
    expf = np.clip(np.exp(-centres / l) / l, 0, None)
    return float(np.mean(np.abs(counts / m - expf)))


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    return float(np.sum(a * b) / math.sqrt(np.sum(a * a) * np.sum(b * b)))


def automutual_info_40_gaussian_fmmi(y: np.ndarray) -> float:
    n = len(y)
    tau = min(40, (n + 1) // 2)
    if tau < 3:
        return float(tau)

    def ami(lag: int) -> float:
        ac = _pearson(y[: n - lag], y[lag:])
        return -0.5 * math.log(1.0 - ac * ac)

    prev, curr = ami(1), ami(2)
    for i in range(1, tau - 1):
        nxt = ami(i + 2)
        if curr < prev and curr < nxt:
            return float(i)
        prev, curr = curr, nxt
    return float(tau)


def _mean_forecast_residuals(y: np.ndarray, train_length: int) -> np.ndarray:
    n = len(y) - train_length
    window = np.lib.stride_tricks.sliding_window_view(y[:-1], train_length)[:n]
    return y[train_length:] - window.sum(axis=1) / train_length


def local_simple_mean1_tauresrat(y: np.ndarray) -> float:
    if len(y) <= 1:
        return math.nan
    res = _mean_forecast_residuals(y, 1)
    return _first_zero(res) / _first_zero(y)


def local_simple_mean3_stderr(y: np.ndarray) -> float:
    if len(y) <= 3:
        return math.nan
    return float(_mean_forecast_residuals(y, 3).std(ddof=1))


def outlier_include_001_mdrmd(y: np.ndarray, sign: int) -> float:
    """Median relative timing of samples beyond progressively raised thresholds."""
    n = len(y)
    inc = 0.01
    if np.all(y == y[0]):
        return 0.0
    work = sign * y
    tot = int(np.count_nonzero(work >= 0))
    top = work.max()
    if top < inc:
        return 0.0
    n_thresh = int(top / inc + 1)
    thresholds = np.arange(n_thresh) * inc
    order = np.argsort(work, kind="stable")
    sorted_vals = work[order]
    # counts[j] = #{i : work[i] >= j*inc}
    counts = n - np.searchsorted(sorted_vals, thresholds, side="left")
    frac = (counts - 1) * 100.0 / tot
    over = np.flatnonzero(frac > 2)
    mj = int(over[-1]) if len(over) else 0
    single = np.flatnonzero(counts - 1 == 0)
    fbi = int(single[0]) if len(single) else n_thresh - 1
    trim = min(mj, fbi)
    positions = np.arange(1, n + 1)
    half = n / 2
    medians = np.empty(trim + 1)
    for j in range(trim + 1):
        medians[j] = np.median(positions[work >= thresholds[j]]) / half - 1
    return float(np.median(medians))


def _welch_rect(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = len(y)
    nfft = _nextpow2(n)
    segments = int(math.floor(n / (n / 2.0))) - 1
    scale = segments * float(n)
    f = np.fft.fft(y - y.mean(), nfft)
    p = np.abs(f) ** 2
    n_out = nfft // 2 + 1
    pxx = p[:n_out] / scale
    pxx[1 : n_out - 1] *= 2
    freqs = np.arange(n_out) * (1.0 / nfft)
    return 2 * _PI * freqs, pxx / (2 * _PI)


def welch_rect_area_5_1(y: np.ndarray) -> float:
    w, sw = _welch_rect(y)
    if not np.all(np.isfinite(sw)):
        return 0.0
    dw = w[1] - w[0]
    return float(np.sum(sw[: len(sw) // 5]) * dw)


def welch_rect_centroid(y: np.ndarray) -> float:
    w, sw = _welch_rect(y)
    if not np.all(np.isfinite(sw)):
        return 0.0
    cs = np.cumsum(sw)
    hit = np.flatnonzero(cs > cs[-1] * 0.5)
    return float(w[hit[0]]) if len(hit) else 0.0


def motif_three_quantile_hh(y: np.ndarray) -> float:
    n = len(y)
    symbols = coarse_grain_quantile(y, 3) - 1
    pairs = np.zeros((3, 3))
    np.add.at(pairs, (symbols[:-1], symbols[1:]), 1.0)
    p = pairs / (n - 1.0)
    nz = p > 0
    return float(-np.sum(p[nz] * np.log(p[nz])))


def _linreg(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    n = len(x)
    sx, sxx, sxy, sy = x.sum(), (x * x).sum(), (x * y).sum(), y.sum()
    denom = n * sxx - sx * sx
    if denom == 0:
        return 0.0, 0.0
    return (n * sxy - sx * sy) / denom, (sy * sxx - sx * sxy) / denom


def fluct_anal_2_50_1_logi_prop_r1(y: np.ndarray, lag: int, how: str) -> float:
    n = len(y)
    lin_low = math.log(5)
    lin_high = math.log(n // 2)
    step = (lin_high - lin_low) / 49
    taus = np.array([math.floor(math.exp(lin_low + i * step) + 0.5) for i in range(50)], dtype=np.int64)
    taus = np.unique(taus)
    n_tau = len(taus)
    if n_tau < 12:
        return 0.0
    size_cs = n // lag
    ycs = np.cumsum(y[::lag][:size_cs])
    fluct = np.empty(n_tau)
    for i, t in enumerate(taus):
        t = int(t)
        n_buf = size_cs // t
        x = np.arange(1, t + 1, dtype=float)
        sx, sxx = x.sum(), (x * x).sum()
        denom = t * sxx - sx * sx
        w = ycs[: n_buf * t].reshape(n_buf, t)
        sxy = w @ x
        sy = w.sum(axis=1)
        if denom == 0:
            m = np.zeros(n_buf)
            b = np.zeros(n_buf)
        else:
            m = (t * sxy - sx * sy) / denom
            b = (sy * sxx - sx * sxy) / denom
        r = w - (m[:, None] * x[None, :] + b[:, None])
        if how == "dfa":
            fluct[i] = math.sqrt(np.sum(r * r) / (n_buf * t))
        else:
            d = r.max(axis=1) - r.min(axis=1)
            fluct[i] = math.sqrt(np.sum(d * d) / n_buf)
    logt = np.log(taus.astype(float))
    logf = np.log(fluct)
    min_points = 6
    sserr = []
    for i in range(min_points, n_tau - min_points + 1):
        m1, b1 = _linreg(logt[:i], logf[:i])
        m2, b2 = _linreg(logt[i - 1 :], logf[i - 1 :])
        e1 = logt[:i] * m1 + b1 - logf[:i]
        e2 = logt[i - 1 :] * m2 + b2 - logf[i - 1 :]
        sserr.append(math.sqrt(np.sum(e1 * e1)) + math.sqrt(np.sum(e2 * e2)))
    first_min = int(np.argmin(sserr)) + min_points - 1
    return (first_min + 1) / n_tau


def rsrangefit(y: np.ndarray) -> float:
    return fluct_anal_2_50_1_logi_prop_r1(y, 1, "rsrangefit")


def dfa(y: np.ndarray) -> float:
    return fluct_anal_2_50_1_logi_prop_r1(y, 2, "dfa")


FEATURE_FUNCTIONS = {
    "DN_HistogramMode_5": lambda z: histogram_mode(z, 5),
    "DN_HistogramMode_10": lambda z: histogram_mode(z, 10),
    "CO_f1ecac": f1ecac,
    "CO_FirstMin_ac": first_min_ac,
    "CO_HistogramAMI_even_2_5": histogram_ami_even_2_5,
    "CO_trev_1_num": trev_1_num,
    "MD_hrv_classic_pnn40": pnn40,
    "SB_BinaryStats_mean_longstretch1": binary_mean_longstretch1,
    "SB_BinaryStats_diff_longstretch0": binary_diff_longstretch0,
    "SB_TransitionMatrix_3ac_sumdiagcov": transition_matrix_3ac_sumdiagcov,
    "PD_PeriodicityWang_th0_01": periodicity_wang_th0_01,
    "CO_Embed2_Dist_tau_d_expfit_meandiff": embed2_dist_tau_d_expfit_meandiff,
    "IN_AutoMutualInfoStats_40_gaussian_fmmi": automutual_info_40_gaussian_fmmi,
    "FC_LocalSimple_mean1_tauresrat": local_simple_mean1_tauresrat,
    "DN_OutlierInclude_p_001_mdrmd": lambda z: outlier_include_001_mdrmd(z, 1),
    "DN_OutlierInclude_n_001_mdrmd": lambda z: outlier_include_001_mdrmd(z, -1),
    "SP_Summaries_welch_rect_area_5_1": welch_rect_area_5_1,
    "SB_MotifThree_quantile_hh": motif_three_quantile_hh,
    "SC_FluctAnal_2_rsrangefit_50_1_logi_prop_r1": rsrangefit,
    "SC_FluctAnal_2_dfa_50_1_2_logi_prop_r1": dfa,
    "SP_Summaries_welch_rect_centroid": welch_rect_centroid,
    "FC_LocalSimple_mean3_stderr": local_simple_mean3_stderr,
}


def catch22_from_z(z: np.ndarray) -> np.ndarray:
    """All 22 features of a standardised series, in canonical order.

    Any feature that cannot be evaluated (numerical failure on very short
    inputs) comes back as NaN.
    """
    out = np.empty(len(FEATURE_NAMES))
    with np.errstate(all="ignore"):
        for i, name in enumerate(FEATURE_NAMES):
            try:
                v = float(FEATURE_FUNCTIONS[name](z))
            except (ValueError, ZeroDivisionError, IndexError, FloatingPointError, np.linalg.LinAlgError):
                v = math.nan
            out[i] = v if math.isfinite(v) else math.nan
    return out
