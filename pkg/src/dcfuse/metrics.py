"""Fusion quality metrics and rank aggregation.

Full-reference metrics (PSNR, MSE, SSIM) compare a fused image against
ground truth; the no-reference battery (Q_E, Q_CV, Q_P, SD) judges a fused
image against its two sources.  MSE, PSNR, and SD are reported on the 0-255
intensity scale.  The Q metrics follow the conventional published
formulations (edge-weighted structural similarity; contrast-sensitivity
weighted regional error, lower better; phase-congruency feature agreement)
and are locked against committed golden values.  Borda-count ranking
aggregates any set of metrics over competing methods.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate as _ndcorrelate
from scipy.stats import rankdata

from . import losses as _losses

REPORT_SCALE = 255.0
PSNR_CAP = 100.0
METRIC_DIRECTIONS = {
    "psnr": "higher", "mse": "lower", "ssim": "higher",
    "q_e": "higher", "q_cv": "lower", "q_p": "higher", "sd": "higher",
}

__all__ = [
    "REPORT_SCALE", "PSNR_CAP", "METRIC_DIRECTIONS", "MetricReport",
    "mse", "psnr", "ssim_metric", "sd", "q_e", "q_cv", "q_p",
    "metric_battery", "borda",
]


def _pair(a, b):
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"image size mismatch: {x.shape} vs {y.shape}")
    return x, y


def mse(a, b):
    """Mean squared error on the 0-255 reporting scale."""
    x, y = _pair(a, b)
    return float(np.mean((REPORT_SCALE * (x - y)) ** 2))


def psnr(a, b):
    """Peak signal-to-noise ratio in dB, capped at 100 for near-exact pairs."""
    err = mse(a, b)
    peak2 = REPORT_SCALE ** 2
    if err < peak2 * 1e-10:
        return PSNR_CAP
    return float(10.0 * np.log10(peak2 / err))


def ssim_metric(a, b):
    """Mean structural similarity; shares its kernel with the SSIM loss."""
    return 1.0 - _losses.ssim_loss(a, b)


def sd(img):
    """Population standard deviation of intensities on the reporting scale."""
    x = np.asarray(img, dtype=np.float64)
    return float(np.std(REPORT_SCALE * x))


# ---------------------------------------------------------------------------
# shared helpers for the Q metrics


def _filter2_same(img, kernel):
    # Correlation with zero padding, output size preserved (odd kernels).
    return _ndcorrelate(img, kernel, mode="constant", cval=0.0)


def _gaussian_kernel(n=11, sigma=1.5):
    half = (n - 1) / 2.0
    x = np.arange(n) - half
    g = np.exp(-(x[:, None] ** 2 + x[None, :] ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def _block_reduce(img, size, op):
    h = (img.shape[0] // size) * size
    w = (img.shape[1] // size) * size
    if h == 0 or w == 0:
        raise ValueError(f"image smaller than the {size}x{size} block size")
    v = img[:h, :w].reshape(h // size, size, w // size, size)
    return op(v, axis=(1, 3))


# ---------------------------------------------------------------------------
# Q_E: edge-dependent weighted structural similarity


def _ssim_index_maps(img1, img2, win, dynamic_range=255.0):
    c1 = (0.01 * dynamic_range) ** 2
    c2 = (0.03 * dynamic_range) ** 2
    mu1 = _filter2_same(img1, win)
    mu2 = _filter2_same(img2, win)
    s1 = _filter2_same(img1 * img1, win) - mu1 * mu1
    s2 = _filter2_same(img2 * img2, win) - mu2 * mu2
    s12 = _filter2_same(img1 * img2, win) - mu1 * mu2
    smap = ((2 * mu1 * mu2 + c1) * (2 * s12 + c2)) / (
        (mu1 * mu1 + mu2 * mu2 + c1) * (s1 + s2 + c2))
    return smap, s1, s2


def q_e(fused, s1, s2):
    """Edge-weighted fusion quality in [0,1]-ish range, higher better.

    Local structural similarity between the fused image's edge map and each
    source's edge map, blended by the sources' local edge variance and
    weighted by local saliency.
    """
    f, a = _pair(fused, s1)
    _, b = _pair(fused, s2)
    f, a, b = (REPORT_SCALE * v for v in (f, a, b))
    # edge magnitude via horizontal/vertical difference operators
    kx = np.array([[1.0, 0.0, -1.0]] * 3)
    ky = kx.T
    ef = np.hypot(_filter2_same(f, kx), _filter2_same(f, ky))
    e1 = np.hypot(_filter2_same(a, kx), _filter2_same(a, ky))
    e2 = np.hypot(_filter2_same(b, kx), _filter2_same(b, ky))
    win = _gaussian_kernel()
    _, v1, v2 = _ssim_index_maps(e1, e2, win)
    flat = (v1 + v2) == 0
    v1 = v1 + flat * 0.5
    v2 = v2 + flat * 0.5
    lam = v1 / (v1 + v2)
    smap1, _, _ = _ssim_index_maps(ef, e1, win)
    smap2, _, _ = _ssim_index_maps(ef, e2, win)
    cw = np.maximum(v1, v2)
    cw = cw / cw.sum()
    return float(np.sum(cw * (lam * smap1 + (1.0 - lam) * smap2)))


# ---------------------------------------------------------------------------
# Q_CV: contrast-sensitivity weighted regional error (lower better)


def _minmax255(img):
    lo, hi = img.min(), img.max()
    if hi == lo:
        return np.zeros_like(img)
    return np.rint((img - lo) / (hi - lo) * 255.0)


def q_cv(fused, s1, s2):
    """Saliency-weighted perceptual error between fused and sources.

    Differences are filtered by a band-pass contrast sensitivity function in
    the frequency domain, squared, and averaged over 16x16 regions whose
    weights come from the sources' pooled gradient magnitude.  Lower is
    better; identical inputs give 0.
    """
    f, a = _pair(fused, s1)
    _, b = _pair(fused, s2)
    a = _minmax255(a)
    b = _minmax255(b)
    f = _minmax255(f)
    kx = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
    ky = kx.T
    g1 = np.hypot(_filter2_same(a, kx), _filter2_same(a, ky))
    g2 = np.hypot(_filter2_same(b, kx), _filter2_same(b, ky))
    lam1 = _block_reduce(g1 ** 5, 16, np.sum)
    lam2 = _block_reduce(g2 ** 5, 16, np.sum)
    total = (lam1 + lam2).sum()
    if total == 0:
        return 0.0
    h, w = f.shape
    # band-pass contrast sensitivity on a centered frequency grid
    u = np.linspace(-0.5, 0.5, h)[:, None] * (w / 8.0)
    v = np.linspace(-0.5, 0.5, w)[None, :] * (h / 8.0)
    r = np.hypot(np.broadcast_to(u, (h, w)), np.broadcast_to(v, (h, w)))
    theta_m = 2.6 * (0.0192 + 0.144 * r) * np.exp(-((0.144 * r) ** 1.1))

    def filtered(diff):
        spec = np.fft.fftshift(np.fft.fft2(diff)) * theta_m
        return np.real(np.fft.ifft2(np.fft.ifftshift(spec)))

    d1 = _block_reduce(filtered(a - f) ** 2, 16, np.mean)
    d2 = _block_reduce(filtered(b - f) ** 2, 16, np.mean)
    return float((lam1 * d1 + lam2 * d2).sum() / total)


# ---------------------------------------------------------------------------
# Q_P: phase-congruency feature agreement


def _lowpass_filter(rows, cols, cutoff=0.45, n=15):
    xr = ((np.arange(cols) - (cols - 1) / 2) / (cols - 1) if cols % 2
          else (np.arange(cols) - cols / 2) / cols)
    yr = ((np.arange(rows) - (rows - 1) / 2) / (rows - 1) if rows % 2
          else (np.arange(rows) - rows / 2) / rows)
    x, y = np.meshgrid(xr, yr)
    radius = np.hypot(x, y)
    return np.fft.ifftshift(1.0 / (1.0 + (radius / cutoff) ** (2 * n)))


def _phase_congruency(im, nscale=4, norient=6, min_wavelength=3, mult=2.1,
                      sigma_onf=0.55, d_theta_on_sigma=1.2, k=2.0,
                      cut_off=0.5, g=10.0):
    """Multi-scale log-Gabor phase congruency with covariance moments.

    Returns (pc, M, m): total phase congruency plus the maximum and minimum
    moments of the per-orientation covariance data.
    """
    eps = 1e-4
    rows, cols = im.shape
    imagefft = np.fft.fft2(im)
    theta_sigma = np.pi / norient / d_theta_on_sigma

    xr = ((np.arange(cols) - (cols - 1) / 2) / (cols - 1) if cols % 2
          else (np.arange(cols) - cols / 2) / cols)
    yr = ((np.arange(rows) - (rows - 1) / 2) / (rows - 1) if rows % 2
          else (np.arange(rows) - rows / 2) / rows)
    x, y = np.meshgrid(xr, yr)
    radius = np.hypot(x, y)
    radius[rows // 2, cols // 2] = 1.0  # avoid log(0) at the DC bin
    theta = np.arctan2(-y, x)
    radius = np.fft.ifftshift(radius)
    theta = np.fft.ifftshift(theta)
    sintheta, costheta = np.sin(theta), np.cos(theta)
    lp = _lowpass_filter(rows, cols)

    log_gabor = []
    for s in range(nscale):
        fo = 1.0 / (min_wavelength * mult ** s)
        lg = np.exp(-(np.log(radius / fo)) ** 2 / (2.0 * np.log(sigma_onf) ** 2))
        lg *= lp
        lg[0, 0] = 0.0
        log_gabor.append(lg)

    spreads = []
    for o in range(norient):
        angl = o * np.pi / norient
        ds = sintheta * np.cos(angl) - costheta * np.sin(angl)
        dc = costheta * np.cos(angl) + sintheta * np.sin(angl)
        dtheta = np.abs(np.arctan2(ds, dc))
        spreads.append(np.exp(-dtheta ** 2 / (2.0 * theta_sigma ** 2)))

    zero = np.zeros((rows, cols))
    total_energy = zero.copy()
    total_sum_an = zero.copy()
    covx2, covy2, covxy = zero.copy(), zero.copy(), zero.copy()

    for o in range(norient):
        angl = o * np.pi / norient
        eos, iffts = [], []
        sum_an, sum_e, sum_o = zero.copy(), zero.copy(), zero.copy()
        em_n = 0.0
        max_an = None
        for s in range(nscale):
            filt = log_gabor[s] * spreads[o]
            iffts.append(np.real(np.fft.ifft2(filt)) * np.sqrt(rows * cols))
            eo = np.fft.ifft2(imagefft * filt)
            eos.append(eo)
            an = np.abs(eo)
            sum_an += an
            sum_e += np.real(eo)
            sum_o += np.imag(eo)
            if s == 0:
                em_n = float(np.sum(filt ** 2))
                max_an = an
            else:
                max_an = np.maximum(max_an, an)
        x_energy = np.hypot(sum_e, sum_o) + eps
        mean_e = sum_e / x_energy
        mean_o = sum_o / x_energy
        energy = zero.copy()
        for eo in eos:
            e_r, e_i = np.real(eo), np.imag(eo)
            energy += e_r * mean_e + e_i * mean_o - np.abs(e_r * mean_o - e_i * mean_e)
        # Rayleigh noise estimate from the smallest-scale response
        median_e2n = float(np.median(np.abs(eos[0]) ** 2))
        mean_e2n = -median_e2n / np.log(0.5)
        noise_power = mean_e2n / em_n
        est_sum_an2 = np.zeros_like(zero)
        for f in iffts:
            est_sum_an2 += f ** 2
        est_sum_aiaj = np.zeros_like(zero)
        for si in range(nscale - 1):
            for sj in range(si + 1, nscale):
                est_sum_aiaj += iffts[si] * iffts[sj]
        est_noise_energy2 = (2.0 * noise_power * est_sum_an2.sum()
                             + 4.0 * noise_power * est_sum_aiaj.sum())
        tau = np.sqrt(est_noise_energy2 / 2.0)
        est_noise_energy = tau * np.sqrt(np.pi / 2.0)
        est_noise_sigma = np.sqrt((2.0 - np.pi / 2.0) * tau ** 2)
        t = (est_noise_energy + k * est_noise_sigma) / 1.7
        energy = np.maximum(energy - t, 0.0)
        width = sum_an / (max_an + eps) / nscale
        weight = 1.0 / (1.0 + np.exp((cut_off - width) * g))
        energy_w = weight * energy
        total_sum_an += sum_an
        total_energy += energy_w
        pc_o = np.divide(energy_w, sum_an,
                         out=np.zeros_like(zero), where=sum_an > 0)
        covx = pc_o * np.cos(angl)
        covy = pc_o * np.sin(angl)
        covx2 += covx ** 2
        covy2 += covy ** 2
        covxy += covx * covy

    pc = total_energy / (total_sum_an + eps)
    covx2 /= norient / 2.0
    covy2 /= norient / 2.0
    covxy /= norient
    denom = np.hypot(covxy, covx2 - covy2) + eps
    big_m = (covy2 + covx2 + denom) / 2.0
    small_m = (covy2 + covx2 - denom) / 2.0
    return pc, big_m, small_m


def _masked_correlation(f1, f2, fmax, ff, m1, m2, m3):
    win = _gaussian_kernel()
    c = 1e-4
    a1 = m1 * f1
    a2 = m2 * f2
    amax = m3 * fmax
    mu1 = _filter2_same(a1, win)
    mu2 = _filter2_same(a2, win)
    mumax = _filter2_same(amax, win)
    muf = _filter2_same(ff, win)
    s1 = _filter2_same(a1 * a1, win) - mu1 * mu1
    s2 = _filter2_same(a2 * a2, win) - mu2 * mu2
    smax = _filter2_same(amax * amax, win) - mumax * mumax
    sf = _filter2_same(ff * ff, win) - muf * muf
    s1f = _filter2_same(a1 * ff, win) - mu1 * muf
    s2f = _filter2_same(a2 * ff, win) - mu2 * muf
    smaxf = _filter2_same(amax * ff, win) - mumax * muf
    res1 = np.where(m1, (s1f + c) / (np.sqrt(np.abs(s1 * sf)) + c), 0.0)
    res2 = np.where(m2, (s2f + c) / (np.sqrt(np.abs(s2 * sf)) + c), 0.0)
    res3 = np.where(m3, (smaxf + c) / (np.sqrt(np.abs(smax * sf)) + c), 0.0)
    result = np.maximum(np.maximum(res1, res2), res3)
    return float(result.sum() / m3.sum())


def q_p(fused, s1, s2):
    """Phase-congruency agreement between the fused image and its sources.

    Products of masked correlation coefficients over the phase congruency
    map and its two covariance moments; images without any phase features
    (for example constants) score 0 by convention.
    """
    f, a = _pair(fused, s1)
    _, b = _pair(fused, s2)
    f, a, b = (REPORT_SCALE * v for v in (f, a, b))
    fea_threshold = 0.1
    pc1, big1, small1 = _phase_congruency(a)
    pc2, big2, small2 = _phase_congruency(b)
    pcf, bigf, smallf = _phase_congruency(f)
    mask = pc1 > pc2
    pc_max = np.where(mask, pc1, pc2)
    big_max = np.where(mask, big1, big2)
    small_max = np.where(mask, small1, small2)
    m1 = pc1 > fea_threshold
    m2 = pc2 > fea_threshold
    m3 = pc_max > fea_threshold
    if not m3.any():
        return 0.0
    r_pc = _masked_correlation(pc1, pc2, pc_max, pcf, m1, m2, m3)
    r_big = _masked_correlation(big1, big2, big_max, bigf, m1, m2, m3)
    r_small = _masked_correlation(small1, small2, small_max, smallf, m1, m2, m3)
    return float(r_pc * r_big * r_small)


# ---------------------------------------------------------------------------
# batteries and ranking


def metric_battery(fused, s1, s2, gt=None):
    """All metrics for one fused image; reference metrics need ground truth."""
    out = {
        "q_e": q_e(fused, s1, s2),
        "q_cv": q_cv(fused, s1, s2),
        "q_p": q_p(fused, s1, s2),
        "sd": sd(fused),
    }
    if gt is not None:
        out["psnr"] = psnr(fused, gt)
        out["mse"] = mse(fused, gt)
        out["ssim"] = ssim_metric(fused, gt)
    return out


@dataclass
class MetricReport:
    """Per-method metric values with ranks and Borda points.

    For each metric, rank 1 is best in that metric's direction and earns N
    points among N methods; ties share the mean of their ranks' points.
    """
    methods: list
    values: dict
    ranks: dict = field(default_factory=dict)
    points: dict = field(default_factory=dict)
    borda: dict = field(default_factory=dict)

    def to_dict(self):
        return {"methods": self.methods, "values": self.values,
                "ranks": self.ranks, "points": self.points,
                "borda": self.borda}


def borda(values, directions=None):
    """Rank methods per metric and aggregate Borda points.

    `values` maps metric name to {method: value}; `directions` maps metric
    name to "higher" or "lower" (defaults from METRIC_DIRECTIONS).  Returns
    a MetricReport.  Total points over all methods are conserved at
    M*N*(N+1)/2 for M metrics and N methods.
    """
    if not values:
        raise ValueError("no metric values given")
    metric_names = list(values.keys())
    methods = list(values[metric_names[0]].keys())
    if len(methods) < 2:
        raise ValueError("Borda ranking needs at least 2 methods")
    directions = directions or {}
    n = len(methods)
    ranks, points = {}, {}
    totals = {m: 0.0 for m in methods}
    for metric in metric_names:
        row = values[metric]
        missing = [m for m in methods if m not in row]
        if missing or set(row) != set(methods):
            raise ValueError(f"metric '{metric}' does not cover all methods")
        if metric in directions:
            direction = directions[metric]
        elif metric in METRIC_DIRECTIONS:
            direction = METRIC_DIRECTIONS[metric]
        else:
            raise ValueError(
                f"no ranking direction known for metric '{metric}'; "
                "pass directions={...}")
        if direction not in ("higher", "lower"):
            raise ValueError(
                f"direction for '{metric}' must be 'higher' or 'lower', "
                f"got '{direction}'")
        vals = np.array([row[m] for m in methods], dtype=np.float64)
        keyed = vals if direction == "lower" else -vals
        r = rankdata(keyed, method="average")
        p = n - r + 1.0
        ranks[metric] = {m: float(r[i]) for i, m in enumerate(methods)}
        points[metric] = {m: float(p[i]) for i, m in enumerate(methods)}
        for i, m in enumerate(methods):
            totals[m] += float(p[i])
    return MetricReport(methods=methods, values=values, ranks=ranks,
                        points=points, borda=totals)
