"""Single-atom detection statistics.

Three consecutive images per trap site give loading, imaging fidelity and
survival.  Classification rules used here:

* loading: occupancy in the first image;
* imaging error: the middle image disagrees with both neighbours, i.e. the
  patterns ``(1, 0, 1)`` and ``(0, 1, 0)``;
* loss between images 1 and 2: the pattern ``(1, 0, 0)``.  A false positive
  in image 1 on an empty site produces the same pattern, at the same rate as
  the false-positive flicker ``(0, 1, 0)``; that count is subtracted from both
  the loss count and the loaded count.

Photon-count histograms are modelled as a two-component Gaussian mixture with
free means and variances (camera gain noise broadens the Poisson peaks).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr


def wilson_interval(k, n, z=1.0):
    """Wilson score interval for ``k`` successes in ``n`` trials."""
    if n <= 0:
        return (0.0, 1.0)
    phat = k / n
    z2 = z * z
    denom = 1.0 + z2 / n
    centre = (phat + z2 / (2 * n)) / denom
    half = z * math.sqrt(max(phat * (1 - phat) / n + z2 / (4 * n * n), 0.0)) / denom
    return (max(centre - half, 0.0), min(centre + half, 1.0))


@dataclass(frozen=True)
class Proportion:
    """Binomial estimate ``k/n`` with Wilson uncertainties.

    ``extra_sigma`` is added in quadrature to the interval half-widths (used
    when a correction term carries its own counting noise).
    """

    k: float
    n: float
    extra_sigma: float = 0.0

    @property
    def value(self):
        return self.k / self.n if self.n > 0 else float("nan")

    def interval(self, z=1.0):
        lo, hi = wilson_interval(self.k, self.n, z)
        v = self.value
        if self.extra_sigma:
            e = z * self.extra_sigma
            lo = v - math.hypot(v - lo, e)
            hi = v + math.hypot(hi - v, e)
        return (max(lo, 0.0), min(hi, 1.0))

    @property
    def sigma(self):
        lo, hi = self.interval(1.0)
        return 0.5 * (hi - lo)

    def covers(self, truth, z=2.0):
        lo, hi = self.interval(z)
        return lo <= truth <= hi

    def to_dict(self):
        lo, hi = self.interval(1.96)
        return {"value": self.value, "sigma": self.sigma, "ci95": [lo, hi], "k": self.k, "n": self.n}


@dataclass(frozen=True)
class DetectionStats:
    loading_probability: Proportion
    imaging_fidelity: Proportion
    survival_probability: Proportion

    def to_dict(self):
        return {
            "loading_probability": self.loading_probability.to_dict(),
            "imaging_fidelity": self.imaging_fidelity.to_dict(),
            "survival_probability": self.survival_probability.to_dict(),
        }


def _as_records(records):
    rec = np.asarray(records, dtype=bool)
    if rec.ndim != 2 or rec.shape[1] != 3:
        raise ValueError("records must have shape (n, 3)")
    if rec.shape[0] == 0:
        raise ValueError("no records")
    return rec


def three_image_stats(records):
    """Loading, imaging fidelity and survival from ``(n, 3)`` occupancy booleans."""
    rec = _as_records(records)
    o1, o2, o3 = rec.T
    n = rec.shape[0]
    loaded = int(o1.sum())
    flicker = int(np.count_nonzero((o2 != o1) & (o2 != o3)))
    lost = int(np.count_nonzero(o1 & ~o2 & ~o3))
    false_pos = int(np.count_nonzero(~o1 & o2 & ~o3))

    n_loaded = max(loaded - false_pos, 0)
    n_lost = min(max(lost - false_pos, 0), n_loaded)
    extra = math.sqrt(false_pos) / n_loaded if n_loaded else 0.0
    return DetectionStats(
        loading_probability=Proportion(loaded, n),
        imaging_fidelity=Proportion(n - flicker, n),
        survival_probability=Proportion(n_loaded - n_lost, n_loaded, extra),
    )


# --------------------------------------------------------------------------
# synthetic data
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DetectionParams:
    loading: float = 0.52
    imaging_fidelity: float = 0.99988
    survival: float = 0.9988
    background_mean: float = 20.0
    atom_mean: float = 200.0

    def __post_init__(self):
        for name in ("loading", "imaging_fidelity", "survival"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


def synth_detection_data(params, n_records, seed=0):
    """Sample three-image occupancy records and the matching photon counts.

    True occupancy starts loaded with probability ``loading`` and survives
    each step between images with probability ``survival``.  Each image is
    misread independently with probability ``1 - imaging_fidelity``.  Counts
    are Poisson around ``atom_mean`` for a site read as occupied and around
    ``background_mean`` otherwise.
    """
    rng = np.random.default_rng(seed)
    flip = 1.0 - params.imaging_fidelity
    occ = np.empty((n_records, 3), dtype=bool)
    occ[:, 0] = rng.random(n_records) < params.loading
    occ[:, 1] = occ[:, 0] & (rng.random(n_records) < params.survival)
    occ[:, 2] = occ[:, 1] & (rng.random(n_records) < params.survival)
    observed = occ ^ (rng.random((n_records, 3)) < flip)
    means = np.where(observed, params.atom_mean, params.background_mean)
    counts = rng.poisson(means)
    return observed, counts


def survival_curve(times, lifetime, n_atoms, seed=0):
    """Binomially sampled surviving fraction after each hold time."""
    rng = np.random.default_rng(seed)
    p = np.exp(-np.asarray(times, dtype=float) / lifetime)
    return rng.binomial(n_atoms, p) / n_atoms


# --------------------------------------------------------------------------
# count histograms
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ThresholdResult:
    threshold: float
    fidelity: float
    unimodal: bool
    weights: tuple
    means: tuple
    sigmas: tuple

    @property
    def separation(self):
        """Ashman's D for the two fitted components."""
        return math.sqrt(2.0) * abs(self.means[1] - self.means[0]) / math.hypot(*self.sigmas)


def fit_gaussian_mixture(data, max_iter=500, tol=1e-10):
    """Two-component 1D Gaussian mixture by expectation-maximisation.

    Returns ``(weights, means, sigmas)`` with the component means ascending.
    """
    x = np.asarray(data, dtype=float)
    var_floor = 1.0 / 12.0
    lo, hi = np.percentile(x, [10, 90])
    mu = np.array([lo, hi], dtype=float)
    var = np.full(2, max(x.var() / 4.0, var_floor))
    wt = np.array([0.5, 0.5])
    prev = -np.inf
    for _ in range(max_iter):
        logp = -0.5 * (x[:, None] - mu) ** 2 / var - 0.5 * np.log(2 * np.pi * var) + np.log(wt)
        m = logp.max(axis=1, keepdims=True)
        like = np.exp(logp - m)
        tot = like.sum(axis=1, keepdims=True)
        resp = like / tot
        ll = float(np.sum(np.log(tot) + m))
        nk = resp.sum(axis=0)
        if np.any(nk < 1e-9):
            break
        wt = nk / x.size
        mu = (resp * x[:, None]).sum(axis=0) / nk
        var = np.maximum((resp * (x[:, None] - mu) ** 2).sum(axis=0) / nk, var_floor)
        if abs(ll - prev) <= tol * abs(ll):
            break
        prev = ll
    order = np.argsort(mu)
    return tuple(wt[order]), tuple(mu[order]), tuple(np.sqrt(var[order]))


def misclassification(threshold, weights, means, sigmas):
    """Error rate when counts above ``threshold`` are called 'atom'.

    Integer counts: the background component is misread when it exceeds the
    threshold, the atom component when it does not (half-count continuity
    correction).
    """
    t = np.asarray(threshold, dtype=float) + 0.5
    fp = ndtr((means[0] - t) / sigmas[0])
    fn = ndtr((t - means[1]) / sigmas[1])
    return weights[0] * fp + weights[1] * fn


def histogram_threshold(counts, min_separation=2.0):
    """Discrimination threshold and fidelity for a bimodal count histogram.

    The threshold minimises the estimated misclassification of the fitted
    mixture; fidelity is one minus that error.  If the components are not
    resolved (Ashman's D below ``min_separation``) the result is flagged
    ``unimodal``, the threshold is placed at the largest count and the
    fidelity is the chance level 0.5.
    """
    x = np.asarray(counts, dtype=float)
    if x.size < 100:
        raise ValueError("need at least 100 counts for a histogram threshold")
    weights, means, sigmas = fit_gaussian_mixture(x)
    d = math.sqrt(2.0) * (means[1] - means[0]) / math.hypot(*sigmas)
    if d < min_separation:
        return ThresholdResult(float(x.max()), 0.5, True, weights, means, sigmas)
    cand = np.arange(math.floor(means[0]), math.ceil(means[1]) + 1)
    err = misclassification(cand, weights, means, sigmas)
    best = err.min()
    ties = cand[err <= best + 1e-15]
    thr = float(ties[len(ties) // 2])
    return ThresholdResult(thr, float(1.0 - best), False, weights, means, sigmas)
