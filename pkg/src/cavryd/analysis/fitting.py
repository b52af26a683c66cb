"""Levenberg-Marquardt least squares and the model fits built on it.

The engine works on generic ``model(x, params)`` callables.  The model-specific
fitters rescale abscissa and ordinate to order-one units before calling it and
transform the results (and covariance) back, so the forward-difference
Jacobian is well conditioned whatever the physical units.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

_EPS = np.finfo(float).eps


@dataclass
class FitResult:
    """Outcome of a least-squares fit.

    ``flags`` lists problems (``"singular"``, ``"max_iter"``,
    ``"degenerate"``, ...); any flag or ``converged == False`` makes the
    result non-authoritative.  ``info`` carries derived extras such as a lower
    bound on a lifetime that the data cannot pin down.
    """

    params: np.ndarray
    sigmas: np.ndarray
    rss: float
    converged: bool
    iterations: int
    names: tuple = ()
    covariance: np.ndarray | None = None
    flags: tuple = ()
    model: str = ""
    info: dict = field(default_factory=dict)

    @property
    def authoritative(self):
        return self.converged and not self.flags

    def _index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(name) from None

    def __getitem__(self, name):
        return float(self.params[self._index(name)])

    def sigma(self, name):
        return float(self.sigmas[self._index(name)])

    def to_dict(self):
        def clean(v):
            v = float(v)
            return v if math.isfinite(v) else str(v)

        return {
            "model": self.model,
            "names": list(self.names),
            "params": [clean(v) for v in self.params],
            "sigmas": [clean(v) for v in self.sigmas],
            "covariance": None if self.covariance is None else [[clean(v) for v in row] for row in self.covariance],
            "rss": clean(self.rss),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "flags": list(self.flags),
            "info": {k: clean(v) if isinstance(v, (int, float, np.floating)) else v for k, v in self.info.items()},
        }


def write_fit_json(path, result, seed=None, **extra):
    doc = result.to_dict()
    doc["seed"] = seed
    doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jacobian(fun, theta, f0, free):
    jac = np.empty((f0.size, int(free.sum())))
    for col, j in enumerate(np.flatnonzero(free)):
        h = math.sqrt(_EPS) * max(abs(theta[j]), 1.0)
        step = theta.copy()
        step[j] += h
        h = step[j] - theta[j]
        jac[:, col] = (fun(step) - f0) / h
    return jac


def fit_lm(model, x, y, init, bounds=None, sigma=None, fixed=None, max_iter=200, ftol=1e-10,
           names=(), absolute_sigma=False):
    """Minimise sum(((y - model(x, p)) / sigma)^2) by Levenberg-Marquardt.

    Parameters
    ----------
    model : callable
        ``model(x, p) -> array`` with ``p`` a float vector.
    init : array_like
        Starting point; must lie within ``bounds``.
    bounds : (lower, upper), optional
        Box constraints, enforced by projecting each trial step.
    fixed : array_like of bool, optional
        Parameters held at their initial value.

    The damping starts at 1e-3, is multiplied by 10 on a rejected step and
    divided by 10 on an accepted one, and scales with ``diag(J^T J)``.
    Iteration stops when an accepted step lowers the cost by less than
    ``ftol`` relative, when the residual vanishes to rounding, or after
    ``max_iter`` Jacobian evaluations.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    theta = np.array(init, dtype=float)
    p = theta.size
    free = np.ones(p, bool) if fixed is None else ~np.asarray(fixed, bool)
    n_free = int(free.sum())
    if y.size < n_free:
        raise ValueError(f"{y.size} data points cannot constrain {n_free} parameters")
    w = np.ones_like(y) if sigma is None else 1.0 / np.asarray(sigma, dtype=float)
    if bounds is None:
        lo, hi = np.full(p, -np.inf), np.full(p, np.inf)
    else:
        lo = np.broadcast_to(np.asarray(bounds[0], dtype=float), (p,)).copy()
        hi = np.broadcast_to(np.asarray(bounds[1], dtype=float), (p,)).copy()
    if np.any(theta < lo) or np.any(theta > hi):
        raise ValueError("initial parameters outside bounds")

    def fun(th):
        return w * np.asarray(model(x, th), dtype=float)

    wy = w * y
    f = fun(theta)
    r = wy - f
    rss = float(r @ r)
    # residual indistinguishable from rounding of the data itself
    floor = (8 * _EPS) ** 2 * max(float(wy @ wy), np.finfo(float).tiny)

    lam = 1e-3
    it = 0
    converged = rss <= floor
    flags = []
    jac = None
    while not converged and it < max_iter:
        it += 1
        jac = _jacobian(fun, theta, f, free)
        d = np.sqrt(np.einsum("ij,ij->j", jac, jac))
        d = np.where(d > 0, d, 1.0)
        accepted = False
        while True:
            a = np.vstack([jac, math.sqrt(lam) * np.diag(d)])
            b = np.concatenate([r, np.zeros(n_free)])
            delta = np.linalg.lstsq(a, b, rcond=None)[0]
            trial = theta.copy()
            trial[free] += delta
            np.clip(trial, lo, hi, out=trial)
            f_new = fun(trial)
            r_new = wy - f_new
            rss_new = float(r_new @ r_new)
            if np.isfinite(rss_new) and rss_new < rss:
                accepted = True
                lam = max(lam / 10.0, 1e-12)
                break
            lam *= 10.0
            if lam > 1e16:
                break
        if not accepted:
            # no step lowers the cost: numerically at a minimum
            converged = True
            break
        rel = (rss - rss_new) / rss
        theta, f, r, rss = trial, f_new, r_new, rss_new
        if rel < ftol or rss <= floor:
            converged = True
    if not converged:
        flags.append("max_iter")

    jac = _jacobian(fun, theta, f, free)
    cov_free, singular = _covariance(jac)
    dof = y.size - n_free
    if not absolute_sigma:
        cov_free = cov_free * (rss / dof if dof > 0 else 0.0)
    if singular:
        flags.append("singular")
    cov = np.zeros((p, p))
    cov[np.ix_(free, free)] = cov_free
    sig = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return FitResult(theta, sig, rss, converged, it, tuple(names), cov, tuple(flags), "lm")


def _covariance(jac):
    """(J^T J)^-1 via SVD; flags rank deficiency."""
    if jac.shape[1] == 0:
        return np.zeros((0, 0)), False
    u, s, vt = np.linalg.svd(jac, full_matrices=False)
    cutoff = max(jac.shape) * _EPS * s[0] if s.size and s[0] > 0 else 0.0
    singular = bool(s.size == 0 or s[-1] <= cutoff * 1e4)
    inv = np.where(s > cutoff, 1.0 / np.where(s > 0, s, 1.0) ** 2, 0.0)
    return (vt.T * inv) @ vt, singular


def _transform(result, public, jac_map, names, model, flags=(), info=None):
    """Map an internal-coordinate fit to public parameters with propagated covariance."""
    cov = jac_map @ result.covariance @ jac_map.T
    sig = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return FitResult(
        params=np.asarray(public, dtype=float),
        sigmas=sig,
        rss=result.rss,
        converged=result.converged,
        iterations=result.iterations,
        names=tuple(names),
        covariance=cov,
        flags=tuple(result.flags) + tuple(flags),
        model=model,
        info=info or {},
    )


# --------------------------------------------------------------------------
# damped cosine
# --------------------------------------------------------------------------

DAMPED_COSINE_NAMES = ("A", "t0", "tau", "omega", "phi")


def damped_cosine(t, amplitude, t0, tau, omega, phi):
    """A (1 - exp(-(t - t0)/tau) cos(2 pi omega (t - t0) + phi)); ``omega`` in Hz."""
    s = np.asarray(t, dtype=float) - t0
    decay = np.exp(-s / tau) if math.isfinite(tau) else 1.0
    return amplitude * (1.0 - decay * np.cos(2.0 * math.pi * omega * s + phi))


def _dominant_frequency(t, y):
    n = t.size
    dt = (t[-1] - t[0]) / (n - 1)
    pad = 16 * int(2 ** math.ceil(math.log2(n)))
    power = np.abs(np.fft.rfft(y - y.mean(), pad))
    freqs = np.fft.rfftfreq(pad, dt)
    power[0] = 0.0
    return float(freqs[int(np.argmax(power))])


def fit_damped_cosine(t, p, init=None, fixed=None, sigma=None):
    """Fit ``A(1 - exp(-(t-t0)/tau) cos(2 pi omega (t-t0) + phi))``.

    ``init`` and ``fixed`` are dicts keyed by ``A, t0, tau, omega, phi``
    (``fixed`` values are held constant).  Internally the decay is fitted as a
    rate ``1/tau`` so undamped data converge to a finite optimum; when the
    data cannot bound the decay, ``tau`` is reported as ``inf`` or beyond the
    scan and ``info['tau_lower_bound']`` gives a conservative lower bound.
    """
    t = np.asarray(t, dtype=float)
    p = np.asarray(p, dtype=float)
    if t.size < 6 or t.size != p.size:
        raise ValueError("need at least 6 (t, p) points")
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")
    fixed = dict(fixed or {})
    span = float(t[-1] - t[0])
    ys = float(np.max(np.abs(p))) or 1.0
    if np.ptp(p) <= 1e-12 * ys:
        nan = np.full(5, np.nan)
        return FitResult(
            params=np.array([float(p.mean()), np.nan, np.nan, np.nan, np.nan]),
            sigmas=nan, rss=0.0, converged=False, iterations=0, names=DAMPED_COSINE_NAMES,
            covariance=None, flags=("degenerate",), model="damped_cosine",
        )

    guess = {"A": float(p.mean()), "t0": 0.0, "tau": math.inf, "omega": _dominant_frequency(t, p), "phi": 0.0}
    guess.update(init or {})
    guess.update(fixed)
    xs = t / span
    wsig = None if sigma is None else np.asarray(sigma, dtype=float) / ys

    def model(x, q):
        a, t0, rate, om, ph = q
        s = x - t0
        return a * (1.0 - np.exp(-rate * s) * np.cos(2.0 * math.pi * om * s + ph))

    is_fixed = np.array([n in fixed for n in DAMPED_COSINE_NAMES])
    rate0 = 0.0 if not math.isfinite(guess["tau"]) else span / guess["tau"]
    base = np.array([guess["A"] / ys, guess["t0"] / span, rate0, guess["omega"] * span, guess["phi"]])
    lower = np.array([-np.inf, -np.inf, 0.0, 0.0, -np.inf])
    starts = [base] if "phi" in fixed or (init and "phi" in init) else [
        base + np.array([0, 0, 0, 0, dp]) for dp in (0.0, 0.5 * math.pi, math.pi, -0.5 * math.pi)
    ]
    best = None
    for q0 in starts:
        q0 = np.maximum(q0, lower)
        res = fit_lm(model, xs, p / ys, q0, bounds=(lower, np.inf), sigma=wsig, fixed=is_fixed)
        if best is None or res.rss < best.rss:
            best = res
    a, t0, rate, om, ph = best.params
    ph = (ph + math.pi) % (2.0 * math.pi) - math.pi
    rate_sigma = best.sigmas[2]
    tau = span / rate if rate > 0 else math.inf
    public = [a * ys, t0 * span, tau, om / span, ph]
    # d(public)/d(internal)
    jm = np.diag([ys, span, 0.0, 1.0 / span, 1.0])
    jm[2, 2] = -span / rate**2 if rate > 0 else 0.0
    flags, info = [], {}
    if not tau < span:
        info["tau_lower_bound"] = span / (rate + 2.0 * rate_sigma) if rate + 2.0 * rate_sigma > 0 else math.inf
    if om < 1.0:
        flags.append("degenerate")
    res = _transform(best, public, jm, DAMPED_COSINE_NAMES, "damped_cosine", flags, info)
    # rss back in data units
    res.rss = best.rss * (ys**2 if sigma is None else 1.0)
    return res


# --------------------------------------------------------------------------
# Lorentzian sums
# --------------------------------------------------------------------------

def lorentzian_sum(x, background, centers, widths, amplitudes):
    x = np.asarray(x, dtype=float)[:, None]
    c = np.asarray(centers, dtype=float)
    return background + np.sum(np.asarray(amplitudes) / (1.0 + 4.0 * (x - c) ** 2 / np.asarray(widths) ** 2), axis=1)


def lorentzian_names(n_peaks):
    return (
        ("background",)
        + tuple(f"center_{k}" for k in range(n_peaks))
        + tuple(f"width_{k}" for k in range(n_peaks))
        + tuple(f"amp_{k}" for k in range(n_peaks))
    )


def _auto_peaks(x, y, n_peaks):
    from scipy.signal import find_peaks

    idx, props = find_peaks(y, prominence=0)
    if idx.size == 0:
        idx = np.array([int(np.argmax(y))])
        prom = np.array([np.ptp(y)])
    else:
        prom = props["prominences"]
    order = np.argsort(prom)[::-1][:n_peaks]
    idx = np.sort(idx[order])
    bg = float(np.percentile(y, 5))
    centers = list(x[idx])
    amps = list(np.maximum(y[idx] - bg, 1e-12))
    # half-maximum width of the tallest peak
    top = idx[int(np.argmax(y[idx]))]
    half = bg + 0.5 * (y[top] - bg)
    lft = top
    while lft > 0 and y[lft] > half:
        lft -= 1
    rgt = top
    while rgt < y.size - 1 and y[rgt] > half:
        rgt += 1
    width = max(float(x[rgt] - x[lft]), 2 * float(np.min(np.diff(x))))
    while len(centers) < n_peaks:
        centers.append(centers[-1] + 2 * width)
        amps.append(amps[-1] * 0.1)
    return {"background": bg, "centers": centers, "widths": [width] * n_peaks, "amplitudes": amps}


def fit_lorentzian_sum(x, y, n_peaks, init=None, sigma=None):
    """Fit ``background + sum_k A_k / (1 + 4 (x - c_k)^2 / w_k^2)``.

    Peak centres are parameterised as the first centre plus cumulative
    positive gaps (``exp`` of a free variable), which fixes their order.
    ``init`` is a dict with ``background`` and ``centers``, ``widths``,
    ``amplitudes`` sequences (centres ascending); when omitted, the
    ``n_peaks`` most prominent local maxima seed the fit.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if n_peaks < 1:
        raise ValueError("n_peaks must be >= 1")
    if x.size < 3 * n_peaks + 1:
        raise ValueError("not enough points for the requested number of peaks")
    init = dict(init) if init is not None else _auto_peaks(x, y, n_peaks)
    centers = np.asarray(init["centers"], dtype=float)
    if centers.size != n_peaks or np.any(np.diff(centers) <= 0):
        raise ValueError("init centers must be strictly ascending with one per peak")
    widths = np.asarray(init["widths"], dtype=float)
    amps = np.asarray(init["amplitudes"], dtype=float)

    x0 = float(centers[0])
    xsc = float(np.median(widths))
    ysc = float(np.max(np.abs(y))) or 1.0
    u = (x - x0) / xsc

    def model(xx, q):
        bg = q[0]
        c = q[1] + np.concatenate([[0.0], np.cumsum(np.exp(q[2:1 + n_peaks]))])
        wd = q[1 + n_peaks:1 + 2 * n_peaks]
        am = q[1 + 2 * n_peaks:]
        return bg + np.sum(am / (1.0 + 4.0 * (xx[:, None] - c) ** 2 / wd**2), axis=1)

    q0 = np.concatenate([
        [init.get("background", 0.0) / ysc, (centers[0] - x0) / xsc],
        np.log(np.diff(centers) / xsc),
        widths / xsc,
        amps / ysc,
    ])
    lower = np.concatenate([[-np.inf, -np.inf], np.full(n_peaks - 1, -np.inf), np.full(n_peaks, 1e-9), np.zeros(n_peaks)])
    q0 = np.maximum(q0, lower)
    wsig = None if sigma is None else np.asarray(sigma, dtype=float) / ysc
    res = fit_lm(model, u, y / ysc, q0, bounds=(lower, np.inf), sigma=wsig)

    q = res.params
    gaps = np.exp(q[2:1 + n_peaks])
    c_int = q[1] + np.concatenate([[0.0], np.cumsum(gaps)])
    public = np.concatenate([[q[0] * ysc], x0 + xsc * c_int, xsc * q[1 + n_peaks:1 + 2 * n_peaks], ysc * q[1 + 2 * n_peaks:]])
    p = q.size
    jm = np.zeros((p, p))
    jm[0, 0] = ysc
    for k in range(n_peaks):
        jm[1 + k, 1] = xsc
        for m in range(k):
            jm[1 + k, 2 + m] = xsc * gaps[m]
    for k in range(n_peaks):
        jm[1 + n_peaks + k, 1 + n_peaks + k] = xsc
        jm[1 + 2 * n_peaks + k, 1 + 2 * n_peaks + k] = ysc
    out = _transform(res, public, jm, lorentzian_names(n_peaks), "lorentzian_sum")
    out.rss = res.rss * (ysc**2 if sigma is None else 1.0)
    return out


# --------------------------------------------------------------------------
# exponential decay
# --------------------------------------------------------------------------

def fit_exponential(t, y, init=None, sigma=None, absolute_sigma=False):
    """Fit ``A exp(-t / T)``; returns parameters ``(A, T)``.

    Data must be strictly positive.  Constant data give ``T = inf`` with the
    ``unbounded`` flag and a lower bound in ``info``.  With ``absolute_sigma``
    the covariance uses ``sigma`` as known errors instead of rescaling it by
    the reduced chi-square.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 3 or t.size != y.size:
        raise ValueError("need at least 3 points")
    if np.any(y <= 0):
        raise ValueError("exponential fit needs strictly positive data")
    span = float(np.ptp(t)) or 1.0
    ysc = float(np.max(y))
    s = t / span
    if init is None:
        slope, icpt = np.polyfit(s, np.log(y / ysc), 1)
        q0 = np.array([math.exp(icpt), max(-slope, 0.0)])
    else:
        a0, t0 = init
        q0 = np.array([a0 / ysc, span / t0 if math.isfinite(t0) else 0.0])

    def model(x, q):
        return q[0] * np.exp(-q[1] * x)

    wsig = None if sigma is None else np.asarray(sigma, dtype=float) / ysc
    res = fit_lm(model, s, y / ysc, q0, bounds=([-np.inf, 0.0], np.inf), sigma=wsig,
                 absolute_sigma=absolute_sigma and sigma is not None)
    a, rate = res.params
    lifetime = span / rate if rate > 0 else math.inf
    jm = np.diag([ysc, -span / rate**2 if rate > 0 else 0.0])
    flags, info = [], {}
    if not math.isfinite(lifetime) or res.sigmas[1] >= rate:
        flags.append("unbounded")
        ub = rate + 2.0 * res.sigmas[1]
        info["lifetime_lower_bound"] = span / ub if ub > 0 else math.inf
    out = _transform(res, [a * ysc, lifetime], jm, ("A", "T"), "exponential", flags, info)
    out.rss = res.rss * (ysc**2 if sigma is None else 1.0)
    return out


def fit_survival_decay(t, fraction, n_atoms, reweight=3):
    """Lifetime fit to binomially sampled surviving fractions.

    The binomial variance ``p (1 - p) / n`` is evaluated on the fitted curve
    (floored at ``1 / n^2`` so points at p = 1 keep a finite weight) and the
    fit repeated ``reweight`` times; uncertainties use these known errors.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(fraction, dtype=float)
    if n_atoms < 1:
        raise ValueError("n_atoms must be >= 1")
    res = fit_exponential(t, y)
    for _ in range(reweight):
        if not math.isfinite(res["T"]):
            break
        m = np.clip(res["A"] * np.exp(-t / res["T"]), 0.0, 1.0)
        sigma = np.sqrt(np.maximum(m * (1.0 - m), 1.0 / n_atoms) / n_atoms)
        res = fit_exponential(t, y, init=(res["A"], res["T"]), sigma=sigma, absolute_sigma=True)
    res.model = "survival_decay"
    return res
