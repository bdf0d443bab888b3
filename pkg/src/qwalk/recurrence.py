"""Pólya number, decay-exponent fits and recurrence verdicts for a return series.

The Pólya number of the measure-and-discard protocol is

    P = 1 - prod_{t >= 1} (1 - p_o(t)),

so the walk is recurrent (P = 1) exactly when sum p_o(t) diverges.  A finite
series gives the truncated product; the remainder is estimated from a power
law p_o(t) ~ C t^{-alpha} fitted to the late part of the series.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .errors import InsufficientPositivePoints
from .series import ReturnSeries

log = logging.getLogger(__name__)

EPSILON = 0.1            # half-width of the undecidable band around alpha = 1
LOCALISED_ALPHA = 0.2    # fitted exponents below this count as a constant term
LOCALISED_RATIO = 10.0   # tail-mean / power-law ratio that signals saturation
MIN_FIT_POINTS = 8
POSITIVE_FLOOR = 1e-20   # entries at or below this are treated as exact zeros
WINDOWS_PER_OCTAVE = 4
MC_BLOCK = 1024

VERDICTS = ("recurrent", "transient", "localised", "inconclusive")


@dataclass(frozen=True)
class DecayFit:
    """p_o(t) ~ C t^{-alpha} fitted on the window [t_min, t_max]."""

    alpha: float
    C: float
    residual: float
    half_width: float
    t_min: int
    t_max: int
    n_points: int
    density: float

    def predict(self, t) -> np.ndarray:
        return self.C * np.asarray(t, dtype=float) ** (-self.alpha)


def _as_series(series) -> ReturnSeries:
    if isinstance(series, ReturnSeries):
        return series
    return ReturnSeries.synthetic(series)


def _default_window(T: int):
    return max(1, T // 4), T


def _effective_times(groups, alpha):
    """Time at which t^{-alpha} equals its mean over each group of times."""
    out = np.empty(len(groups))
    for i, t in enumerate(groups):
        if abs(alpha) < 1e-9:
            out[i] = np.exp(np.mean(np.log(t)))
        else:
            out[i] = np.mean(t ** (-alpha)) ** (-1.0 / alpha)
    return out


def fit_decay_exponent(series, window: Optional[Sequence[int]] = None) -> DecayFit:
    """Fit a power law to the window of a return series.

    The positive entries of the window are averaged over log-spaced
    sub-windows (four per octave) to smooth oscillations.  Each mean is placed
    at the time where t^{-alpha} attains its sub-window average, which is
    solved self-consistently, so an exact power law is recovered exactly.
    Zero entries (e.g. odd times of a 1-D walk) are left out of the fit; the
    fraction of positive entries is returned as ``density``.

    Parameters
    ----------
    series : ReturnSeries or array_like
    window : (t_min, t_max), optional
        Defaults to [T/4, T].

    Returns
    -------
    DecayFit
        ``half_width`` is the 95 % confidence half-width of the slope.

    Raises
    ------
    InsufficientPositivePoints
        Fewer than 8 positive entries in the window.
    """
    s = _as_series(series)
    T = s.steps
    t_min, t_max = _default_window(T) if window is None else (int(window[0]), int(window[1]))
    t_min, t_max = max(t_min, 1), min(t_max, T)
    if t_max < t_min:
        raise InsufficientPositivePoints(f"empty fit window [{t_min}, {t_max}]")
    t = np.arange(t_min, t_max + 1)
    p = s.p[t_min:t_max + 1]
    pos = p > POSITIVE_FLOOR
    if pos.sum() < MIN_FIT_POINTS:
        raise InsufficientPositivePoints(
            f"only {int(pos.sum())} positive points in [{t_min}, {t_max}], need {MIN_FIT_POINTS}")
    t, p = t[pos].astype(float), p[pos]
    density = pos.mean()

    n_win = max(1, int(np.ceil(WINDOWS_PER_OCTAVE * np.log2(t_max / t_min))))
    edges = np.geomspace(t_min, t_max + 1, n_win + 1)
    which = np.clip(np.searchsorted(edges, t, side="right") - 1, 0, n_win - 1)
    groups, means = [], []
    for w in range(n_win):
        sel = which == w
        if sel.any():
            groups.append(t[sel])
            means.append(p[sel].mean())
    means = np.array(means)
    if len(groups) < 3:
        # too few windows for a meaningful regression: fall back to raw points
        groups = [np.array([x]) for x in t]
        means = p
    y = np.log(means)

    alpha = 0.0
    for _ in range(100):
        x = np.log(_effective_times(groups, alpha))
        res = stats.linregress(x, y)
        new = -res.slope
        if abs(new - alpha) < 1e-13:
            alpha = new
            break
        alpha = new
    x = np.log(_effective_times(groups, alpha))
    res = stats.linregress(x, y)
    alpha = -res.slope
    resid = y - (res.intercept + res.slope * x)
    n = len(x)
    if n > 2:
        half = float(stats.t.ppf(0.975, n - 2) * res.stderr)
    else:
        half = float("inf")
    return DecayFit(alpha=float(alpha), C=float(np.exp(res.intercept)),
                    residual=float(np.sqrt(np.mean(resid ** 2))), half_width=half,
                    t_min=t_min, t_max=t_max, n_points=int(pos.sum()), density=float(density))


def _spectral_verdict(spectral) -> Optional[str]:
    """Verdict implied by a spectral prediction (ExponentPrediction, number or 'localised')."""
    if spectral is None:
        return None
    if isinstance(spectral, str):
        if spectral == "localised":
            return "localised"
        spectral = float(spectral)
    if hasattr(spectral, "localised"):
        if spectral.localised:
            return "localised"
        spectral = spectral.exponent
    exp = float(spectral)
    if exp == 0.0:
        return "localised"
    return "recurrent" if exp <= 1.0 else "transient"


def _spectral_exponent(spectral):
    if spectral is None:
        return None
    if hasattr(spectral, "localised"):
        return "localised" if spectral.localised else float(spectral.exponent)
    if isinstance(spectral, str):
        return spectral
    return float(spectral)


@dataclass(frozen=True)
class Classification:
    verdict: str
    fit: Optional[DecayFit]
    fit_verdict: Optional[str]
    spectral_verdict: Optional[str]
    spectral_exponent: object = None
    reason: str = ""


def _fit_verdict(s: ReturnSeries, fit: DecayFit) -> str:
    T = s.steps
    q0 = max(1, T - T // 4)
    tail = s.p[q0:T + 1]
    tail_mean = float(tail.mean()) if tail.size else 0.0
    model = float(np.mean(fit.density * fit.predict(np.arange(q0, T + 1)))) if tail.size else 0.0
    if tail_mean > 0 and (fit.alpha < LOCALISED_ALPHA or tail_mean > LOCALISED_RATIO * model):
        return "localised"
    if fit.alpha < 1 - EPSILON:
        return "recurrent"
    if fit.alpha > 1 + EPSILON:
        return "transient"
    return "inconclusive"


def classify(series, spectral=None, window=None) -> Classification:
    """Recurrent / transient / localised verdict for a return series.

    The fitted exponent decides on its own unless it falls within 0.1 of 1,
    where the spectral prediction (if given) breaks the tie.  A flat band in
    the spectral prediction forces "localised".  When fit and spectrum
    disagree the verdict is "inconclusive" and both are reported.
    """
    s = _as_series(series)
    spec_v = _spectral_verdict(spectral)
    spec_e = _spectral_exponent(spectral)
    try:
        fit = fit_decay_exponent(s, window)
    except InsufficientPositivePoints as exc:
        if spec_v is not None:
            return Classification(spec_v, None, None, spec_v, spec_e, f"no fit ({exc}); spectral")
        return Classification("inconclusive", None, None, None, None, str(exc))
    fit_v = _fit_verdict(s, fit)
    if spec_v is None:
        return Classification(fit_v, fit, fit_v, None, None, "fit only")
    if spec_v == "localised":
        return Classification("localised", fit, fit_v, spec_v, spec_e, "flat band with non-zero weight")
    if fit_v == "inconclusive":
        return Classification(spec_v, fit, fit_v, spec_v, spec_e, "fit near alpha = 1; spectral tie-break")
    if fit_v == spec_v:
        return Classification(fit_v, fit, fit_v, spec_v, spec_e, "fit and spectrum agree")
    return Classification("inconclusive", fit, fit_v, spec_v, spec_e,
                          f"fit says {fit_v}, spectrum says {spec_v}")


@dataclass(frozen=True)
class PolyaEstimate:
    """Pólya number estimate.

    ``truncated`` is 1 - prod_{t=1}^{T} (1 - p_o(t)), a lower bound on P.
    ``P`` adds the extrapolated tail for transient walks and is 1 for
    recurrent or localised ones.  ``P_error`` bounds the tail contribution's
    uncertainty (linearisation, sum-to-integral and exponent uncertainty).
    """

    P: float
    verdict: str
    truncated: float
    log_product: float
    tail_policy: str
    tail_C: Optional[float]
    tail_alpha: Optional[float]
    tail_sum: float
    tail_factor: float
    tail_error: float
    P_error: float
    alpha: Optional[float]
    alpha_half_width: Optional[float]
    steps: int
    notes: tuple = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return asdict(self)


def log_truncated_product(p) -> float:
    """sum_{t>=1} log(1 - p_o(t)); -inf if some p_o(t) = 1."""
    p = np.asarray(p, dtype=float)[1:]
    with np.errstate(divide="ignore"):
        return float(np.sum(np.log1p(-p)))


def _tail(fit: DecayFit, T: int, alpha: float) -> float:
    return fit.density * fit.C * T ** (1 - alpha) / (alpha - 1)


def polya_number(series, tail_policy: str = "power_law_extrapolation", spectral=None,
                 window=None) -> PolyaEstimate:
    """Pólya number from a finite return series.

    The truncated product is accumulated in log space (log1p), so it never
    underflows.  For a transient verdict with ``power_law_extrapolation`` the
    product is multiplied by exp(-rho C T^{1-alpha} / (alpha - 1)), where
    rho is the fraction of non-zero entries in the fit window.  Recurrent
    and localised verdicts report P = 1.

    Parameters
    ----------
    series : ReturnSeries or array_like
    tail_policy : {"none", "power_law_extrapolation"}
    spectral : ExponentPrediction, float or "localised", optional
        Spectral prediction used to settle fits close to alpha = 1.
    window : (t_min, t_max), optional
    """
    if tail_policy not in ("none", "power_law_extrapolation"):
        raise ValueError(f"unknown tail policy {tail_policy!r}")
    s = _as_series(series)
    T = s.steps
    log_prod = log_truncated_product(s.p)
    truncated = float(-np.expm1(log_prod))
    notes = []
    cls = classify(s, spectral, window)
    fit = cls.fit
    if cls.reason:
        notes.append(cls.reason)
    if s.p.size > 1 and np.any(s.p[1:] >= 1.0):
        cls = Classification("recurrent", fit, None, None, None, "p_o(t) = 1 for some t >= 1")
        notes.append(cls.reason)

    alpha = None if fit is None else fit.alpha
    half = None if fit is None else fit.half_width
    tail_C = tail_a = None
    tail_sum, tail_err, P_err = 0.0, 0.0, 0.0
    verdict = cls.verdict
    if verdict in ("recurrent", "localised"):
        P = 1.0
    elif verdict == "transient" and tail_policy == "power_law_extrapolation" and fit is not None \
            and fit.alpha > 1:
        tail_C, tail_a = fit.C, fit.alpha
        tail_sum = _tail(fit, T, fit.alpha)
        # log(1 - p) = -p - p^2/2 - ...; bound on the dropped terms
        p_T = min(fit.C * T ** -fit.alpha, 0.5)
        lin_err = fit.density * fit.C ** 2 * T ** (1 - 2 * fit.alpha) / (
            (2 * fit.alpha - 1) * 2 * (1 - p_T))
        # sum versus integral
        grid_err = fit.density * fit.C * T ** -fit.alpha
        spread = 0.0
        for a in (fit.alpha - fit.half_width, fit.alpha + fit.half_width):
            if a > 1:
                spread = max(spread, abs(_tail(fit, T, a) - tail_sum))
            else:
                spread = np.inf
        tail_err = lin_err + grid_err + spread
        P = float(-np.expm1(log_prod - tail_sum))
        P_err = float(np.exp(log_prod - tail_sum) * np.expm1(tail_err)) if np.isfinite(tail_err) \
            else float(1.0 - P)
    else:
        P = truncated
        if verdict == "inconclusive":
            notes.append("verdict inconclusive: P is the truncated lower bound")
    P = float(min(max(P, 0.0), 1.0))
    return PolyaEstimate(P=P, verdict=verdict, truncated=truncated, log_product=log_prod,
                         tail_policy=tail_policy, tail_C=tail_C, tail_alpha=tail_a,
                         tail_sum=float(tail_sum), tail_factor=float(np.exp(-tail_sum)),
                         tail_error=float(tail_err), P_error=float(P_err), alpha=alpha,
                         alpha_half_width=half, steps=T, notes=tuple(notes))


@dataclass(frozen=True)
class MonteCarloEstimate:
    P_hat: float
    stderr: float
    records: int
    successes: int
    seed: int
    steps: int

    def to_dict(self) -> dict:
        return asdict(self)


def _mc_block(seed: int, block: int, n: int, p: np.ndarray) -> int:
    rng = np.random.Generator(np.random.Philox(key=seed).jumped(block))
    u = rng.random((n, p.size))
    return int(np.count_nonzero(np.any(u < p, axis=1)))


def monte_carlo_polya(series, records: int, seed: int, threads=None) -> MonteCarloEstimate:
    """Simulate the measure-and-discard protocol for ``records`` independent runs.

    Each run draws Bernoulli(p_o(t)) for t = 1..T and succeeds on the first
    success.  Runs are grouped in blocks of 1024; block b uses the Philox
    stream with key ``seed`` advanced by b jumps, so the result depends only
    on (seed, records, series) and not on the thread count.
    """
    from .fourier import resolve_threads

    if records < 1:
        raise ValueError("records must be at least 1")
    s = _as_series(series)
    p = s.p[1:]
    p = p[p > 0]
    sizes = [min(MC_BLOCK, records - b * MC_BLOCK) for b in range((records + MC_BLOCK - 1) // MC_BLOCK)]
    if p.size == 0:
        hits = 0
    else:
        n_threads = resolve_threads(threads)
        if n_threads > 1:
            with ThreadPoolExecutor(n_threads) as pool:
                hits = sum(pool.map(lambda b: _mc_block(seed, b, sizes[b], p), range(len(sizes))))
        else:
            hits = sum(_mc_block(seed, b, n, p) for b, n in enumerate(sizes))
    P_hat = hits / records
    return MonteCarloEstimate(P_hat=float(P_hat), stderr=float(np.sqrt(P_hat * (1 - P_hat) / records)),
                              records=int(records), successes=int(hits), seed=int(seed),
                              steps=s.steps)
