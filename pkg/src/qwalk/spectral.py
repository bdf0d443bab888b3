"""Stationary-phase diagnostics for the eigenphases omega_j(k).

The return amplitude decays according to the stationary points of the bands
that the initial state overlaps with:

* a flat band (omega_j independent of k) gives a constant term: localisation;
* a line of stationary points in 2-D slows the amplitude to t^{-1/2};
* isolated stationary points with a Hessian of rank r give t^{-r/2}.

The probability p_o = |psi(0, t)|^2 decays with twice the amplitude exponent.

Gradients use the exact expression d omega_j / d k_a = -<v_j| E_a |v_j>,
where E_a is the diagonal matrix of the a-th shift coordinates.  Bands are
followed between grid points by maximal eigenvector overlap.
"""

from __future__ import annotations

import itertools
from collections import Counter
import logging
import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import BandDiscontinuity, NoFeatureSurvives
from .fourier import MomentumGrid, _u_tilde_batch, diagonalize, eigendecompose_grid, wrap_phase
from .walk import WalkSpec

log = logging.getLogger(__name__)

GRAD_TOL = 1e-8
FLAT_TOL = 1e-9
RANK_RTOL = 1e-6
WEIGHT_TOL = 1e-8
MERGE_TOL = 1e-6
AMBIGUOUS_OVERLAP = 0.5
NEWTON_FD_STEP = 1e-5
NEWTON_MAX_ITER = 60
NEWTON_MAX_HALVINGS = 12


@dataclass(eq=False)
class StationaryFeature:
    """A stationary structure of one band.

    ``location`` is a d-vector for points, an (n, d) sample array for curves
    and empty for flat bands.  ``vectors`` holds the band eigenvector at each
    location (for flat bands: at every grid point), so the overlap with any
    initial state can be evaluated later.  ``amplitude_exponent`` is the
    decay rate of the band integral: I_j(t) ~ t^{-amplitude_exponent}.
    """

    kind: str
    band: int
    location: np.ndarray
    phase: float
    vectors: np.ndarray
    hessian_rank: Optional[int] = None
    amplitude_exponent: float = np.nan
    classification: str = ""
    flagged: bool = False

    @property
    def probability_exponent(self) -> float:
        return 2.0 * self.amplitude_exponent

    def weight(self, psi0) -> float:
        """Largest |<v_j, psi0>| over the feature's locations."""
        return float(np.abs(np.atleast_2d(self.vectors).conj() @ np.asarray(psi0)).max())

    def to_dict(self) -> dict:
        loc = np.asarray(self.location)
        out = {
            "kind": self.kind,
            "band": int(self.band),
            "phase": float(self.phase),
            "hessian_rank": None if self.hessian_rank is None else int(self.hessian_rank),
            "amplitude_exponent": None if np.isnan(self.amplitude_exponent)
            else float(self.amplitude_exponent),
            "classification": self.classification,
            "flagged": bool(self.flagged),
        }
        if self.kind == "isolated_point":
            out["location"] = loc.tolist()
        elif self.kind == "curve":
            out["samples"] = loc.tolist()
            out["fixed_coordinates"] = curve_fixed_coordinates(loc)
        return out


@dataclass
class BandStructure:
    """Grid spectral data relabelled so that band ``j`` is continuous across k."""

    grid: MomentumGrid
    shifts: np.ndarray
    coin: np.ndarray
    lam: np.ndarray
    vectors: np.ndarray
    gradient: np.ndarray
    ambiguous: np.ndarray

    @property
    def n(self):
        return self.grid.n

    @property
    def d(self):
        return self.grid.d

    @property
    def c(self):
        return self.lam.shape[1]


def _assign(overlaps: np.ndarray):
    """Band matching for a batch of (c, c) overlap matrices (rows: previous bands)."""
    c = overlaps.shape[-1]
    flat = overlaps.reshape(-1, c, c)
    perm = flat.argmax(axis=2)
    valid = np.all(np.sort(perm, axis=1) == np.arange(c), axis=1)
    for k in np.flatnonzero(~valid):
        _, cols = linear_sum_assignment(-flat[k])
        perm[k] = cols
    chosen = np.take_along_axis(flat, perm[:, :, None], axis=2)[:, :, 0]
    ambiguous = chosen.min(axis=1) < AMBIGUOUS_OVERLAP
    return perm.reshape(overlaps.shape[:-1]), ambiguous.reshape(overlaps.shape[:-2])


def continue_bands(grid: MomentumGrid, spec: WalkSpec) -> BandStructure:
    """Follow bands across the grid by maximal eigenvector overlap.

    The sweep fixes the labels along the last axis first, then extends one
    axis at a time, each step matching a whole slab against its predecessor.
    Points where the best overlap falls below 1/2 (band crossings) are marked
    ambiguous.
    """
    if grid.vectors is None:
        raise ValueError("band continuation needs eigenvectors on the grid")
    d, N, c = grid.d, grid.n, grid.c
    shape = (N,) * d
    V = grid.vectors.reshape(shape + (c, c))
    perm = np.zeros(shape + (c,), dtype=np.int64)
    perm[(0,) * d] = np.arange(c)
    amb = np.zeros(shape, dtype=bool)
    for a in reversed(range(d)):
        for n in range(1, N):
            head = (0,) * a
            tail = (slice(None),) * (d - a - 1)
            cur, prev = head + (n,) + tail, head + (n - 1,) + tail
            vp = np.take_along_axis(V[prev], perm[prev][..., None], axis=-2)
            ov = np.abs(np.einsum("...bi,...ji->...bj", vp.conj(), V[cur])) ** 2
            perm[cur], amb[cur] = _assign(ov)
    perm = perm.reshape(-1, c)
    lam = np.take_along_axis(grid.lam, perm, axis=1)
    vecs = np.take_along_axis(grid.vectors, perm[:, :, None], axis=1)
    E = spec.shifts.vectors
    grad = -(np.abs(vecs) ** 2) @ E
    return BandStructure(grid=grid, shifts=E, coin=spec.coin.matrix, lam=lam, vectors=vecs,
                         gradient=grad, ambiguous=amb.reshape(-1))


def detect_flat_bands(bands: BandStructure) -> List[StationaryFeature]:
    """Bands whose eigenphase varies by less than 1e-9 over the whole grid."""
    out = []
    for j in range(bands.c):
        ref = bands.lam[0, j]
        dev = np.angle(bands.lam[:, j] * np.conj(ref))
        if np.ptp(dev) < FLAT_TOL:
            out.append(StationaryFeature(
                kind="flat_band", band=j, location=np.empty((0, bands.d)),
                phase=float(wrap_phase(np.angle(ref))), vectors=bands.vectors[:, j],
                hessian_rank=0, amplitude_exponent=0.0, classification="flat"))
    return out


class _Tracker:
    """Evaluates one band away from the grid by following eigenvector overlap."""

    def __init__(self, E, C):
        self.E, self.C = E, C

    def eval(self, ks, v_ref):
        ks = np.atleast_2d(ks)
        lam, vecs, _, _ = diagonalize(_u_tilde_batch(self.E, self.C, ks), ks, self.E)
        ov = np.abs(vecs.conj() @ v_ref) ** 2
        best = ov.argmax(axis=1)
        rows = np.arange(ks.shape[0])
        v = vecs[rows, best]
        grad = -(np.abs(v) ** 2) @ self.E
        return lam[rows, best], v, grad, ov[rows, best]

    def hessian(self, k, v_ref, h):
        d = k.size
        offs = np.concatenate([np.eye(d) * h, -np.eye(d) * h])
        _, _, g, ov = self.eval(k[None, :] + offs, v_ref)
        H = (g[:d] - g[d:]).T / (2 * h)
        return 0.5 * (H + H.T), ov.min()


def _newton(tracker: _Tracker, k0, v0, h_grid):
    """Damped Newton on the exact gradient; Hessian by central differences."""
    k, v = k0.astype(float).copy(), v0
    lam, v, g, ov = tracker.eval(k, v)
    lam, v, g, ov = lam[0], v[0], g[0], ov[0]
    min_overlap = ov
    limit = 2 * h_grid * np.sqrt(k.size)
    stalled = 0
    for _ in range(NEWTON_MAX_ITER):
        gn = np.linalg.norm(g)
        if gn < GRAD_TOL:
            return k, v, lam, True, min_overlap
        H, _ = tracker.hessian(k, v, NEWTON_FD_STEP)
        step = -np.linalg.pinv(H, rcond=RANK_RTOL, hermitian=True) @ g
        sn = np.linalg.norm(step)
        if sn > h_grid:
            step *= h_grid / sn
        for _ in range(NEWTON_MAX_HALVINGS):
            l2, v2, g2, ov2 = tracker.eval(k + step, v)
            if np.linalg.norm(g2[0]) < gn:
                break
            step /= 2
        else:
            return k, v, lam, False, min_overlap
        k, v, g, lam = k + step, v2[0], g2[0], l2[0]
        min_overlap = min(min_overlap, ov2[0])
        # slow linear creep means a non-smooth point such as a cone tip
        stalled = stalled + 1 if np.linalg.norm(g) > 0.9 * gn else 0
        if stalled >= 4 or np.linalg.norm(k - k0) > limit:
            return k, v, lam, False, min_overlap
    return k, v, lam, np.linalg.norm(g) < GRAD_TOL, min_overlap


def _wrap_k(k):
    return wrap_phase(np.mod(k + np.pi, 2 * np.pi) - np.pi)


def _periodic_distance(a, b):
    diff = np.mod(np.asarray(a) - np.asarray(b) + np.pi, 2 * np.pi) - np.pi
    return np.linalg.norm(diff, axis=-1)


def _candidate_cells(bands: BandStructure, j: int):
    """Cells of the grid across which every gradient component of band j changes sign.

    The corners of each cell are matched to the base corner locally, so cells
    that straddle the periodic boundary need no global labels.
    """
    d, N, c = bands.d, bands.n, bands.c
    shape = (N,) * d
    grid = bands.grid
    V_loc = grid.vectors.reshape(shape + (c, c))
    g_loc = (-(np.abs(grid.vectors) ** 2) @ bands.shifts).reshape(shape + (c, d))
    v0 = bands.vectors[:, j].reshape(shape + (c,))
    amb = bands.ambiguous.reshape(shape)

    corners = list(itertools.product((0, 1), repeat=d))
    gmin = np.full(shape + (d,), np.inf)
    gmax = np.full(shape + (d,), -np.inf)
    best_norm = np.full(shape, np.inf)
    best_corner = np.zeros(shape, dtype=np.int64)
    best_vec = np.zeros(shape + (c,), dtype=np.complex128)
    weak = np.zeros(shape, dtype=bool)
    cell_amb = np.zeros(shape, dtype=bool)
    for ci, s in enumerate(corners):
        shift = tuple(-x for x in s)
        Vs = np.roll(V_loc, shift, axis=tuple(range(d)))
        gs = np.roll(g_loc, shift, axis=tuple(range(d)))
        ov = np.abs(np.einsum("...ji,...i->...j", Vs.conj(), v0)) ** 2
        pick = ov.argmax(axis=-1)
        weak |= np.take_along_axis(ov, pick[..., None], axis=-1)[..., 0] < AMBIGUOUS_OVERLAP
        cell_amb |= np.roll(amb, shift, axis=tuple(range(d)))
        g = np.take_along_axis(gs, pick[..., None, None], axis=-2)[..., 0, :]
        g = np.where(np.abs(g) < 1e-12, 0.0, g)
        gmin = np.minimum(gmin, g)
        gmax = np.maximum(gmax, g)
        gn = np.linalg.norm(g, axis=-1)
        better = gn < best_norm
        best_norm = np.where(better, gn, best_norm)
        best_corner = np.where(better, ci, best_corner)
        best_vec = np.where(better[..., None],
                            np.take_along_axis(Vs, pick[..., None, None], axis=-2)[..., 0, :],
                            best_vec)
    cand = np.all((gmin <= 0) & (gmax >= 0), axis=-1)
    idx = np.argwhere(cand)
    h = 2 * np.pi / N
    axis = grid.axis
    starts, vecs, flags, gnorms = [], [], [], []
    for n in idx:
        n = tuple(n)
        s = np.array(corners[best_corner[n]])
        starts.append(axis[np.array(n)] + s * h)
        vecs.append(best_vec[n])
        flags.append(bool(weak[n] or cell_amb[n]))
        gnorms.append(best_norm[n])
    return starts, vecs, flags, gnorms


def _link_groups(points: np.ndarray, phases: np.ndarray, radius: float) -> np.ndarray:
    """Cluster labels for points that are within ``radius`` (periodically) and share a phase."""
    n = len(points)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    tree = cKDTree(np.mod(points, 2 * np.pi), boxsize=2 * np.pi)
    pairs = tree.query_pairs(radius, output_type="ndarray")
    if len(pairs):
        dphi = np.abs(np.angle(np.exp(1j * (phases[pairs[:, 0]] - phases[pairs[:, 1]]))))
        pairs = pairs[dphi < MERGE_TOL]
    adj = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])) if len(pairs)
                     else (np.zeros(0), (np.zeros(0, int), np.zeros(0, int))), shape=(n, n))
    return connected_components(adj, directed=False)[1]


def find_stationary_points(bands: BandStructure, j: int) -> List[StationaryFeature]:
    """Isolated stationary points and stationary curves of band ``j``.

    Candidate cells are refined by Newton's method to |grad omega| < 1e-8,
    duplicates within 1e-6 are merged and the Hessian rank is read off with a
    relative singular-value cutoff of 1e-6.  The phase is constant along a
    curve of stationary points, so in d >= 2 refined points that share their
    phase and lie within a few grid cells of each other are grouped; a group
    of at least N/4 points, mostly rank-deficient, is reported as a curve.
    The grouping tolerates the odd missing point where another band crosses.
    Flat bands should be handled by :func:`detect_flat_bands` instead.
    """
    d, N = bands.d, bands.n
    h = 2 * np.pi / N
    tracker = _Tracker(bands.shifts, bands.coin)
    starts, vecs, flags, gnorms = _candidate_cells(bands, j)

    refined = []  # (k, v, lam, rank, flagged)
    for k0, v0, flag, g0 in zip(starts, vecs, flags, gnorms):
        if g0 < GRAD_TOL:
            k, v = k0, v0
            lam = tracker.eval(k, v)[0][0]
            min_ov = 1.0
        else:
            k, v, lam, ok, min_ov = _newton(tracker, k0, v0, h)
            if not ok:
                continue
        k = _wrap_k(k)
        H, ov = tracker.hessian(k, v, h)
        sv = np.linalg.svd(H, compute_uv=False)
        rank = int(np.sum(sv > RANK_RTOL * sv.max())) if sv.max() > 1e-12 else 0
        flagged = bool(flag or min_ov < AMBIGUOUS_OVERLAP or ov < AMBIGUOUS_OVERLAP)
        refined.append((k, v, lam, rank, flagged))

    kept = []
    for item in refined:
        if kept and np.min(_periodic_distance(np.array([x[0] for x in kept]), item[0])) < MERGE_TOL:
            continue
        kept.append(item)

    features = []
    in_curve = np.zeros(len(kept), dtype=bool)
    if d >= 2 and kept:
        pts = np.array([x[0] for x in kept])
        phases = np.angle(np.array([x[2] for x in kept]))
        labels = _link_groups(pts, phases, 2.5 * h * np.sqrt(d))
        for lbl in np.unique(labels):
            members = np.flatnonzero(labels == lbl)
            ranks = np.array([kept[i][3] for i in members])
            if members.size < N / 4 or np.mean(ranks < d) < 0.5:
                continue
            in_curve[members] = True
            order = members[np.lexsort(pts[members].T[::-1])]
            features.append(StationaryFeature(
                kind="curve", band=j, location=pts[order],
                phase=float(wrap_phase(np.angle(np.mean([kept[i][2] for i in members])))),
                vectors=np.array([kept[i][1] for i in order]),
                hessian_rank=int(np.median(ranks)),
                amplitude_exponent=0.5 if d == 2 else np.nan,
                classification="saddle_curve" if d == 2 else "unclassified",
                flagged=any(kept[i][4] for i in members)))

    for i, (k, v, lam, rank, flagged) in enumerate(kept):
        if in_curve[i]:
            continue
        features.append(StationaryFeature(
            kind="isolated_point", band=j, location=k,
            phase=float(wrap_phase(np.angle(lam))), vectors=v[None, :],
            hessian_rank=rank, amplitude_exponent=rank / 2.0,
            classification="non_degenerate" if rank == d else "degenerate",
            flagged=flagged))

    if any(f.flagged for f in features):
        warnings.warn(f"band {j}: features near an eigenvalue crossing were flagged",
                      BandDiscontinuity, stacklevel=2)
    return features


@dataclass
class ExponentPrediction:
    """Predicted p_o(t) ~ t^{-exponent}; ``localised`` means a constant leading term."""

    exponent: float
    localised: bool
    contributing_bands: tuple
    contributing: list = field(default_factory=list, repr=False)
    filtered: list = field(default_factory=list, repr=False)
    notes: list = field(default_factory=list)

    @property
    def label(self):
        if self.localised:
            return "localised"
        return self.exponent

    def to_dict(self) -> dict:
        exp = self.exponent
        return {
            "exponent": "localised" if self.localised else ("inf" if np.isinf(exp) else float(exp)),
            "contributing_bands": [int(b) for b in self.contributing_bands],
            "notes": list(self.notes),
        }


def _feature_p_exponent(f: StationaryFeature) -> float:
    if f.kind == "flat_band":
        return 0.0
    return f.probability_exponent


def _predict(features, psi0, bands, use_filter=True) -> ExponentPrediction:
    survivors, filtered = [], []
    reasons = Counter()
    for f in features:
        if not use_filter or f.weight(psi0) > WEIGHT_TOL:
            survivors.append(f)
            continue
        filtered.append(f)
        if bands is not None:
            global_w = float(np.abs(bands.vectors[:, f.band].conj() @ psi0).max())
            scope = "everywhere on the band" if global_w <= WEIGHT_TOL else "at the feature"
        else:
            scope = "at the feature"
        reasons[(f.kind, f.band, f"initial state orthogonal {scope}")] += 1
    usable = []
    for f in survivors:
        if f.flagged:
            reasons[(f.kind, f.band, "flagged near a band crossing, not used")] += 1
        elif np.isnan(_feature_p_exponent(f)):
            reasons[(f.kind, f.band, "unclassified, not used")] += 1
        else:
            usable.append(f)
    notes = [f"{n} x {kind} of band {band}: {why}"
             for (kind, band, why), n in sorted(reasons.items())]
    if not usable:
        return ExponentPrediction(np.inf, False, (), [], filtered, notes)
    best = min(_feature_p_exponent(f) for f in usable)
    lead = [f for f in usable if _feature_p_exponent(f) == best]
    bands_used = tuple(sorted({f.band for f in lead}))
    return ExponentPrediction(float(best), best == 0.0, bands_used, lead, filtered, notes)


def predict_exponent(features: List[StationaryFeature], psi0,
                     bands: Optional[BandStructure] = None) -> ExponentPrediction:
    """Decay exponent of p_o(t) from the slowest feature the initial state overlaps.

    Features whose eigenvectors are orthogonal to ``psi0`` (|<v, psi0>| <= 1e-8
    at every location) do not contribute.  With no stationary features at all
    the decay is faster than any power and the exponent is infinite.
    """
    psi0 = np.asarray(psi0, dtype=np.complex128)
    if not features:
        return ExponentPrediction(np.inf, False, (), notes=["no stationary features"])
    pred = _predict(features, psi0, bands)
    if not pred.contributing:
        fallback = _predict(features, psi0, bands, use_filter=False)
        raise NoFeatureSurvives(
            "initial state is orthogonal to every stationary feature", fallback=fallback)
    return pred


def curve_fixed_coordinates(samples: np.ndarray, tol: float = 1e-6) -> dict:
    """Coordinates that stay constant (mod 2 pi) along a sampled curve."""
    samples = np.atleast_2d(samples)
    out = {}
    for a in range(samples.shape[1]):
        ref = samples[0, a]
        if np.all(_periodic_distance(samples[:, a:a + 1], [ref]) < tol):
            out[f"k{a + 1}"] = float(_wrap_k(np.array([ref]))[0])
    return out


def merge_across_bands(features: List[StationaryFeature], N: int) -> List[StationaryFeature]:
    """Join features that the band labelling split between two labels.

    Continuation through a crossing can hand part of a stationary curve to
    another label.  Curves with equal phase whose samples touch are merged
    (the label contributing most samples wins) and isolated points repeated
    under two labels at the same location and phase are dropped.
    """
    curves = [f for f in features if f.kind == "curve"]
    others = [f for f in features if f.kind != "curve"]
    out = []
    if curves:
        d = curves[0].location.shape[1]
        pts = np.concatenate([f.location for f in curves])
        owner = np.concatenate([np.full(len(f.location), i) for i, f in enumerate(curves)])
        phases = np.concatenate([np.full(len(f.location), f.phase) for f in curves])
        labels = _link_groups(pts, phases, 2.5 * (2 * np.pi / N) * np.sqrt(d))
        parent = np.arange(len(curves))
        for lbl in np.unique(labels):
            members = np.unique(owner[labels == lbl])
            root = parent[members].min()
            for m in members:
                parent[parent == parent[m]] = root
        for root in np.unique(parent):
            group = [curves[i] for i in np.flatnonzero(parent == root)]
            if len(group) == 1:
                out.append(group[0])
                continue
            main = max(group, key=lambda f: len(f.location))
            loc = np.concatenate([f.location for f in group])
            vec = np.concatenate([f.vectors for f in group])
            keep = []
            for i, k in enumerate(loc):
                if not keep or np.min(_periodic_distance(loc[keep], k)) >= MERGE_TOL:
                    keep.append(i)
            loc, vec = loc[keep], vec[keep]
            order = np.lexsort(loc.T[::-1])
            out.append(StationaryFeature(
                kind="curve", band=main.band, location=loc[order], phase=main.phase,
                vectors=vec[order], hessian_rank=main.hessian_rank,
                amplitude_exponent=main.amplitude_exponent,
                classification=main.classification, flagged=any(f.flagged for f in group)))
    for f in others:
        if f.kind == "isolated_point" and any(
                g.kind == "isolated_point" and g.band != f.band
                and _periodic_distance(g.location, f.location) < MERGE_TOL
                and abs(np.angle(np.exp(1j * (g.phase - f.phase)))) < MERGE_TOL
                for g in out):
            continue
        out.append(f)
    return out


@dataclass
class SpectralReport:
    grid_size: int
    bands: BandStructure = field(repr=False)
    flat_bands: list
    features: list
    prediction: Optional[ExponentPrediction]
    ambiguous_points: int

    def to_dict(self) -> dict:
        return {
            "grid": self.grid_size,
            "flat_bands": [f.to_dict() for f in self.flat_bands],
            "features": [f.to_dict() for f in self.features],
            "prediction": None if self.prediction is None else self.prediction.to_dict(),
            "ambiguous_points": int(self.ambiguous_points),
        }


def analyse(spec: WalkSpec, N: int = 128) -> SpectralReport:
    """Full spectral diagnosis of a walk on an N^d grid."""
    grid = eigendecompose_grid(spec, N)
    bands = continue_bands(grid, spec)
    flat = detect_flat_bands(bands)
    flat_ids = {f.band for f in flat}
    features = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", BandDiscontinuity)
        for j in range(bands.c):
            if j not in flat_ids:
                features.extend(find_stationary_points(bands, j))
    for w in caught:
        log.info("%s", w.message)
    features = merge_across_bands(features, N)
    try:
        prediction = predict_exponent(flat + features, spec.initial_state, bands)
    except NoFeatureSurvives as exc:
        prediction = exc.fallback
        prediction.notes.append("no feature survived the orthogonality filter; unfiltered fallback")
    return SpectralReport(grid_size=N, bands=bands, flat_bands=flat, features=features,
                          prediction=prediction, ambiguous_points=int(bands.ambiguous.sum()))
