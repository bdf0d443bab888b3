"""Momentum-space evolution and the exact origin amplitude.

In momentum space one step is the c x c unitary U(k) = D(k) C with
D(k) = diag(exp(-i e_j . k)).  Diagonalising U(k) = sum_j lambda_j P_j gives

    psi(0, t) = (2 pi)^{-d} int dk  sum_j lambda_j(k)^t f_j(k),
    f_j(k)    = <v_j(k), psi0> v_j(k).

The integrand is a trigonometric polynomial of degree at most t * max|e_a| in
every k_a, so the uniform Riemann sum over k_n = -pi + 2 pi n / N (n = 1..N)
reproduces the integral exactly once N >= 2 t max|e| + 1.

Degenerate eigenvalues (the Grover walk's flat bands cross its dispersive
bands) are resolved by diagonalising the group-velocity operator inside the
degenerate eigenspace.  This picks the basis that the bands converge to when
approached along a fixed generic direction, so an eigenvector orthogonal to
psi0 on an analytic band stays orthogonal at the crossing.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import EigensolverFailure, GridTooSmall
from .series import ReturnSeries
from .walk import WalkSpec

DEGENERACY_TOL = 1e-8
ORTHONORMALITY_TOL = 1e-12
PHASE_REANCHOR_INTERVAL = 1024
CHUNK_POINTS = 32768
# ordering offset applied to split members of a degenerate eigenspace
_SPLIT_EPS = 1e-7
_CUT_SNAP = 1e-9
_MIN_CUT_GAP = 1e-3


def _split_direction(d: int) -> np.ndarray:
    # powers of the inverse golden ratio keep the direction off every lattice axis
    v = 0.6180339887498949 ** np.arange(d)
    return v / np.linalg.norm(v)


def momentum_axis(N: int) -> np.ndarray:
    """k_n = -pi + 2 pi n / N for n = 1..N (the last point is pi)."""
    if N < 1:
        raise ValueError("grid needs at least one point per axis")
    return -np.pi + 2 * np.pi * np.arange(1, N + 1) / N


def grid_points(d: int, N: int) -> np.ndarray:
    """All grid points, shape (N^d, d), in C order (last axis fastest)."""
    axis = momentum_axis(N)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def nyquist_size(spec: WalkSpec, T: int) -> int:
    """Smallest grid for which the quadrature is exact for all t <= T."""
    return 2 * T * spec.shifts.max_step + 1


def resolve_threads(threads=None) -> int:
    """Thread count: explicit value, else QWALK_THREADS, else 1.  ``"auto"`` = all cores."""
    env = os.environ.get("QWALK_THREADS")
    if env:
        threads = env
    if threads is None:
        return 1
    if threads == "auto":
        return os.cpu_count() or 1
    n = int(threads)
    if n < 1:
        raise ValueError("thread count must be positive")
    return n


def _u_tilde_batch(E: np.ndarray, C: np.ndarray, ks: np.ndarray) -> np.ndarray:
    phases = np.exp(-1j * (ks @ E.T))  # (M, c)
    return phases[:, :, None] * C[None, :, :]


def build_u_tilde(spec: WalkSpec, k) -> np.ndarray:
    """U(k) = D(k) C for a single momentum ``k``."""
    k = np.atleast_1d(np.asarray(k, dtype=float))
    if k.size != spec.d:
        raise ValueError(f"momentum must have {spec.d} components")
    return _u_tilde_batch(spec.shifts.vectors, spec.coin.matrix, k[None, :])[0]


def _clusters(lam: np.ndarray, tol: float):
    """Groups of indices whose eigenvalues agree to ``tol`` (transitively)."""
    order = np.argsort(np.angle(lam))
    groups, current = [], [order[0]]
    for i in order[1:]:
        if abs(lam[i] - lam[current[-1]]) < tol:
            current.append(i)
        else:
            groups.append(current)
            current = [i]
    groups.append(current)
    if len(groups) > 1 and abs(lam[groups[0][0]] - lam[groups[-1][-1]]) < tol:
        groups[0] = groups[-1] + groups[0]
        groups.pop()
    return groups


def _resolve_point(U: np.ndarray, E: np.ndarray, direction: np.ndarray):
    """Orthonormal eigenbasis of one normal matrix, degenerate spaces split by velocity.

    Returns (lam, vecs, keys) with ``vecs[j]`` the j-th eigenvector and
    ``keys[j]`` the phase used for ordering.
    """
    T, Z = scipy.linalg.schur(U, output="complex")
    lam = np.diag(T).copy()
    lam /= np.abs(lam)
    vecs = Z.T.copy()
    keys = np.angle(lam)
    velocity_op = np.diag(E @ direction).astype(np.complex128)
    for group in _clusters(lam, DEGENERACY_TOL):
        if len(group) < 2:
            continue
        Q = Z[:, group]
        mu, W = np.linalg.eigh(Q.conj().T @ velocity_op @ Q)
        Qn = Q @ W
        lc = lam[group].mean()
        lc /= abs(lc)
        for col, idx in enumerate(group):
            vecs[idx] = Qn[:, col]
            lam[idx] = lc
            # phase along the split direction decreases with positive <v|E.dir|v>
            keys[idx] = np.angle(lc) - _SPLIT_EPS * mu[col]
    return lam, vecs, keys


def diagonalize(U: np.ndarray, ks: np.ndarray, E: np.ndarray):
    """Batched eigendecomposition of unitary matrices U (M, c, c).

    Returns (lam, vecs, keys, degenerate) with ``vecs[m, j]`` the j-th
    eigenvector at point m (rows), eigenvalues normalised to the unit circle,
    ordering phases ``keys`` and a mask of points that needed the degenerate
    treatment.
    """
    try:
        lam, V = np.linalg.eig(U)
    except np.linalg.LinAlgError:
        for m in range(U.shape[0]):
            try:
                np.linalg.eig(U[m])
            except np.linalg.LinAlgError:
                raise EigensolverFailure(f"eigensolver did not converge at k={ks[m].tolist()}",
                                         k=ks[m]) from None
        raise
    lam = lam / np.abs(lam)
    vecs = np.ascontiguousarray(V.transpose(0, 2, 1))
    keys = np.angle(lam)
    c = lam.shape[1]

    gram = np.einsum("mji,mki->mjk", vecs.conj(), vecs)
    ortho_err = np.abs(gram - np.eye(c)).max(axis=(1, 2))
    gaps = np.abs(lam[:, :, None] - lam[:, None, :]) + 4 * np.eye(c)
    bad = (ortho_err > ORTHONORMALITY_TOL) | (gaps.min(axis=(1, 2)) < 10 * DEGENERACY_TOL)
    degenerate = np.zeros(U.shape[0], dtype=bool)
    if bad.any():
        direction = _split_direction(E.shape[1])
        for m in np.flatnonzero(bad):
            lam[m], vecs[m], keys[m] = _resolve_point(U[m], E, direction)
            degenerate[m] = True
    return lam, vecs, keys, degenerate


def wrap_phase(omega: np.ndarray) -> np.ndarray:
    """Map phases into (-pi, pi]."""
    omega = np.asarray(omega, dtype=float)
    return np.where(omega <= -np.pi + 1e-12, omega + 2 * np.pi, omega)


def _choose_cut(keys: np.ndarray, min_gap: float = _MIN_CUT_GAP) -> float:
    """Branch cut placed in the widest gap of the spectrum, or at -pi if none.

    Gaps narrower than ``min_gap`` may just be sampling artefacts and are ignored.
    """
    ph = np.sort(np.mod(keys.ravel(), 2 * np.pi))
    ph = np.unique(np.round(ph, 12))
    if ph.size == 0:
        return -np.pi
    gaps = np.diff(np.concatenate([ph, [ph[0] + 2 * np.pi]]))
    i = int(np.argmax(gaps))
    if gaps[i] < max(min_gap, _MIN_CUT_GAP):
        return -np.pi
    cut = ph[i] + gaps[i] / 2
    return float(wrap_phase(np.mod(cut + np.pi, 2 * np.pi) - np.pi))


def _band_order(keys: np.ndarray, cut: float) -> np.ndarray:
    rel = np.mod(keys - cut, 2 * np.pi)
    rel = np.where(rel < _CUT_SNAP, rel + 2 * np.pi, rel)
    return np.argsort(rel, axis=1, kind="stable")


@dataclass(frozen=True)
class MomentumGrid:
    """Spectral data of U(k) on the uniform grid.

    Arrays are indexed by the flattened grid point ``m`` (C order over the d
    axes) and the band ``j``.  Bands are ordered at each point by eigenphase
    measured from ``cut``; no continuation between points is attempted here.

    Attributes
    ----------
    d, n : int
        Dimension and points per axis.
    lam : (M, c) complex
        Eigenvalues on the unit circle.
    weights : (M, c, c) complex
        f_j(k) = <v_j, psi0> v_j.
    coeffs : (M, c) complex
        <v_j, psi0>.
    vectors : (M, c, c) complex or None
        vectors[m, j] is v_j(k_m); dropped when ``keep_vectors`` is False.
    degenerate : (M,) bool
        Points whose spectrum had (near-)repeated eigenvalues.
    """

    d: int
    n: int
    lam: np.ndarray
    weights: np.ndarray
    coeffs: np.ndarray
    vectors: Optional[np.ndarray]
    degenerate: np.ndarray
    psi0: np.ndarray
    cut: float

    @property
    def axis(self) -> np.ndarray:
        return momentum_axis(self.n)

    @property
    def points(self) -> np.ndarray:
        return grid_points(self.d, self.n)

    @property
    def omega(self) -> np.ndarray:
        return wrap_phase(np.angle(self.lam))

    @property
    def c(self) -> int:
        return self.lam.shape[1]

    def shaped(self, arr: np.ndarray) -> np.ndarray:
        """View a per-point array on the d-dimensional grid."""
        return arr.reshape((self.n,) * self.d + arr.shape[1:])


def _chunks(total: int, size: int):
    return [(s, min(s + size, total)) for s in range(0, total, size)]


def _run_chunks(fn, ranges, threads):
    if threads <= 1 or len(ranges) == 1:
        return [fn(r) for r in ranges]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, ranges))


def eigendecompose_grid(spec: WalkSpec, N: int, keep_vectors: bool = True,
                        threads=None) -> MomentumGrid:
    if N < 1:
        raise ValueError("N must be at least 1")
    d = spec.d
    E, C = spec.shifts.vectors, spec.coin.matrix
    pts = grid_points(d, N)
    psi0 = spec.initial_state

    def work(rng):
        ks = pts[rng[0]:rng[1]]
        return diagonalize(_u_tilde_batch(E, C, ks), ks, E)

    parts = _run_chunks(work, _chunks(pts.shape[0], CHUNK_POINTS), resolve_threads(threads))
    lam = np.concatenate([p[0] for p in parts])
    vecs = np.concatenate([p[1] for p in parts])
    keys = np.concatenate([p[2] for p in parts])
    degenerate = np.concatenate([p[3] for p in parts])

    # |grad omega| <= max |e_i|, so neighbouring samples differ by at most this
    speed = float(np.linalg.norm(E, axis=1).max())
    cut = _choose_cut(keys, 2 * speed * 2 * np.pi / N)
    order = _band_order(keys, cut)
    lam = np.take_along_axis(lam, order, axis=1)
    vecs = np.take_along_axis(vecs, order[:, :, None], axis=1)

    coeffs = vecs.conj() @ psi0
    weights = coeffs[:, :, None] * vecs
    return MomentumGrid(d=d, n=N, lam=lam, weights=weights, coeffs=coeffs,
                        vectors=vecs if keep_vectors else None,
                        degenerate=degenerate, psi0=psi0.copy(), cut=cut)


def _check_grid(spec: WalkSpec, T: int, N: Optional[int], approximate: bool):
    if T < 0:
        raise ValueError("number of steps must be non-negative")
    bound = nyquist_size(spec, T)
    if N is None or N == "auto":
        return bound, True, None
    N = int(N)
    if N >= bound:
        return N, True, None
    if not approximate:
        raise GridTooSmall(f"grid N={N} is below the exact-quadrature bound {bound} for T={T}")
    return N, False, f"grid N={N} below exact bound {bound}: aliasing possible"


def _accumulate(lam, coeffs, vecs, T, per_band=False):
    """sum_{m,j} lam^t coeffs v_j for t = 0..T, phases advanced incrementally."""
    m, c = lam.shape
    omega = np.angle(lam).ravel()
    lam_f = lam.ravel()
    w0 = coeffs.ravel()
    w = w0.copy()
    if per_band:
        out = np.empty((T + 1, c, c), dtype=np.complex128)
    else:
        out = np.empty((T + 1, c), dtype=np.complex128)
        vflat = vecs.reshape(m * c, c)
    for t in range(T + 1):
        if t and t % PHASE_REANCHOR_INTERVAL == 0:
            w = w0 * np.exp(1j * omega * t)
        if per_band:
            wb = w.reshape(m, c)
            for j in range(c):
                out[t, j] = wb[:, j] @ vecs[:, j, :]
        else:
            out[t] = w @ vflat
        w *= lam_f
    return out


def return_amplitude_series(spec: WalkSpec, T: int, N=None, approximate: bool = False,
                            threads=None) -> ReturnSeries:
    """p_o(t) for t = 0..T by momentum-space quadrature.

    ``N`` defaults to the Nyquist bound 2 T max|e| + 1, above which the result
    is exact.  Smaller grids raise :class:`GridTooSmall` unless
    ``approximate`` is set, in which case the series is marked inexact.
    """
    N, exact, warning = _check_grid(spec, T, N, approximate)
    d = spec.d
    E, C, psi0 = spec.shifts.vectors, spec.coin.matrix, spec.initial_state
    total = N ** d

    def work(rng):
        idx = np.arange(rng[0], rng[1])
        ks = _points_from_index(idx, d, N)
        lam, vecs, _, _ = diagonalize(_u_tilde_batch(E, C, ks), ks, E)
        coeffs = vecs.conj() @ psi0
        return _accumulate(lam, coeffs, vecs, T)

    parts = _run_chunks(work, _chunks(total, CHUNK_POINTS), resolve_threads(threads))
    acc = np.zeros((T + 1, spec.c), dtype=np.complex128)
    for part in parts:  # fixed order keeps the reduction reproducible
        acc += part
    amps = acc / total
    p = np.einsum("tc,tc->t", amps.conj(), amps).real
    return ReturnSeries(p=p, method="fourier", grid=N, label=spec.label, exact=exact,
                        amplitudes=amps, warning=warning)


def _points_from_index(idx: np.ndarray, d: int, N: int) -> np.ndarray:
    axis = momentum_axis(N)
    coords = np.empty((idx.size, d))
    rem = idx.copy()
    for a in range(d - 1, -1, -1):
        coords[:, a] = axis[rem % N]
        rem //= N
    return coords


def summand_decomposition(spec: WalkSpec, T: int, N=None, approximate: bool = False,
                          grid: Optional[MomentumGrid] = None) -> np.ndarray:
    """Per-band contributions I_j(t), shape (T + 1, c, c).

    ``out[t, j]`` is the c-vector I_j(t); summing over ``j`` gives psi(0, t).
    Band labels follow the per-point phase ordering of :class:`MomentumGrid`.
    """
    N, _, _ = _check_grid(spec, T, N if grid is None else grid.n, approximate)
    if grid is None:
        grid = eigendecompose_grid(spec, N)
    if grid.vectors is None:
        raise ValueError("summand decomposition needs a grid with eigenvectors")
    out = _accumulate(grid.lam, grid.coeffs, grid.vectors, T, per_band=True)
    return out / grid.n ** grid.d
