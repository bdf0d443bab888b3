"""Exact position-space evolution of coined quantum walks on Z^d.

One step applies the coin to every site's internal state and then moves coin
component ``i`` along shift vector ``e_i``.  Nothing is ever truncated or
thresholded, so the results here serve as the reference for the momentum-space
engine.

Amplitudes live in a dense array covering the bounding box of the reachable
sites, which gives identical arithmetic to a sparse map while keeping the
per-step cost in numpy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidShiftSet,
    NonUnitaryCoin,
    UnnormalizedInitialState,
)
from .series import ReturnSeries

UNITARITY_TOL = 1e-12
NORM_TOL = 1e-12


@dataclass(frozen=True)
class ShiftSet:
    """Lattice displacements ``e_1..e_c`` paired with the coin basis states.

    ``vectors`` has shape (c, d).  Row ``i`` is the displacement taken by coin
    component ``i``.
    """

    vectors: np.ndarray

    def __post_init__(self):
        v = np.array(self.vectors, dtype=np.int64)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[1] < 1:
            raise InvalidShiftSet("shift vectors must form a (c, d) integer array")
        if v.shape[0] < 2:
            raise InvalidShiftSet(f"need at least two shift vectors, got {v.shape[0]}")
        if len({tuple(row) for row in v}) != v.shape[0]:
            raise InvalidShiftSet("shift vectors must be distinct")
        if np.any(v.sum(axis=0) != 0):
            raise InvalidShiftSet(f"shift vectors must sum to zero, got {v.sum(axis=0).tolist()}")
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)

    @classmethod
    def diagonal(cls, d: int) -> "ShiftSet":
        """The c = 2^d topology: every coordinate moves by +-1 at each step.

        Coin index ``i`` (0-based) is read as a d-bit number whose bit ``a``
        selects the sign for dimension ``a``: 0 means +1, 1 means -1.  In 2-D
        this is (+,+), (-,+), (+,-), (-,-), so D(k) = D(k_2) (x) D(k_1).
        """
        if d < 1:
            raise InvalidShiftSet("dimension must be positive")
        idx = np.arange(2 ** d)[:, None]
        bits = (idx >> np.arange(d)[None, :]) & 1
        return cls(1 - 2 * bits)

    @classmethod
    def axial(cls, d: int) -> "ShiftSet":
        """The c = 2d topology: one coordinate moves by +-1 at each step."""
        if d < 1:
            raise InvalidShiftSet("dimension must be positive")
        rows = []
        for a in range(d):
            for s in (1, -1):
                e = [0] * d
                e[a] = s
                rows.append(e)
        return cls(np.array(rows))

    @property
    def c(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    @property
    def max_step(self) -> int:
        """Largest coordinate displacement in a single step."""
        return int(np.abs(self.vectors).max())


@dataclass(frozen=True)
class CoinOperator:
    """A c x c unitary coin.  Construction fails if the matrix is not unitary."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"coin must be square, got shape {m.shape}")
        err = np.abs(m.conj().T @ m - np.eye(m.shape[0])).max()
        if err > UNITARITY_TOL:
            raise NonUnitaryCoin(f"coin is not unitary (max |C^H C - I| = {err:.3e})")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def unbiased(self) -> bool:
        return bool(np.all(np.abs(np.abs(self.matrix) - 1 / np.sqrt(self.size)) < UNITARITY_TOL))


@dataclass(frozen=True)
class WalkSpec:
    """Full definition of a walk started at the origin."""

    shifts: ShiftSet
    coin: CoinOperator
    initial_state: np.ndarray
    label: str = ""

    def __post_init__(self):
        if not isinstance(self.coin, CoinOperator):
            object.__setattr__(self, "coin", CoinOperator(self.coin))
        if not isinstance(self.shifts, ShiftSet):
            object.__setattr__(self, "shifts", ShiftSet(self.shifts))
        psi = np.array(self.initial_state, dtype=np.complex128).reshape(-1)
        if self.coin.size != self.shifts.c:
            raise DimensionMismatch(
                f"coin size {self.coin.size} does not match {self.shifts.c} shift vectors")
        if psi.size != self.shifts.c:
            raise DimensionMismatch(
                f"initial coin state has {psi.size} components, expected {self.shifts.c}")
        norm = np.linalg.norm(psi)
        if abs(norm - 1.0) > NORM_TOL:
            raise UnnormalizedInitialState(f"initial coin state has norm {norm!r}")
        psi.setflags(write=False)
        object.__setattr__(self, "initial_state", psi)

    @property
    def d(self) -> int:
        return self.shifts.d

    @property
    def c(self) -> int:
        return self.shifts.c

    def with_state(self, psi) -> "WalkSpec":
        return WalkSpec(self.shifts, self.coin, psi, self.label)


@dataclass(frozen=True)
class WalkState:
    """Amplitudes psi(m, t) over the bounding box ``origin .. origin + shape - 1``.

    ``data`` has shape (n_1, ..., n_d, c); ``data[idx]`` is the coin vector at
    lattice site ``origin + idx``.  Instances are read-only snapshots.
    """

    t: int
    origin: tuple
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        if data.ndim != len(self.origin) + 1:
            raise DimensionMismatch("amplitude array rank does not match lattice dimension")
        if data.flags.writeable:
            data = data.copy()
            data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "origin", tuple(int(o) for o in self.origin))

    @classmethod
    def from_amplitudes(cls, amplitudes: Mapping[Sequence[int], Sequence[complex]], t: int = 0):
        """Build a state from a ``{site: coin vector}`` mapping."""
        if not amplitudes:
            raise ValueError("empty amplitude map")
        sites = np.array([np.atleast_1d(m) for m in amplitudes], dtype=np.int64)
        vecs = [np.asarray(v, dtype=np.complex128) for v in amplitudes.values()]
        lo, hi = sites.min(axis=0), sites.max(axis=0)
        data = np.zeros(tuple(hi - lo + 1) + (vecs[0].size,), dtype=np.complex128)
        for m, v in zip(sites, vecs):
            data[tuple(m - lo)] = v
        return cls(t, tuple(lo), data)

    @property
    def d(self) -> int:
        return len(self.origin)

    @property
    def c(self) -> int:
        return self.data.shape[-1]

    @property
    def bounds(self):
        lo = np.array(self.origin)
        return lo, lo + np.array(self.data.shape[:-1]) - 1

    def amplitude(self, m) -> np.ndarray:
        """Coin vector at site ``m`` (zero outside the stored box)."""
        idx = np.atleast_1d(np.asarray(m, dtype=np.int64)) - np.array(self.origin)
        if np.any(idx < 0) or np.any(idx >= np.array(self.data.shape[:-1])):
            return np.zeros(self.c, dtype=np.complex128)
        return self.data[tuple(idx)].copy()

    @property
    def amplitudes(self) -> dict:
        """Sites carrying a non-zero coin vector (exact zeros only are skipped)."""
        nz = np.argwhere(np.any(self.data != 0, axis=-1))
        lo = np.array(self.origin)
        return {tuple(int(x) for x in idx + lo): self.data[tuple(idx)].copy() for idx in nz}

    def norm_squared(self) -> float:
        return float(np.vdot(self.data, self.data).real)


def init_walk(spec: WalkSpec) -> WalkState:
    """State at t = 0: the initial coin vector sitting at the origin."""
    if not isinstance(spec, WalkSpec):
        raise TypeError("init_walk expects a WalkSpec")
    data = np.zeros((1,) * spec.d + (spec.c,), dtype=np.complex128)
    data[(0,) * spec.d] = spec.initial_state
    return WalkState(0, (0,) * spec.d, data)


def step(state: WalkState, spec: WalkSpec) -> WalkState:
    """Apply U = S (I (x) C) once."""
    if state.c != spec.c or state.d != spec.d:
        raise DimensionMismatch(
            f"state has d={state.d}, c={state.c}; walk has d={spec.d}, c={spec.c}")
    E = spec.shifts.vectors
    emin, emax = E.min(axis=0), E.max(axis=0)
    shape = np.array(state.data.shape[:-1])
    new_shape = tuple(shape + emax - emin) + (spec.c,)

    coined = state.data @ spec.coin.matrix.T
    out = np.zeros(new_shape, dtype=np.complex128)
    for i, e in enumerate(E):
        offset = e - emin
        sl = tuple(slice(o, o + n) for o, n in zip(offset, shape))
        out[sl + (i,)] += coined[..., i]
    origin = tuple(np.array(state.origin) + emin)
    return WalkState(state.t + 1, origin, out)


def iter_evolve(spec: WalkSpec, T: int, state: WalkState | None = None) -> Iterator[WalkState]:
    """Yield the states at t = 0..T (streaming form of :func:`evolve`)."""
    if T < 0:
        raise ValueError("number of steps must be non-negative")
    state = init_walk(spec) if state is None else state
    yield state
    for _ in range(T):
        state = step(state, spec)
        yield state


def evolve(spec: WalkSpec, T: int, state: WalkState | None = None) -> list:
    return list(iter_evolve(spec, T, state))


def return_probability(state: WalkState) -> float:
    """||psi(0, t)||^2."""
    v = state.amplitude((0,) * state.d)
    return float(np.vdot(v, v).real)


def return_series_direct(spec: WalkSpec, T: int) -> ReturnSeries:
    p = np.empty(T + 1)
    amps = np.empty((T + 1, spec.c), dtype=np.complex128)
    for s in iter_evolve(spec, T):
        amps[s.t] = s.amplitude((0,) * spec.d)
        p[s.t] = np.vdot(amps[s.t], amps[s.t]).real
    return ReturnSeries(p=p, method="direct", label=spec.label, amplitudes=amps)
