"""Return-probability time series shared by both evolution engines."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

METHODS = ("direct", "fourier", "synthetic")


@dataclass(frozen=True)
class ReturnSeries:
    """Return probabilities p_o(t) for t = 0..T.

    Attributes
    ----------
    p : ndarray of float, shape (T + 1,)
    method : {"direct", "fourier", "synthetic"}
    grid : int or None
        Momentum points per axis (fourier engine only).
    label : str
    exact : bool
        False when the fourier engine ran below the Nyquist bound.
    amplitudes : ndarray of complex, shape (T + 1, c), optional
        The origin amplitude vectors psi(0, t).
    warning : str or None
    """

    p: np.ndarray
    method: str
    grid: Optional[int] = None
    label: str = ""
    exact: bool = True
    amplitudes: Optional[np.ndarray] = field(default=None, repr=False)
    warning: Optional[str] = None

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("return series must be a non-empty 1-D sequence")
        if self.method not in METHODS:
            raise ValueError(f"unknown series method {self.method!r}")
        # quadrature roundoff may leave values a few ulp outside [0, 1]
        if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
            raise ValueError("return probabilities must lie in [0, 1]")
        p = np.clip(p, 0.0, 1.0)
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @classmethod
    def synthetic(cls, p, label="synthetic"):
        return cls(p=np.asarray(p, dtype=float), method="synthetic", label=label)

    @property
    def steps(self) -> int:
        return self.p.size - 1

    def __len__(self):
        return self.p.size

    def truncated(self, T: int) -> "ReturnSeries":
        """Series restricted to t = 0..T."""
        amps = None if self.amplitudes is None else self.amplitudes[: T + 1]
        return ReturnSeries(self.p[: T + 1], self.method, self.grid, self.label,
                            self.exact, amps, self.warning)
