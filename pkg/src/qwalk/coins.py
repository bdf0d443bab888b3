"""Coin constructors and the distinguished initial coin states.

All built-in coins come from closed forms, so their entries are exact up to
the rounding of 1/sqrt(2) and complex exponentials.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import UnnormalizedFamilyParameters
from .walk import UNITARITY_TOL, CoinOperator

# exact powers of i
_I_POWERS = np.array([1, 1j, -1, -1j], dtype=np.complex128)


def coin_1d(alpha: float, beta: float) -> CoinOperator:
    """General unbiased 2 x 2 coin C(alpha, beta).

    (1/sqrt 2) [[e^{i alpha}, e^{-i beta}], [e^{i beta}, -e^{-i alpha}]]
    """
    m = np.array([[np.exp(1j * alpha), np.exp(-1j * beta)],
                  [np.exp(1j * beta), -np.exp(-1j * alpha)]]) / np.sqrt(2.0)
    return CoinOperator(m)


def hadamard() -> CoinOperator:
    return coin_1d(0.0, 0.0)


def identity_coin(c: int) -> CoinOperator:
    return CoinOperator(np.eye(c, dtype=np.complex128))


def coin_tensor(factors: Sequence[CoinOperator]) -> CoinOperator:
    """Independent coin per spatial dimension: ``factors[a]`` acts on dimension ``a``.

    With the diagonal shift ordering (dimension 1 is the least significant
    coin bit) this is ``factors[-1] (x) ... (x) factors[0]``.
    """
    if len(factors) < 2:
        raise ValueError("a tensor-product coin needs at least two factors")
    m = np.ones((1, 1), dtype=np.complex128)
    for f in reversed(factors):
        f = f if isinstance(f, CoinOperator) else CoinOperator(f)
        m = np.kron(m, f.matrix)
    return CoinOperator(m)


def coin_grover_2d() -> CoinOperator:
    """G_{mn} = 1/2 - delta_{mn}."""
    return CoinOperator(0.5 * np.ones((4, 4)) - np.eye(4))


def coin_fourier_2d() -> CoinOperator:
    """F_{mn} = (1/2) i^{(m-1)(n-1)} for m, n = 1..4."""
    idx = np.arange(4)
    return CoinOperator(0.5 * _I_POWERS[np.outer(idx, idx) % 4])


def check_unbiased(coin: Union[CoinOperator, np.ndarray]) -> bool:
    """True iff every entry has modulus 1/sqrt(c) to within 1e-12."""
    m = coin.matrix if isinstance(coin, CoinOperator) else np.asarray(coin)
    c = m.shape[0]
    return bool(np.all(np.abs(np.abs(m) - 1.0 / np.sqrt(c)) < UNITARITY_TOL))


def state_grover_exceptional() -> np.ndarray:
    """The coin state (1, -1, -1, 1)/2 for which the Grover walk does not localise."""
    return np.array([1, -1, -1, 1], dtype=np.complex128) / 2


def state_fourier_family(a: complex, b: complex) -> np.ndarray:
    """(a, b, a, -b); requires 2|a|^2 + 2|b|^2 = 1."""
    norm = 2 * abs(a) ** 2 + 2 * abs(b) ** 2
    if abs(norm - 1.0) > 1e-12:
        raise UnnormalizedFamilyParameters(
            f"2|a|^2 + 2|b|^2 must equal 1, got {norm!r}")
    return np.array([a, b, a, -b], dtype=np.complex128)


def random_unbiased_coin(c: int, rng: np.random.Generator) -> CoinOperator:
    """Random unbiased coin: phases and permutations around a complex Hadamard core.

    For c = 4 the core is drawn from the one-parameter family of 4 x 4 complex
    Hadamard matrices, for other c it is the c-point Fourier matrix.
    """
    if c == 4:
        a = rng.uniform(-np.pi, np.pi)
        u = 1j * np.exp(1j * a)
        core = 0.5 * np.array([[1, 1, 1, 1],
                               [1, u, -1, -u],
                               [1, -1, 1, -1],
                               [1, -u, -1, u]])
    else:
        idx = np.arange(c)
        core = np.exp(2j * np.pi * np.outer(idx, idx) / c) / np.sqrt(c)
    left = np.exp(1j * rng.uniform(-np.pi, np.pi, c))
    right = np.exp(1j * rng.uniform(-np.pi, np.pi, c))
    p1, p2 = rng.permutation(c), rng.permutation(c)
    m = left[:, None] * core[p1][:, p2] * right[None, :]
    return CoinOperator(m)


# Declarative coin descriptions, used by the configuration layer.

@dataclass(frozen=True)
class OneD:
    alpha: float = 0.0
    beta: float = 0.0

    def build(self) -> CoinOperator:
        return coin_1d(self.alpha, self.beta)


@dataclass(frozen=True)
class TensorProduct:
    factors: tuple

    def build(self) -> CoinOperator:
        return coin_tensor([f.build() for f in self.factors])


@dataclass(frozen=True)
class Grover:
    d: int = 2

    def build(self) -> CoinOperator:
        if self.d != 2:
            raise ValueError("only the 2-D Grover coin is supported")
        return coin_grover_2d()


@dataclass(frozen=True)
class Fourier:
    d: int = 2

    def build(self) -> CoinOperator:
        if self.d != 2:
            raise ValueError("only the 2-D Fourier coin is supported")
        return coin_fourier_2d()


@dataclass(frozen=True)
class Explicit:
    matrix: np.ndarray

    def build(self) -> CoinOperator:
        return CoinOperator(self.matrix)


CoinFamily = Union[OneD, TensorProduct, Grover, Fourier, Explicit]
