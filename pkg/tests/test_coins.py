import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qwalk import CoinOperator, UnnormalizedFamilyParameters, coins


def test_coin_1d_closed_form():
    a, b = 0.4, -1.1
    m = coins.coin_1d(a, b).matrix
    expect = np.array([[np.exp(1j * a), np.exp(-1j * b)],
                       [np.exp(1j * b), -np.exp(-1j * a)]]) / np.sqrt(2)
    np.testing.assert_allclose(m, expect, atol=0)
    assert coins.check_unbiased(m)


def test_hadamard():
    np.testing.assert_allclose(coins.hadamard().matrix,
                               np.array([[1, 1], [1, -1]]) / np.sqrt(2), atol=1e-16)


def test_grover_entries():
    g = coins.coin_grover_2d().matrix
    assert np.all(np.diag(g) == -0.5)
    assert np.all(g[~np.eye(4, dtype=bool)] == 0.5)
    assert coins.check_unbiased(g)


def test_fourier_entries_exact():
    f = coins.coin_fourier_2d().matrix
    for m in range(4):
        for n in range(4):
            assert f[m, n] == 0.5 * 1j ** ((m * n) % 4)
    np.testing.assert_allclose(f @ f.conj().T, np.eye(4), atol=1e-15)


def test_tensor_order():
    a, b = coins.coin_1d(0.3, 0.0), coins.coin_1d(0.0, 1.0)
    t = coins.coin_tensor([a, b]).matrix
    np.testing.assert_array_equal(t, np.kron(b.matrix, a.matrix))
    with pytest.raises(ValueError):
        coins.coin_tensor([a])


def test_named_states():
    g = coins.state_grover_exceptional()
    np.testing.assert_allclose(g, [0.5, -0.5, -0.5, 0.5])
    f = coins.state_fourier_family(0.5, 0.5j)
    np.testing.assert_allclose(f, [0.5, 0.5j, 0.5, -0.5j])
    assert np.linalg.norm(f) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(UnnormalizedFamilyParameters):
        coins.state_fourier_family(0.5, 0.6)


def test_check_unbiased_rejects_identity():
    assert not coins.check_unbiased(coins.identity_coin(2))


def test_declarative_families():
    t = coins.TensorProduct((coins.OneD(), coins.OneD(0.2, 0.1))).build()
    assert t.size == 4
    assert coins.Grover().build().size == 4
    assert coins.Fourier().build().size == 4
    assert isinstance(coins.Explicit(np.eye(2)).build(), CoinOperator)
    with pytest.raises(ValueError):
        coins.Grover(d=3).build()


@settings(max_examples=40, deadline=None)
@given(c=st.sampled_from([2, 3, 4, 8]), seed=st.integers(0, 2 ** 32 - 1))
def test_random_unbiased_coin(c, seed):
    coin = coins.random_unbiased_coin(c, np.random.default_rng(seed))
    m = coin.matrix
    assert np.abs(m.conj().T @ m - np.eye(c)).max() < 1e-12
    assert coins.check_unbiased(coin)
