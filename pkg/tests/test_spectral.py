import json
import warnings

import numpy as np
import pytest

from qwalk import (
    BandDiscontinuity,
    NoFeatureSurvives,
    ShiftSet,
    StationaryFeature,
    WalkSpec,
    analyse,
    coins,
    continue_bands,
    detect_flat_bands,
    eigendecompose_grid,
    find_stationary_points,
    predict_exponent,
)


def _quiet_analyse(spec, N):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BandDiscontinuity)
        return analyse(spec, N)


def _circ(a, b):
    return abs(np.angle(np.exp(1j * (np.asarray(a) - np.asarray(b)))))


def _points(report):
    return [f for f in report.features if f.kind == "isolated_point" and not f.flagged]


@pytest.mark.parametrize("alpha", [0.0, 0.7, -2.3])
def test_1d_stationary_points(alpha):
    spec = WalkSpec(ShiftSet.diagonal(1), coins.coin_1d(alpha, 0.0), [1, 0])
    rep = _quiet_analyse(spec, 64)
    pts = _points(rep)
    assert len(pts) == 4  # two points on each of the two bands
    for f in pts:
        assert f.hessian_rank == 1
        k = f.location[0]
        assert min(_circ(k, alpha + np.pi / 2), _circ(k, alpha - np.pi / 2)) < 1e-5
    assert rep.flat_bands == []
    assert rep.prediction.exponent == 1.0


def test_1d_no_state_escapes_the_saddles():
    spec = WalkSpec(ShiftSet.diagonal(1), coins.coin_1d(0.4, 1.3), [1, 0])
    rep = _quiet_analyse(spec, 64)
    vecs = np.array([f.vectors[0] for f in _points(rep)])
    theta, phi = np.meshgrid(np.linspace(0, np.pi, 61), np.linspace(0, 2 * np.pi, 61))
    states = np.stack([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)], -1).reshape(-1, 2)
    worst = np.abs(states @ vecs.conj().T).max(axis=1).min()
    assert worst > 0.3
    for psi in states[::97]:
        assert predict_exponent(rep.features, psi, rep.bands).exponent == 1.0


def test_hadamard_2d_has_no_flat_band(hadamard_2d):
    g = eigendecompose_grid(hadamard_2d, 64)
    bands = continue_bands(g, hadamard_2d)
    assert detect_flat_bands(bands) == []
    for j in range(4):
        ph = np.angle(bands.lam[:, j] * np.conj(bands.lam[0, j]))
        assert np.ptp(ph) > 0.1


def test_tensor_points_are_products_of_1d_points():
    a1, a2 = 0.5, -1.0
    spec = WalkSpec(ShiftSet.diagonal(2),
                    coins.coin_tensor([coins.coin_1d(a1, 0), coins.coin_1d(a2, 0)]), [1, 0, 0, 0])
    rep = _quiet_analyse(spec, 64)
    locs = np.array([f.location for f in _points(rep)])
    expected = [(x, y) for x in (a1 + np.pi / 2, a1 - np.pi / 2) for y in (a2 + np.pi / 2, a2 - np.pi / 2)]
    for x, y in expected:
        assert np.any((_circ(locs[:, 0], x) < 1e-6) & (_circ(locs[:, 1], y) < 1e-6))
    for k in locs:
        assert any(_circ(k[0], x) < 1e-6 and _circ(k[1], y) < 1e-6 for x, y in expected)


def test_grover_flat_bands_and_dispersion(grover_generic):
    g = eigendecompose_grid(grover_generic, 128)
    bands = continue_bands(g, grover_generic)
    flat = detect_flat_bands(bands)
    assert sorted(round(abs(f.phase), 9) for f in flat) == [0.0, round(np.pi, 9)]
    k = g.points
    rhs = -np.cos(k[:, 0]) * np.cos(k[:, 1])
    flat_ids = {f.band for f in flat}
    for j in set(range(4)) - flat_ids:
        assert np.abs(np.cos(np.angle(bands.lam[:, j])) - rhs).max() < 1e-10


def test_grover_saddles(grover_generic):
    rep = _quiet_analyse(grover_generic, 64)
    good = _points(rep)
    assert len(good) == 8
    for f in good:
        assert f.hessian_rank == 2
        assert np.all(_circ(np.abs(f.location), np.pi / 2) < 1e-8)


def test_grover_flags_cone_neighbourhoods(grover_generic):
    g = eigendecompose_grid(grover_generic, 32)
    bands = continue_bands(g, grover_generic)
    dispersive = [j for j in range(4) if j not in {f.band for f in detect_flat_bands(bands)}]
    with pytest.warns(BandDiscontinuity):
        feats = find_stationary_points(bands, dispersive[0])
    assert any(f.flagged for f in feats)


def test_fourier_points_and_lines(fourier_generic):
    rep = _quiet_analyse(fourier_generic, 64)
    pts = _points(rep)
    assert len(pts) == 16
    for f in pts:
        k1, k2 = f.location
        assert min(_circ(k1, np.pi / 4), _circ(k1, -3 * np.pi / 4)) < 1e-4
        assert _circ(abs(k2), np.pi / 2) < 1e-4
    curves = [f for f in rep.features if f.kind == "curve"]
    fixed = sorted((round(f.phase % (2 * np.pi), 6), tuple(f.to_dict()["fixed_coordinates"].items()))
                   for f in curves)
    assert len(curves) == 4
    for _, coords in fixed:
        assert len(coords) == 1 and coords[0][0] == "k2"
        assert min(_circ(coords[0][1], 0.0), _circ(coords[0][1], np.pi)) < 1e-9
    for f in curves:
        assert len(f.location) >= 64 // 4
        assert f.amplitude_exponent == 0.5


def test_locations_stable_under_refinement(fourier_generic):
    a = _quiet_analyse(fourier_generic, 32)
    b = _quiet_analyse(fourier_generic, 64)
    la = np.array(sorted(tuple(np.round(f.location, 5)) for f in _points(a)))
    lb = np.array(sorted(tuple(np.round(f.location, 5)) for f in _points(b)))
    assert la.shape == lb.shape
    pa = np.array([f.location for f in _points(a)])
    pb = np.array([f.location for f in _points(b)])
    for k in pa:
        assert np.min(np.linalg.norm(np.angle(np.exp(1j * (pb - k))), axis=1)) < 1e-6


@pytest.mark.parametrize("name, expected", [
    ("grover_generic", "localised"),
    ("grover_exceptional", 2.0),
    ("fourier_generic", 1.0),
    ("fourier_family", 2.0),
    ("hadamard_2d", 2.0),
    ("hadamard_1d", 1.0),
])
def test_predicted_exponents(name, expected, request):
    spec = request.getfixturevalue(name)
    rep = _quiet_analyse(spec, 64)
    assert rep.prediction.label == expected


def test_exceptional_state_logs_orthogonality_case(grover_exceptional):
    rep = _quiet_analyse(grover_exceptional, 32)
    notes = " ".join(rep.prediction.notes)
    assert "flat_band" in notes and "everywhere on the band" in notes


def test_no_features_means_fast_decay():
    pred = predict_exponent([], np.array([1, 0]))
    assert np.isinf(pred.exponent) and not pred.localised


def test_all_features_filtered():
    v = np.array([[0, 1]], dtype=complex)
    f = StationaryFeature(kind="isolated_point", band=0, location=np.array([0.1]), phase=0.0,
                          vectors=v, hessian_rank=1, amplitude_exponent=0.5)
    with pytest.raises(NoFeatureSurvives) as info:
        predict_exponent([f], np.array([1, 0]))
    assert info.value.fallback.exponent == 1.0


def test_report_serialises(fourier_family):
    rep = _quiet_analyse(fourier_family, 32)
    text = json.dumps(rep.to_dict())
    assert "curve" in text
