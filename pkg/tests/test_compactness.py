import numpy as np
import pytest

from dbarlab import grid as gr
from dbarlab.compactness import (
    DiagnoseParams,
    Verdict,
    classify,
    local_ground_energy,
    magnetic_integral,
    mu_profile,
    ring_centers,
)
from dbarlab.errors import ConfigError, ConsistencyError, ResolutionError
from dbarlab.operators import assemble_H
from dbarlab.spectra import smallest_eigs
from dbarlab.weights import WeightModel


@pytest.fixture(scope="module")
def fock_setup(fock):
    g = gr.build_grid(6.2, 0.1)
    return g, assemble_H(g, fock)


@pytest.fixture(scope="module")
def zero_weight():
    return WeightModel.from_function(lambda x, y: 0.0 * x, 3.0, 0.1)


def test_fock_local_energy_translation_invariant(fock_setup, fock):
    g, H = fock_setup
    mu0 = local_ground_energy(g, fock, 0, 1.0, H=H)
    mu5 = local_ground_energy(g, fock, 5.0, 1.0, H=H)
    assert mu5 == pytest.approx(mu0, rel=0.1)
    # A unit disk holds less than one Landau orbit, so the energy sits above 2.
    assert mu0 > 2.0


def test_local_energy_domain_monotone(fock_setup, fock):
    g, H = fock_setup
    small = local_ground_energy(g, fock, 1 + 1j, 0.6, H=H)
    large = local_ground_energy(g, fock, 1 + 1j, 1.2, H=H)
    assert small >= large


def test_local_energy_above_global_minimum(fock, quartic):
    for w in (fock, quartic):
        g = gr.build_grid(3.0, 0.15)
        H = assemble_H(g, w)
        lam1 = smallest_eigs(H, 4).lambdas[0]
        assert local_ground_energy(g, w, 0.5, 1.0, H=H) >= lam1 * (1 - 1e-10)


def test_quartic_local_energy_grows(quartic):
    g = gr.build_grid(3.6, 0.05)
    mp = mu_profile(g, quartic, [0.0, 1.0, 2.0], 4, H=assemble_H(g, quartic))
    assert mp.strictly_increasing()
    assert mp.values[2] >= 2 * mp.values[1]
    assert mp.slope > 0


def test_mu_profile_empty_radii(fock_setup, fock):
    g, H = fock_setup
    mp = mu_profile(g, fock, [], H=H)
    assert mp.values == [] and mp.radii == []


def test_mu_profile_parallel_matches_serial(fock):
    g = gr.build_grid(3.0, 0.15)
    H = assemble_H(g, fock)
    a = mu_profile(g, fock, [0.0, 1.0], 4, H=H)
    b = mu_profile(g, fock, [0.0, 1.0], 4, H=H, workers=3)
    assert a.values == b.values


def test_ring_outside_grid(fock_setup, fock):
    g, H = fock_setup
    with pytest.raises(ConfigError):
        mu_profile(g, fock, [5.5], H=H)
    with pytest.raises(ConfigError):
        magnetic_integral(g, fock, 5.5, 1.0)


def test_ball_too_small_for_grid(fock):
    g = gr.build_grid(2.0, 0.25)
    with pytest.raises(ResolutionError):
        local_ground_energy(g, fock, 0, 0.4)


def test_magnetic_integral_fock_value(fock_setup, fock):
    g, _ = fock_setup
    for w in ring_centers(3.0, 5):
        assert magnetic_integral(g, fock, w) == pytest.approx(20 * np.pi, rel=0.01)


@pytest.mark.parametrize("m", [2, 3, 4])
def test_magnetic_integral_rotation_invariant(fock_setup, m):
    g, _ = fock_setup
    w = WeightModel.monomial(m)
    vals = [magnetic_integral(g, w, c) for c in ring_centers(2.0, 6)]
    np.testing.assert_allclose(vals, vals[0], rtol=2e-3)


def test_quartic_magnetic_integral_grows(fock_setup, quartic):
    g, _ = fock_setup
    assert magnetic_integral(g, quartic, 3.0) > magnetic_integral(g, quartic, 1.0)


def small_params(**kw):
    base = dict(radii=(0.0, 0.5, 1.0), samples_per_ring=4, ball_radius=0.5,
                degeneracy_radii=(2.0, 3.0), degeneracy_h=0.25, degeneracy_k=16)
    base.update(kw)
    return DiagnoseParams(**base)


def test_zero_weight_is_inconclusive(zero_weight):
    g = gr.build_grid(2.0, 0.1)
    rep = classify(g, zero_weight, small_params())
    assert rep.verdict is Verdict.INCONCLUSIVE
    assert rep.criteria_fired == []
    assert rep.degeneracy == []


def test_conflicting_signatures_raise(fock):
    # Thresholds low enough that a constant Laplacian counts as divergent.
    g = gr.build_grid(2.0, 0.1)
    params = small_params(laplacian_min=0.0, laplacian_ratio=0.5, flat_band=0.5)
    with pytest.raises(ConsistencyError) as info:
        classify(g, fock, params)
    assert "laplacian_divergence" in info.value.evidence["fired"]


def test_params_validation():
    with pytest.raises(ConfigError):
        DiagnoseParams(radii=(1.0,)).validate()
    with pytest.raises(ConfigError):
        DiagnoseParams(flat_band=0).validate()


def test_report_serialises(zero_weight):
    import json

    g = gr.build_grid(2.0, 0.1)
    d = classify(g, zero_weight, small_params()).to_dict()
    assert json.loads(json.dumps(d))["verdict"] == "Inconclusive"
