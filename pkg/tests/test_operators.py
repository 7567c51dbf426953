import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from dbarlab import grid as gr
from dbarlab import weights as wt
from dbarlab.operators import (
    assemble_D,
    assemble_Dbar,
    assemble_H,
    assemble_schrodinger,
    export_matrix_market,
    quadratic_form,
)
from dbarlab.weights import WeightModel

from conftest import random_field


@pytest.fixture(scope="module")
def fock_ops(fock):
    g = gr.build_grid(3.0, 0.15)
    return g, assemble_D(g, fock), assemble_H(g, fock)


@pytest.fixture(scope="module")
def zero_weight():
    return WeightModel.from_function(lambda x, y: 0.0 * x, 4.0, 0.1)


def test_H_hermitian_bit_exact(fock_ops, quartic):
    _, _, H = fock_ops
    assert abs(H.matrix - H.matrix.conj().T).max() == 0.0
    Hq = assemble_H(gr.build_grid(2.0, 0.2), quartic)
    assert abs(Hq.matrix - Hq.matrix.conj().T).max() == 0.0


def test_quadratic_form_matches_factor(fock_ops, rng):
    g, op, H = fock_ops
    for _ in range(20):
        u = random_field(rng, g.n)
        q = quadratic_form(H, u, u)
        assert q.real > 0
        assert abs(q.imag) <= 1e-12 * q.real
        assert q.real == pytest.approx(op.norm2(u), rel=1e-12)


def test_quadratic_form_without_penalty_is_norm_of_D(fock, rng):
    g = gr.build_grid(2.0, 0.2)
    H = assemble_H(g, fock, penalty=0.0)
    u = random_field(rng, g.n)
    Du = H.factor.D @ u
    assert quadratic_form(H, u, u).real == pytest.approx(np.vdot(Du, Du).real * g.h**2, rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_quadratic_form_hermitian_symmetry(seed):
    g = gr.build_grid(1.5, 0.25)
    H = assemble_H(g, WeightModel.monomial(2))
    r = np.random.default_rng(seed)
    u, v = random_field(r, g.n), random_field(r, g.n)
    assert quadratic_form(H, u, v) == pytest.approx(np.conj(quadratic_form(H, v, u)), rel=1e-12)


def test_adjoint_pairing(fock_ops, rng):
    g, op, _ = fock_ops
    Dbar = assemble_Dbar(op)
    for _ in range(10):
        u = random_field(rng, g.n)
        v = random_field(rng, op.rows.n)
        lhs = np.vdot(v, op.D @ u)
        rhs = np.vdot(Dbar @ v, u)
        assert abs(lhs - rhs) <= 1e-13 * abs(lhs)


def test_zero_weight_reduces_to_central_dz(zero_weight):
    g = gr.build_grid(2.0, 0.25)
    op = assemble_D(g, zero_weight)
    diff = op.D + gr.dz_central(g)
    assert abs(diff).max() <= 1e-15 * abs(op.D).max()


def test_D_on_gaussian_fourth_order(fock):
    # (-d_z + zbar) exp(-|z|^2) = 2 zbar exp(-|z|^2)
    errs = []
    for h in (0.1, 0.05):
        g = gr.build_grid(3.0, h)
        op = assemble_D(g, fock)
        u = np.exp(-np.abs(g.z) ** 2)
        zr = op.rows.z
        exact = 2 * np.conj(zr) * np.exp(-np.abs(zr) ** 2)
        deep = np.abs(zr) <= 1.5
        errs.append(np.max(np.abs((op.D @ u - exact)[deep])))
    assert errs[0] < 1e-3
    assert errs[0] / errs[1] > 12


def test_D_norm_ratio_on_zbar_gaussian(fock):
    # D(zbar e) = 2 zbar^2 e, so |Du| / |u| = 2 by Gaussian integrals.
    g = gr.build_grid(4.0, 0.1)
    op = assemble_D(g, fock)
    u = np.conj(g.z) * np.exp(-np.abs(g.z) ** 2)
    assert np.linalg.norm(op.D @ u) / np.linalg.norm(u) == pytest.approx(2.0, rel=2e-3)


@pytest.mark.parametrize("p", [lambda z: 1 + 0 * z, lambda z: z, lambda z: z**2 - 0.5j * z])
def test_Dbar_annihilates_bergman_functions(fock, p):
    g = gr.build_grid(4.0, 0.1)
    op = assemble_D(g, fock)
    v = p(op.rows.z) * np.exp(-np.abs(op.rows.z) ** 2)
    out = assemble_Dbar(op) @ v
    deep = np.abs(g.z) <= 2
    assert np.linalg.norm(out[deep]) / np.linalg.norm(v) <= g.h


def test_schrodinger_zero_field_closed_form(zero_weight):
    g = gr.build_grid(1.0, 0.5)
    S = assemble_schrodinger(g, zero_weight)
    lam = np.linalg.eigvalsh(S.matrix.toarray())
    h = g.h
    closed = 0.25 * 2 * (2 - np.sqrt(2)) / h**2
    assert lam[0] == pytest.approx(closed, rel=1e-12)
    lap = sp.kronsum(*(sp.diags([-1, 2, -1], [-1, 0, 1], shape=(3, 3)),) * 2) / h**2
    assert lam[0] == pytest.approx(0.25 * np.linalg.eigvalsh(lap.toarray())[0], rel=1e-12)


def test_schrodinger_hermitian(quartic):
    S = assemble_schrodinger(gr.build_grid(2.0, 0.2), quartic)
    assert abs(S.matrix - S.matrix.conj().T).max() == 0.0


def test_schrodinger_field_term_is_laplacian(quartic, rng):
    g = gr.build_grid(2.0, 0.2)
    S = assemble_schrodinger(g, quartic)
    rows = gr.forward_rows(g)
    P = gr.embed(g, rows)
    kinetic = None
    for axis, a in zip((0, 1), wt.vector_potential(quartic, rows.z)):
        Pi = -1j * gr.forward_difference(g, axis) - sp.diags(a) @ P
        kinetic = Pi.conj().T @ Pi if kinetic is None else kinetic + Pi.conj().T @ Pi
    u = random_field(rng, g.n)
    field_term = 4 * (S.matrix @ u) - kinetic @ u
    np.testing.assert_allclose(field_term, wt.laplacian(quartic, g.z) * u, rtol=1e-10, atol=1e-10)


def test_cross_assembly_defect_shrinks(fock):
    errs = []
    for h in (0.1, 0.05):
        g = gr.build_grid(3.0, h)
        u = np.exp(-np.abs(g.z - 0.3) ** 2) * (1 + 0.5j * g.z)
        d = (assemble_H(g, fock).matrix - assemble_schrodinger(g, fock).matrix) @ u
        errs.append(np.max(np.abs(d[np.abs(g.z) <= 2])))
    assert errs[0] / errs[1] >= 1.5


def test_matrix_market_roundtrip(tmp_path, fock):
    g = gr.build_grid(1.5, 0.25)
    H = assemble_H(g, fock)
    path = tmp_path / "H.mtx"
    export_matrix_market(H, path)
    assert path.read_text().splitlines()[0] == "%%MatrixMarket matrix coordinate complex hermitian"
    back = sp.csr_matrix(scipy.io.mmread(str(path)))
    assert abs(back - H.matrix).max() <= 1e-15 * abs(H.matrix).max()


def test_weight_domain_error_propagates():
    from dbarlab.errors import DomainError

    w = WeightModel.from_function(lambda x, y: x**2 + y**2, 1.0, 0.05)
    with pytest.raises(DomainError):
        assemble_H(gr.build_grid(2.0, 0.2), w)
