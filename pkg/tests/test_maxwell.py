import math

import numpy as np
import pytest

from gluebench.errors import DomainMismatch, NetSourceMismatch
from gluebench.grid import Annulus, Sphere, build_domain, flux_integral, rotated_gradient, sample_nodes
from gluebench.maxwell import (
    GlueProblem,
    assemble_rho_chi,
    compatibility_check,
    glue_fields,
    make_field,
)
from gluebench.weights import CutoffSpec, WeightSpec


@pytest.fixture
def dom():
    return build_domain(Annulus(1.0, 3.0), 0.1, ((-3.2, -3.2), (3.2, 3.2)))


def _outside_faces(d, a):
    return ~d.face_interior(a)


def test_identical_fields_give_zero_potential(dom):
    E = make_field("dipole", dom)
    res = glue_fields(GlueProblem(E, E, dom))
    assert np.max(np.abs(res.u.values)) < 1e-12
    for a in range(2):
        assert np.allclose(res.E.comps[a], E.comps[a], atol=1e-12)


def test_dipole_screening(dom):
    E1 = make_field("dipole", dom)
    E2 = make_field("zero", dom)
    res = glue_fields(GlueProblem(E1, E2, dom))
    assert res.max_div <= 1e-8
    assert res.interface_mismatch == 0.0
    x = dom.face_coords(0)
    r = np.hypot(x[0], x[1])
    assert np.all(res.E.comps[0][r >= 3.0] == 0.0)
    assert np.array_equal(res.E.comps[0][r <= 1.0], E1.comps[0][r <= 1.0])
    assert np.max(np.abs(res.E.comps[0][r < 1.0])) > 0.1


def test_region_locality(dom):
    E1 = make_field("bump", dom, width=0.4)
    E2 = make_field("uniform", dom)
    res = glue_fields(GlueProblem(E1, E2, dom))
    chi = GlueProblem(E1, E2, dom).cutoff
    from gluebench.maxwell import cutoff_faces

    cf = cutoff_faces(dom, chi)
    for a in range(2):
        out = _outside_faces(dom, a)
        Ec = cf[a] * E1.comps[a] + (1 - cf[a]) * E2.comps[a]
        assert np.all(res.E.comps[a][out] == Ec[out])


def test_rho_chi_supported_in_band(dom):
    E1 = make_field("dipole", dom)
    rho = assemble_rho_chi(E1, make_field("zero", dom), CutoffSpec(0.4, 0.6)).values
    x = dom.cell_coords()
    t = (np.hypot(x[0], x[1]) - 1.0) / 2.0
    band = (t > 0.4 - 0.06) & (t < 0.6 + 0.06)
    assert np.max(np.abs(rho[~band])) < 1e-12
    assert np.max(np.abs(rho[band])) > 1e-3


def test_monopole_is_obstructed(dom):
    E1 = make_field("monopole", dom)
    with pytest.raises(NetSourceMismatch) as exc:
        glue_fields(GlueProblem(E1, make_field("zero", dom), dom))
    assert exc.value.defect == pytest.approx(2 * math.pi, rel=1e-2)


def test_compatibility_check_values(dom):
    E1 = make_field("monopole", dom, charge=2.0)
    mism, rel = compatibility_check(E1, make_field("zero", dom), relative=True)
    assert mism == pytest.approx(4 * math.pi, rel=1e-2)
    assert rel == pytest.approx(1.0)
    assert compatibility_check(E1, E1) == pytest.approx(0.0, abs=1e-2)


def test_monopole_glued_to_itself_has_no_flux_obstruction(dom):
    # the sampled field carries an O(h^2) discrete divergence, so relax the source check only
    E = make_field("monopole", dom)
    res = glue_fields(GlueProblem(E, E, dom, strict=False))
    assert abs(res.flux_mismatch) / (2 * math.pi) < 1e-3
    assert res.report.projection_defect < 1e-4


def test_grid_mismatch(dom):
    other = build_domain(Annulus(1.0, 3.0), 0.2, ((-3.2, -3.2), (3.2, 3.2)))
    with pytest.raises(DomainMismatch):
        glue_fields(GlueProblem(make_field("dipole", dom), make_field("zero", other), dom))


def test_infinite_family_rank(dom):
    """Five independent stream functions stay independent after gluing."""
    fields = []
    for k in range(5):
        ang = 2 * math.pi * k / 5

        def stream(x, ang=ang, k=k):
            c = np.array([0.4 * math.cos(ang), 0.4 * math.sin(ang)]).reshape(2, 1, 1)
            y = x - c
            return np.exp(-np.sum(y * y, axis=0) / (0.3 + 0.05 * k))

        E1 = rotated_gradient(dom, sample_nodes(dom, stream))
        res = glue_fields(GlueProblem(E1, make_field("zero", dom), dom))
        assert res.max_div <= 1e-8
        fields.append(np.concatenate([c[:, :].ravel() for c in res.E.comps]))
    s = np.linalg.svd(np.array(fields), compute_uv=False)
    assert s[-1] / s[0] > 1e-6


def test_three_dimensional_dipole():
    d = build_domain(Annulus(1.0, 3.0), 0.2, ((-3.2,) * 3, (3.2,) * 3))
    res = glue_fields(GlueProblem(make_field("dipole", d), make_field("zero", d), d))
    assert res.max_div <= 1e-8
    assert res.interface_mismatch == 0.0


def test_exponential_weight_is_default():
    assert GlueProblem(None, None, None).weights == WeightSpec("exponential", s=1.0)
