import numpy as np
import pytest

from beltrami.body import SupportBody
from beltrami.gamma import (
    BoxDomain,
    GammaEstimate,
    bs_tilde_apply,
    gamma_distance,
    lipschitz_check,
    singular_value,
)
from beltrami.grid import box_domain, rasterize_on_grid
from beltrami.spectral import OperatorHandle, first_positive_mu


@pytest.fixture(scope="module")
def box16():
    return BoxDomain(box=box_domain([0.0, 0.0, 0.0], 1.0, 16))


def ball_on(box, r, quad):
    return rasterize_on_grid(
        SupportBody.ball(r), box.box.origin, box.box.spacing, box.box.dims, quad=quad
    )


@pytest.fixture(scope="module")
def nested(box16, quad):
    return {r: ball_on(box16, r, quad) for r in (0.5, 0.55, 0.6)}


def test_bs_tilde_collapses_on_full_box():
    box = BoxDomain(box=box_domain([0.0, 0.0, 0.0], 0.5, 8))
    handle = OperatorHandle(box.box)
    rng = np.random.default_rng(0)
    w = box.box.random_face_field(rng)
    a = bs_tilde_apply(box, box.box, w, handle=handle)
    b = handle.apply_field(w)
    diff = a - b
    assert np.sqrt(box.box.face_inner(diff, diff)) <= 1e-12


def test_bs_tilde_kills_outside_support(box16, nested):
    sub = nested[0.5]
    rng = np.random.default_rng(1)
    w = box16.box.random_face_field(rng)
    w_out = w - sub.mask_faces(w)  # supported off the subdomain's faces
    out = bs_tilde_apply(box16, sub, w_out)
    assert np.sqrt(box16.box.face_inner(out, out)) <= 1e-12


def test_bs_tilde_linearity(box16, nested):
    sub = nested[0.5]
    handle = OperatorHandle(sub)
    rng = np.random.default_rng(2)
    w1 = box16.box.random_face_field(rng)
    w2 = box16.box.random_face_field(rng)
    lhs = bs_tilde_apply(box16, sub, 2.0 * w1 + w2, handle=handle)
    rhs = 2.0 * bs_tilde_apply(box16, sub, w1, handle=handle) + bs_tilde_apply(
        box16, sub, w2, handle=handle
    )
    diff = lhs - rhs
    assert np.sqrt(box16.box.face_inner(diff, diff)) <= 1e-10 * np.sqrt(
        box16.box.face_inner(lhs, lhs)
    )


def test_bs_tilde_rejects_foreign_grid(box16, quad):
    from beltrami.grid import rasterize

    stray = rasterize(SupportBody.ball(0.5), 16, quad=quad)  # its own grid
    rng = np.random.default_rng(3)
    with pytest.raises(ValueError):
        bs_tilde_apply(box16, stray, box16.box.random_face_field(rng))


def test_gamma_identity(box16, nested):
    est = gamma_distance(box16, nested[0.5], nested[0.5], seed=0)
    assert est.value <= 1e-10
    assert isinstance(est, GammaEstimate)
    assert est.spacing == box16.box.spacing


def test_gamma_symmetry(box16, nested):
    a = gamma_distance(box16, nested[0.5], nested[0.6], seed=0)
    b = gamma_distance(box16, nested[0.6], nested[0.5], seed=0)
    assert a.value == pytest.approx(b.value, rel=1e-5)


def test_gamma_monotone_in_gap(box16, nested):
    d_small = gamma_distance(box16, nested[0.5], nested[0.55], seed=0).value
    d_large = gamma_distance(box16, nested[0.5], nested[0.6], seed=0).value
    assert 0 < d_small < d_large


def test_gamma_triangle_inequality(box16, nested):
    d01 = gamma_distance(box16, nested[0.5], nested[0.55], seed=0).value
    d12 = gamma_distance(box16, nested[0.55], nested[0.6], seed=0).value
    d02 = gamma_distance(box16, nested[0.5], nested[0.6], seed=0).value
    assert d02 <= d01 + d12 + 2e-6 * max(d01 + d12, 1.0)


def test_gamma_sampling_below_power(box16, nested):
    est = gamma_distance(box16, nested[0.5], nested[0.6], seed=0, nsamples=12)
    assert est.method == "power-iteration"
    assert est.residual <= 1e-6
    # witness is unit-norm and certifies a lower bound
    w = est.lower_witness
    assert box16.box.face_inner(w, w) == pytest.approx(1.0, rel=1e-8)
    out = bs_tilde_apply(box16, nested[0.5], w) - bs_tilde_apply(box16, nested[0.6], w)
    lower = np.sqrt(box16.box.face_inner(out, out))
    assert lower <= est.value + 1e-6 * max(est.value, 1.0)
    assert lower >= 0.9 * est.value  # the power witness nearly attains it


def test_singular_value_matches_mu(nested):
    sub = nested[0.55]
    s1 = singular_value(sub, 1, seed=0)
    res = first_positive_mu(OperatorHandle(sub), seed=0)
    branches = [1.0 / res.mu1]
    if res.negative_branch is not None:
        branches.append(abs(1.0 / res.negative_branch[0]))
    assert s1 == pytest.approx(max(branches), rel=1e-5)
    with pytest.raises(ValueError):
        singular_value(sub, 0)


def test_lipschitz_check(box16, nested):
    for k in (1, 2):
        rep = lipschitz_check(box16, nested[0.5], nested[0.55], k=k, seed=0)
        assert rep.holds
        assert abs(rep.sigma_1 - rep.sigma_2) <= rep.d_gamma + 1e-8
    same = lipschitz_check(box16, nested[0.5], nested[0.5], k=1, seed=0)
    assert same.holds
    assert same.d_gamma <= 1e-10
