import numpy as np
import pytest

from beltrami.body import SupportBody, project_to_convex
from beltrami.grid import rasterize
from beltrami.quadrature import default_quadrature
from beltrami.spectral import OperatorHandle, first_positive_mu

BALL_MU = 4.493409457909064  # root of tan x = x in (pi, 3 pi/2), bisected offline


@pytest.fixture(scope="session")
def quad():
    # coarser than the production default; plenty for test bodies of lmax <= 6
    return default_quadrature(512)


@pytest.fixture(scope="session")
def ball():
    return SupportBody.ball(1.0)


@pytest.fixture(scope="session")
def ball_domain16(ball, quad):
    return rasterize(ball, 16, quad=quad)


@pytest.fixture(scope="session")
def ball_handle16(ball_domain16):
    return OperatorHandle(ball_domain16)


@pytest.fixture(scope="session")
def ball_result16(ball_handle16):
    return first_positive_mu(ball_handle16, seed=1, tol=1e-6)


def random_valid_body(rng, quad, lmax=4, amp=0.15):
    """Ball plus a random perturbation, repaired to pass the certificate."""
    c = np.zeros((lmax + 1) ** 2)
    c[0] = np.sqrt(4.0 * np.pi)
    c[1:] = amp * rng.standard_normal(c.size - 1)
    return project_to_convex(SupportBody(coeffs=c, lmax=lmax), margin=1e-6, quad=quad)


@pytest.fixture(scope="session")
def body_family(quad):
    rng = np.random.default_rng(42)
    return [random_valid_body(rng, quad) for _ in range(20)]
