import numpy as np
import pytest

from dualpop.seeding import make_rng


@pytest.fixture
def rng():
    return make_rng(20240811, 0)


@pytest.fixture
def rng_factory():
    def factory(index: int, master: int = 20240811):
        return make_rng(master, index)
    return factory


def assert_z(lhs, lhs_se, rhs, rhs_se=0.0, z_max=3.0, label=""):
    se = float(np.hypot(lhs_se, rhs_se))
    z = (lhs - rhs) / se if se > 0 else np.inf
    assert abs(z) < z_max, f"{label}: lhs={lhs:.6g} rhs={rhs:.6g} z={z:.2f}"
