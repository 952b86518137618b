import pytest

from aescap.autodiff import set_finite_checks


@pytest.fixture(autouse=True)
def finite_checks():
    # Every op in the suite must produce finite values.
    set_finite_checks(True)
    yield
    set_finite_checks(False)
