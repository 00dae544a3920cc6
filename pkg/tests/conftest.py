import numpy as np
import pytest

from qpf.circle import CircleInterval, DiophantineSpec
from qpf.families import FamilyConstants, QpfFamily, propose_regions


def example_a_family(alpha=100.0, p=2.0, amplitude=0.5, machinery_alpha=10.0):
    """The additively forced family of Example (a): h_alpha + tau + amplitude*cos(2 pi theta).

    Machinery constants: alpha~=10 (= sqrt(fibre alpha)) so the derivative
    thresholds 10 / 0.1 are actually cleared; |V'| >= 2.15 on the critical
    regions at tau = 0.5, so s=2, S=3.3 bracket the theta-derivative there.
    """
    fam = QpfFamily(
        "additive",
        {"alpha": alpha, "p": p, "forcing": {"kind": "cosine", "amplitude": amplitude}},
        DiophantineSpec.golden(),
    )
    E, C = propose_regions(fam, alpha=machinery_alpha, p=p)
    fam.constants = FamilyConstants(alpha=machinery_alpha, p=p, S=3.3, s=2.0, ell=0.9, L=1.1, E=E, C=C)
    return fam


@pytest.fixture(scope="session")
def example_a():
    return example_a_family()


@pytest.fixture(scope="session")
def rigid_family():
    return QpfFamily("rigid", {"forcing": {"kind": "none"}}, DiophantineSpec.golden())


@pytest.fixture(scope="session")
def arnold(request):
    def make(alpha):
        return QpfFamily("unforced_arnold", {"alpha": alpha}, DiophantineSpec.golden())

    return make
