import warnings

warnings.filterwarnings("ignore", message=".*TBB.*")

import numpy as np
import pytest

from mftsim import GaussianPacket, MftState, Potential, PotentialSpec
from mftsim.scenario import load_bundled

BUNDLED = ("free_packet", "harmonic_coherent", "entangled_pair",
           "entangled_triple", "collapse_pair")


@pytest.fixture(scope="session")
def scenarios():
    return {name: load_bundled(name) for name in BUNDLED}


@pytest.fixture(scope="session")
def free_state(scenarios):
    return scenarios["free_packet"].state


@pytest.fixture(scope="session")
def harmonic_state(scenarios):
    return scenarios["harmonic_coherent"].state


@pytest.fixture(scope="session")
def pair_state(scenarios):
    return scenarios["entangled_pair"].state


@pytest.fixture(scope="session")
def triple_state(scenarios):
    return scenarios["entangled_triple"].state


@pytest.fixture(scope="session")
def collapse_state(scenarios):
    return scenarios["collapse_pair"].state


@pytest.fixture(scope="session")
def cat_state():
    """Single particle, two branches with opposite momenta: interference
    nodes near x = pi/4 + k pi/2 at t = 0, used by the node-handling tests."""
    f = PotentialSpec(Potential.FREE)
    mk = lambda p: GaussianPacket(mass=1.0, potential=f, center=0.0,
                                  momentum=p, width_param=0.25j)
    c = 1.0 / np.sqrt(2.0)
    return MftState(branches=[[mk(2.0)], [mk(-2.0)]], coefficients=[c, c])


@pytest.fixture(scope="session")
def scenario_path():
    """Filesystem path of a bundled scenario file, for CLI subprocesses."""
    from importlib.resources import files
    base = files("mftsim") / "scenarios"

    def get(name):
        return str(base / f"{name}.json")

    return get
