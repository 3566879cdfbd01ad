import numpy as np
import pytest

from netgames import games
from netgames.topology import build_structural_maps


@pytest.fixture(scope="session")
def lq_pair():
    """The 2-player scalar LQ game with K=1/2, a=1, full coupling.

    Its equilibrium is (2/3, 2/3): best response x = 1 - x_other/2.
    """
    inst = games.make_scalar_lq(K=[0.5, 0.5], a=[1.0, 1.0],
                                w=np.array([[0.0, 1.0], [1.0, 0.0]]))
    return inst


@pytest.fixture(scope="session")
def lq_maps(lq_pair):
    return build_structural_maps(lq_pair.topology, lq_pair.layout)


@pytest.fixture(scope="session")
def cournot_instance():
    return games.sample_instance(0)


@pytest.fixture(scope="session")
def cournot_maps(cournot_instance):
    return build_structural_maps(cournot_instance.topology,
                                 cournot_instance.layout)
