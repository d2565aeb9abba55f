import numpy as np
import pytest

from sketchforge import raster_kernels
from sketchforge.camera import canonical_pose
from sketchforge.mesh import make_icosphere
from sketchforge.procgen import make_instance, render_sketch_mask


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    raster_kernels.warmup()


@pytest.fixture(scope="session")
def icosphere1():
    return make_icosphere(1)


@pytest.fixture(scope="session")
def icosphere3():
    return make_icosphere(3)


@pytest.fixture(scope="session")
def box_instance():
    return make_instance("box", np.random.default_rng([31, 0]))


@pytest.fixture(scope="session")
def box_sketch_mask(box_instance):
    return render_sketch_mask(box_instance, canonical_pose(), 128)
