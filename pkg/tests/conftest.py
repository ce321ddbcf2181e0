import numpy as np
import pytest

from censpde.data import CensoredDataset
from censpde.fem import assemble_fem
from censpde.mcmc import CensoredGibbsSampler, McmcConfig, Priors
from censpde.mesh import Mesh


@pytest.fixture(scope="session")
def tiny_mesh():
    """Unit square split into two CCW triangles: 4 nodes, the smallest useful mesh."""
    nodes = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
    triangles = [(0, 1, 2), (0, 2, 3)]
    return Mesh(nodes, triangles)


@pytest.fixture(scope="session")
def tiny_fem(tiny_mesh):
    return assemble_fem(tiny_mesh)


@pytest.fixture()
def tiny_problem(tiny_mesh, tiny_fem):
    """n=5, N=4 censored instance for brute-force conditional checks."""
    rng = np.random.default_rng(1234)
    loc = rng.uniform(0.05, 0.95, (5, 2))
    X = np.column_stack([np.ones(5), loc[:, 0]])
    y = rng.normal(2.0, 1.5, 5)
    delta = np.array([0, 1, 0, 1, 0], dtype=np.int8)
    limits = np.where(delta == 1, y + 0.3, np.nan)
    ds = CensoredDataset(locations=loc, y=y, delta=delta, limits=limits, X=X)
    priors = Priors(phi_upper=1.0)
    cfg = McmcConfig(n_iter=40, burn_in=20, thin=2, n_chains=1, seed=0)
    sampler = CensoredGibbsSampler(ds, tiny_mesh, tiny_fem, priors, cfg)
    return sampler
