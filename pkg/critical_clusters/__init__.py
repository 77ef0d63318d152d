"""Critical cluster experiments.

Focus: clusters of critical site percolation on the triangular lattice and of
critical FK-Ising on the square lattice, their normalized counting measures,
arm events, box approximations and the Ising magnetization field.
"""

__version__ = "0.1.0"

from .clusters import clusters_in_domain, find_clusters
from .lattice import MeshSpec, sample_bernoulli, sample_fk_ising

__all__ = [
	"MeshSpec",
	"clusters_in_domain",
	"find_clusters",
	"sample_bernoulli",
	"sample_fk_ising",
	"__version__",
]
