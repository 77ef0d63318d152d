import pandas as pd
from critical_clusters.boxapprox import UNIT
from critical_clusters.clusters import clusters_in_domain, find_clusters
from critical_clusters.lattice import MeshSpec, sample_bernoulli

spec = MeshSpec('triangular-site', 1 / 32, 1.5, 0.5, seed=7)
config = sample_bernoulli(spec)
cs = find_clusters(config)
big = clusters_in_domain(cs, UNIT, 0.25)
df = pd.DataFrame([{'id': c.id, 'size': c.size, 'diameter': c.diameter, 'bbox': c.bbox.as_list()} for c in big])
print('clusters=', cs.n_clusters, 'in Lambda_1 with diameter >= 1/4:', len(df))
print('\nPreview:')
print(df.head(10).to_string(index=False))
print('\nSize quantiles:')
print(pd.Series(cs.sizes).describe())
