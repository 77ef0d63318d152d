import json
from critical_clusters.arms import detect_arms, half_plane_events, special_query
from critical_clusters.lattice import MeshSpec, sample_bernoulli

spec = MeshSpec('triangular-site', 1 / 64, 1.0, 0.5, seed=3)
hits = {}
for i in range(20):
	config = sample_bernoulli(spec.at(i))
	for name in ('pi1', 'pi4', 'pi6'):
		hits[name] = hits.get(name, 0) + detect_arms(config, special_query(name, 1 / 16, 1 / 2))
config = sample_bernoulli(spec)
events = half_plane_events(config, (0.0, 0.0), 1 / 16, 1 / 2)
print(f'samples=20 hits={hits}')
print(json.dumps({side: {'pi03': p03, 'pi13': p13} for side, (p03, p13) in events.items()}, indent=2))
