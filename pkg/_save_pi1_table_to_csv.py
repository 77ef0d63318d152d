import pandas as pd
from pathlib import Path
from typing import Optional, List

from critical_clusters.lattice import MeshSpec, NormalizationTable, estimate_pi1_normalization


def main(etas: Optional[List[float]] = None, n_samples: int = 200) -> None:
	out_path = Path('pi1_table.csv')
	table = NormalizationTable()
	for eta in etas or [1 / 16, 1 / 32, 1 / 64]:
		spec = MeshSpec('triangular-site', eta, 1.25, 0.5, seed=11)
		table.add(spec.kind, eta, estimate_pi1_normalization(spec, n_samples))
	table.save(Path('normalization.json'))
	df = pd.DataFrame([dict(key=k, **v) for k, v in table.to_json().items()])
	cols = ['key', 'pi1_hat', 'ci_halfwidth', 'hits', 'n_samples', 'usable']
	if not df.empty:
		df = df.reindex(columns=cols)
	df.to_csv(out_path, index=False)
	print(f'saved: {out_path.resolve()}')
	print(f'rows: {len(df)}')
	if not df.empty:
		print('\nhead:')
		print(df.to_string(index=False))


if __name__ == '__main__':
	main()
