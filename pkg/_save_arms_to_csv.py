import pandas as pd
from pathlib import Path
from typing import Optional, List

from critical_clusters.arms import arm_probability, special_query
from critical_clusters.lattice import MeshSpec
from critical_clusters.stats import loglog_fit


def main(ratios: Optional[List[float]] = None, n_samples: int = 500) -> None:
	out_path = Path('one_arm.csv')
	spec = MeshSpec('triangular-site', 1 / 128, 1.0, 0.5, seed=5)
	a = 8 * spec.eta
	rows = []
	for r in ratios or [2, 4, 8, 16]:
		est = arm_probability(spec, special_query('pi1', a, a * r), n_samples)
		rows.append(est.row(spec))
	df = pd.DataFrame(rows)
	cols = ['kind', 'eta', 'z', 'a', 'b', 'kappa', 'kappa_hp', 'side', 'hits', 'trials', 'p_hat', 'ci']
	if not df.empty:
		df = df.reindex(columns=cols)
	df.to_csv(out_path, index=False)
	print(f'saved: {out_path.resolve()}')
	print(f'rows: {len(df)}')
	if not df.empty:
		print('\nhead:')
		print(df.to_string(index=False))
		fit = loglog_fit(df['a'] / df['b'], df['p_hat'], trials=df['trials'])
		print(f'\none-arm exponent: {fit.slope:.4f} [{fit.slope_ci[0]:.4f}, {fit.slope_ci[1]:.4f}] (5/48 = {5 / 48:.4f})')


if __name__ == '__main__':
	main()
