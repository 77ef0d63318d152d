from __future__ import annotations

import pytest

from critical_clusters.cli import build_parser, main, resolve_config


def _toml(tmp_path, text: str):
	path = tmp_path / "run.toml"
	path.write_text(text)
	return str(path)


SMALL_SAMPLE = """
experiment = "sample"
n_samples = 2

[mesh]
eta = 0.25
k = 1.0
"""


def test_parser_has_one_subcommand_per_experiment():
	args = build_parser().parse_args(["arms", "-n", "5", "--seed", "9", "--log-level", "debug"])
	assert (args.experiment, args.n_samples, args.seed, args.log_level) == ("arms", 5, 9, "DEBUG")
	with pytest.raises(SystemExit):
		build_parser().parse_args(["percolate"])


def test_overrides_win_over_the_file(tmp_path):
	args = build_parser().parse_args(["sample", "-c", _toml(tmp_path, SMALL_SAMPLE), "-n", "7", "-j", "3"])
	cfg = resolve_config(args)
	assert (cfg.n_samples, cfg.workers, cfg.mesh.etas) == (7, 3, (0.25,))


def test_main_runs_and_reports(tmp_path, capsys):
	code = main(["sample", "-c", _toml(tmp_path, SMALL_SAMPLE), "-o", str(tmp_path / "out")])
	assert code == 0
	out = capsys.readouterr().out
	assert "saved:" in out
	assert "files: 3" in out


def test_invalid_config_exits_with_one(tmp_path):
	path = _toml(tmp_path, 'experiment = "arms"\n[mesh]\neta = 0.25\nk = 1.0\n')
	assert main(["arms", "-c", path, "-o", str(tmp_path / "out")]) == 1
	assert not (tmp_path / "out").exists()


def test_runtime_failure_exits_with_error_code(tmp_path):
	path = _toml(tmp_path, f"""
experiment = "measures"
n_samples = 1
normalization = "{tmp_path / 'absent.json'}"

[mesh]
eta = 0.0625
k = 1.5

[scales]
n_levels = [3]
""")
	assert main(["measures", "-c", path, "-o", str(tmp_path / "out")]) == 2
