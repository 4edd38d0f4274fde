import io

import pytest

from dcphase.cli import CONFIG_ERROR, main, read_config, ConfigError
from dcphase.harness import TABLE_COLUMNS
from dcphase.trace import CSV_COLUMNS


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


def test_solve_prints_summary():
    code, text = run("solve", "--n", "6", "--ratio", "5", "--seed", "3")
    assert code == 0
    assert "n=6 m=30 field=real solver=dc" in text
    assert "distance=" in text and "iterations=" in text


def test_trace_csv(tmp_path):
    code, text = run("trace", "--n", "5", "--m", "25", "--field", "complex")
    assert code == 0
    assert tuple(text.splitlines()[0].split(",")) == CSV_COLUMNS
    path = tmp_path / "t.csv"
    code, text = run("trace", "--n", "5", "--m", "25", "--out", str(path))
    assert code == 0 and text == ""
    assert path.read_text().startswith("iter,F,F1,F2")


def test_sparse_trace_has_support_column():
    code, text = run("trace", "--n", "10", "--ratio", "3", "--solver", "l1dc_hard", "--s", "2", "--max-iters", "5")
    assert code == 0
    rows = [line.split(",") for line in text.splitlines()[1:]]
    assert all(int(r[-1]) <= 2 for r in rows)


def test_certify():
    code, text = run("certify", "--n", "4", "--ratio", "6", "--field", "complex", "--directions", "20")
    assert code == 0
    assert "min_quadratic_form=" in text and "null_direction_residual=" in text


def test_bench_csv(tmp_path):
    path = tmp_path / "b.csv"
    code, text = run("bench", "--n", "6", "--ratios", "3,5", "--trials", "2", "--quiet", "--out", str(path))
    assert code == 0
    lines = text.splitlines()
    assert tuple(lines[0].split(",")) == TABLE_COLUMNS
    assert lines[1].startswith("3.0,,") and lines[1].endswith(",2")
    assert path.read_text() == text


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# small run\nn = 7\nratio = 4\nseed = 2\n")
    code, text = run("solve", "--config", str(cfg))
    assert code == 0 and "n=7 m=28" in text
    code, text = run("solve", "--config", str(cfg), "--n", "5")
    assert code == 0 and "n=5 m=20" in text


@pytest.mark.parametrize("body", ["bogus = 1\n", "n = seven\n", "field = quaternion\n"])
def test_bad_config_exits_2(tmp_path, body):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(body)
    code, _ = run("solve", "--config", str(cfg))
    assert code == CONFIG_ERROR == 2


def test_semantic_errors_exit_2(tmp_path):
    assert run("bench", "--n", "4", "--sparsities", "9", "--trials", "1")[0] == 2
    assert run("bench", "--solver", "l1dc_hard", "--n", "4", "--trials", "1")[0] == 2
    assert run("solve", "--solver", "l1dc_hard", "--n", "4")[0] == 2
    assert run("solve", "--config", str(tmp_path / "missing.cfg"))[0] == 2


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--n", "x"])
    assert exc.value.code == 2


def test_read_config_accepts_flag_style_keys(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("--noise-u 0.001\ninner_iters=5\n")
    assert read_config(str(p)) == {"noise_u": "0.001", "inner_iters": "5"}
    p.write_text("= 3\n")
    with pytest.raises(ConfigError):
        read_config(str(p))
