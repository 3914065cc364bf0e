import json

import pytest
from hypothesis import given, settings, strategies as st

from roughgreeks import cli
from roughgreeks.config import ConfigError, RunConfig, load_config, parse_kv


def run(argv, capsys):
    rc = cli.main(argv)
    out, err = capsys.readouterr()
    return rc, out, err


# -- config ------------------------------------------------------------------

def test_parse_kv_comments_and_errors():
    assert parse_kv("a = 1  # note\n\n# skip\nb=x") == {"a": "1", "b": "x"}
    with pytest.raises(ConfigError):
        parse_kv("a = 1\na = 2")
    with pytest.raises(ConfigError):
        parse_kv("just text")


@pytest.mark.parametrize("bad", [
    {"H": "0.5"}, {"H": "0"}, {"N": "0"}, {"paths": "0"}, {"rho": "1"},
    {"mix": "weird"}, {"payoff": "swap:1"}, {"gaps": "0.1,0.01"}, {"p": "3"},
    {"N": "2.5"}, {"x1": "nan"}, {"nope": "1"}, {"threads": "0"},
])
def test_invalid_config_rejected(bad):
    with pytest.raises(ConfigError):
        RunConfig.from_mapping(bad)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.cfg"))


def test_hash_ignores_runtime_only_keys():
    a = RunConfig()
    assert a.config_hash == a.replace(threads=4, out="x.csv", format="json").config_hash
    assert a.config_hash != a.replace(seed=1).config_hash


@settings(max_examples=30)
@given(st.integers(0, 2**63), st.floats(0.01, 0.49))
def test_canonical_form_round_trips(seed, H):
    c = RunConfig(seed=seed, H=H)
    back = RunConfig.from_mapping(parse_kv(c.canonical()))
    assert back.config_hash == c.config_hash


def test_flags_override_file(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text("seed = 3\nN = 16\n")
    c = load_config(str(f), {"seed": "5"})
    assert (c.seed, c.N) == (5, 16)


# -- commands ------------------------------------------------------------------

SMALL = ["--N", "16", "--paths", "40", "--seed", "7"]


def test_kernel_table(capsys):
    rc, out, _ = run(["kernel-table", "--N", "4", "--out", "-"], capsys)
    assert rc == 0
    lines = [ln for ln in out.splitlines() if not ln.startswith("#")]
    assert lines[0] == "t,s,K,dK_dt,R"
    assert len(lines) == 1 + 6


def test_sample_paths_json(capsys):
    rc, out, _ = run(["sample-paths", *SMALL, "--mix", "correlated", "--rho", "-0.5", "--format", "json",
                      "--out", "-"], capsys)
    assert rc == 0
    doc = json.loads(out)
    assert doc["columns"] == ["path", "t", "B", "BH", "W", "mixed"]
    assert len(doc["rows"]) == 40 * 17 and doc["seed"] == 7


@pytest.mark.parametrize("argv", [
    ["solve", "--drift", "linear"],
    ["solve", "--drift", "regime", "--mix", "scaled", "--drift-sign", "minus", "--x0", "-1.6"],
    ["simulate-model", "--preset", "regime"],
    ["greeks", "--model", "sde", "--drift", "linear", "--payoff", "square"],
    ["greeks", "--model", "stock", "--preset", "regime", "--estimator", "bel"],
    ["stability", "--drift", "linear"],
])
def test_commands_succeed(argv, capsys, tmp_path):
    out = tmp_path / "o.csv"
    rc, _, err = run([*argv, *SMALL, "--out", str(out)], capsys)
    assert rc == 0, err
    text = out.read_text()
    assert "# config_hash=" in text and "# seed=7" in text


def test_solve_without_first_variation_route_is_config_error(capsys):
    rc, _, err = run(["solve", "--drift", "regime", *SMALL, "--out", "-"], capsys)
    assert rc == 1
    assert json.loads(err.strip().splitlines()[-1])["error"] == "config"


def test_bad_flag_value_exit_code(capsys):
    rc, _, err = run(["solve", "--H", "0.7", "--out", "-"], capsys)
    assert rc == 1 and "config" in err


def test_regime_warning_reported(capsys):
    rc, _, err = run(["greeks", "--model", "sde", "--H", "0.3", "--drift", "linear", *SMALL, "--out", "-"],
                     capsys)
    assert rc == 0 and "warning:" in err


def test_output_dir_env(monkeypatch, tmp_path, capsys):
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(tmp_path))
    rc, _, err = run(["kernel-table", "--N", "4"], capsys)
    assert rc == 0
    files = list(tmp_path.iterdir())
    assert len(files) == 1 and files[0].name.startswith("kernel-table_")


def test_threads_do_not_change_output(tmp_path, capsys):
    base = ["greeks", "--model", "stock", "--preset", "regime", "--N", "32", "--paths", "700", "--seed", "2"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run([*base, "--threads", "1", "--out", str(a)], capsys)[0] == 0
    assert run([*base, "--threads", "3", "--out", str(b)], capsys)[0] == 0
    rc, out, _ = run(["validate", "--compare", str(a), str(b)], capsys)
    assert rc == 0 and "identical" in out


def test_compare_refuses_mismatched_hash(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(["kernel-table", "--N", "4", "--out", str(a)], capsys)
    run(["kernel-table", "--N", "4", "--H", "0.2", "--out", str(b)], capsys)
    rc, out, _ = run(["validate", "--compare", str(a), str(b)], capsys)
    assert rc == 3 and "hash mismatch" in out


def test_compare_detects_changed_numbers(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(["kernel-table", "--N", "4", "--out", str(a)], capsys)
    text = a.read_text().splitlines()
    text[-1] = text[-1].rsplit(",", 1)[0] + ",0.0"
    b.write_text("\n".join(text) + "\n")
    rc, out, _ = run(["validate", "--compare", str(a), str(b)], capsys)
    assert rc == 3 and "differs" in out


def test_compare_missing_file(tmp_path, capsys):
    rc, _, _ = run(["validate", "--compare", str(tmp_path / "x"), str(tmp_path / "y")], capsys)
    assert rc == 1


def test_validate_suite(capsys):
    rc, out, err = run(["validate", "--suite", "sde", "--out", "-"], capsys)
    assert rc == 0 and "checks passed" in err
    assert out.count(",pass,") == 4


def test_numerical_failure_exit_code(monkeypatch, capsys):
    def boom(cfg):
        raise FloatingPointError("overflow in weight")

    monkeypatch.setitem(cli.COMMANDS, "kernel-table", boom)
    rc, _, err = run(["kernel-table", "--N", "4", "--out", "-"], capsys)
    assert rc == 2 and json.loads(err)["error"] == "numerical"


def test_failed_validation_exit_code(monkeypatch, capsys):
    from roughgreeks import validation

    monkeypatch.setitem(validation.SUITES, "kernel", lambda: [("always fails", False, "")])
    rc, out, _ = run(["validate", "--suite", "kernel", "--out", "-"], capsys)
    assert rc == 3 and ",FAIL," in out
