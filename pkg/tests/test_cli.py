import csv
from pathlib import Path

import pytest

from greenguard import autoenc, cli
from greenguard.schema import AttackClass

from fixtures import captures

GOLDEN = Path(__file__).parent / "golden"
COMMANDS = sorted(cli._subparsers(cli.build_parser()))


def run(argv, capsys):
    try:
        code = cli.main([str(a) for a in argv])
    except SystemExit as exc:
        code = exc.code
    out, err = capsys.readouterr()
    return code, out, err


def kv(text):
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line)


@pytest.fixture(scope="module")
def small_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "bench.csv"
    assert cli.main(["synth", "-o", str(path), "--rows", "1400", "--seed", "5"]) == 0
    return path


@pytest.fixture(scope="module")
def model_path(small_csv):
    path = small_csv.parent / "model.zrzm"
    assert cli.main(["train", str(small_csv), "-m", str(path), "--seed", "5"]) == 0
    return path


# ---------------------------------------------------------------- help

@pytest.mark.parametrize("name", ["greenguard", *COMMANDS])
def test_help_matches_golden(name, monkeypatch):
    monkeypatch.setenv("COLUMNS", "80")
    parser = cli.build_parser()
    target = parser if name == "greenguard" else cli._subparsers(parser)[name]
    assert target.format_help() == (GOLDEN / f"{name}.txt").read_text()


@pytest.mark.parametrize("name", COMMANDS)
def test_help_lists_every_flag(name):
    sub = cli._subparsers(cli.build_parser())[name]
    text = sub.format_help()
    for action in sub._actions:
        for flag in action.option_strings:
            assert flag in text


def test_no_command_is_usage_error(capsys):
    assert run([], capsys)[0] == 2


# ---------------------------------------------------------------- extract

def test_extract_writes_one_row_per_flow(tmp_path, capsys):
    pcap = captures.write(tmp_path / "in.pcap", captures.mixed())
    out = tmp_path / "flows.csv"
    code, stdout, _ = run(["extract", pcap, "-o", out], capsys)
    assert code == 0
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    summary = kv(stdout)
    assert summary["flows"] == "3" and summary["dropped"] == "12"


def test_extract_missing_pcap_leaves_nothing(tmp_path, capsys):
    out = tmp_path / "flows.csv"
    code, _, err = run(["extract", tmp_path / "nope.pcap", "-o", out], capsys)
    assert code == 1 and "error" in err
    assert not out.exists() and list(tmp_path.iterdir()) == []


# ---------------------------------------------------------------- train

def test_train_outputs(model_path):
    history = model_path.with_suffix(".history.csv")
    with open(history, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 50 and list(rows[0]) == ["epoch", "train_mse", "val_mse"]
    model = autoenc.load_model(model_path)
    assert model.spec.describe() == "28-24-16-8-16-24-28" and model.threshold is not None
    assert model_path.with_suffix(".test.csv").exists()
    assert model_path.with_suffix(".norm.json").exists()


def test_train_is_bitwise_reproducible(small_csv, model_path, tmp_path, capsys):
    again = tmp_path / "again.zrzm"
    assert run(["train", small_csv, "-m", again, "--seed", "5"], capsys)[0] == 0
    assert again.read_bytes() == model_path.read_bytes()
    assert again.with_suffix(".history.csv").read_bytes() == model_path.with_suffix(".history.csv").read_bytes()


def test_train_search_leaderboard(small_csv, tmp_path, capsys):
    model = tmp_path / "best.zrzm"
    code, out, _ = run(["train", small_csv, "-m", model, "--search", "--trials", "20", "--seed", "7",
                        "--epochs", "2"], capsys)
    assert code == 0 and model.exists()
    with open(kv(out)["leaderboard"], newline="") as fh:
        board = list(csv.DictReader(fh))
    assert len(board) == 20 and [int(r["rank"]) for r in board] == list(range(1, 21))


# ---------------------------------------------------------------- calibrate / eval / detect

def test_calibrate_prints_threshold_and_sweep(model_path, tmp_path, capsys):
    test_csv = model_path.with_suffix(".test.csv")
    sweep = tmp_path / "sweep.csv"
    code, out, _ = run(["calibrate", test_csv, "-m", model_path, "--sweep-out", sweep, "--no-save"], capsys)
    summary = kv(out)
    assert code == 0 and summary["sweep"] == str(sweep) and summary["grid_points"] == "19"
    assert float(summary["threshold"]) in [round(0.05 * i, 2) for i in range(1, 20)]
    assert len(sweep.read_text().splitlines()) == 20


def test_eval_separable_synthetic(capsys):
    code, out, _ = run(["eval", "--synthetic", "--n-benign", "1500", "--n-per-attack", "150",
                        "--seed", "2"], capsys)
    assert code == 0
    table = out.splitlines()[1:11]
    rows = {line.split()[0]: line.split()[-1] for line in table}
    assert set(rows) == {c.value for c in AttackClass} | {"mean", "worst-case"}
    assert set(rows.values()) == {"1.000"}


def test_eval_csv_with_report(model_path, tmp_path, capsys):
    report = tmp_path / "report.kv"
    code, out, _ = run(["eval", model_path.with_suffix(".test.csv"), "-m", model_path,
                        "--report-out", report], capsys)
    assert code == 0 and kv(report.read_text()) == kv(out)


def test_eval_needs_one_source(capsys):
    assert run(["eval"], capsys)[0] == 2


def test_detect_flags_far_row(model_path, tmp_path, capsys):
    rows = tmp_path / "row.csv"
    names = autoenc.load_model(model_path).feature_names
    rows.write_text(",".join(names) + "\n" + ",".join(["1e6"] * len(names)) + "\n")
    code, out, _ = run(["detect", "-i", rows, "-m", model_path], capsys)
    assert code == 0 and out.startswith("row=1 decision=ZeroDay ")


# ---------------------------------------------------------------- errors and config

def test_missing_required_flag_is_usage_error(small_csv, capsys):
    assert run(["train", small_csv], capsys)[0] == 2


def test_operational_error_exit_code(tmp_path, capsys):
    code, _, err = run(["train", tmp_path / "missing.csv", "-m", tmp_path / "m.zrzm"], capsys)
    assert code == 1 and "missing.csv" in err


def test_bad_flag_value_is_usage_error(capsys):
    assert run(["green-report", "--duration", "-3"], capsys)[0] == 2


def test_layered_precedence(tmp_path, monkeypatch):
    monkeypatch.delenv("GREENGUARD_CONFIG", raising=False)
    config = tmp_path / "gg.ini"
    config.write_text("[greenguard]\nseed = 3\n\n[train]\nepochs = 7\nmodel = from-config.zrzm\n")
    argv = ["--config", str(config), "train", "data.csv"]

    args = cli.parse_args(argv, environ={})[2]
    assert (args.seed, args.epochs, args.model, args.batch_size) == (3, 7, "from-config.zrzm", 16)

    env = {"GREENGUARD_SEED": "4", "GREENGUARD_EPOCHS": "8"}
    args = cli.parse_args(argv, environ=env)[2]
    assert (args.seed, args.epochs) == (4, 8)

    env["GREENGUARD_TRAIN_EPOCHS"] = "9"
    args = cli.parse_args(argv, environ=env)[2]
    assert args.epochs == 9

    args = cli.parse_args(argv + ["--epochs", "10", "-m", "flag.zrzm"], environ=env)[2]
    assert (args.epochs, args.model) == (10, "flag.zrzm")


def test_config_from_environment_path(tmp_path):
    config = tmp_path / "gg.ini"
    config.write_text("[green-report]\nduration = 60\nformat = kv\n")
    args = cli.parse_args(["green-report"], environ={"GREENGUARD_CONFIG": str(config)})[2]
    assert args.duration == 60 and args.format == "kv"


def test_unknown_config_key_is_usage_error(tmp_path, capsys):
    config = tmp_path / "gg.ini"
    config.write_text("[greenguard]\nunrelated = 1\n\n[train]\nepoch = 5\n")
    code, _, err = run(["--config", config, "train", "x.csv", "-m", "m"], capsys)
    assert code == 2 and "epoch" in err


def test_bad_env_value_is_usage_error(monkeypatch, capsys):
    monkeypatch.setenv("GREENGUARD_TRAIN_EPOCHS", "many")
    assert run(["train", "x.csv", "-m", "m"], capsys)[0] == 2


# ---------------------------------------------------------------- green-report / synth

def test_green_report_kv(tmp_path, capsys):
    out = tmp_path / "green.kv"
    code, stdout, _ = run(["green-report", "--duration", "3600", "--frames", "0", "--format", "kv",
                           "--baseline", "x86-server", "--out", out], capsys)
    summary = kv(stdout)
    assert code == 0 and summary["energy_wh"] == "7.500000000"
    assert summary["energy_per_frame_wh"] == "n/a" and summary["reference_co2_ratio"] == "154.4468"
    assert kv(out.read_text()) == summary


def test_green_report_custom_profiles(tmp_path, capsys):
    profiles = tmp_path / "p.ini"
    profiles.write_text("[profile jetson]\nwatts = 15\n")
    code, out, _ = run(["green-report", "--duration", "1800", "--profiles", profiles,
                        "--profile", "jetson", "--format", "kv"], capsys)
    assert code == 0 and kv(out)["energy_wh"] == "7.500000000"
    assert run(["green-report", "--duration", "1", "--profile", "nope"], capsys)[0] == 2


def test_synth_is_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert run(["synth", "-o", path, "--rows", "500", "--seed", "1", "--style", "ciciot"], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
