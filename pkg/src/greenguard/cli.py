"""``greenguard`` command line: one executable, one subcommand per pipeline stage.

Option values resolve in layers: built-in defaults, then the config file
(``--config`` or ``$GREENGUARD_CONFIG``), then environment variables, then
flags. The config file is INI-style ``key = value`` with one section per
subcommand plus an optional ``[greenguard]`` section shared by all. Environment
variables are ``GREENGUARD_<OPTION>`` or, taking precedence,
``GREENGUARD_<SUBCOMMAND>_<OPTION>`` (dashes become underscores).

Exit codes: 0 success, 1 operational error, 2 usage error.
"""

import argparse
import configparser
import logging
import os
import sys
import time
from dataclasses import replace

from . import __version__, autoenc, detector, greenmetrics, pipeline, smfilter, synthetic
from ._io import atomic_write
from .datasets import DEFAULT_LABEL_COLUMN, load_csv, load_rows, normalize_dataset, write_csv
from .errors import GreenGuardError
from .flowmeter import DEFAULT_IDLE_TIMEOUT, assemble_flows, decode_pcap, write_feature_csv

log = logging.getLogger("greenguard")

ENV_PREFIX = "GREENGUARD_"
GLOBAL_SECTION = "greenguard"
DEFAULT_HUB = "127.0.0.1:7641"


class UsageError(Exception):
    """Invalid option combination detected after parsing; exits with status 2."""


def host_port(text):
    host, sep, port = text.rpartition(":")
    if not sep or not host or not port.isdigit() or not 0 <= int(port) <= 65535:
        raise argparse.ArgumentTypeError(f"expected HOST:PORT, got {text!r}")
    return host.strip("[]"), int(port)


def widths(text):
    try:
        out = tuple(int(w) for w in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError("widths must be positive")
    return out


def fraction(text):
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"{text} is not strictly between 0 and 1")
    return v


def non_negative(text):
    v = float(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"{text} is negative")
    return v


def positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"{text} is not a positive integer")
    return v


def print_kv(pairs, out=None):
    out = out or sys.stdout
    for k, v in pairs.items():
        print(f"{k}={v}", file=out)


def _sibling(path, suffix):
    root, _ = os.path.splitext(path)
    return root + suffix


# ---------------------------------------------------------------- subcommands

def cmd_extract(args):
    cfg = None if args.no_filter else smfilter.MonitorConfig(
        rules=smfilter.load_rules(args.rules) if args.rules else smfilter.default_rules())
    packets = decode_pcap(args.pcap)
    fstats = None
    if cfg is not None:
        packets, fstats = smfilter.filter_stream(packets, cfg)
    astats = {}
    flows = assemble_flows(packets, args.idle_timeout, stats=astats)
    write_feature_csv(flows, args.out, label=args.label)
    summary = {}
    if fstats is not None:
        summary.update(fstats.as_dict())
    summary.update({"skipped": astats["skipped"], "flows": astats["flows"], "out": args.out})
    print_kv(summary)
    return 0


def cmd_train(args):
    if args.search and args.trials < 1:
        raise UsageError("--trials must be >= 1 with --search")
    ds = load_csv(args.csv, label_column=args.label_column)
    spec = autoenc.mirrored_architecture(ds.X.shape[1], args.encoder_widths)
    hp = autoenc.Hyperparams(args.learning_rate, args.epochs, args.batch_size, spec, args.seed)
    space = None
    if args.search:
        space = autoenc.SearchSpace(epochs=(args.epochs,), input_dim=ds.X.shape[1])
    run = pipeline.train_detector(
        ds, hp, seed=args.seed, train_fraction=args.train_fraction, val_fraction=args.val_fraction,
        outlier_k=args.outlier_k, search_space=space, trials=args.trials if args.search else 0,
        shrink=args.shrink, drop_layers=args.shrink_layers, calibrate=not args.no_calibrate,
        n_jobs=args.jobs,
    )
    model = run.model
    history = args.history or _sibling(args.model, ".history.csv")
    test_out = args.test_out or _sibling(args.model, ".test.csv")
    norm_out = args.normalizer_out or _sibling(args.model, ".norm.json")

    autoenc.save_model(model, args.model)
    with atomic_write(history, "w", newline="") as fh:
        fh.write("epoch,train_mse,val_mse\n")
        for epoch, t, v in run.history.rows():
            fh.write(f"{epoch},{t!r},{v!r}\n")
    write_csv(run.test, test_out, label_column=args.label_column)
    from .agent.sensor import save_normalizer
    save_normalizer(model.normalization, norm_out)
    summary = {
        "model": args.model,
        "architecture": model.spec.describe(),
        "parameters": model.n_params(),
        "epochs": model.trained_epochs,
        "learning_rate": repr(run.hyperparams.learning_rate),
        "batch_size": run.hyperparams.batch_size,
        "train_rows": len(run.train),
        "validation_rows": len(run.validation),
        "test_rows": len(run.test),
        "final_train_mse": f"{run.history.train_loss[-1]:.6g}",
        "final_val_mse": f"{run.history.val_loss[-1]:.6g}" if run.history.val_loss else "n/a",
        "threshold": "uncalibrated" if model.threshold is None else f"{model.threshold:g}",
        "history": history,
        "test_split": test_out,
        "normalizer": norm_out,
    }
    if run.leaderboard is not None:
        board = args.leaderboard or _sibling(args.model, ".leaderboard.csv")
        write_leaderboard(run.leaderboard, board)
        summary["leaderboard"] = board
    print_kv(summary)
    return 0


def write_leaderboard(trials, path):
    with atomic_write(path, "w", newline="") as fh:
        fh.write("rank,trial,val_mse,parameters,learning_rate,epochs,batch_size,architecture,diverged\n")
        for rank, t in enumerate(trials, start=1):
            hp = t.hyperparams
            fh.write(f"{rank},{t.index},{t.val_mse!r},{t.n_params},{hp.learning_rate!r},{hp.epochs},"
                     f"{hp.batch_size},{hp.spec.describe()},{int(t.diverged)}\n")


def cmd_calibrate(args):
    model = autoenc.load_model(args.model)
    ds = load_csv(args.csv, label_column=args.label_column)
    if model.normalization is not None:
        ds = normalize_dataset(model.normalization, ds)
    theta, table = detector.calibrate_threshold(
        model, ds.X[ds.benign_mask], ds.X[ds.attack_mask], args.lo, args.hi, args.step, args.metric)
    sweep = args.sweep_out or _sibling(args.model, ".sweep.csv")
    table.write_csv(sweep)
    if not args.no_save:
        autoenc.save_model(replace(model, threshold=theta, metric=args.metric), args.model)
    best = table.best()
    print_kv({
        "threshold": f"{theta:g}",
        "tpr": f"{best.tpr:.6f}",
        "tnr": f"{best.tnr:.6f}",
        "balanced_accuracy": f"{best.balanced_accuracy:.6f}",
        "grid_points": len(table.rows),
        "sweep": sweep,
        "model_updated": "no" if args.no_save else "yes",
    })
    return 0


def cmd_eval(args):
    if args.synthetic == bool(args.csv):
        raise UsageError("give exactly one of a CSV path or --synthetic")
    if args.csv and not args.model:
        raise UsageError("--model is required when evaluating a CSV")
    if args.synthetic:
        ds = synthetic.make_benchmark(args.n_benign, args.n_per_attack, args.seed)
        if args.model:
            model, test = autoenc.load_model(args.model), ds
        else:
            run = pipeline.train_detector(ds, seed=args.seed)
            model, test = run.model, run.test
    else:
        model = autoenc.load_model(args.model)
        test = load_csv(args.csv, label_column=args.label_column)
    cfg = detector.DetectorConfig.from_model(model)
    if args.threshold is not None or args.metric is not None:
        cfg = detector.DetectorConfig(args.threshold if args.threshold is not None else cfg.threshold,
                                      args.metric or cfg.metric)
    report = pipeline.evaluate_raw(model, test, cfg)
    sys.stdout.write(report.to_text())
    sys.stdout.write(report.to_kv())
    if args.report_out:
        with atomic_write(args.report_out, "w") as fh:
            fh.write(report.to_kv())
    return 0


def cmd_detect(args):
    model = autoenc.load_model(args.model)
    cfg = detector.DetectorConfig.from_model(model)
    if args.threshold is not None or args.metric is not None:
        cfg = detector.DetectorConfig(args.threshold if args.threshold is not None else cfg.threshold,
                                      args.metric or cfg.metric)
    X = load_rows(args.input, tuple(model.feature_names))
    if not args.normalized:
        X = pipeline.normalize_rows(model, X)
    for i, x in enumerate(X, start=1):
        v = detector.classify(model, cfg, x)
        print(f"row={i} decision={v.decision.value} error={v.error:.6g} threshold={v.threshold:g}")
    return 0


def cmd_sm_agent(args):
    from .agent import sensor

    if bool(args.pcap) == bool(args.interface):
        raise UsageError("give exactly one of --pcap or --interface")
    if args.model and args.normalizer:
        raise UsageError("--model and --normalizer are mutually exclusive")
    norm = None
    if args.normalizer:
        norm = sensor.load_normalizer(args.normalizer)
    elif args.model:
        norm = autoenc.load_model(args.model).normalization
    cfg = smfilter.MonitorConfig(
        rules=smfilter.load_rules(args.rules) if args.rules else smfilter.default_rules())
    source = args.pcap or sensor.LiveCapture(args.interface)
    stats = sensor.run_sensor(source, cfg, args.hub, norm, sensor_id=args.sensor_id,
                              idle_timeout=args.idle_timeout, heartbeat_interval=args.heartbeat,
                              max_retries=args.max_retries)
    sys.stdout.write(stats.summary())
    return 0


def cmd_idh_serve(args):
    from .agent import hub

    model = autoenc.load_model(args.model)
    cfg = detector.DetectorConfig.from_model(model)
    if args.threshold is not None or args.metric is not None:
        cfg = detector.DetectorConfig(args.threshold if args.threshold is not None else cfg.threshold,
                                      args.metric or cfg.metric)
    status = hub.run_hub(args.listen, args.model, cfg, args.alerts, args.verbose_alerts)
    sys.stdout.write(status.summary())
    return 0


def cmd_green_report(args):
    profiles = greenmetrics.builtin_profiles()
    if args.profiles:
        profiles.update(greenmetrics.load_profiles(args.profiles))
    for name in (args.profile, args.baseline):
        if name not in profiles:
            raise UsageError(f"unknown profile {name!r}; known: {', '.join(sorted(profiles))}")
    profile, baseline = profiles[args.profile], profiles[args.baseline]
    if args.watts is not None:
        profile = replace(profile, watts=args.watts)
    if args.carbon_intensity is not None:
        profile = replace(profile, carbon_intensity=args.carbon_intensity)
        baseline = replace(baseline, carbon_intensity=args.carbon_intensity)
    report = greenmetrics.run_report(args.duration, args.frames, profile, baseline)
    sys.stdout.write(report.to_kv() if args.format == "kv" else report.to_text())
    if args.out:
        with atomic_write(args.out, "w") as fh:
            fh.write(report.to_kv())
    return 0


def cmd_synth(args):
    if args.style == "ciciot":
        n = synthetic.write_ciciot_sample(args.out, args.rows, args.seed)
    else:
        n_attack = max(2, args.rows // 10 // 7)
        ds = synthetic.make_benchmark(args.rows - 7 * n_attack, n_attack, args.seed)
        write_csv(ds, args.out)
        n = len(ds)
    print_kv({"rows": n, "style": args.style, "seed": args.seed, "out": args.out})
    return 0


# ---------------------------------------------------------------- parser

def build_parser():
    parser = argparse.ArgumentParser(
        prog="greenguard",
        description="IoT traffic filtering, flow features, autoencoder zero-day detection "
                    "and energy accounting.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", metavar="PATH",
                        help="INI-style config file (default: $GREENGUARD_CONFIG)")
    parser.add_argument("--log-level", default="warning",
                        choices=["debug", "info", "warning", "error"], help="stderr log level")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("extract", help="pcap -> filtered bidirectional flow feature CSV",
                       description="Decode a pcap, keep IoT protocol traffic, assemble "
                                   "bidirectional flows and write one feature row per flow.")
    p.add_argument("pcap", help="classic pcap capture (Ethernet link type)")
    p.add_argument("-o", "--out", required=True, metavar="CSV", help="feature CSV to write")
    p.add_argument("--rules", metavar="PATH", help="filter rule file (default: built-in IoT rules)")
    p.add_argument("--no-filter", action="store_true", help="keep all traffic, skip the protocol filter")
    p.add_argument("--label", default="Benign", help="label written on every row (default: %(default)s)")
    p.add_argument("--idle-timeout", type=float, default=DEFAULT_IDLE_TIMEOUT, metavar="SECONDS",
                   help="flow idle timeout (default: %(default)s)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train an autoencoder detector on a labeled CSV",
                       description="Outlier-filter, split, normalize and train on benign rows, "
                                   "then calibrate the threshold on the validation split.")
    p.add_argument("csv", help="labeled feature CSV")
    p.add_argument("-m", "--model", required=True, metavar="PATH", help="model file to write")
    p.add_argument("--history", metavar="CSV", help="per-epoch loss CSV (default: MODEL.history.csv)")
    p.add_argument("--test-out", metavar="CSV", help="held-out test split (default: MODEL.test.csv)")
    p.add_argument("--normalizer-out", metavar="JSON",
                   help="normalization sidecar for sensors (default: MODEL.norm.json)")
    p.add_argument("--label-column", default=DEFAULT_LABEL_COLUMN, help="default: %(default)s")
    p.add_argument("--epochs", type=positive_int, default=50, help="default: %(default)s")
    p.add_argument("--learning-rate", type=float, default=0.1, help="default: %(default)s")
    p.add_argument("--batch-size", type=positive_int, default=16, help="default: %(default)s")
    p.add_argument("--encoder-widths", type=widths, default=(24, 16, 8), metavar="W,W,...",
                   help="encoder widths, mirrored into the decoder (default: 24,16,8)")
    p.add_argument("--seed", type=int, default=0, help="default: %(default)s")
    p.add_argument("--train-fraction", type=fraction, default=0.75, help="default: %(default)s")
    p.add_argument("--val-fraction", type=fraction, default=0.2,
                   help="share of the training part held out for validation (default: %(default)s)")
    p.add_argument("--outlier-k", type=non_negative, default=1.5,
                   help="Tukey fence multiplier, 0 disables filtering (default: %(default)s)")
    p.add_argument("--search", action="store_true", help="run random hyperparameter search first")
    p.add_argument("--trials", type=int, default=20, help="search trials (default: %(default)s)")
    p.add_argument("--leaderboard", metavar="CSV", help="search leaderboard (default: MODEL.leaderboard.csv)")
    p.add_argument("--jobs", type=positive_int, default=1, help="parallel search trials (default: %(default)s)")
    p.add_argument("--shrink", type=non_negative, default=0.0, metavar="FRACTION",
                   help="cut hidden widths by this fraction before training (default: %(default)s)")
    p.add_argument("--shrink-layers", action="store_true",
                   help="with --shrink, also drop the widest encoder/decoder pair")
    p.add_argument("--no-calibrate", action="store_true", help="skip threshold calibration")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("calibrate", help="sweep the error threshold on labeled validation rows",
                       description="Sweep thresholds, pick the one with the best balanced "
                                   "accuracy and store it in the model.")
    p.add_argument("csv", help="labeled feature CSV with benign and attack rows")
    p.add_argument("-m", "--model", required=True, metavar="PATH", help="model file")
    p.add_argument("--sweep-out", metavar="CSV", help="sweep table (default: MODEL.sweep.csv)")
    p.add_argument("--lo", type=float, default=detector.SWEEP_LO, help="default: %(default)s")
    p.add_argument("--hi", type=float, default=detector.SWEEP_HI, help="default: %(default)s")
    p.add_argument("--step", type=float, default=detector.SWEEP_STEP, help="default: %(default)s")
    p.add_argument("--metric", choices=["mse", "mae"], default="mse", help="default: %(default)s")
    p.add_argument("--label-column", default=DEFAULT_LABEL_COLUMN, help="default: %(default)s")
    p.add_argument("--no-save", action="store_true", help="report only, leave the model untouched")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("eval", help="per-class detection accuracy on a labeled CSV or the synthetic benchmark",
                       description="Print per-class binary detection accuracy with mean and "
                                   "worst-case lines, followed by key=value results.")
    p.add_argument("csv", nargs="?", help="labeled feature CSV (raw, unnormalized)")
    p.add_argument("-m", "--model", metavar="PATH", help="model file")
    p.add_argument("--synthetic", action="store_true",
                   help="use the built-in seeded benchmark; trains a model when --model is absent")
    p.add_argument("--seed", type=int, default=0, help="synthetic benchmark seed (default: %(default)s)")
    p.add_argument("--n-benign", type=positive_int, default=4000, help="default: %(default)s")
    p.add_argument("--n-per-attack", type=positive_int, default=400, help="default: %(default)s")
    p.add_argument("--threshold", type=float, help="override the model threshold")
    p.add_argument("--metric", choices=["mse", "mae"], help="override the model metric")
    p.add_argument("--label-column", default=DEFAULT_LABEL_COLUMN, help="default: %(default)s")
    p.add_argument("--report-out", metavar="PATH", help="also write key=value results here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("detect", help="classify feature rows as Normal or ZeroDay",
                       description="Classify each row of a feature CSV; the label column is optional.")
    p.add_argument("-i", "--input", required=True, metavar="CSV", help="feature rows to classify")
    p.add_argument("-m", "--model", required=True, metavar="PATH", help="model file")
    p.add_argument("--threshold", type=float, help="override the model threshold")
    p.add_argument("--metric", choices=["mse", "mae"], help="override the model metric")
    p.add_argument("--normalized", action="store_true", help="rows are already normalized")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("sm-agent", help="sensor: filter traffic and ship flow features to the hub",
                       description="Replay a pcap or capture live traffic, filter IoT protocols, "
                                   "assemble flows and send feature frames to a hub.")
    p.add_argument("--pcap", metavar="PATH", help="replay this capture")
    p.add_argument("--interface", metavar="IFACE", help="capture live on this interface (needs CAP_NET_RAW)")
    p.add_argument("--hub", type=host_port, default=host_port(DEFAULT_HUB), metavar="HOST:PORT",
                   help=f"hub address (default: {DEFAULT_HUB})")
    p.add_argument("-m", "--model", metavar="PATH", help="take normalization parameters from this model")
    p.add_argument("--normalizer", metavar="JSON", help="normalization sidecar written by train")
    p.add_argument("--rules", metavar="PATH", help="filter rule file (default: built-in IoT rules)")
    p.add_argument("--sensor-id", type=int, default=1, help="default: %(default)s")
    p.add_argument("--idle-timeout", type=float, default=DEFAULT_IDLE_TIMEOUT, metavar="SECONDS",
                   help="flow idle timeout (default: %(default)s)")
    p.add_argument("--heartbeat", type=float, default=5.0, metavar="SECONDS",
                   help="heartbeat interval (default: %(default)s)")
    p.add_argument("--max-retries", type=int, default=6, help="reconnect attempts (default: %(default)s)")
    p.set_defaults(func=cmd_sm_agent)

    p = sub.add_parser("idh-serve", help="hub: receive flow features, detect, write alerts",
                       description="Serve sensor connections until SIGINT/SIGTERM; SIGUSR1 "
                                   "prints the status summary.")
    p.add_argument("-m", "--model", required=True, metavar="PATH", help="model file")
    p.add_argument("--listen", type=host_port, default=host_port(DEFAULT_HUB), metavar="HOST:PORT",
                   help=f"listen address (default: {DEFAULT_HUB})")
    p.add_argument("--alerts", metavar="PATH", help="append alerts here as JSON lines")
    p.add_argument("--threshold", type=float, help="override the model threshold")
    p.add_argument("--metric", choices=["mse", "mae"], help="override the model metric")
    p.add_argument("--verbose-alerts", action="store_true", help="log every verdict, not only ZeroDay")
    p.set_defaults(func=cmd_idh_serve)

    p = sub.add_parser("green-report", help="energy and CO2 for a run, against a baseline",
                       description="Convert run duration into energy and CO2 for a device "
                                   "profile and a baseline profile.")
    p.add_argument("--duration", type=non_negative, required=True, metavar="SECONDS", help="wall-clock run time")
    p.add_argument("--frames", type=int, default=0, help="frames processed (default: %(default)s)")
    p.add_argument("--profile", default=greenmetrics.HUB_PROFILE.device_name, help="default: %(default)s")
    p.add_argument("--baseline", default=greenmetrics.SERVER_PROFILE.device_name, help="default: %(default)s")
    p.add_argument("--profiles", metavar="INI", help="extra [profile NAME] definitions")
    p.add_argument("--watts", type=float, help="override the profile wattage")
    p.add_argument("--carbon-intensity", type=float, metavar="G_PER_KWH",
                   help="override the grid intensity of both profiles")
    p.add_argument("--format", choices=["text", "kv"], default="text", help="default: %(default)s")
    p.add_argument("--out", metavar="PATH", help="also write key=value results here")
    p.set_defaults(func=cmd_green_report)

    p = sub.add_parser("synth", help="write a seeded synthetic labeled feature CSV",
                       description="Generate the built-in benchmark as a CSV, optionally with "
                                   "CICIoT2023-style headers and fine-grained labels.")
    p.add_argument("-o", "--out", required=True, metavar="CSV", help="CSV to write")
    p.add_argument("--rows", type=positive_int, default=20000, help="default: %(default)s")
    p.add_argument("--seed", type=int, default=0, help="default: %(default)s")
    p.add_argument("--style", choices=["plain", "ciciot"], default="plain", help="default: %(default)s")
    p.set_defaults(func=cmd_synth)
    return parser


def _subparsers(parser):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices
    return {}


def _convert(action, text, where):
    if action.nargs == 0:
        value = configparser.ConfigParser.BOOLEAN_STATES.get(str(text).strip().lower())
        if value is None:
            raise UsageError(f"{where}: expected a boolean, got {text!r}")
        return value
    try:
        value = action.type(text) if action.type else text
    except (argparse.ArgumentTypeError, ValueError) as exc:
        raise UsageError(f"{where}: {exc}") from None
    if action.choices is not None and value not in action.choices:
        raise UsageError(f"{where}: {value!r} is not one of {sorted(action.choices)}")
    return value


def layered_defaults(command, subparser, config_path=None, environ=None):
    """Defaults for ``subparser`` from the config file and environment."""
    environ = os.environ if environ is None else environ
    actions = {a.dest: a for a in subparser._actions if a.option_strings and a.dest != "help"}
    resolved = {}
    if config_path:
        cp = configparser.ConfigParser(interpolation=None)
        try:
            with open(config_path, encoding="utf-8") as fh:
                cp.read_file(fh)
        except configparser.Error as exc:
            raise UsageError(f"config {config_path}: {exc}") from None
        for section in (GLOBAL_SECTION, command):
            if not cp.has_section(section):
                continue
            for key, text in cp.items(section, raw=True):
                dest = key.replace("-", "_")
                if dest not in actions:
                    if section == command:
                        raise UsageError(f"config {config_path}: [{section}] has unknown key {key!r}")
                    continue
                resolved[dest] = _convert(actions[dest], text, f"config [{section}] {key}")
    cmd_prefix = ENV_PREFIX + command.upper().replace("-", "_") + "_"
    for dest, action in actions.items():
        for name in (ENV_PREFIX + dest.upper(), cmd_prefix + dest.upper()):
            if name in environ:
                resolved[dest] = _convert(action, environ[name], name)
    return resolved


def parse_args(argv=None, environ=None):
    environ = os.environ if environ is None else environ
    parser = build_parser()
    # first pass: global options and the command name only, so that required
    # subcommand flags can still be satisfied by the config file or environment
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    pre.add_argument("--log-level")
    pre.add_argument("command", nargs="?")
    pre.add_argument("rest", nargs=argparse.REMAINDER)
    first, _ = pre.parse_known_args(argv)
    subparsers = _subparsers(parser)
    if first.command not in subparsers:
        return parser, parser, parser.parse_args(argv)
    subparser = subparsers[first.command]
    config = first.config or environ.get(ENV_PREFIX + "CONFIG")
    try:
        defaults = layered_defaults(first.command, subparser, config, environ)
    except UsageError as exc:
        subparser.error(str(exc))
    for action in subparser._actions:
        if action.dest in defaults and action.required:
            action.required = False  # satisfied by the config file or environment
    subparser.set_defaults(**defaults)
    args = parser.parse_args(argv)
    return parser, subparser, args


def main(argv=None):
    parser, subparser, args = parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    started = time.monotonic()
    try:
        code = args.func(args)
    except UsageError as exc:
        subparser.error(str(exc))
    except KeyboardInterrupt:
        return 1
    except (GreenGuardError, OSError, ValueError) as exc:
        print(f"greenguard {args.command}: error: {exc}", file=sys.stderr)
        return 1
    log.info("%s finished in %.3f s", args.command, time.monotonic() - started)
    return code


if __name__ == "__main__":
    sys.exit(main())
