"""Command-line front end: simulate / ingest / train-dnn / train-dqn /
bench / eval / figures.

Every subcommand is fully seeded; two runs with the same flags and seed
produce byte-identical metric CSVs. Exit codes: 0 success, 1 usage
error, 2 runtime failure.
"""

import argparse
import logging
import os
import sys

import numpy as np

from . import baselines, dqn, report
from .channel import LinkBudgetParams, SensitivityParams
from .config import ConfigError, ExperimentConfig, load_config
from .data import (
    RadioMap,
    fit_normalizer,
    impute_dataset,
    load_antwerp_csv,
    load_csv,
    normalizer_from_dict,
    normalizer_to_dict,
    prepare_radio_map,
    project_to_plane,
    save_csv,
    split,
)
from .env import EnvConfig
from .nn import load_checkpoint, save_checkpoint

log = logging.getLogger(__name__)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the harness contract wants 1
    def error(self, message):
        raise UsageError(message)


def _sf_policy(text: str):
    from .simulate import SfPolicy

    if text.startswith("fixed:"):
        return SfPolicy(kind="fixed", sf=int(text.split(":", 1)[1]))
    if text in ("distance_binned", "uniform_random"):
        return SfPolicy(kind=text)
    raise UsageError(f"bad --sf-policy {text!r} (fixed:<sf> | distance_binned | uniform_random)")


def _synthetic_from_config(cfg: ExperimentConfig):
    from .simulate import SyntheticDatasetSpec, generate_dataset, place_gateways

    layout = place_gateways(
        cfg.get_float("dataset", "length_m"),
        cfg.get_float("dataset", "width_m"),
        cfg.get_int("dataset", "gateways"),
        cfg.get("dataset", "placement"),
        cfg.seed(),
    )
    spec = SyntheticDatasetSpec(
        layout=layout,
        link=LinkBudgetParams(
            tx_power_dbm=cfg.get_float("dataset", "tx_power_dbm"),
            frequency_hz=cfg.get_float("dataset", "frequency_hz"),
            path_loss_exponent=cfg.get_float("dataset", "path_loss_exponent"),
            shadowing_sigma_db=cfg.get_float("dataset", "shadowing_sigma_db"),
        ),
        sens=_sens_from_config(cfg),
        sf_policy=_sf_policy(cfg.get("dataset", "sf_policy")),
        n_samples=cfg.get_int("dataset", "samples"),
        rng_seed=cfg.seed(),
    )
    bounds = (0.0, layout.length_m, 0.0, layout.width_m)
    return generate_dataset(spec), bounds


def _sens_from_config(cfg: ExperimentConfig) -> SensitivityParams:
    return SensitivityParams(
        bandwidth_hz=cfg.get_float("dataset", "bandwidth_hz"),
        noise_figure_db=cfg.get_float("dataset", "noise_figure_db"),
    )


def _load_samples(cfg: ExperimentConfig):
    if cfg.get("dataset", "source") == "synthetic":
        return _synthetic_from_config(cfg)
    path = cfg.get("dataset", "csv_path")
    if not path:
        raise ConfigError("dataset.source=csv needs dataset.csv_path")
    samples = load_antwerp_csv(path) if cfg.get("dataset", "csv_format") == "antwerp" else load_csv(path)
    return samples, None


def cmd_simulate(args) -> int:
    from .simulate import SyntheticDatasetSpec, generate_dataset, place_gateways

    layout = place_gateways(args.length, args.width, args.gateways, args.placement, args.seed)
    spec = SyntheticDatasetSpec(
        layout=layout,
        link=LinkBudgetParams(
            tx_power_dbm=args.tx_power,
            frequency_hz=args.frequency,
            path_loss_exponent=args.path_loss_exponent,
            shadowing_sigma_db=args.shadowing_sigma,
        ),
        sens=SensitivityParams(bandwidth_hz=args.bandwidth, noise_figure_db=args.noise_figure),
        sf_policy=_sf_policy(args.sf_policy),
        n_samples=args.samples,
        rng_seed=args.seed,
    )
    samples = generate_dataset(spec)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    save_csv(samples, args.out)
    print(f"wrote {len(samples)} samples x {samples.gateway_count} gateways to {args.out}")
    return 0


def cmd_ingest(args) -> int:
    samples = load_antwerp_csv(args.input, args.missing_value) if args.format == "antwerp" else load_csv(args.input)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    save_csv(samples, args.out)
    print(f"ingested {len(samples)} samples x {samples.gateway_count} gateways -> {args.out}")
    return 0


def _prepare(args, samples, bounds=None):
    sens = SensitivityParams(bandwidth_hz=args.bandwidth, noise_figure_db=args.noise_figure)
    sizes = (args.train_size, args.val_size, args.test_size)
    if sum(sizes) > len(samples):
        raise UsageError(f"split sizes {sizes} oversubscribe the {len(samples)}-sample dataset")
    radio_map, parts = prepare_radio_map(samples, sens, sizes, args.seed, bounds=bounds)
    return radio_map, parts, sens


def _split_meta(args) -> dict:
    return {
        "seed": args.seed,
        "sizes": [args.train_size, args.val_size, args.test_size],
        "bandwidth_hz": args.bandwidth,
        "noise_figure_db": args.noise_figure,
    }


def cmd_train_dnn(args) -> int:
    samples = load_csv(args.data)
    radio_map, parts, _ = _prepare(args, samples)
    feats = radio_map.normalizer.features(radio_map.samples, with_sf=args.with_sf)
    pos = radio_map.samples.position_m
    config = baselines.DnnConfig(
        input_dim=feats.shape[1],
        learning_rate=args.learning_rate,
        beta1=args.beta1,
        beta2=args.beta2,
        batch_size=args.batch_size,
    )
    model, curve = baselines.train_dnn(
        config,
        radio_map.normalizer,
        feats[parts.train],
        pos[parts.train],
        feats[parts.validation],
        pos[parts.validation],
        epochs=args.epochs,
        seed=args.seed,
        with_sf=args.with_sf,
    )
    os.makedirs(args.out_dir, exist_ok=True)
    curve_path = os.path.join(args.out_dir, "loss_curve.csv")
    report.write_loss_curve(curve, curve_path)
    ckpt_path = os.path.join(args.out_dir, "dnn.ckpt")
    save_checkpoint(
        ckpt_path,
        model.net,
        meta={
            "kind": "dnn",
            "with_sf": args.with_sf,
            "seed": args.seed,
            "normalizer": normalizer_to_dict(radio_map.normalizer),
            "bounds": list(radio_map.bounds),
            "split": _split_meta(args),
        },
    )
    report.write_manifest(args.out_dir, vars(args), args.seed, [curve_path, ckpt_path])
    print(f"trained DNN ({'with' if args.with_sf else 'without'} SF) for {len(curve)} epochs -> {ckpt_path}")
    print(f"final train MAE {curve[-1].train_mae:.6f}, val MAE {curve[-1].val_mae:.6f} (normalized)")
    return 0


def cmd_train_dqn(args) -> int:
    samples = load_csv(args.data)
    radio_map, parts, _ = _prepare(args, samples)
    env_config = EnvConfig(
        precision=args.precision,
        history_len=args.history_len,
        max_steps=args.max_steps if args.max_steps > 0 else None,
    )
    config = dqn.DqnConfig(
        hidden=tuple(int(v) for v in args.hidden.split(",")),
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        gamma=args.gamma,
        buffer_capacity=args.buffer_capacity,
        target_sync_steps=args.target_sync,
        warmup_size=args.warmup,
        eps_decay=args.eps_decay,
    )
    agent, records = dqn.train(
        radio_map,
        radio_map.samples.subset(parts.train),
        episodes=args.episodes,
        config=config,
        env_config=env_config,
        seed=args.seed,
        log_every=args.log_every,
    )
    os.makedirs(args.out_dir, exist_ok=True)
    episodes_path = os.path.join(args.out_dir, "episodes.csv")
    report.write_episode_metrics(records, episodes_path)
    diag_path = os.path.join(args.out_dir, "episodes_diag.csv")
    report.write_episode_diagnostics(records, diag_path)
    ckpt_path = os.path.join(args.out_dir, "dqn.ckpt")
    save_checkpoint(
        ckpt_path,
        agent.net,
        meta={
            "kind": "dqn",
            "seed": args.seed,
            "normalizer": normalizer_to_dict(radio_map.normalizer),
            "bounds": list(radio_map.bounds),
            "split": _split_meta(args),
            "env": {
                "precision": env_config.precision,
                "history_len": env_config.history_len,
                "max_steps": env_config.max_steps,
            },
            "gamma": config.gamma,
        },
    )
    report.write_manifest(args.out_dir, vars(args), args.seed, [episodes_path, diag_path, ckpt_path])
    tail = records[-min(1000, len(records)):]
    print(f"trained DQN for {len(records)} episodes -> {ckpt_path}")
    print(f"trailing-{len(tail)} mean distance error: {np.mean([r.error_m for r in tail]):.2f} m")
    return 0


def cmd_eval(args) -> int:
    net, meta = load_checkpoint(args.model)
    samples = load_csv(args.data)
    if samples.position_m is None:
        samples = project_to_plane(samples)
    sens = SensitivityParams(
        bandwidth_hz=meta["split"]["bandwidth_hz"], noise_figure_db=meta["split"]["noise_figure_db"]
    )
    samples = impute_dataset(samples, sens)
    parts = split(len(samples), tuple(meta["split"]["sizes"]), meta["split"]["seed"])
    normalizer = normalizer_from_dict(meta["normalizer"])
    test = samples.subset(parts.test)
    name = meta["kind"]
    if name == "dnn":
        model = baselines.DnnModel(net=net, normalizer=normalizer, with_sf=meta["with_sf"])
        feats = normalizer.features(test, with_sf=meta["with_sf"])
        eval_report = baselines.evaluate(model, feats, test.position_m)
    elif name == "dqn":
        radio_map = RadioMap(samples=samples, bounds=tuple(meta["bounds"]), normalizer=normalizer)
        env_meta = meta["env"]
        agent = dqn.DqnAgent(
            net=net,
            config=dqn.DqnConfig(gamma=meta.get("gamma", 0.1)),
            env_config=EnvConfig(
                precision=env_meta["precision"],
                history_len=env_meta["history_len"],
                max_steps=env_meta["max_steps"],
            ),
        )
        eval_report = baselines.report_from_errors(dqn.evaluate(agent, radio_map, test))
    else:
        raise ValueError(f"unknown checkpoint kind {name!r}")
    os.makedirs(args.out_dir, exist_ok=True)
    paths = report.write_error_report(eval_report, args.out_dir, name)
    report.write_manifest(args.out_dir, vars(args), meta.get("seed"), paths)
    print(f"{name}: test MDE {eval_report.mde_m:.2f} m over {len(eval_report.error_samples_m)} samples")
    return 0


def run_benchmark(cfg: ExperimentConfig):
    """Train/evaluate every selected model on identical splits and seeds."""
    samples, bounds = _load_samples(cfg)
    if samples.position_m is None:
        samples = project_to_plane(samples)
    sens = _sens_from_config(cfg)
    sizes = cfg.split_sizes()
    if sum(sizes) > len(samples):
        raise ConfigError(f"split sizes {sizes} oversubscribe the {len(samples)}-sample dataset")
    radio_map, parts = prepare_radio_map(samples, sens, sizes, cfg.seed(), bounds=bounds)
    with_sf = cfg.with_sf()
    feats = radio_map.normalizer.features(radio_map.samples, with_sf=with_sf)
    pos = radio_map.samples.position_m
    seed = cfg.seed()
    reports, failures = {}, {}
    for name in cfg.models():
        try:
            if name == "dnn":
                config = baselines.DnnConfig(
                    input_dim=feats.shape[1],
                    learning_rate=cfg.get_float("dnn", "learning_rate"),
                    beta1=cfg.get_float("dnn", "beta1"),
                    beta2=cfg.get_float("dnn", "beta2"),
                    batch_size=cfg.get_int("dnn", "batch_size"),
                )
                model, curve = baselines.train_dnn(
                    config, radio_map.normalizer,
                    feats[parts.train], pos[parts.train],
                    feats[parts.validation], pos[parts.validation],
                    epochs=cfg.get_int("dnn", "epochs"), seed=seed, with_sf=with_sf,
                )
                reports[name] = baselines.evaluate(model, feats[parts.test], pos[parts.test], loss_curve=curve)
            elif name == "knn":
                model = baselines.KnnModel(feats[parts.train], pos[parts.train], k=cfg.get_int("models", "knn_k"))
                reports[name] = baselines.evaluate(model, feats[parts.test], pos[parts.test])
            elif name == "ridge":
                model = baselines.ridge_fit(feats[parts.train], pos[parts.train],
                                            lam=cfg.get_float("models", "ridge_lambda"))
                reports[name] = baselines.evaluate(model, feats[parts.test], pos[parts.test])
            elif name == "tree":
                model = baselines.tree_fit(feats[parts.train], pos[parts.train],
                                           max_depth=cfg.get_int("models", "tree_depth"), seed=seed)
                reports[name] = baselines.evaluate(model, feats[parts.test], pos[parts.test])
            elif name == "dqn":
                env_config = EnvConfig(
                    precision=cfg.get_float("dqn", "precision_m"),
                    history_len=cfg.get_int("dqn", "history_len"),
                    max_steps=cfg.get_int("dqn", "max_steps") or None,
                )
                config = dqn.DqnConfig(
                    hidden=cfg.hidden_layers("dqn"),
                    learning_rate=cfg.get_float("dqn", "learning_rate"),
                    batch_size=cfg.get_int("dqn", "batch_size"),
                    gamma=cfg.get_float("dqn", "gamma"),
                    buffer_capacity=cfg.get_int("dqn", "buffer_capacity"),
                    target_sync_steps=cfg.get_int("dqn", "target_sync_steps"),
                    warmup_size=cfg.get_int("dqn", "warmup_size"),
                )
                agent, records = dqn.train(
                    radio_map, radio_map.samples.subset(parts.train),
                    episodes=cfg.get_int("dqn", "episodes"),
                    config=config, env_config=env_config, seed=seed,
                )
                errors = dqn.evaluate(agent, radio_map, radio_map.samples.subset(parts.test))
                reports[name] = baselines.report_from_errors(errors)
                reports[name + "_records"] = records  # consumed below, not a model
        except Exception as exc:  # noqa: BLE001 - per-model isolation is the contract
            log.exception("model %s failed", name)
            failures[name] = f"{type(exc).__name__}: {exc}"
    records = reports.pop("dqn_records", None)
    return reports, failures, records


def cmd_bench(args) -> int:
    cfg = load_config(args.config, tuple(args.set or ()))
    out_dir = args.out_dir or cfg.get("run", "out_dir")
    reports, failures, dqn_records = run_benchmark(cfg)
    paths = []
    for name, eval_report in reports.items():
        paths += report.write_error_report(eval_report, out_dir, name)
    if dqn_records is not None:
        episodes_path = os.path.join(out_dir, "episodes.csv")
        report.write_episode_metrics(dqn_records, episodes_path)
        report.write_episode_diagnostics(dqn_records, os.path.join(out_dir, "episodes_diag.csv"))
        paths.append(episodes_path)
    paths += report.write_benchmark_summary(reports, failures, out_dir)
    report.write_manifest(out_dir, cfg.snapshot(), cfg.seed(), paths)
    for name, eval_report in sorted(reports.items()):
        print(f"{name}: MDE {eval_report.mde_m:.2f} m")
    for name, msg in sorted(failures.items()):
        print(f"{name}: FAILED ({msg})")
    return 0


def cmd_figures(args) -> int:
    src = args.run_dir
    episodes_path = os.path.join(src, "episodes.csv")
    if os.path.exists(episodes_path):
        rows = np.genfromtxt(episodes_path, delimiter=",", names=True)
        episodes = rows["episode"].astype(int)
        for panel, column in (("iow", "iow"), ("reward", "reward"), ("steps", "steps"), ("error", "error_m")):
            report.write_panel(episodes, rows[column], os.path.join(src, f"{panel}_per_episode.csv"),
                               column, window=args.rolling_window)
        print(f"wrote 4 per-episode panels to {src}")
    else:
        log.warning("no episodes.csv under %s; skipping the per-episode panels", src)
    if args.svg:
        written = report.render_svgs(src)
        print(f"rendered {len(written)} SVGs")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="loraloc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a synthetic fingerprint CSV")
    sim.add_argument("--gateways", type=int, required=True)
    sim.add_argument("--samples", type=int, required=True)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True)
    sim.add_argument("--length", type=float, default=1000.0, help="area length L in meters")
    sim.add_argument("--width", type=float, default=1000.0, help="area width W in meters")
    sim.add_argument("--placement", choices=["grid", "uniform_random"], default="grid")
    sim.add_argument("--sf-policy", default="distance_binned")
    sim.add_argument("--tx-power", type=float, default=14.0)
    sim.add_argument("--frequency", type=float, default=868e6)
    sim.add_argument("--path-loss-exponent", type=float, default=2.0)
    sim.add_argument("--shadowing-sigma", type=float, default=0.0)
    sim.add_argument("--bandwidth", type=float, default=125e3)
    sim.add_argument("--noise-figure", type=float, default=6.0)
    sim.set_defaults(func=cmd_simulate)

    ing = sub.add_parser("ingest", help="convert a fingerprint CSV to the canonical schema")
    ing.add_argument("--input", required=True)
    ing.add_argument("--format", choices=["antwerp", "canonical"], default="antwerp")
    ing.add_argument("--missing-value", type=float, default=-200.0,
                     help="placeholder marking missing RSSI in the source file")
    ing.add_argument("--out", required=True)
    ing.set_defaults(func=cmd_ingest)

    def add_pipeline_args(p):
        p.add_argument("--data", required=True, help="canonical fingerprint CSV")
        p.add_argument("--out-dir", required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--train-size", type=int, default=5000)
        p.add_argument("--val-size", type=int, default=500)
        p.add_argument("--test-size", type=int, default=1000)
        p.add_argument("--bandwidth", type=float, default=125e3)
        p.add_argument("--noise-figure", type=float, default=6.0)

    dnn_p = sub.add_parser("train-dnn", help="train the baseline DNN regressor")
    add_pipeline_args(dnn_p)
    dnn_p.add_argument("--epochs", type=int, default=100)
    dnn_p.add_argument("--with-sf", dest="with_sf", action="store_true", default=True)
    dnn_p.add_argument("--without-sf", dest="with_sf", action="store_false")
    dnn_p.add_argument("--learning-rate", type=float, default=0.0005)
    dnn_p.add_argument("--beta1", type=float, default=0.1)
    dnn_p.add_argument("--beta2", type=float, default=0.99)
    dnn_p.add_argument("--batch-size", type=int, default=512)
    dnn_p.set_defaults(func=cmd_train_dnn)

    dqn_p = sub.add_parser("train-dqn", help="train the window-search DQN agent")
    add_pipeline_args(dqn_p)
    dqn_p.add_argument("--episodes", type=int, default=2000)
    dqn_p.add_argument("--precision", type=float, default=10.0, help="target window half-length P (m)")
    dqn_p.add_argument("--gamma", type=float, default=0.1)
    dqn_p.add_argument("--learning-rate", type=float, default=0.0005)
    dqn_p.add_argument("--batch-size", type=int, default=512)
    dqn_p.add_argument("--buffer-capacity", type=int, default=50000)
    dqn_p.add_argument("--target-sync", type=int, default=1000)
    dqn_p.add_argument("--warmup", type=int, default=1024)
    dqn_p.add_argument("--history-len", type=int, default=10)
    dqn_p.add_argument("--max-steps", type=int, default=20, help="0 disables the step cap")
    dqn_p.add_argument("--hidden", default="128,128,64")
    dqn_p.add_argument("--eps-decay", type=float, default=None,
                       help="explicit per-step epsilon factor (default: reach the floor at 70%% of the horizon)")
    dqn_p.add_argument("--log-every", type=int, default=0)
    dqn_p.set_defaults(func=cmd_train_dqn)

    ev = sub.add_parser("eval", help="evaluate a checkpoint on a dataset's test split")
    ev.add_argument("--model", required=True, help="checkpoint path")
    ev.add_argument("--data", required=True)
    ev.add_argument("--out-dir", required=True)
    ev.set_defaults(func=cmd_eval)

    ben = sub.add_parser("bench", help="train + evaluate the selected models on one split")
    ben.add_argument("--config", default=None, help="INI experiment config")
    ben.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                     help="override a config entry (repeatable)")
    ben.add_argument("--out-dir", default=None)
    ben.set_defaults(func=cmd_bench)

    fig = sub.add_parser("figures", help="emit plot-ready CSVs (and optional SVGs) for a run")
    fig.add_argument("--run-dir", required=True)
    fig.add_argument("--rolling-window", type=int, default=100)
    fig.add_argument("--svg", action="store_true")
    fig.set_defaults(func=cmd_figures)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("LORALOC_LOGLEVEL", "WARNING"),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        log.exception("unhandled failure")
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
