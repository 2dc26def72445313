"""Command-line entry point.

Subcommands cover the whole pipeline — synthesize CSI, estimate channel
semantics, train the personalized federation, fit the semantic mapper,
transfer to unlabeled receivers, verify the closed-form bounds, and an
end-to-end run.  Every subcommand reads one config file, writes into a
self-describing run directory, and prints a one-line summary.  Exit
codes: 0 success, 1 bad input or config, 2 runtime failure.
"""

import argparse
from dataclasses import replace
import logging
import os
from pathlib import Path
import sys

import numpy as np

from .bounds import (
    BoundReport,
    gradient_dispersion,
    gradient_noise_estimate,
    penalty_curvature_bound,
    stable_rate_bound,
    tightest_prefactor,
    training_error_bound,
)
from .channel import synthesize_csi
from .config import (
    ExperimentConfig,
    apply_overrides,
    config_to_dict,
    load_config,
)
from .errors import ConfigError, InvalidScenario, SemsenseError
from .estimator import EstimatorConfig, run_estimation
from .preproc import cancel_phase_error
from .fl import (
    TrainConfig,
    coupled_objective,
    rounds_to_objective,
    train_personalized,
    train_to_fixed_point,
)
from .mapper import FEATURE_SCALES, featurize_semantics
from .models import evaluate
from .runio import (
    RunDirectory,
    content_hash,
    csi_to_csv,
    emit_plotdata,
    estimation_meta,
    load_csi,
    load_json,
    load_semantics,
    save_csi,
    save_mapper,
    save_models,
    save_semantics,
    trace_to_csv,
    transfer_report_to_dict,
)
from .scenario import generate_datasets, make_scenario
from .seeding import spawn_seed
from .transfer import (
    default_model_factory,
    run_kl_sweep,
    run_transfer_experiment,
)

log = logging.getLogger("semsense")


class _Parser(argparse.ArgumentParser):
    """Argparse that exits 1 (not 2) on usage problems."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(sp):
    sp.add_argument("--config", help="JSON config file (defaults apply)")
    sp.add_argument("--seed", type=int, help="override scenario.seed")
    sp.add_argument("--out", help="run directory (default runs/<command>)")
    sp.add_argument("--threads", type=int,
                    help="BLAS/parallelism hint (best effort)")
    sp.add_argument("--override", action="append", default=[],
                    metavar="KEY=VALUE",
                    help="dotted config override, e.g. train.lam=2")


def build_parser() -> _Parser:
    parser = _Parser(prog="semsense",
                     description="semantic-aware distributed sensing lab")
    sub = parser.add_subparsers(dest="command", required=True)
    specs = [
        ("synthesize", "synthesize per-receiver CSI tensors"),
        ("estimate", "estimate channel semantics from CSI files"),
        ("train", "train personalized models across labeled receivers"),
        ("map", "fit the semantics-to-model-space mapper"),
        ("transfer", "zero-shot transfer to unlabeled receivers"),
        ("verify-bounds", "check theoretical bounds on a finished run"),
        ("e2e", "full pipeline in one run directory"),
    ]
    for name, help_text in specs:
        sp = sub.add_parser(name, help=help_text)
        _add_common(sp)
        if name in ("estimate", "verify-bounds"):
            sp.add_argument("--input", required=True,
                            help="CSI file / run directory to read")
    return parser


def _setup_logging():
    level_name = os.environ.get("PSAN_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(
        level=level,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _apply_threads(n):
    if n is None:
        return
    if n < 1:
        raise ConfigError("--threads must be >= 1")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)
    log.info("thread hint set to %d (takes effect for new pools)", n)


def _resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.override:
        cfg = apply_overrides(cfg, args.override)
    if args.seed is not None:
        cfg = apply_overrides(cfg, [f"scenario.seed={int(args.seed)}"])
    return cfg


def _run_dir(args) -> RunDirectory:
    out = args.out or os.path.join("runs", args.command)
    return RunDirectory(out)


def _echo_inputs(rd: RunDirectory, cfg: ExperimentConfig, args):
    input_hash = content_hash([args.config]) if args.config else ""
    rd.write_config_echo(config_to_dict(cfg), cfg.scenario.seed, input_hash)
    rd.write_metadata(command=args.command)


def _train_config(ts) -> TrainConfig:
    batch = ts.batch_size
    if batch is not None and batch <= 0:
        batch = None
    return TrainConfig(
        lam=ts.lam,
        penalty_scale=ts.penalty_scale,
        eta=ts.eta,
        local_steps=ts.local_steps,
        batch_size=batch,
        rounds=ts.rounds,
        objective_target=ts.objective_target,
        allow_large_rate=ts.allow_large_rate,
    )


def _estimator_config(grid, es) -> EstimatorConfig:
    n_aoa = int(round(2.0 / es.aoa_step))
    return EstimatorConfig(
        tof_grid=np.arange(0.0, es.tof_max + 0.5 * es.tof_step, es.tof_step),
        aoa_grid=np.linspace(-1.0, 1.0, n_aoa + 1),
        dfs_grid=np.arange(-es.dfs_max, es.dfs_max + 0.5 * es.dfs_step,
                           es.dfs_step),
        num_dynamic_paths=es.num_dynamic_paths,
        num_static_paths=es.num_static_paths,
        threshold=es.threshold,
        step_size=es.step_size,
        max_sweeps=es.max_sweeps,
        split_cutoff_hz=es.split_cutoff_hz,
    )


# --- subcommands -------------------------------------------------------------

def _cmd_synthesize(cfg, args) -> int:
    rd = _run_dir(args)
    scenario = make_scenario(cfg.scenario)
    for r in scenario.receivers:
        csi = synthesize_csi(
            r.semantics,
            scenario.grid,
            phase_error_model=scenario.phase_error_model,
            noise_std=scenario.noise_std,
            seed=spawn_seed(scenario.seed, "synthesize", r.id),
        )
        save_csi(rd.path(f"csi_{r.id}.bin"), csi)
        csi_to_csv(rd.path(f"csi_{r.id}.csv"), csi)
        save_semantics(rd.path(f"truth_{r.id}.json"), r.semantics)
    _echo_inputs(rd, cfg, args)
    print(
        f"synthesize: {len(scenario.receivers)} receivers on grid "
        f"{scenario.grid.shape} -> {rd.root}"
    )
    return 0


def _recovery_rows(truth, est):
    """Per true path: absolute errors against its nearest estimate."""
    rows = []
    for kind in ("static", "dynamic"):
        true_paths = [p for p in truth.all_paths if p.kind == kind]
        est_paths = [p for p in est.all_paths if p.kind == kind]
        for tp in true_paths:
            if not est_paths:
                rows.append((kind, None, None, None, None))
                continue

            def miss(ep):
                d = abs(ep.tof - tp.tof) / FEATURE_SCALES["tof"]
                d += abs(ep.aoa - tp.aoa) / FEATURE_SCALES["aoa"]
                if tp.dfs is not None and ep.dfs is not None:
                    d += abs(ep.dfs - tp.dfs) / FEATURE_SCALES["dfs"]
                return d

            ep = min(est_paths, key=miss)
            rows.append((
                kind,
                abs(ep.amplitude - tp.amplitude),
                abs(ep.tof - tp.tof),
                abs(ep.aoa - tp.aoa),
                abs(ep.dfs - tp.dfs) if tp.dfs is not None else None,
            ))
    return rows


def _print_recovery_table(rows_by_rid):
    print("receiver  kind     amp_err   tof_err_ns  aoa_err   dfs_err_hz")
    for rid, rows in rows_by_rid:
        for kind, da, dt, daoa, ddfs in rows:
            if da is None:
                print(f"{rid:<9} {kind:<8} (no matching estimate)")
                continue
            dfs_txt = f"{ddfs:9.3f}" if ddfs is not None else "        -"
            print(
                f"{rid:<9} {kind:<8} {da:8.4f}  {dt * 1e9:9.3f}  "
                f"{daoa:8.4f} {dfs_txt}"
            )


def _cmd_estimate(cfg, args) -> int:
    rd = _run_dir(args)
    src = Path(args.input)
    if src.is_dir():
        csi_files = sorted(src.glob("csi_*.bin"))
    elif src.is_file():
        csi_files = [src]
    else:
        raise ConfigError(f"--input {args.input} does not exist")
    if not csi_files:
        raise ConfigError(f"no csi_*.bin files under {args.input}")

    table = []
    for f in csi_files:
        rid = f.stem[len("csi_"):] if f.stem.startswith("csi_") else f.stem
        csi = cancel_phase_error(load_csi(f))
        est_cfg = _estimator_config(csi.grid, cfg.estimator)
        result = run_estimation(csi, est_cfg)
        sem = replace(result.semantics, receiver_id=rid)
        save_semantics(
            rd.path(f"estimated_{rid}.json"), sem, estimation_meta(result)
        )
        truth_file = f.parent / f"truth_{rid}.json"
        if truth_file.exists():
            truth, _ = load_semantics(truth_file)
            table.append((rid, _recovery_rows(truth, sem)))
    if table:
        _print_recovery_table(table)
    _echo_inputs(rd, cfg, args)
    print(
        f"estimate: {len(csi_files)} tensors processed, "
        f"{len(table)} with known truth -> {rd.root}"
    )
    return 0


def _mean_test_accuracy(model, params, receivers) -> float:
    accs = [
        evaluate(model, w, r.dataset.X_test, r.dataset.y_test)["accuracy"]
        for w, r in zip(params, receivers)
    ]
    return float(np.mean(accs))


def _training_bound_report(scenario, factory, train_cfg, params, trace):
    """Audit the finite-horizon optimality-gap ceiling for one run."""
    labeled = scenario.labeled_receivers()
    datasets = [r.dataset for r in labeled]
    model = factory()
    fb_cfg = train_cfg if train_cfg.batch_size is None else replace(
        train_cfg, batch_size=None
    )
    star, _, _ = train_to_fixed_point(scenario, factory, fb_cfg)
    star_values = [p.values for p in star]
    j_star = coupled_objective(
        model, star_values, datasets, train_cfg.lam, train_cfg.penalty_scale
    )
    j_final = coupled_objective(
        model, [p.values for p in params], datasets,
        train_cfg.lam, train_cfg.penalty_scale,
    )
    gap = j_final - j_star

    mu = model.strong_convexity()
    big_l = max(model.smoothness(ds.X_train) for ds in datasets)
    kappa = penalty_curvature_bound(train_cfg.penalty_scale)
    rate = stable_rate_bound(big_l, train_cfg.lam, kappa, mu)
    init_dist_sq = float(sum(v @ v for v in star_values))  # zero init
    dispersion = gradient_dispersion(model, star_values, datasets)
    noise = gradient_noise_estimate(
        model, star_values, datasets, train_cfg.batch_size,
        seed=spawn_seed(scenario.seed, "noise-probe"),
    )
    rounds_used = trace.rounds[-1] if trace.rounds else train_cfg.rounds
    bound = training_error_bound(
        init_dist_sq, rate, mu, rounds_used, train_cfg.local_steps,
        len(labeled), dispersion, noise, train_cfg.batch_size,
    )
    report = BoundReport(dispersion=dispersion, rate_bound=rate,
                         training_bound=bound)
    report.empirical["training_gap"] = gap
    report.record_constant("strong_convexity", mu, "analytic (model)")
    report.record_constant("smoothness", big_l, "analytic (data Gram)")
    report.record_constant("penalty_curvature", kappa, "analytic (penalty)")
    report.record_constant("init_dist_sq", init_dist_sq,
                           "measured against the fixed point")
    report.record_constant("gradient_noise", noise, "Monte-Carlo estimate")
    report.record_constant("rounds", rounds_used, "run length")
    return report


def _cmd_train(cfg, args) -> int:
    rd = _run_dir(args)
    scenario = generate_datasets(make_scenario(cfg.scenario),
                                 dataset_cfg=cfg.dataset)
    factory = default_model_factory(scenario)
    train_cfg = _train_config(cfg.train)
    params, trace = train_personalized(scenario, factory, train_cfg)
    labeled = scenario.labeled_receivers()
    save_models(rd.path("models.json"),
                [(r.id, p) for r, p in zip(labeled, params)])
    trace_to_csv(rd.path("trace.csv"), trace)
    bound_report = _training_bound_report(
        scenario, factory, train_cfg, params, trace
    )
    rd.write_json("bound_report_training.json", bound_report.as_dict())

    model = factory()
    mean_acc = _mean_test_accuracy(
        model, [p.values for p in params], labeled
    )
    rd.write_json("train_summary.json", {
        "final_objective": trace.objective[-1] if trace.objective else None,
        "rounds_run": trace.rounds[-1] if trace.rounds else 0,
        "stop_reason": trace.stop_reason,
        "mean_test_accuracy": mean_acc,
    })

    if cfg.train.lambda_sweep:
        rows = []
        for lam in cfg.train.lambda_sweep:
            sweep_cfg = replace(train_cfg, lam=float(lam))
            acc_per_round = []

            def _cb(t, plist, _acc=acc_per_round, _m=model, _lab=labeled):
                _acc.append(_mean_test_accuracy(_m, plist, _lab))

            _, sweep_trace = train_personalized(
                scenario, factory, sweep_cfg, round_callback=_cb
            )
            for i, t in enumerate(sweep_trace.rounds):
                rows.append({
                    "lambda": float(lam),
                    "round": t,
                    "J": float(sweep_trace.objective[i]),
                    "mean_accuracy": acc_per_round[i],
                })
        rd.write_json("sweep_lambda.json", {"rows": rows})

    if cfg.train.eb_sweep:
        rows = []
        for pair in cfg.train.eb_sweep:
            e_steps, batch = int(pair[0]), pair[1]
            batch = None if batch in (None, 0) else int(batch)
            sweep_cfg = replace(train_cfg, local_steps=e_steps,
                                batch_size=batch)
            _, sweep_trace = train_personalized(scenario, factory, sweep_cfg)
            hit = (rounds_to_objective(sweep_trace, train_cfg.objective_target)
                   if train_cfg.objective_target is not None else None)
            rows.append({
                "E": e_steps,
                "B": 0 if batch is None else batch,
                "rounds_to_target": hit,
                "final_J": float(sweep_trace.objective[-1]),
            })
        rd.write_json("sweep_eb.json", {"rows": rows})

    emit_plotdata(rd.root)
    _echo_inputs(rd, cfg, args)
    print(
        f"train: {len(labeled)} receivers, {trace.rounds[-1]} rounds, "
        f"J={trace.objective[-1]:.4f}, "
        f"mean test accuracy {mean_acc:.3f} -> {rd.root}"
    )
    return 0


def _cmd_map(cfg, args) -> int:
    rd = _run_dir(args)
    scenario = generate_datasets(make_scenario(cfg.scenario),
                                 dataset_cfg=cfg.dataset)
    report = run_transfer_experiment(
        scenario,
        train_cfg=_train_config(cfg.train),
        mapper_epochs=cfg.mapper.epochs,
        mapper_lr=cfg.mapper.lr,
    )
    if report.mapper is None:
        raise InvalidScenario(
            "need at least two labeled receivers to fit the mapper"
        )
    save_mapper(rd.path("mapper.json"), report.mapper)
    rd.write_text(
        "mapper_fit.csv",
        "\n".join(["epoch,loss"] + [
            f"{i},{v!r}" for i, v in enumerate(report.mapper_trace)
        ]) + "\n",
    )
    _echo_inputs(rd, cfg, args)
    print(
        f"map: fit over {len(report.source_ids)} receivers, "
        f"loss {report.mapper_trace[0]:.4f} -> "
        f"{report.mapper_trace[-1]:.6f} -> {rd.root}"
    )
    return 0


def _scenario_label(sc) -> str:
    return f"{sc.num_clusters}-cluster"


def _cmd_transfer(cfg, args) -> int:
    rd = _run_dir(args)
    scenario = generate_datasets(make_scenario(cfg.scenario),
                                 dataset_cfg=cfg.dataset)
    report = run_transfer_experiment(
        scenario,
        train_cfg=_train_config(cfg.train),
        mapper_epochs=cfg.mapper.epochs,
        mapper_lr=cfg.mapper.lr,
    )
    rd.write_json("transfer_report.json", transfer_report_to_dict(report))
    if report.mapper is not None:
        save_mapper(rd.path("mapper.json"), report.mapper)

    if cfg.transfer.kl_values and cfg.transfer.sweep_seeds:
        sweep = run_kl_sweep(
            cfg.scenario,
            cfg.transfer.kl_values,
            cfg.transfer.sweep_seeds,
            dataset_cfg=cfg.dataset,
            train_cfg=_train_config(cfg.train),
        )
        rows = [
            {
                "k_l": kl,
                "scenario": _scenario_label(cfg.scenario),
                "seed": int(seed),
                "transfer_accuracy": acc,
            }
            for kl, accs in sorted(sweep.items())
            for seed, acc in zip(cfg.transfer.sweep_seeds, accs)
        ]
        rd.write_json("sweep_kl.json", {"rows": rows})

    emit_plotdata(rd.root)
    _echo_inputs(rd, cfg, args)
    worst = max(o.transfer_error for o in report.outcomes)
    print(
        f"transfer: {len(report.outcomes)} targets, mean accuracy "
        f"{report.mean_transferred_accuracy:.3f} (oracle "
        f"{report.mean_oracle_accuracy:.3f}), worst loss gap {worst:.4f} "
        f"-> {rd.root}"
    )
    return 0


def _cmd_verify_bounds(cfg, args) -> int:
    src = Path(args.input)
    if not src.is_dir():
        raise ConfigError(f"--input {args.input} is not a run directory")
    c = cfg.transfer.bound_constant
    checks = []

    training = src / "bound_report_training.json"
    if training.exists():
        rep = load_json(training)
        gap = max(rep["empirical"]["training_gap"], 0.0)
        bound = rep["training_bound"]
        ok = gap <= c * bound
        checks.append(("training gap", gap, bound, ok))

    transfer_file = src / "transfer_report.json"
    if transfer_file.exists():
        rep = load_json(transfer_file)
        for o in rep["outcomes"]:
            if o.get("bound_value") is None:
                continue
            err = max(o["transfer_error"], 0.0)
            ok = err <= c * o["bound_value"]
            checks.append(
                (f"transfer gap [{o['target_id']}]", err,
                 o["bound_value"], ok)
            )

    if not checks:
        raise ConfigError(f"no bound artifacts found under {args.input}")
    all_ok = True
    for name, emp, bound, ok in checks:
        status = "PASS" if ok else "FAIL"
        print(f"{status} {name}: empirical {emp:.6g} vs "
              f"{c:g} x bound {bound:.6g}")
        all_ok = all_ok and ok
    tight = tightest_prefactor(
        [e for _, e, _, _ in checks], [b for _, _, b, _ in checks]
    )
    print(
        f"verify-bounds: {len(checks)} checks, C={c:g}, "
        f"tightest prefactor {tight:.4g}, "
        f"{'all hold' if all_ok else 'FAILURES above'}"
    )
    return 0 if all_ok else 2


def _cmd_e2e(cfg, args) -> int:
    rd = _run_dir(args)
    scenario = generate_datasets(make_scenario(cfg.scenario),
                                 dataset_cfg=cfg.dataset)

    # Stage 1-2: per-receiver CSI and semantics recovered from it.  The
    # datasets keep their ground-truth provenance; the mapper/transfer
    # stages consume only what the estimator could see.
    estimated = {}
    for r in scenario.receivers:
        csi = synthesize_csi(
            r.semantics,
            scenario.grid,
            phase_error_model=scenario.phase_error_model,
            noise_std=scenario.noise_std,
            seed=spawn_seed(scenario.seed, "synthesize", r.id),
        )
        save_csi(rd.path(f"csi_{r.id}.bin"), csi)
        save_semantics(rd.path(f"truth_{r.id}.json"), r.semantics)
        est_cfg = _estimator_config(csi.grid, cfg.estimator)
        result = run_estimation(cancel_phase_error(csi), est_cfg)
        sem = replace(result.semantics, receiver_id=r.id)
        estimated[r.id] = sem
        save_semantics(rd.path(f"estimated_{r.id}.json"), sem,
                       estimation_meta(result))

    est_scenario = replace(
        scenario,
        receivers=[
            replace(r, semantics=estimated[r.id]) for r in scenario.receivers
        ],
    )

    # Stage 3: personalized training (+ bound audit on the same run).
    factory = default_model_factory(est_scenario)
    train_cfg = _train_config(cfg.train)
    report = run_transfer_experiment(
        est_scenario,
        train_cfg=train_cfg,
        mapper_epochs=cfg.mapper.epochs,
        mapper_lr=cfg.mapper.lr,
    )
    labeled = est_scenario.labeled_receivers()
    save_models(
        rd.path("models.json"),
        [(r.id, p) for r, p in zip(labeled, report.source_params)],
    )
    trace_to_csv(rd.path("trace.csv"), report.training_trace)
    if report.mapper is not None:
        save_mapper(rd.path("mapper.json"), report.mapper)
    rd.write_json("transfer_report.json", transfer_report_to_dict(report))
    bound_report = _training_bound_report(
        est_scenario, factory, train_cfg, report.source_params,
        report.training_trace,
    )
    rd.write_json("bound_report_training.json", bound_report.as_dict())

    rd.write_json("e2e_summary.json", {
        "final_objective": report.training_trace.objective[-1],
        "mean_transferred_accuracy": report.mean_transferred_accuracy,
        "mean_oracle_accuracy": report.mean_oracle_accuracy,
        "training_gap": report.training_gap,
        "num_receivers": len(scenario.receivers),
        "num_targets": len(report.outcomes),
    })
    emit_plotdata(rd.root)
    _echo_inputs(rd, cfg, args)
    print(
        f"e2e: {len(scenario.receivers)} receivers -> transfer accuracy "
        f"{report.mean_transferred_accuracy:.3f} (oracle "
        f"{report.mean_oracle_accuracy:.3f}) -> {rd.root}"
    )
    return 0


_DISPATCH = {
    "synthesize": _cmd_synthesize,
    "estimate": _cmd_estimate,
    "train": _cmd_train,
    "map": _cmd_map,
    "transfer": _cmd_transfer,
    "verify-bounds": _cmd_verify_bounds,
    "e2e": _cmd_e2e,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging()
    try:
        _apply_threads(args.threads)
        cfg = _resolve_config(args)
        return _DISPATCH[args.command](cfg, args)
    except (ConfigError, InvalidScenario) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SemsenseError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - last-resort guard
        log.exception("unhandled failure")
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
