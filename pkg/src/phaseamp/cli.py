"""Command-line pipeline: data generation, spectrum analysis, training,
evaluation, and closed-loop scenario comparisons.

Exit codes: 0 success, 2 input error, 3 numerical failure, 4 shape mismatch.
"""

import os

_threads = os.environ.get("PHASEAMP_THREADS")
if _threads:
    # must run before numpy loads its BLAS
    for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS",
                 "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import json
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import io as pio
from .data import Dataset, ObservableLayout
from .dmp import RhythmicDmp
from .feedback import FeedbackConfig
from .latent import LatentParams, analytic_rollout
from .nets import decode, encode
from .objective import ObjectiveConfig
from .simulation import ScenarioConfig, generate_lemniscate_demo, \
    generate_limit_cycle_dataset, generate_torus_demo, LimitCycleParams, \
    run_scenario, run_scenario_dmp
from .training import TrainConfig, TrainingAbortedError, estimate_frequencies, \
    evaluate_rmse, lambda_grid, preprocess, train

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_SHAPE = 4


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


_NUMBER = {"type": "number"}
_SYNTHETIC_SCHEMA = {
    "type": "object", "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["limit_cycle", "lemniscate", "torus"]},
        "alpha": _NUMBER, "omega": _NUMBER,
        "num_steps": {"type": "integer", "minimum": 1},
        "steps_per_trajectory": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "dt": _NUMBER,
        "amplitude": _NUMBER, "frequency_hz": _NUMBER, "duration_s": _NUMBER,
        "freq_slow_hz": _NUMBER, "freq_fast_hz": _NUMBER,
        "amp_slow": _NUMBER, "amp_fast": _NUMBER,
        "preprocess": {
            "type": "object", "additionalProperties": False,
            "required": ["target_rate", "cutoff_hz"],
            "properties": {"target_rate": _NUMBER, "cutoff_hz": _NUMBER},
        },
    },
}
CONFIG_SCHEMA = {
    "type": "object", "additionalProperties": False,
    "properties": {
        "output_dir": {"type": "string"},
        "seed": {"type": "integer"},
        "dataset": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "csv": {"type": "array", "items": {"type": "string"}},
                "synthetic": _SYNTHETIC_SCHEMA,
            },
        },
        "latent": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "num_phases": {"type": "integer", "minimum": 1},
                "omega": {"anyOf": [{"const": "estimate"},
                                    {"type": "array", "items": _NUMBER}]},
                "lam": {"anyOf": [
                    {"type": "array", "items": _NUMBER},
                    {"type": "object", "additionalProperties": False,
                     "required": ["min", "max", "count"],
                     "properties": {"min": _NUMBER, "max": _NUMBER,
                                    "count": {"type": "integer", "minimum": 1}}},
                ]},
            },
        },
        "train": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "batch_size": {"type": "integer", "minimum": 1},
                "iterations": {"type": "integer", "minimum": 0},
                "learning_rate": _NUMBER,
                "hidden": {"type": "array", "items": {"type": "integer"},
                           "minItems": 2, "maxItems": 2},
                "gamma": _NUMBER, "kappa": _NUMBER,
                "laplace_scale": _NUMBER, "beta_prior": _NUMBER,
                "horizon": {"type": "integer", "minimum": 1},
            },
        },
        "feedback": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "characteristic_scaling": {"type": "boolean"},
                "phi_ff": {"type": "array", "items": _NUMBER},
                "kappa": _NUMBER,
                "control_dt": _NUMBER,
            },
        },
        "scenario": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "kinds": {"type": "array",
                          "items": {"enum": ["nominal", "anomaly", "force_noise",
                                             "slow_motion", "reshape"]}},
                "duration_s": _NUMBER,
                "anomaly_start_s": _NUMBER, "anomaly_duration_s": _NUMBER,
                "noise_std": _NUMBER,
                "speed_factor": _NUMBER, "shape_factor": _NUMBER,
                "feedback_gain": _NUMBER, "anomaly_feedback_gain": _NUMBER,
                "control_dt": _NUMBER,
                "num_seeds": {"type": "integer", "minimum": 1},
                "dmp_n_basis": {"type": "integer", "minimum": 1},
                "layout": {
                    "type": "object", "additionalProperties": False,
                    "required": ["num_position", "num_velocity"],
                    "properties": {"num_position": {"type": "integer"},
                                   "num_velocity": {"type": "integer"}},
                },
            },
        },
        "evaluate": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "synthetic": _SYNTHETIC_SCHEMA,
                "csv": {"type": "array", "items": {"type": "string"}},
                "rollout_steps": {"type": "integer", "minimum": 1},
                "grid": {
                    "type": "object", "additionalProperties": False,
                    "required": ["low", "high", "resolution"],
                    "properties": {"low": _NUMBER, "high": _NUMBER,
                                   "resolution": {"type": "integer", "minimum": 2}},
                },
            },
        },
    },
}


def load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise CliError(f"cannot read config {path}: {err}", EXIT_INPUT)
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as err:
        raise CliError(f"invalid config: {err.message}", EXIT_INPUT)
    return cfg


def _synthesize(spec, seed):
    kind = spec["kind"]
    if kind == "limit_cycle":
        params = LimitCycleParams(alpha=spec.get("alpha", 1.0),
                                  omega=spec.get("omega", 2.0))
        kwargs = {}
        if "dt" in spec:
            kwargs["dt"] = spec["dt"]
        if "steps_per_trajectory" in spec:
            kwargs["steps_per_trajectory"] = spec["steps_per_trajectory"]
        return generate_limit_cycle_dataset(params, spec.get("num_steps", 50000),
                                            spec.get("seed", seed), **kwargs)
    if kind == "lemniscate":
        demo = generate_lemniscate_demo(
            amplitude=spec.get("amplitude", 0.5),
            frequency_hz=spec.get("frequency_hz", 0.2),
            duration_s=spec.get("duration_s", 20.0),
            dt=spec.get("dt", 0.05))
        return Dataset([demo])
    demo = generate_torus_demo(
        freq_slow_hz=spec.get("freq_slow_hz", 0.17),
        freq_fast_hz=spec.get("freq_fast_hz", 0.51),
        duration_s=spec.get("duration_s", 24.0),
        dt=spec.get("dt", 1.0 / 360.0),
        amp_slow=spec.get("amp_slow", 0.4),
        amp_fast=spec.get("amp_fast", 0.25))
    if "preprocess" in spec:
        pp = spec["preprocess"]
        demo = preprocess(demo, pp["target_rate"], pp["cutoff_hz"],
                          layout=ObservableLayout(3, 3))
    return Dataset([demo])


def _load_dataset(cfg, seed, section="dataset"):
    spec = cfg.get(section, {})
    try:
        if "csv" in spec:
            return pio.load_dataset(spec["csv"])
        if "synthetic" in spec:
            return _synthesize(spec["synthetic"], seed)
    except (OSError, ValueError) as err:
        raise CliError(str(err), EXIT_INPUT)
    raise CliError(f"config section {section!r} needs 'csv' or 'synthetic'",
                   EXIT_INPUT)


def _resolve_latent(cfg, dataset):
    spec = cfg.get("latent", {})
    num_phases = spec.get("num_phases", 1)
    omega_spec = spec.get("omega", "estimate")
    if omega_spec == "estimate":
        try:
            freqs, _ = estimate_frequencies(dataset, num_phases)
        except ValueError as err:
            raise CliError(str(err), EXIT_INPUT)
        omega = np.asarray(freqs)
    else:
        omega = np.asarray(omega_spec, dtype=np.float64)
    lam_spec = spec.get("lam", [])
    if isinstance(lam_spec, dict):
        lam = lambda_grid(lam_spec["min"], lam_spec["max"], lam_spec["count"])
    else:
        lam = np.asarray(lam_spec, dtype=np.float64)
    return LatentParams(omega, lam, dataset.dt)


def _train_config(cfg, dataset, seed):
    spec = cfg.get("train", {})
    objective = ObjectiveConfig(
        gamma=spec.get("gamma", 0.99), kappa=spec.get("kappa", 0.5),
        b_f=spec.get("laplace_scale", 1e-5),
        b_h=spec.get("laplace_scale", 1e-5),
        b_0=spec.get("laplace_scale", 1e-5),
        beta_prior=spec.get("beta_prior", 0.0),
        dt=dataset.dt, horizon=spec.get("horizon", 200))
    return TrainConfig(
        batch_size=spec.get("batch_size", 64),
        iterations=spec.get("iterations", 2000),
        learning_rate=spec.get("learning_rate", 1e-3),
        seed=seed, hidden=tuple(spec.get("hidden", [128, 128])),
        objective=objective)


def cmd_gen_data(cfg, out_dir, seed):
    dataset = _load_dataset(cfg, seed)
    out = pio.ensure_dir(out_dir)
    paths = []
    for i, traj in enumerate(dataset.trajectories):
        path = out / f"trajectory_{i:04d}.csv"
        pio.save_trajectory_csv(path, traj)
        paths.append(str(path))
    pio.write_json(out / "gen_data_meta.json",
                   {"num_trajectories": len(paths), "dt": float(dataset.dt),
                    "n_channels": dataset.n_channels,
                    "total_steps": dataset.total_steps})
    print(f"wrote {len(paths)} trajectories to {out}")
    return EXIT_OK


def cmd_spectrum(cfg, out_dir, seed):
    dataset = _load_dataset(cfg, seed)
    num_phases = cfg.get("latent", {}).get("num_phases", 1)
    try:
        freqs, report = estimate_frequencies(dataset, num_phases)
    except ValueError as err:
        raise CliError(str(err), EXIT_INPUT)
    out = pio.ensure_dir(out_dir)
    with open(out / "autocorrelation.csv", "w") as fh:
        fh.write("lag_s,autocorr\n")
        for lag, val in zip(report.lags_s, report.autocorr):
            fh.write(f"{float(lag)!r},{float(val)!r}\n")
    with open(out / "fft.csv", "w") as fh:
        fh.write("freq_hz,magnitude\n")
        for f, m in zip(report.freqs_hz, report.fft_magnitude):
            fh.write(f"{float(f)!r},{float(m)!r}\n")
    pio.write_json(out / "suggestions.json", {
        "omega_rad_s": [float(w) for w in freqs],
        "detected_periods_s": [float(p) for p in report.detected_periods_s],
        "lambda_min": report.lambda_min, "lambda_max": report.lambda_max,
        "suggested_grid_size": report.suggested_grid_size})
    print("suggested omega (rad/s):", [round(float(w), 4) for w in freqs])
    print(f"suggested lambda range: [{report.lambda_min:.4g}, "
          f"{report.lambda_max:.4g}]")
    return EXIT_OK


def cmd_train(cfg, out_dir, seed, resume=None):
    dataset = _load_dataset(cfg, seed)
    out = pio.ensure_dir(out_dir)
    log_path = out / "training_log.jsonl"
    ckpt_path = out / "checkpoint.json"

    model = None
    opt_state = None
    start_iteration = 0
    if resume is not None:
        try:
            model, latent, opt_state, meta = pio.load_checkpoint(resume)
        except (OSError, ValueError) as err:
            raise CliError(str(err), EXIT_INPUT)
        start_iteration = int(meta.get("iterations_done", 0))
        if model.n_obs != dataset.n_channels:
            raise CliError("checkpoint observable width does not match data",
                           EXIT_SHAPE)
    else:
        latent = _resolve_latent(cfg, dataset)
        if log_path.exists():
            log_path.unlink()

    config = _train_config(cfg, dataset, seed)
    if model is not None and 2 * model.num_phases + model.num_amplitudes \
            != 2 * latent.num_phases + latent.num_amplitudes:
        raise CliError("checkpoint latent layout does not match config",
                       EXIT_SHAPE)

    def log_fn(record):
        pio.append_jsonl(log_path, record)

    try:
        result = train(dataset, latent, config, model=model,
                       optimizer_state=opt_state,
                       start_iteration=start_iteration, log_fn=log_fn)
    except TrainingAbortedError as err:
        fail_path = out / "checkpoint_last_good.json"
        pio.save_checkpoint(fail_path, err.model, latent,
                            meta={"aborted": True,
                                  "iterations_done": start_iteration
                                  + len(err.history)})
        print(f"training aborted: {err}", file=sys.stderr)
        print(f"last-good checkpoint: {fail_path}", file=sys.stderr)
        return EXIT_NUMERICAL

    meta = {"iterations_done": start_iteration + config.iterations,
            "seed": seed, "dataset_steps": dataset.total_steps}
    pio.save_checkpoint(ckpt_path, result.model, latent,
                        optimizer_state=result.optimizer_state, meta=meta)
    summary = dict(result.history[-1]) if result.history else {}
    pio.write_json(out / "summary.json", {"final": summary, **meta})
    print(f"checkpoint: {ckpt_path}")
    if result.history:
        print("final losses:",
              {k: round(v, 6) for k, v in summary.items() if k != "iteration"})
    return EXIT_OK


def cmd_evaluate(cfg, out_dir, seed, checkpoint):
    try:
        model, latent, _, _ = pio.load_checkpoint(checkpoint)
    except (OSError, ValueError) as err:
        raise CliError(str(err), EXIT_INPUT)
    spec = cfg.get("evaluate", {})
    if "csv" in spec or "synthetic" in spec:
        test = _load_dataset(cfg, seed + 1, section="evaluate")
    else:
        test = _load_dataset(cfg, seed + 1)
    if model.n_obs != test.n_channels:
        raise CliError(f"model expects {model.n_obs} channels, data has "
                       f"{test.n_channels}", EXIT_SHAPE)
    steps = spec.get("rollout_steps", 400)
    out = pio.ensure_dir(out_dir)
    scores = [evaluate_rmse(model, latent, [traj], rollout_length=steps)
              for traj in test.trajectories]
    with open(out / "rmse.csv", "w") as fh:
        fh.write("trajectory,rmse\n")
        for i, s in enumerate(scores):
            fh.write(f"{i},{s!r}\n")
    mean_rmse = float(np.mean(scores))
    pio.write_json(out / "rmse_summary.json",
                   {"mean_rmse": mean_rmse, "num_trajectories": len(scores),
                    "rollout_steps": steps})
    print(f"RMSE over {len(scores)} trajectories: {mean_rmse:.6f}")

    if model.n_obs == 2:
        grid = spec.get("grid", {"low": -2.0, "high": 2.0, "resolution": 21})
        axis = np.linspace(grid["low"], grid["high"], grid["resolution"])
        xx, yy = np.meshgrid(axis, axis)
        pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
        z = encode(pts, model)
        x_now = decode(z, model)
        x_next = decode(analytic_rollout(z, 1, latent), model)
        field = (x_next - x_now) / latent.dt
        with open(out / "vector_field.csv", "w") as fh:
            fh.write("x1,x2,u1,u2\n")
            for p, u in zip(pts, field):
                fh.write(f"{p[0]!r},{p[1]!r},{u[0]!r},{u[1]!r}\n")
    return EXIT_OK


def _scenario_variants(spec):
    kinds = spec.get("kinds", ["nominal"])
    base = dict(
        duration_s=spec.get("duration_s", 20.0),
        anomaly_start_s=spec.get("anomaly_start_s", 3.0),
        anomaly_duration_s=spec.get("anomaly_duration_s", 6.0),
        noise_std=spec.get("noise_std", 100.0),
        speed_factor=spec.get("speed_factor", 1.0),
        shape_factor=spec.get("shape_factor", 1.0),
        control_dt=spec.get("control_dt", 0.005))
    variants = []
    for kind in kinds:
        gain = spec.get("anomaly_feedback_gain", 5e-2) if kind == "anomaly" \
            else spec.get("feedback_gain", 1e-3)
        if kind == "slow_motion":
            base_kind = dict(base, speed_factor=spec.get("speed_factor", 0.5))
        elif kind == "reshape":
            base_kind = dict(base, shape_factor=spec.get("shape_factor", 0.5))
        else:
            base_kind = base
        variants.append(ScenarioConfig(kind=kind, feedback_on=True,
                                       feedback_gain=gain, **base_kind))
        if kind == "anomaly":
            variants.append(ScenarioConfig(kind=kind, feedback_on=False,
                                           feedback_gain=gain, **base_kind))
    return variants


def cmd_scenario(cfg, out_dir, seed, checkpoint):
    try:
        model, latent, _, _ = pio.load_checkpoint(checkpoint)
    except (OSError, ValueError) as err:
        raise CliError(str(err), EXIT_INPUT)
    dataset = _load_dataset(cfg, seed)
    demo = dataset.trajectories[0]
    if model.n_obs != demo.n_channels:
        raise CliError(f"model expects {model.n_obs} channels, demo has "
                       f"{demo.n_channels}", EXIT_SHAPE)
    spec = cfg.get("scenario", {})
    layout_spec = spec.get("layout", {"num_position": demo.n_channels // 2,
                                      "num_velocity": demo.n_channels // 2})
    layout = ObservableLayout(layout_spec["num_position"],
                              layout_spec["num_velocity"])
    fb_spec = cfg.get("feedback", {})
    fb_cfg = FeedbackConfig(
        g=0.0,
        characteristic_scaling=fb_spec.get("characteristic_scaling", False),
        phi_ff=np.asarray(fb_spec["phi_ff"]) if "phi_ff" in fb_spec else None,
        kappa=fb_spec.get("kappa", 0.5),
        control_dt=fb_spec.get("control_dt", spec.get("control_dt", 0.005)))

    dmp = RhythmicDmp(n_basis=spec.get("dmp_n_basis", 25))
    dmp.fit(demo, omega=float(np.min(latent.omega)))

    out = pio.ensure_dir(out_dir)
    num_seeds = spec.get("num_seeds", 1)
    rows = []
    for scenario in _scenario_variants(spec):
        for s in range(num_seeds):
            episode_seed = seed + s
            tag = f"{scenario.kind}_{'fb' if scenario.feedback_on else 'nofb'}_s{episode_seed}"
            log_p = run_scenario(model, latent, fb_cfg, scenario, demo,
                                 layout, seed=episode_seed)
            pio.save_episode_csv(out / f"episode_proposed_{tag}.csv", log_p)
            pio.write_json(out / f"episode_proposed_{tag}.json", log_p.metadata)
            rows.append(("proposed", scenario.kind, scenario.feedback_on,
                         episode_seed, log_p.tracking_rmse(layout),
                         log_p.diverged))
            log_d = run_scenario_dmp(dmp, scenario, demo, layout,
                                     seed=episode_seed,
                                     period_s=2.0 * np.pi / float(np.min(latent.omega)))
            pio.save_episode_csv(out / f"episode_dmp_{tag}.csv", log_d)
            pio.write_json(out / f"episode_dmp_{tag}.json", log_d.metadata)
            rows.append(("dmp", scenario.kind, scenario.feedback_on,
                         episode_seed, log_d.tracking_rmse(layout),
                         log_d.diverged))

    with open(out / "comparison_table.csv", "w") as fh:
        fh.write("method,scenario,feedback_on,seed,rmse,diverged\n")
        for method, kind, fb_on, s, rmse, div in rows:
            fh.write(f"{method},{kind},{int(fb_on)},{s},{rmse!r},{int(div)}\n")
        fh.write("\n")
        fh.write("method,scenario,feedback_on,mean_rmse,std_rmse,n\n")
        groups = {}
        for method, kind, fb_on, s, rmse, div in rows:
            groups.setdefault((method, kind, fb_on), []).append(rmse)
        for (method, kind, fb_on), vals in sorted(groups.items()):
            fh.write(f"{method},{kind},{int(fb_on)},"
                     f"{float(np.mean(vals))!r},{float(np.std(vals))!r},"
                     f"{len(vals)}\n")
    print(f"wrote {len(rows)} episodes; table: {out / 'comparison_table.csv'}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="phaseamp",
        description="Learn and control phase-amplitude latent dynamics")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_ckpt in (("gen-data", False), ("spectrum", False),
                             ("train", False), ("evaluate", True),
                             ("scenario", True)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", default=None, help="output directory")
        if needs_ckpt:
            p.add_argument("--checkpoint", required=True)
        if name == "train":
            p.add_argument("--resume", default=None,
                           help="checkpoint to continue from")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        seed = args.seed if args.seed is not None else cfg.get("seed", 0)
        out_dir = args.out if args.out is not None \
            else cfg.get("output_dir", ".")
        if args.command == "gen-data":
            return cmd_gen_data(cfg, out_dir, seed)
        if args.command == "spectrum":
            return cmd_spectrum(cfg, out_dir, seed)
        if args.command == "train":
            return cmd_train(cfg, out_dir, seed, resume=args.resume)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, out_dir, seed, args.checkpoint)
        return cmd_scenario(cfg, out_dir, seed, args.checkpoint)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.code


if __name__ == "__main__":
    sys.exit(main())
