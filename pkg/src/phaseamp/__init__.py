"""Phase-amplitude latent dynamics for imitating periodic demonstrations."""

__version__ = "0.1.0"

_EXPORTS = {
    "LatentParams": "latent", "LatentState": "latent",
    "analytic_rollout": "latent", "unwrap_phase": "latent",
    "lambda_discount": "latent", "coupled_location": "latent",
    "ModelParams": "nets", "init_params": "nets",
    "encode": "nets", "decode": "nets",
    "ObjectiveConfig": "objective", "compute_loss": "objective",
    "laplace_sample": "objective",
    "Trajectory": "data", "Dataset": "data", "ObservableLayout": "data",
    "TrainConfig": "training", "train": "training",
    "evaluate_rmse": "training", "estimate_frequencies": "training",
    "lambda_grid": "training", "preprocess": "training",
    "PhaseAmplitudeModel": "estimator",
    "FeedbackConfig": "feedback", "latent_feedback_step": "feedback",
    "desired_output": "feedback",
    "RhythmicDmp": "dmp", "fit_dmp": "dmp", "rollout_dmp": "dmp",
    "LimitCycleParams": "simulation", "ScenarioConfig": "simulation",
    "run_scenario": "simulation", "run_scenario_dmp": "simulation",
}


def __getattr__(name):
    # imports stay lazy so the CLI can cap BLAS threads before numpy loads
    if name in _EXPORTS:
        import importlib
        module = importlib.import_module(f".{_EXPORTS[name]}", __name__)
        return getattr(module, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(list(globals()) + list(_EXPORTS))
