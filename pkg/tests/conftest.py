"""Shared fixtures: session-scoped trained models for the acceptance suite."""

import numpy as np
import pytest

from phaseamp.data import Dataset, ObservableLayout
from phaseamp.latent import LatentParams
from phaseamp.objective import ObjectiveConfig
from phaseamp.simulation import LimitCycleParams, generate_lemniscate_demo, \
    generate_limit_cycle_dataset, generate_torus_demo
from phaseamp.training import TrainConfig, estimate_frequencies, lambda_grid, \
    preprocess, train

ACCEPTANCE_LINES = []


def record_criterion(num, passed, detail):
    line = f"criterion {num:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(f"[ACCEPTANCE] {line}", flush=True)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(set(ACCEPTANCE_LINES)):
            terminalreporter.write_line(line)


def train_limit_cycle(alpha, num_steps, hidden, batch, horizon, iterations,
                      seed=1, gamma=0.99):
    params = LimitCycleParams(alpha=alpha, omega=2.0)
    dataset = generate_limit_cycle_dataset(params, num_steps, seed=seed)
    latent = LatentParams([2.0], [2.0 * alpha], dataset.dt)
    cfg = TrainConfig(
        batch_size=batch, iterations=iterations, learning_rate=1e-3,
        seed=seed, hidden=hidden,
        objective=ObjectiveConfig(gamma=gamma, kappa=0.5, dt=dataset.dt,
                                  horizon=horizon))
    result = train(dataset, latent, cfg)
    return {"params": params, "dataset": dataset, "latent": latent,
            "config": cfg, "result": result}


@pytest.fixture(scope="session")
def limit_cycle_run_full():
    """Criterion-1 configuration: 50k steps, [128,128], batch 64, T=200."""
    return train_limit_cycle(alpha=1.0, num_steps=50_000, hidden=(128, 128),
                             batch=64, horizon=200, iterations=2000)


@pytest.fixture(scope="session")
def limit_cycle_run_5k():
    return train_limit_cycle(alpha=1.0, num_steps=5_000, hidden=(64, 64),
                             batch=32, horizon=200, iterations=800)


@pytest.fixture(scope="session")
def alpha_sweep_runs():
    """Fixed desk-scale configuration across the three scale parameters."""
    return {alpha: train_limit_cycle(alpha=alpha, num_steps=20_000,
                                     hidden=(64, 64), batch=32, horizon=100,
                                     iterations=800)
            for alpha in (0.5, 1.0, 2.0)}


LEMNISCATE_LAYOUT = ObservableLayout(3, 3)


@pytest.fixture(scope="session")
def lemniscate_run():
    demo = generate_lemniscate_demo()
    dataset = Dataset([demo])
    latent = LatentParams([2 * np.pi * 0.2], lambda_grid(0.039, 6.283, 31),
                          dataset.dt)
    cfg = TrainConfig(
        batch_size=32, iterations=4000, learning_rate=1e-3, seed=1,
        hidden=(128, 128),
        objective=ObjectiveConfig(gamma=0.999, kappa=0.5, dt=dataset.dt,
                                  horizon=300))
    result = train(dataset, latent, cfg)
    return {"demo": demo, "dataset": dataset, "latent": latent,
            "config": cfg, "result": result, "layout": LEMNISCATE_LAYOUT}


@pytest.fixture(scope="session")
def torus_run():
    raw = generate_torus_demo()
    demo = preprocess(raw, target_rate=50.0, cutoff_hz=5.0,
                      layout=ObservableLayout(3, 3))
    dataset = Dataset([demo])
    freqs, report = estimate_frequencies(dataset, 2)
    lam_min = 2 * np.pi * 0.51
    lam_max = 2 * np.pi * 1.5
    latent = LatentParams(freqs, lambda_grid(lam_min, lam_max, 30), dataset.dt)
    cfg = TrainConfig(
        batch_size=24, iterations=2500, learning_rate=1e-3, seed=1,
        hidden=(128, 128),
        objective=ObjectiveConfig(gamma=0.998, kappa=0.5, dt=dataset.dt,
                                  horizon=295))
    result = train(dataset, latent, cfg)
    return {"demo": demo, "dataset": dataset, "latent": latent,
            "estimated_frequencies": freqs, "spectrum_report": report,
            "config": cfg, "result": result,
            "layout": ObservableLayout(3, 3)}
