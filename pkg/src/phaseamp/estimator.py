"""Scikit-learn style front end for the phase-amplitude model.

fit() learns the encoder/decoder on demonstration trajectories,
transform()/inverse_transform() move between observables and latent
coordinates, and predict() decodes the analytic rollout from an initial
observation.  Hyperparameters live in the constructor so the estimator
composes with sklearn tooling (get_params, set_params, clone).
"""

import numpy as np
from sklearn.base import BaseEstimator

from .data import Dataset, Trajectory
from .latent import LatentParams, LatentState, analytic_rollout
from .nets import decode, encode
from .objective import ObjectiveConfig
from .training import TrainConfig, estimate_frequencies, evaluate_rmse, \
    lambda_grid, train


def _as_dataset(X, dt):
    if isinstance(X, Dataset):
        return X
    if isinstance(X, Trajectory):
        return Dataset([X])
    if isinstance(X, np.ndarray) and X.ndim == 2:
        if dt is None:
            raise ValueError("dt is required when passing a bare array")
        return Dataset([Trajectory(X, dt)])
    trajectories = [t if isinstance(t, Trajectory) else Trajectory(t, dt)
                    for t in X]
    return Dataset(trajectories)


class PhaseAmplitudeModel(BaseEstimator):
    """Learns a latent oscillator (phases + decaying amplitudes) from data.

    Parameters mirror the training configuration; omega=None estimates the
    characteristic frequencies from the data by autocorrelation.  lam may be
    an explicit list of exponents or None, in which case `num_amplitudes`
    exponents are spread geometrically over `lambda_range`.
    """

    def __init__(self, num_phases=1, num_amplitudes=1, omega=None, lam=None,
                 lambda_range=None, hidden=(128, 128), batch_size=64,
                 iterations=2000, learning_rate=1e-3, gamma=0.99, kappa=0.5,
                 laplace_scale=1e-5, horizon=200, seed=0):
        self.num_phases = num_phases
        self.num_amplitudes = num_amplitudes
        self.omega = omega
        self.lam = lam
        self.lambda_range = lambda_range
        self.hidden = hidden
        self.batch_size = batch_size
        self.iterations = iterations
        self.learning_rate = learning_rate
        self.gamma = gamma
        self.kappa = kappa
        self.laplace_scale = laplace_scale
        self.horizon = horizon
        self.seed = seed

    def _resolve_latent(self, dataset):
        if self.omega is not None:
            omega = np.atleast_1d(np.asarray(self.omega, dtype=np.float64))
        else:
            freqs, report = estimate_frequencies(dataset, self.num_phases)
            omega = np.asarray(freqs)
            self.spectrum_report_ = report
        if self.lam is not None:
            lam = np.atleast_1d(np.asarray(self.lam, dtype=np.float64))
        elif self.num_amplitudes == 0:
            lam = np.zeros(0)
        else:
            if self.lambda_range is None:
                raise ValueError("provide lam or lambda_range")
            lam = lambda_grid(self.lambda_range[0], self.lambda_range[1],
                              self.num_amplitudes)
        return LatentParams(omega, lam, dataset.dt)

    def fit(self, X, y=None, dt=None):
        dataset = _as_dataset(X, dt)
        self.latent_ = self._resolve_latent(dataset)
        cfg = TrainConfig(
            batch_size=self.batch_size, iterations=self.iterations,
            learning_rate=self.learning_rate, seed=self.seed,
            hidden=tuple(self.hidden),
            objective=ObjectiveConfig(gamma=self.gamma, kappa=self.kappa,
                                      b_f=self.laplace_scale,
                                      b_h=self.laplace_scale,
                                      b_0=self.laplace_scale,
                                      dt=dataset.dt, horizon=self.horizon))
        result = train(dataset, self.latent_, cfg)
        self.model_ = result.model
        self.history_ = result.history
        self.optimizer_state_ = result.optimizer_state
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise ValueError("this estimator is not fitted yet; call fit first")

    def transform(self, X):
        """Observables (n, N) -> latent coordinates (n, P + A), phases wrapped."""
        self._check_fitted()
        z = encode(np.asarray(X, dtype=np.float64), self.model_)
        return z.as_vector()

    def inverse_transform(self, Z):
        """Latent coordinates (n, P + A) -> observables (n, N)."""
        self._check_fitted()
        Z = np.asarray(Z, dtype=np.float64)
        p = self.model_.num_phases
        return decode(LatentState(Z[..., :p], Z[..., p:]), self.model_)

    def predict(self, x0, n_steps):
        """Decoded analytic rollout of length n_steps from observation x0."""
        self._check_fitted()
        z0 = encode(np.asarray(x0, dtype=np.float64), self.model_)
        path = analytic_rollout(z0, np.arange(n_steps), self.latent_)
        return decode(path, self.model_)

    def score(self, X, y=None, dt=None):
        """Negative open-loop reconstruction RMSE (higher is better)."""
        self._check_fitted()
        dataset = _as_dataset(X, dt if dt is not None else self.latent_.dt)
        return -evaluate_rmse(self.model_, self.latent_, dataset.trajectories)
