"""Rhythmic dynamic movement primitive baseline.

One spring-damper transformation system per observable channel, driven by a
periodic forcing term over a shared canonical phase.  The forcing target
comes from the demonstration accelerations; basis weights are solved by
least squares over the normalized periodic kernels, weighted by their local
activation.  Speed and amplitude modifiers scale the canonical rate and the
forcing term.
"""

import numpy as np

from .data import Trajectory
from .validation import check_positive


class RhythmicDmp:
    """fit() on a demonstration, then rollout() with optional modifiers."""

    def __init__(self, n_basis=25, alpha_z=25.0, omega=None):
        check_positive(alpha_z, "alpha_z")
        if n_basis < 1:
            raise ValueError("n_basis must be >= 1")
        self.n_basis = n_basis
        self.alpha_z = alpha_z
        self.beta_z = alpha_z / 4.0
        self.omega = omega               # canonical rate, rad/s
        self.centers = np.linspace(0.0, 2.0 * np.pi, n_basis, endpoint=False)
        self.width = float(n_basis)      # von-Mises concentration
        self.weights = None
        self.goal = None
        self.y0 = None
        self.v0 = None
        self.dt = None

    def _basis(self, theta):
        theta = np.atleast_1d(theta)
        return np.exp(self.width * (np.cos(theta[:, None] - self.centers) - 1.0))

    def forcing(self, theta):
        psi = self._basis(theta)
        f = (psi @ self.weights) / psi.sum(axis=1, keepdims=True)
        return f[0] if np.ndim(theta) == 0 else f

    def fit(self, demo: Trajectory, omega=None):
        """Solve per-basis weights from the demonstration forcing target."""
        if omega is not None:
            self.omega = float(omega)
        if self.omega is None or not self.omega > 0:
            raise ValueError("a positive canonical rate omega is required")
        y = demo.data
        if len(demo) < 3:
            raise ValueError("demonstration too short to differentiate")
        v = np.gradient(y, demo.dt, axis=0)
        a = np.gradient(v, demo.dt, axis=0)
        self.goal = y.mean(axis=0)
        f_target = a - self.alpha_z * (self.beta_z * (self.goal - y) - v)

        theta = self.omega * demo.times
        psi = self._basis(theta)
        activation = psi.sum(axis=0)
        if np.any(activation < 1e-10 * len(y)):
            raise ValueError("some basis functions were never activated; the "
                             "demonstration may not cover one full period")
        design = psi / psi.sum(axis=1, keepdims=True)
        self.weights = np.linalg.lstsq(design, f_target, rcond=None)[0]
        self.y0 = y[0].copy()
        self.v0 = v[0].copy()
        self.dt = demo.dt
        return self

    def step(self, y, v, theta, dt, speed_factor=1.0, amplitude_factor=1.0):
        """Semi-implicit Euler update of the transformation systems."""
        f = amplitude_factor * self.forcing(theta)
        acc = self.alpha_z * (self.beta_z * (self.goal - y) - v) + f
        v_new = v + dt * acc
        y_new = y + dt * v_new
        return y_new, v_new, theta + speed_factor * self.omega * dt

    def rollout(self, steps, dt=None, speed_factor=1.0, amplitude_factor=1.0,
                initial_state=None, theta0=0.0) -> Trajectory:
        """Integrate the fitted system; the canonical phase advances linearly."""
        if self.weights is None:
            raise ValueError("rollout requires a fitted DMP")
        check_positive(speed_factor, "speed_factor")
        check_positive(amplitude_factor, "amplitude_factor")
        dt = self.dt if dt is None else dt
        if initial_state is None:
            y, v = self.y0.copy(), self.v0.copy()
        else:
            y, v = (np.array(s, dtype=np.float64) for s in initial_state)
        theta = theta0
        out = np.empty((steps, y.size))
        for k in range(steps):
            out[k] = y
            y, v, theta = self.step(y, v, theta, dt, speed_factor,
                                    amplitude_factor)
        return Trajectory(out, dt)


def fit_dmp(demo: Trajectory, n_basis=25, omega=None, alpha_z=25.0) -> RhythmicDmp:
    return RhythmicDmp(n_basis=n_basis, alpha_z=alpha_z).fit(demo, omega=omega)


def rollout_dmp(dmp: RhythmicDmp, steps, speed_factor=1.0, amplitude_factor=1.0,
                initial_state=None, dt=None) -> Trajectory:
    return dmp.rollout(steps, dt=dt, speed_factor=speed_factor,
                       amplitude_factor=amplitude_factor,
                       initial_state=initial_state)
