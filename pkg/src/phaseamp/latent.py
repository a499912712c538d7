"""Phase-amplitude latent space.

The latent state z = [phi, r] follows the linear system
phi_dot = omega, r_dot = -lambda * r, whose discrete solution is available
in closed form, so rollouts never need numerical integration.  Phases live
on the real line (unwrapped); amplitudes are signed reals.
"""

from dataclasses import dataclass, field

import numpy as np

from .validation import as_float_array

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class LatentParams:
    """Fixed characteristic constants of the latent system.

    omega holds one frequency (rad/s) per phase coordinate, lam one
    exponent (rad/s) per amplitude coordinate.  lam is kept sorted
    ascending so configurations have a single canonical form.
    """

    omega: np.ndarray
    lam: np.ndarray
    dt: float

    def __post_init__(self):
        omega = np.atleast_1d(as_float_array(self.omega, "omega"))
        lam = np.sort(np.atleast_1d(as_float_array(self.lam, "lambda"))) \
            if np.size(self.lam) else np.zeros(0)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "lam", lam)
        if omega.size < 1:
            raise ValueError("at least one phase is required")
        if np.any(omega <= 0):
            raise ValueError("all omega must be > 0")
        if np.any(lam <= 0):
            raise ValueError("all lambda must be > 0")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")

    @property
    def num_phases(self):
        return int(self.omega.size)

    @property
    def num_amplitudes(self):
        return int(self.lam.size)

    @property
    def dim(self):
        return self.num_phases + self.num_amplitudes


@dataclass
class LatentState:
    """Latent point(s): phi has trailing dim P, r trailing dim A.

    Leading dimensions are broadcast batch/time axes; a bare state has
    shapes (P,) and (A,).
    """

    phi: np.ndarray
    r: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.phi = as_float_array(self.phi, "phi")
        self.r = as_float_array(self.r, "r")

    def as_vector(self):
        """Concatenated [phi, r] along the last axis."""
        if self.r.size == 0:
            return np.array(self.phi, copy=True)
        return np.concatenate([self.phi, self.r], axis=-1)

    def copy(self):
        return LatentState(self.phi.copy(), self.r.copy())


def analytic_rollout(z0: LatentState, k, params: LatentParams) -> LatentState:
    """Closed-form state after k steps: phi + omega*k*dt, r * exp(-lam*k*dt).

    k may be a scalar or an array of step counts; an array adds a leading
    axis to the result.
    """
    k = np.asarray(k)
    if np.any(k < 0):
        raise ValueError("step count k must be >= 0")
    t = k * params.dt
    if k.ndim == 0:
        phi = z0.phi + params.omega * t
        r = z0.r * np.exp(-params.lam * t)
    else:
        t = t.reshape(t.shape + (1,) * z0.phi.ndim)
        phi = z0.phi + params.omega * t
        r = z0.r * np.exp(-params.lam * t)
    return LatentState(phi, r)


def wrap_angle(phi):
    """Map angles to (-pi, pi]."""
    phi = np.asarray(phi, dtype=np.float64)
    wrapped = phi - TWO_PI * np.floor((phi + np.pi) / TWO_PI)
    # floor maps the upper boundary to -pi; fold it back to +pi
    return np.where(wrapped <= -np.pi, wrapped + TWO_PI, wrapped)


def nearest_revolution_shift(phi_from, phi_to):
    """Multiple of 2*pi that moves phi_from closest to phi_to."""
    return TWO_PI * np.round((np.asarray(phi_to) - np.asarray(phi_from)) / TWO_PI)


def align_phase(phi, reference):
    """Shift phi by the 2*pi multiple minimizing |phi - reference|."""
    return np.asarray(phi) + nearest_revolution_shift(phi, reference)


def unwrap_phase(seq):
    """Remove 2*pi jumps from a wrapped phase sequence.

    The first element is returned unchanged; every consecutive difference of
    the output lies in (-pi, pi], and each output value differs from its
    input by an exact integer multiple of 2*pi.  Works along axis 0; trailing
    axes are treated as independent channels.
    """
    seq = as_float_array(seq, "phase sequence")
    if seq.shape[0] == 0:
        raise ValueError("phase sequence must be nonempty")
    diffs = np.diff(seq, axis=0)
    # integer counts of 2*pi that bring each jump into (-pi, pi]
    turns = np.floor((np.pi - diffs) / TWO_PI)
    offsets = np.cumsum(turns, axis=0)
    out = seq.copy()
    out[1:] += TWO_PI * offsets
    return out


def lambda_discount(k, gamma, params: LatentParams):
    """Per-component weight c_k = ((1 - gamma*d) / (1 - gamma)) * d^k.

    d is 1 for every phase component and exp(-lam*dt) per amplitude, so the
    weighted series (1-gamma) * sum_k gamma^k * c_k sums to one for every
    latent component, compensating the amplitude decay.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    k = np.asarray(k)
    if np.any(k < 0):
        raise ValueError("step count k must be >= 0")
    d = np.concatenate([np.ones(params.num_phases), np.exp(-params.lam * params.dt)])
    scale = (1.0 - gamma * d) / (1.0 - gamma)
    if k.ndim == 0:
        return scale * d ** k
    return scale * d ** k[..., None]


def coupled_location(z0: LatentState, k, x_k, encoder, kappa, params: LatentParams) -> LatentState:
    """Rollout location conditioned on the current observation.

    Blends the analytic rollout with the encoded observation:
    f(z0, k, x) = f(z0, k) + kappa * (h(x) - f(z0, k)).  The encoder's
    wrapped phase is first shifted to the revolution nearest the rollout.
    """
    if not 0.0 <= kappa <= 1.0:
        raise ValueError("kappa must lie in [0, 1]")
    rolled = analytic_rollout(z0, k, params)
    enc = encoder(x_k)
    phi_enc = align_phase(enc.phi, rolled.phi)
    phi = rolled.phi + kappa * (phi_enc - rolled.phi)
    r = rolled.r + kappa * (enc.r - rolled.r)
    return LatentState(phi, r)
