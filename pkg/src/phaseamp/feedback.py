"""Interactive coupling between the latent system and a plant.

Each control step advances the latent state by its closed-form solution and
adds a proportional correction toward the encoded plant state, so the
generated trajectory and the robot pull on each other.  Gains are rates
(1/s); experiment tables that list a dimensionless per-step gain divide it
by the control period when building the config.
"""

from dataclasses import dataclass, field

import numpy as np

from .data import ObservableLayout
from .latent import LatentParams, LatentState, align_phase, wrap_angle
from .nets import ModelParams, model_decode, model_encode
from .validation import as_float_array


@dataclass
class FeedbackConfig:
    g: float = 0.0                       # base coupling rate, 1/s
    characteristic_scaling: bool = False
    phi_ff: np.ndarray = None            # feedforward phase offsets, rad
    kappa: float = 0.5
    control_dt: float = 0.005

    def __post_init__(self):
        if self.g < 0:
            raise ValueError("gain must be >= 0")
        if not self.control_dt > 0:
            raise ValueError("control_dt must be > 0")
        if self.phi_ff is not None:
            self.phi_ff = as_float_array(self.phi_ff, "phi_ff")

    def offsets(self, num_phases):
        if self.phi_ff is None:
            return np.zeros(num_phases)
        if self.phi_ff.size != num_phases:
            raise ValueError("phi_ff length must equal the phase count")
        return self.phi_ff

    def gain_vector(self, latent: LatentParams):
        """Per-component rates; characteristic scaling uses g/omega_0 * [omega, lam]."""
        if not self.characteristic_scaling:
            return np.full(latent.dim, self.g)
        omega0 = float(np.min(latent.omega))
        return (self.g / omega0) * np.concatenate([latent.omega, latent.lam])


def per_step_gain(gain_per_step, control_dt):
    """Convert a dimensionless per-control-step gain to a rate."""
    return gain_per_step / control_dt


def latent_feedback_step(z: LatentState, x, model: ModelParams,
                         cfg: FeedbackConfig, latent: LatentParams,
                         dt) -> LatentState:
    """One Euler step of z_dot = f(z) + g * (h(x) - z + phi_ff).

    The uncoupled part advances in closed form; the correction uses the
    encoder output with its phases shifted to the revolution nearest z, and
    the resulting phase error (after adding the feedforward offset) wrapped
    to (-pi, pi] so a revolution count can never produce a huge kick.
    """
    gains = cfg.gain_vector(latent)
    p = latent.num_phases
    phi = z.phi + latent.omega * dt
    r = z.r * np.exp(-latent.lam * dt)
    if np.any(gains != 0.0):
        enc = model_encode(model, x)
        dphi = wrap_angle(align_phase(enc.phi, z.phi) - z.phi
                          + cfg.offsets(p))
        dr = enc.r - z.r
        phi = phi + gains[:p] * dphi * dt
        r = r + gains[p:] * dr * dt
    return LatentState(phi, r)


def desired_output(z: LatentState, model: ModelParams,
                   layout: ObservableLayout, prev_position=None, dt=None):
    """Decode z and split into (position target, velocity target).

    Layouts without velocity channels fall back to finite differences of
    successive decoded positions (zero on the first call).
    """
    if isinstance(model, ModelParams) and layout.n_channels != model.n_obs:
        raise ValueError("observable layout does not match the decoder width")
    decoded = model_decode(model, z)
    pos = decoded[..., layout.position]
    if layout.num_velocity:
        vel = decoded[..., layout.velocity]
    elif prev_position is not None:
        if dt is None or not dt > 0:
            raise ValueError("finite-difference velocity needs a positive dt")
        vel = (pos - prev_position) / dt
    else:
        vel = np.zeros_like(pos)
    return pos, vel, decoded
