"""Training objective: Laplace-reparameterized samples and the six-term loss.

Two latent sample paths feed the loss.  The first encodes only the window's
initial frame and rolls the latent system forward in closed form; the second
encodes every frame independently.  Reconstruction, consistency, and
finite-difference errors over both paths give six absolute-error terms,
discounted by gamma and by the decay-compensating per-component weights.

Noise draw order per window (one generator, fixed order, so samples are
reproducible): first the initial-state draw (M values), then the rollout
draws for steps 1..T (row-major), then the per-step encoder draws for steps
0..T (row-major).
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .latent import TWO_PI, LatentParams, LatentState, analytic_rollout, \
    lambda_discount, unwrap_phase
from .nets import GradientTape, ModelParams, decode_t, encode, encode_t
from .validation import check_in_unit_interval, check_trajectory_matrix


class LossNanError(RuntimeError):
    """A loss term evaluated to NaN; the message names the term."""


@dataclass(frozen=True)
class ObjectiveConfig:
    gamma: float = 0.99
    kappa: float = 0.5
    b_f: float = 1e-5
    b_h: float = 1e-5
    b_0: float = 1e-5
    beta_prior: float = 0.0
    dt: float = 0.02
    horizon: int = 200

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        check_in_unit_interval(self.kappa, "kappa")
        for name in ("b_f", "b_h", "b_0"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.beta_prior > 0 and self.b_0 == 0:
            raise ValueError("beta_prior > 0 requires b_0 > 0")


@dataclass
class LossBreakdown:
    l_rec: float
    l_enc: float
    l_dec: float
    l_lat: float
    l_rec_diff: float
    l_dec_diff: float
    l_prior: float
    total: float

    def as_dict(self):
        return {"l_rec": self.l_rec, "l_enc": self.l_enc, "l_dec": self.l_dec,
                "l_lat": self.l_lat, "l_rec_diff": self.l_rec_diff,
                "l_dec_diff": self.l_dec_diff, "l_prior": self.l_prior,
                "total": self.total}


def laplace_sample(b, u):
    """Inverse-CDF transform of uniform u in (-1/2, 1/2) to Laplace(0, b)."""
    if b < 0:
        raise ValueError("scale b must be >= 0")
    u = np.asarray(u, dtype=np.float64)
    if np.any(np.abs(u) >= 0.5):
        raise ValueError("u must lie in the open interval (-1/2, 1/2)")
    if b == 0:
        return np.zeros_like(u) if u.ndim else 0.0
    out = -b * np.sign(u) * np.log1p(-2.0 * np.abs(u))
    return out if u.ndim else float(out)


def _uniform_open(rng, size):
    u = rng.random(size) - 0.5
    u[u == -0.5] = 0.0
    return u


def _draw_q1_noise(rng, length, dim, cfg):
    eps0 = laplace_sample(cfg.b_h, _uniform_open(rng, dim))
    eps_f = laplace_sample(cfg.b_f, _uniform_open(rng, (max(length - 1, 0), dim)))
    return eps0, eps_f


def _draw_q2_noise(rng, length, dim, cfg):
    return laplace_sample(cfg.b_h, _uniform_open(rng, (length, dim)))


def sample_q1_latents(window, model: ModelParams, latent: LatentParams,
                      cfg: ObjectiveConfig, rng) -> LatentState:
    """Rollout-path samples: z_0 = h(x_0) + eps, z_k = f(z_0, k) + eps_k.

    Returns a LatentState with leading time axis of the window length.
    """
    window = check_trajectory_matrix(window, "window")
    length = window.shape[0]
    eps0, eps_f = _draw_q1_noise(rng, length, latent.dim, cfg)
    p = latent.num_phases
    z0 = encode(window[0], model)
    z0 = LatentState(z0.phi + eps0[:p], z0.r + eps0[p:])
    path = analytic_rollout(z0, np.arange(length), latent)
    path.phi[1:] += eps_f[:, :p]
    path.r[1:] += eps_f[:, p:]
    return path


def sample_q2_latents(window, model: ModelParams, latent: LatentParams,
                      cfg: ObjectiveConfig, rng) -> LatentState:
    """Per-step encoder samples: z'_k = h(x_k) + eps_k, independent in k."""
    window = check_trajectory_matrix(window, "window")
    eps = _draw_q2_noise(rng, window.shape[0], latent.dim, cfg)
    p = latent.num_phases
    enc = encode(window, model)
    return LatentState(enc.phi + eps[:, :p], enc.r + eps[:, p:])


def _unwrap_offsets(phi):
    """Constant 2*pi offsets that unwrap phi along its time axis (axis 1)."""
    diffs = np.diff(phi, axis=1)
    turns = np.floor((np.pi - diffs) / TWO_PI)
    offsets = np.zeros_like(phi)
    offsets[:, 1:] = TWO_PI * np.cumsum(turns, axis=1)
    return offsets


def build_window_loss(tape: GradientTape, windows, latent: LatentParams,
                      cfg: ObjectiveConfig, noise):
    """Record the six loss terms for a (B, L, N) batch of equal-length windows.

    noise holds (eps0, eps_f, eps_h) with batch leading axes.  Returns a dict
    of scalar tensors averaged over the batch.  All phase sequences are
    unwrapped along time and pinned to the sampled initial phase before any
    subtraction, with 2*pi alignment shifts entering as constants.
    """
    b, length, n = windows.shape
    p, a = latent.num_phases, latent.num_amplitudes
    eps0, eps_f, eps_h = noise
    gamma, kappa = cfg.gamma, cfg.kappa

    x = ad.constant(windows)
    x_flat = ad.reshape(x, (b * length, n))
    phi_w, r_enc = encode_t(x_flat, tape, p, a)
    phi_w = ad.reshape(phi_w, (b, length, p))
    r_enc = ad.reshape(r_enc, (b, length, a))
    phi_u = phi_w + ad.constant(_unwrap_offsets(phi_w.data))

    # rollout path, seeded by the sampled initial state
    z0_phi = phi_u[:, 0, :] + ad.constant(eps0[:, :p])
    z0_r = r_enc[:, 0, :] + ad.constant(eps0[:, p:])
    shift = TWO_PI * np.round((z0_phi.data - phi_u.data[:, 0, :]) / TWO_PI)
    phi_enc = phi_u + ad.constant(shift[:, None, :])

    ks = np.arange(length)
    phase_adv = latent.omega * (ks[:, None] * latent.dt)          # (L, P)
    decay = np.exp(-latent.lam * (ks[:, None] * latent.dt))       # (L, A)
    roll_phi = ad.reshape(z0_phi, (b, 1, p)) + ad.constant(phase_adv)
    roll_r = ad.reshape(z0_r, (b, 1, a)) * ad.constant(decay)

    q1_noise = np.zeros((b, length, p + a))
    q1_noise[:, 1:, :] = eps_f
    z1_phi = roll_phi + ad.constant(q1_noise[:, :, :p])
    z1_r = roll_r + ad.constant(q1_noise[:, :, p:])

    # per-step encoder path
    z2_phi = phi_enc + ad.constant(eps_h[:, :, :p])
    z2_r = r_enc + ad.constant(eps_h[:, :, p:])

    def decode_seq(phi, r):
        flat = decode_t(ad.reshape(phi, (b * length, p)),
                        ad.reshape(r, (b * length, a)), tape, p)
        return ad.reshape(flat, (b, length, n))

    xhat1 = decode_seq(z1_phi, z1_r)
    xhat2 = decode_seq(z2_phi, z2_r)

    g_w = (1.0 - gamma) * gamma ** ks                             # (L,)
    c_k = lambda_discount(ks, gamma, latent)                      # (L, M)

    def weighted_abs(err, weights):
        # |err| summed over components, then discount-weighted over time,
        # then averaged over the batch
        per_step = ad.sum_along(ad.absolute(err), -1)
        return ad.total(per_step * ad.constant(weights)) * (1.0 / b)

    l_rec = weighted_abs(x - xhat1, g_w)
    l_dec = weighted_abs(x - xhat2, g_w)

    if length > 1:
        enc_w = kappa * g_w.copy()
        enc_w[0] = 0.0
        err_enc = ad.concat([(phi_enc - roll_phi) * ad.constant(c_k[None, :, :p]),
                             (r_enc - roll_r) * ad.constant(c_k[None, :, p:])], axis=-1)
        l_enc = weighted_abs(err_enc, enc_w)

        # one-step prediction from the previous per-step sample
        step_phi = z2_phi[:, :-1, :] + ad.constant(latent.omega * latent.dt)
        step_r = z2_r[:, :-1, :] * ad.constant(np.exp(-latent.lam * latent.dt))
        err_lat = ad.concat([(phi_enc[:, 1:, :] - step_phi) * ad.constant(c_k[1:, :p]),
                             (r_enc[:, 1:, :] - step_r) * ad.constant(c_k[1:, p:])], axis=-1)
        l_lat = weighted_abs(err_lat, (2.0 - kappa) * g_w[1:])

        inv_dt = 1.0 / cfg.dt
        dx = ad.constant(np.diff(windows, axis=1) * inv_dt)
        d1 = (xhat1[:, 1:, :] - xhat1[:, :-1, :]) * inv_dt
        d2 = (xhat2[:, 1:, :] - xhat2[:, :-1, :]) * inv_dt
        l_rec_diff = weighted_abs(dx - d1, g_w[:-1])
        l_dec_diff = weighted_abs(dx - d2, g_w[:-1])
    else:
        l_enc = l_lat = l_rec_diff = l_dec_diff = ad.constant(0.0)

    l_prior = ad.total(ad.absolute(ad.concat([z0_phi, z0_r], axis=-1))) \
        * (1.0 / (b * cfg.b_0)) if cfg.beta_prior > 0 else ad.constant(0.0)

    sq = np.sqrt(cfg.dt)
    total = l_rec + l_enc + l_dec + l_lat + sq * l_rec_diff + sq * l_dec_diff \
        + cfg.beta_prior * l_prior
    return {"l_rec": l_rec, "l_enc": l_enc, "l_dec": l_dec, "l_lat": l_lat,
            "l_rec_diff": l_rec_diff, "l_dec_diff": l_dec_diff,
            "l_prior": l_prior, "total": total}


def _breakdown_from_terms(terms) -> LossBreakdown:
    values = {}
    for name, tensor in terms.items():
        value = float(tensor.data)
        if np.isnan(value):
            raise LossNanError(f"loss term {name!r} is NaN")
        values[name] = value
    return LossBreakdown(**values)


def compute_loss(window, model: ModelParams, latent: LatentParams,
                 cfg: ObjectiveConfig, rng):
    """Single-window, single-sample loss; returns (LossBreakdown, tape).

    The tape records the total; per-term tensors stay reachable via
    tape.terms for diagnostics and gradient checks.
    """
    window = check_trajectory_matrix(window, "window")
    length = window.shape[0]
    eps0, eps_f = _draw_q1_noise(rng, length, latent.dim, cfg)
    eps_h = _draw_q2_noise(rng, length, latent.dim, cfg)
    tape = GradientTape(model)
    terms = build_window_loss(tape, window[None], latent, cfg,
                              (eps0[None], eps_f[None], eps_h[None, :, :]))
    tape.finalize(terms["total"])
    tape.terms = terms
    return _breakdown_from_terms(terms), tape
