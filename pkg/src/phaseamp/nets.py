"""Structured encoder and decoder networks.

Both are two-hidden-layer ReLU MLPs with a linear output.  The encoder
emits two raw values (y0, y1) per phase that an atan2 head turns into a
wrapped angle, plus one linear value per amplitude.  The decoder receives
[sin phi_i, cos phi_i, ...] per phase followed by the raw amplitudes, so it
is exactly 2*pi-periodic in every phase coordinate.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .latent import LatentState
from .validation import as_float_array


class DegenerateEncodingWarning(UserWarning):
    """Raised when both atan2 inputs of a phase head are exactly zero."""


@dataclass
class MlpParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2", "w3", "b3"):
            setattr(self, name, as_float_array(getattr(self, name), name))
        if self.w1.shape[1] != self.b1.shape[0] or self.w2.shape[0] != self.b1.shape[0] \
                or self.w2.shape[1] != self.b2.shape[0] or self.w3.shape[0] != self.b2.shape[0] \
                or self.w3.shape[1] != self.b3.shape[0]:
            raise ValueError("inconsistent MLP layer dimensions")

    @property
    def in_dim(self):
        return self.w1.shape[0]

    @property
    def out_dim(self):
        return self.w3.shape[1]

    def arrays(self):
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2,
                "b2": self.b2, "w3": self.w3, "b3": self.b3}


@dataclass
class ModelParams:
    """Encoder and decoder weights plus the latent layout they assume."""

    encoder: MlpParams
    decoder: MlpParams
    num_phases: int
    num_amplitudes: int

    def __post_init__(self):
        p, a = self.num_phases, self.num_amplitudes
        if self.encoder.out_dim != 2 * p + a:
            raise ValueError("encoder output width must equal 2P + A")
        if self.decoder.in_dim != 2 * p + a:
            raise ValueError("decoder input width must equal 2P + A")
        if self.encoder.in_dim != self.decoder.out_dim:
            raise ValueError("encoder input and decoder output widths must match")

    @property
    def n_obs(self):
        return self.encoder.in_dim

    def parameter_arrays(self):
        """Flat name -> array view of every trainable parameter."""
        out = {}
        for prefix, mlp in (("enc", self.encoder), ("dec", self.decoder)):
            for name, arr in mlp.arrays().items():
                out[f"{prefix}.{name}"] = arr
        return out


def init_params(seed, n_obs, num_phases, num_amplitudes, hidden=(128, 128)) -> ModelParams:
    """Fan-balanced uniform weights, zero biases, reproducible from seed."""
    if len(hidden) != 2:
        raise ValueError("exactly two hidden layers are supported")
    rng = np.random.default_rng(seed)
    latent_width = 2 * num_phases + num_amplitudes

    def make_mlp(dims):
        layers = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            s = np.sqrt(6.0 / (fan_in + fan_out))
            layers.append(rng.uniform(-s, s, size=(fan_in, fan_out)))
            layers.append(np.zeros(fan_out))
        return MlpParams(*layers)

    encoder = make_mlp([n_obs, hidden[0], hidden[1], latent_width])
    decoder = make_mlp([latent_width, hidden[0], hidden[1], n_obs])
    return ModelParams(encoder, decoder, num_phases, num_amplitudes)


class GradientTape:
    """Recorded computation of a scalar loss over named parameter tensors."""

    def __init__(self, params: ModelParams):
        self.tensors = {name: ad.constant(arr)
                        for name, arr in params.parameter_arrays().items()}
        self.loss = None

    def mlp_tensors(self, prefix):
        t = self.tensors
        return (t[f"{prefix}.w1"], t[f"{prefix}.b1"], t[f"{prefix}.w2"],
                t[f"{prefix}.b2"], t[f"{prefix}.w3"], t[f"{prefix}.b3"])

    def finalize(self, loss):
        self.loss = loss

    def gradients(self):
        """Reverse pass; returns name -> gradient for every parameter."""
        if self.loss is None:
            raise ValueError("tape holds no recorded loss")
        ad.backward(self.loss)
        return {name: (np.zeros_like(t.data) if t.grad is None else t.grad)
                for name, t in self.tensors.items()}

    def gradient(self, name):
        if name not in self.tensors:
            raise KeyError(f"value {name!r} was not recorded on this tape")
        return self.gradients()[name]

    def gradients_of(self, tensor):
        """Per-parameter gradients of an arbitrary recorded scalar.

        Unlike gradients(), this first clears the parameter leaves so terms
        that do not reach every parameter report exact zeros there.
        """
        for t in self.tensors.values():
            t.grad = None
        ad.backward(tensor)
        return {name: (np.zeros_like(t.data) if t.grad is None
                       else t.grad.copy())
                for name, t in self.tensors.items()}


def backward(loss_scalar, tape: GradientTape):
    """Gradients of the recorded loss for all parameters on the tape."""
    if tape.loss is not loss_scalar:
        raise ValueError("loss was not computed through this tape")
    return tape.gradients()


def _mlp_forward_t(x, layers):
    w1, b1, w2, b2, w3, b3 = layers
    h1 = ad.relu(ad.matmul(x, w1) + b1)
    h2 = ad.relu(ad.matmul(h1, w2) + b2)
    return ad.matmul(h2, w3) + b3


def _mlp_forward(x, mlp: MlpParams):
    h1 = np.maximum(x @ mlp.w1 + mlp.b1, 0.0)
    h2 = np.maximum(h1 @ mlp.w2 + mlp.b2, 0.0)
    return h2 @ mlp.w3 + mlp.b3


def encode_t(x, tape: GradientTape, num_phases, num_amplitudes):
    """Tape-recorded encoder: returns (wrapped phi, r) tensors."""
    raw = _mlp_forward_t(x, tape.mlp_tensors("enc"))
    p = num_phases
    y0 = ad.slice_last(raw, 0, p)
    y1 = ad.slice_last(raw, p, 2 * p)
    phi = ad.atan2(y1, y0)
    r = ad.slice_last(raw, 2 * p, 2 * p + num_amplitudes)
    return phi, r


def decode_t(phi, r, tape: GradientTape, num_phases):
    """Tape-recorded decoder on (possibly unwrapped) phase tensors."""
    parts = []
    for i in range(num_phases):
        col = ad.slice_last(phi, i, i + 1)
        parts.append(ad.sin(col))
        parts.append(ad.cos(col))
    parts.append(r)
    return _mlp_forward_t(ad.concat(parts, axis=-1), tape.mlp_tensors("dec"))


def encode(x, model: ModelParams) -> LatentState:
    """Map observables to latent coordinates; phases wrapped to (-pi, pi]."""
    x = as_float_array(x, "x")
    single = x.ndim == 1
    raw = _mlp_forward(np.atleast_2d(x), model.encoder)
    p = model.num_phases
    y0, y1 = raw[:, :p], raw[:, p:2 * p]
    if np.any((y0 == 0.0) & (y1 == 0.0)):
        warnings.warn("atan2 head received (0, 0); phase defaults to 0",
                      DegenerateEncodingWarning)
    phi = np.arctan2(y1, y0)
    r = raw[:, 2 * p:]
    if single:
        return LatentState(phi[0], r[0])
    return LatentState(phi, r)


def lift_latent(z: LatentState):
    """Decoder input features: [sin phi_i, cos phi_i, ...] then amplitudes."""
    cols = []
    for i in range(z.phi.shape[-1]):
        col = z.phi[..., i:i + 1]
        cols.append(np.sin(col))
        cols.append(np.cos(col))
    cols.append(z.r)
    return np.concatenate(cols, axis=-1)


def decode(z: LatentState, model: ModelParams):
    """Map latent coordinates back to observables."""
    feats = lift_latent(z)
    single = feats.ndim == 1
    out = _mlp_forward(np.atleast_2d(feats), model.decoder)
    return out[0] if single else out


def model_encode(model, x) -> LatentState:
    """Encoder dispatch: trained ModelParams or any object with .encode."""
    if isinstance(model, ModelParams):
        return encode(x, model)
    return model.encode(x)


def model_decode(model, z: LatentState):
    """Decoder dispatch: trained ModelParams or any object with .decode."""
    if isinstance(model, ModelParams):
        return decode(z, model)
    return model.decode(z)
