"""End-to-end training: spectral pre-estimation, preprocessing, the Adam
loop over window batches, and RMSE evaluation.

The characteristic constants omega and lambda are never learned; they are
fixed up front (estimated from data spectra or configured) and the loop
only fits the encoder/decoder weights.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import butter, filtfilt

from .data import Dataset, Trajectory
from .latent import LatentParams, analytic_rollout
from .nets import GradientTape, ModelParams, init_params, model_decode, \
    model_encode
from .objective import LossNanError, ObjectiveConfig, build_window_loss, \
    laplace_sample, _uniform_open
from .optim import Adam


@dataclass
class TrainConfig:
    batch_size: int = 255
    iterations: int = 5000
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    hidden: tuple = (512, 512)
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)

    def __post_init__(self):
        if self.batch_size < 1 or self.iterations < 0:
            raise ValueError("batch_size must be >= 1 and iterations >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")


@dataclass
class SpectrumReport:
    lags_s: np.ndarray
    autocorr: np.ndarray
    freqs_hz: np.ndarray
    fft_magnitude: np.ndarray
    detected_periods_s: list
    detected_frequencies: list          # rad/s
    lambda_min: float
    lambda_max: float
    suggested_grid_size: int = 32


class TrainingAbortedError(RuntimeError):
    """Loss went NaN; carries the last finite model and partial history."""

    def __init__(self, message, model, history):
        super().__init__(message)
        self.model = model
        self.history = history


@dataclass
class TrainResult:
    model: ModelParams
    history: list
    optimizer_state: dict


def _mean_autocorrelation(dataset: Dataset):
    """Channel-averaged, mean-removed, biased autocorrelation.

    Each channel is normalized by its zero-lag value so detection is
    invariant to positive rescaling of the signal.  Trajectories contribute
    up to their own maximum lag.
    """
    max_len = max(len(t) for t in dataset.trajectories)
    acc = np.zeros(max_len)
    count = np.zeros(max_len)
    for traj in dataset.trajectories:
        x = traj.data - traj.data.mean(axis=0)
        for ch in range(x.shape[1]):
            sig = x[:, ch]
            r = np.correlate(sig, sig, mode="full")[len(sig) - 1:] / len(sig)
            if r[0] <= 0:
                continue                # constant channel carries no period
            acc[:len(r)] += r / r[0]
            count[:len(r)] += 1
    valid = count > 0
    if not np.any(valid):
        raise ValueError("no periodicity detected: all channels are constant")
    curve = np.zeros(max_len)
    curve[valid] = acc[valid] / count[valid]
    return curve


def _local_maxima(curve, min_lag=2):
    idx = np.arange(min_lag, len(curve) - 1)
    mask = (curve[idx] > curve[idx - 1]) & (curve[idx] >= curve[idx + 1]) \
        & (curve[idx] > 0)
    return idx[mask]


def _refine_peak(curve, i):
    # parabolic interpolation through the peak and its neighbors
    denom = curve[i - 1] - 2.0 * curve[i] + curve[i + 1]
    if denom == 0:
        return float(i)
    shift = 0.5 * (curve[i - 1] - curve[i + 1]) / denom
    return float(i) + float(np.clip(shift, -0.5, 0.5))


def _is_repeat(lag, chosen, tol=0.05):
    # integer multiples of an already chosen lag are the same period again
    for ref in chosen:
        m = max(round(lag / ref), 1)
        if abs(lag - m * ref) <= tol * m * ref:
            return True
    return False


def estimate_frequencies(dataset: Dataset, num_phases: int):
    """Detect up to num_phases dominant periods by autocorrelation.

    Returns (frequencies in rad/s, SpectrumReport).  The report also carries
    the channel-averaged FFT magnitude spectrum and suggested exponent
    bounds: lambda_max where the normalized spectrum falls to 5% of its
    peak, lambda_min at the fastest detected frequency.
    """
    if num_phases < 1:
        raise ValueError("num_phases must be >= 1")
    dt = dataset.dt
    curve = _mean_autocorrelation(dataset)
    peaks = _local_maxima(curve)
    if peaks.size == 0:
        raise ValueError("no autocorrelation maximum found; the data may be "
                         "aperiodic or shorter than two periods")
    order = peaks[np.argsort(curve[peaks])[::-1]]
    chosen = []
    for i in order:
        lag = _refine_peak(curve, i)
        if not _is_repeat(lag, chosen):
            chosen.append(lag)
        if len(chosen) == num_phases:
            break
    periods = [lag * dt for lag in sorted(chosen)]
    freqs = [2.0 * np.pi / p for p in periods]

    # FFT magnitude averaged across channels, for inspection and lambda hints
    longest = max(dataset.trajectories, key=len)
    x = longest.data - longest.data.mean(axis=0)
    mag = np.abs(np.fft.rfft(x, axis=0)).mean(axis=1)
    freqs_hz = np.fft.rfftfreq(len(longest), d=dt)
    mag_n = mag / mag.max() if mag.max() > 0 else mag
    above = np.nonzero(mag_n >= 0.05)[0]
    lam_max = 2.0 * np.pi * freqs_hz[above[-1]] if above.size else max(freqs)
    lam_min = max(freqs)
    report = SpectrumReport(
        lags_s=np.arange(len(curve)) * dt, autocorr=curve,
        freqs_hz=freqs_hz, fft_magnitude=mag,
        detected_periods_s=periods, detected_frequencies=freqs,
        lambda_min=float(lam_min), lambda_max=float(max(lam_max, lam_min)))
    return freqs, report


def lambda_grid(lambda_min, lambda_max, count):
    """Geometrically spaced exponents, endpoints exact."""
    if not 0 < lambda_min <= lambda_max:
        raise ValueError("need 0 < lambda_min <= lambda_max")
    if count < 1:
        raise ValueError("count must be >= 1")
    if count == 1:
        return np.array([float(lambda_min)])
    return np.geomspace(lambda_min, lambda_max, count)


def preprocess(trajectory: Trajectory, target_rate, cutoff_hz, layout=None):
    """Zero-phase second-order low-pass, then integer-stride decimation.

    When the layout declares velocity channels, velocities are recomputed
    by central differences of the filtered positions before decimation.
    """
    src_rate = 1.0 / trajectory.dt
    if target_rate > src_rate:
        raise ValueError("target_rate must not exceed the source rate")
    if cutoff_hz >= target_rate / 2.0:
        raise ValueError("cutoff must be below the target Nyquist rate")
    b, a = butter(2, cutoff_hz, fs=src_rate)
    data = filtfilt(b, a, trajectory.data, axis=0)
    if layout is not None and layout.num_velocity:
        pos = data[:, layout.position]
        vel = np.gradient(pos, trajectory.dt, axis=0)
        data = np.concatenate([pos, vel], axis=1)
    stride = max(int(round(src_rate / target_rate)), 1)
    return Trajectory(data[::stride], trajectory.dt * stride)


def _draw_batch_noise(rng, n_windows, length, dim, cfg):
    eps0 = laplace_sample(cfg.b_h, _uniform_open(rng, (n_windows, dim)))
    eps_f = laplace_sample(cfg.b_f, _uniform_open(rng, (n_windows, max(length - 1, 0), dim)))
    eps_h = laplace_sample(cfg.b_h, _uniform_open(rng, (n_windows, length, dim)))
    return eps0, eps_f, eps_h


def train(dataset: Dataset, latent: LatentParams, config: TrainConfig,
          model: ModelParams = None, optimizer_state=None, start_iteration=0,
          log_fn=None):
    """Run the optimization loop; returns a TrainResult (model + history).

    Batches are drawn uniformly with replacement over the global window
    index.  A NaN loss aborts the run via TrainingAbortedError, which carries
    the last finite parameters.  The result is reproducible from the seed.
    """
    cfg = config.objective
    if abs(cfg.dt - dataset.dt) > 1e-9:
        raise ValueError("objective dt must match the dataset step size")
    windows = dataset.window_index(cfg.horizon)
    if model is None:
        model = init_params(config.seed, dataset.n_channels,
                            latent.num_phases, latent.num_amplitudes,
                            config.hidden)
    params = model.parameter_arrays()
    adam = Adam(params, config.learning_rate, config.beta1, config.beta2,
                config.eps)
    if optimizer_state is not None:
        adam.load_state_dict(optimizer_state)
    rng = np.random.default_rng(config.seed + start_iteration)
    history = []
    for it in range(config.iterations):
        idx = rng.integers(0, len(windows), size=config.batch_size)
        by_length = {}
        for j in idx:
            by_length.setdefault(windows[j][2], []).append(windows[j])
        tape = GradientTape(model)
        combined = None
        sums = {}
        try:
            for length in sorted(by_length):
                entries = by_length[length]
                batch = np.stack([dataset.window(e) for e in entries])
                noise = _draw_batch_noise(rng, len(entries), length,
                                          latent.dim, cfg)
                terms = build_window_loss(tape, batch, latent, cfg, noise)
                weight = len(entries) / config.batch_size
                contribution = weight * terms["total"]
                combined = contribution if combined is None else combined + contribution
                for name, tensor in terms.items():
                    value = float(tensor.data)
                    if np.isnan(value):
                        raise LossNanError(f"loss term {name!r} is NaN")
                    sums[name] = sums.get(name, 0.0) + weight * value
        except LossNanError as err:
            raise TrainingAbortedError(
                f"aborted at iteration {start_iteration + it}: {err}",
                model, history) from err
        tape.finalize(combined)
        grads = tape.gradients()
        adam.step(grads)
        record = dict(sums, iteration=start_iteration + it)
        history.append(record)
        if log_fn is not None:
            log_fn(record)
    return TrainResult(model, history, adam.state_dict())


def evaluate_rmse(model: ModelParams, latent: LatentParams, trajectories,
                  rollout_length=None):
    """Open-loop reconstruction error, averaged over trajectories.

    Encodes only the first frame, rolls the latent state forward in closed
    form, decodes, and scores sqrt(mean ||x_k - xhat_k||^2) per trajectory.
    Deterministic: no sampling anywhere.
    """
    scores = []
    for traj in trajectories:
        data = traj.data if isinstance(traj, Trajectory) else np.asarray(traj)
        length = len(data) if rollout_length is None \
            else min(rollout_length, len(data))
        z0 = model_encode(model, data[0])
        path = analytic_rollout(z0, np.arange(length), latent)
        xhat = model_decode(model, path)
        err = data[:length] - xhat
        scores.append(np.sqrt(np.mean(np.sum(err ** 2, axis=1))))
    return float(np.mean(scores))
