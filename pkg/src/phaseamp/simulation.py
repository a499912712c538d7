"""Ground-truth systems and experiment scenarios.

Holds the planar limit-cycle plant with its exact latent-coordinate oracle,
synthetic demonstration generators, a fully actuated 3D point robot under
PD control, and the closed-loop transient scenarios (anomaly, force noise,
slow motion, reshaping) used to compare trajectory generators.
"""

from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset, ObservableLayout, Trajectory
from .feedback import FeedbackConfig, latent_feedback_step, per_step_gain
from .latent import LatentParams, LatentState, analytic_rollout
from .nets import ModelParams, model_decode, model_encode
from .validation import as_float_array

SCENARIO_KINDS = ("nominal", "anomaly", "force_noise", "slow_motion", "reshape")


@dataclass(frozen=True)
class LimitCycleParams:
    alpha: float = 1.0
    omega: float = 2.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.omega > 0):
            raise ValueError("alpha and omega must be > 0")


def limit_cycle_field(x, params: LimitCycleParams):
    """Planar field: rotation at omega plus radial relaxation to |x|^2 = alpha."""
    x = np.asarray(x, dtype=np.float64)
    rot = np.stack([-params.omega * x[..., 1], params.omega * x[..., 0]], axis=-1)
    sq = np.sum(x * x, axis=-1, keepdims=True)
    return rot - (sq - params.alpha) * x


def rk4_step(f, x, dt):
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def simulate_limit_cycle(x0, num_steps, dt, params: LimitCycleParams):
    """Integrate the plant with RK4; rows are states, first row is x0."""
    out = np.empty((num_steps, 2) if np.ndim(x0) == 1 else (num_steps,) + np.shape(x0))
    out[0] = x0
    f = lambda x: limit_cycle_field(x, params)
    for k in range(1, num_steps):
        out[k] = rk4_step(f, out[k - 1], dt)
    return out


def analytic_encoder_oracle(x, params: LimitCycleParams, lam=None) -> LatentState:
    """Exact latent coordinates of the planar plant for lam = 2*alpha.

    phi = atan2(x2, x1); r = (|x|^2 - alpha) / |x|^2, signed and defined
    everywhere except the origin.
    """
    lam = 2.0 * params.alpha if lam is None else lam
    if not np.isclose(lam, 2.0 * params.alpha):
        raise ValueError("the closed-form amplitude requires lam = 2*alpha")
    x = np.asarray(x, dtype=np.float64)
    sq = np.sum(x * x, axis=-1)
    if np.any(sq == 0.0):
        raise ValueError("the oracle is undefined at the origin")
    phi = np.arctan2(x[..., 1], x[..., 0])[..., None]
    r = ((sq - params.alpha) / sq)[..., None]
    return LatentState(phi, r)


# one trajectory covers half a revolution at omega = 2: 100 steps of pi/200 s
LIMIT_CYCLE_DT = np.pi / 200.0


def generate_limit_cycle_dataset(params: LimitCycleParams, num_steps, seed,
                                 dt=LIMIT_CYCLE_DT, steps_per_trajectory=100) -> Dataset:
    """Sample transients relaxing onto the cycle until num_steps are collected.

    Initial states sit on the cycle at a uniform phase, pushed along the
    outward normal by a zero-mean Gaussian of std sqrt(alpha); offsets that
    would cross the origin are redrawn.
    """
    rng = np.random.default_rng(seed)
    radius = np.sqrt(params.alpha)
    trajectories = []
    collected = 0
    while collected < num_steps:
        steps = min(steps_per_trajectory, num_steps - collected)
        phase = rng.uniform(-np.pi, np.pi)
        offset = rng.normal(0.0, radius)
        while radius + offset <= 0.0:
            offset = rng.normal(0.0, radius)
        x0 = (radius + offset) * np.array([np.cos(phase), np.sin(phase)])
        trajectories.append(Trajectory(simulate_limit_cycle(x0, steps, dt, params), dt))
        collected += steps
    return Dataset(trajectories)


LEMNISCATE_LAYOUT = ObservableLayout(num_position=3, num_velocity=3)


def generate_lemniscate_demo(amplitude=0.5, frequency_hz=0.2, duration_s=20.0,
                             dt=0.05, center=(0.0, 0.0, 0.3)) -> Trajectory:
    """Figure-eight tool-center demonstration: positions and velocities.

    p(t) = c + (A cos th, A/2 sin 2th, 0) with th = 2 pi f t; the velocity
    channels are the exact derivative.
    """
    steps = int(round(duration_s / dt))
    t = np.arange(steps) * dt
    th = 2.0 * np.pi * frequency_hz * t
    rate = 2.0 * np.pi * frequency_hz
    c = np.asarray(center, dtype=np.float64)
    pos = np.stack([c[0] + amplitude * np.cos(th),
                    c[1] + 0.5 * amplitude * np.sin(2.0 * th),
                    np.full_like(th, c[2])], axis=1)
    vel = np.stack([-amplitude * rate * np.sin(th),
                    amplitude * rate * np.cos(2.0 * th),
                    np.zeros_like(th)], axis=1)
    return Trajectory(np.concatenate([pos, vel], axis=1), dt)


def generate_torus_demo(freq_slow_hz=0.17, freq_fast_hz=0.51, duration_s=24.0,
                        dt=1.0 / 360.0, amp_slow=0.4, amp_fast=0.25,
                        center=(0.0, 0.0, 0.5)) -> Trajectory:
    """Two-frequency rhythmic demonstration (torus-shaped latent support).

    A large orbit at the slow frequency carries a smaller orbit at the fast
    one; positions and exact velocities over three spatial channels.
    """
    steps = int(round(duration_s / dt))
    t = np.arange(steps) * dt
    th0 = 2.0 * np.pi * freq_slow_hz * t
    th1 = 2.0 * np.pi * freq_fast_hz * t
    w0 = 2.0 * np.pi * freq_slow_hz
    w1 = 2.0 * np.pi * freq_fast_hz
    c = np.asarray(center, dtype=np.float64)
    pos = np.stack([c[0] + amp_slow * np.cos(th0) + amp_fast * np.cos(th1),
                    c[1] + amp_slow * np.sin(th0) + amp_fast * np.sin(th1),
                    c[2] + amp_fast * np.sin(th1 - th0)], axis=1)
    vel = np.stack([-amp_slow * w0 * np.sin(th0) - amp_fast * w1 * np.sin(th1),
                    amp_slow * w0 * np.cos(th0) + amp_fast * w1 * np.cos(th1),
                    amp_fast * (w1 - w0) * np.cos(th1 - th0)], axis=1)
    return Trajectory(np.concatenate([pos, vel], axis=1), dt)


@dataclass
class PointRobotState:
    position: np.ndarray
    velocity: np.ndarray
    mass: float = 1.0
    kp: float = 400.0
    kd: float = 40.0

    def __post_init__(self):
        self.position = as_float_array(self.position, "position")
        self.velocity = as_float_array(self.velocity, "velocity")
        if not self.mass > 0:
            raise ValueError("mass must be > 0")
        if self.kp < 0 or self.kd < 0:
            raise ValueError("gains must be >= 0")

    def observable(self):
        return np.concatenate([self.position, self.velocity])


def step_robot(state: PointRobotState, desired_pos, desired_vel,
               external_force, dt) -> PointRobotState:
    """Semi-implicit Euler update under PD control plus an external force."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    acc = (state.kp * (np.asarray(desired_pos) - state.position)
           + state.kd * (np.asarray(desired_vel) - state.velocity)
           + np.asarray(external_force)) / state.mass
    vel = state.velocity + acc * dt
    pos = state.position + vel * dt
    return PointRobotState(pos, vel, state.mass, state.kp, state.kd)


@dataclass
class ScenarioConfig:
    kind: str = "nominal"
    duration_s: float = 20.0
    anomaly_start_s: float = 3.0
    anomaly_duration_s: float = 6.0
    noise_std: float = 100.0
    speed_factor: float = 1.0
    shape_factor: float = 1.0
    feedback_on: bool = True
    feedback_gain: float = 1e-3          # dimensionless, per control step
    control_dt: float = 0.005
    diverge_limit: float = 1e3

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.speed_factor <= 0 or self.shape_factor <= 0:
            raise ValueError("factors must be > 0")
        if self.kind == "anomaly":
            if self.anomaly_start_s < 0 or \
                    self.anomaly_start_s + self.anomaly_duration_s > self.duration_s:
                raise ValueError("anomaly window must lie within the episode")


@dataclass
class EpisodeLog:
    times: np.ndarray
    desired: np.ndarray            # delivered targets, full observable rows
    actual: np.ndarray             # robot observable rows
    latent_phi: np.ndarray
    latent_r: np.ndarray
    reference: np.ndarray          # transformed demonstration, full rows
    flags: np.ndarray              # bit 1: anomaly active, bit 2: diverged
    diverged: bool
    metadata: dict

    def tracking_rmse(self, layout: ObservableLayout):
        err = self.actual[:, layout.position] - self.reference[:, layout.position]
        return float(np.sqrt(np.mean(np.sum(err ** 2, axis=1))))

    def desired_jumps(self, layout: ObservableLayout):
        steps = np.diff(self.desired[:, layout.position], axis=0)
        return np.linalg.norm(steps, axis=1)


def _interp_rows(data, frac_idx):
    lo = int(np.floor(frac_idx)) % len(data)
    hi = (lo + 1) % len(data)
    w = frac_idx - np.floor(frac_idx)
    return (1.0 - w) * data[lo] + w * data[hi]


class _DemoReference:
    """Transformed demonstration, periodically extended in time."""

    def __init__(self, demo: Trajectory, period_s, speed=1.0, shape=1.0):
        self.demo = demo
        self.period_s = period_s
        self.speed = speed
        self.shape = shape
        self.mean = demo.data.mean(axis=0)

    def scale(self, rows):
        return self.mean + self.shape * (rows - self.mean)

    def unscale(self, rows):
        return self.mean + (rows - self.mean) / self.shape

    def at(self, t):
        t_demo = (t * self.speed) % self.period_s
        row = _interp_rows(self.demo.data, t_demo / self.demo.dt)
        return self.scale(row)


class _LatentGenerator:
    """Proposed method: decoded latent rollout with interactive feedback."""

    def __init__(self, model, latent, fb_cfg, scenario, demo, ref, layout, dt):
        speed = ref.speed
        gain = per_step_gain(scenario.feedback_gain, dt) \
            if scenario.feedback_on else 0.0
        self.fb = replace(fb_cfg, g=gain, control_dt=dt)
        self.latent_step = LatentParams(latent.omega * speed, latent.lam, dt)
        self.model = model
        self.ref = ref
        self.layout = layout
        self.dt = dt
        self.z0 = model_encode(model, demo.data[0])
        self.z = self.z0
        self.k = 0

    def target(self):
        out = self.ref.scale(model_decode(self.model, self.z))
        if self.ref.speed != 1.0:
            out = out.copy()
            out[self.layout.velocity] *= self.ref.speed
        return out

    def advance(self, x_obs):
        if self.fb.g > 0:
            x_model = self.ref.unscale(x_obs)
            if self.ref.speed != 1.0:
                x_model = x_model.copy()
                x_model[self.layout.velocity] /= self.ref.speed
            self.z = latent_feedback_step(self.z, x_model, self.model,
                                          self.fb, self.latent_step, self.dt)
        else:
            # closed form from z0 keeps the open-loop trace exact
            self.z = analytic_rollout(self.z0, self.k + 1, self.latent_step)
        self.k += 1

    def latent_rows(self):
        return self.z.phi, self.z.r


class _DmpGenerator:
    """Baseline: open-loop rhythmic DMP with speed/amplitude modifiers.

    The DMP integrates at its own fitted step size and the target is
    linearly extrapolated to the (possibly faster) control instants.
    """

    def __init__(self, dmp, scenario, ref, layout, dt):
        self.dmp = dmp
        self.speed = ref.speed
        self.amp = ref.shape
        self.layout = layout
        self.dt = dt
        self.substeps = max(int(round(dmp.dt / dt)), 1)
        self.counter = 0
        # scaled initial condition so the amplitude modifier scales the
        # whole linear response exactly
        self.y = dmp.goal + self.amp * (dmp.y0 - dmp.goal)
        self.v = self.amp * dmp.v0.copy()
        self.theta = 0.0

    def target(self):
        tau = (self.counter % self.substeps) * self.dt
        return self.y + tau * self.v

    def advance(self, x_obs):
        self.counter += 1
        if self.counter % self.substeps == 0:
            self.y, self.v, self.theta = self.dmp.step(
                self.y, self.v, self.theta, self.dmp.dt,
                speed_factor=self.speed, amplitude_factor=self.amp)

    def latent_rows(self):
        return np.array([self.theta]), np.zeros(0)


def _episode(gen, scenario: ScenarioConfig, ref, layout: ObservableLayout,
             seed, robot, metadata) -> EpisodeLog:
    """Shared plant loop: PD tracking of delivered targets under a scenario.

    During an anomaly the robot freezes (no control, no motion) and the
    delivered target holds its last value, while the generator keeps
    observing the robot.  Force noise draws one isotropic Gaussian push per
    control step from the episode seed, so seed-matched episodes of
    different generators see identical noise.
    """
    dt = scenario.control_dt
    rng = np.random.default_rng(seed)
    steps = int(round(scenario.duration_s / dt))
    ref0 = ref.at(0.0)
    if robot is None:
        robot = PointRobotState(ref0[layout.position].copy(),
                                ref0[layout.velocity].copy())
    n = layout.n_channels
    phi0, r0 = gen.latent_rows()
    log = EpisodeLog(
        times=np.arange(steps) * dt,
        desired=np.zeros((steps, n)), actual=np.zeros((steps, n)),
        latent_phi=np.zeros((steps, phi0.size)),
        latent_r=np.zeros((steps, r0.size)),
        reference=np.zeros((steps, n)), flags=np.zeros(steps, dtype=int),
        diverged=False, metadata=metadata)

    delivered = None
    for k in range(steps):
        t = k * dt
        anomaly = (scenario.kind == "anomaly"
                   and scenario.anomaly_start_s <= t
                   < scenario.anomaly_start_s + scenario.anomaly_duration_s)

        target = gen.target()
        if anomaly and delivered is not None:
            target = delivered
        delivered = target

        if anomaly:
            robot = PointRobotState(robot.position, np.zeros_like(robot.velocity),
                                    robot.mass, robot.kp, robot.kd)
        else:
            force = rng.normal(0.0, scenario.noise_std, size=robot.position.shape) \
                if scenario.kind == "force_noise" else np.zeros_like(robot.position)
            robot = step_robot(robot, target[layout.position],
                               target[layout.velocity], force, dt)

        x_obs = robot.observable()
        gen.advance(x_obs)

        log.desired[k] = delivered
        log.actual[k] = x_obs
        log.latent_phi[k], log.latent_r[k] = gen.latent_rows()
        log.reference[k] = ref.at(t)
        log.flags[k] = 1 if anomaly else 0
        if np.any(np.abs(robot.position) > scenario.diverge_limit):
            log.diverged = True
            log.flags[k] |= 2
            log.times = log.times[:k + 1]
            for name in ("desired", "actual", "latent_phi", "latent_r",
                         "reference", "flags"):
                setattr(log, name, getattr(log, name)[:k + 1])
            break
    return log


def _scenario_metadata(scenario, seed, method):
    return {"method": method, "scenario": scenario.kind, "seed": int(seed),
            "feedback_on": scenario.feedback_on,
            "feedback_gain": scenario.feedback_gain,
            "speed_factor": scenario.speed_factor,
            "shape_factor": scenario.shape_factor,
            "control_dt": scenario.control_dt,
            "anomaly_window_s": [scenario.anomaly_start_s,
                                 scenario.anomaly_start_s
                                 + scenario.anomaly_duration_s]}


def _reference(scenario, demo, period_s):
    speed = scenario.speed_factor if scenario.kind == "slow_motion" else 1.0
    shape = scenario.shape_factor if scenario.kind == "reshape" else 1.0
    return _DemoReference(demo, period_s, speed=speed, shape=shape)


def run_scenario(model, latent: LatentParams, fb_cfg: FeedbackConfig,
                 scenario: ScenarioConfig, demo: Trajectory,
                 layout: ObservableLayout, seed=0,
                 robot: PointRobotState = None) -> EpisodeLog:
    """Closed-loop episode of the learned generator on the point robot.

    Slow motion scales the phase rates at generation time; reshaping scales
    the decoded output about the demonstration temporal mean (the robot
    state is mapped back to the model frame before encoding).  With the
    feedback off the latent trace equals the open-loop rollout bit for bit.
    The log carries the transformed demonstration so tracking error can be
    recomputed downstream.
    """
    dt = scenario.control_dt
    period_s = 2.0 * np.pi / float(np.min(latent.omega))
    ref = _reference(scenario, demo, period_s)
    gen = _LatentGenerator(model, latent, fb_cfg, scenario, demo, ref,
                           layout, dt)
    return _episode(gen, scenario, ref, layout, seed, robot,
                    _scenario_metadata(scenario, seed, "proposed"))


def run_scenario_dmp(dmp, scenario: ScenarioConfig, demo: Trajectory,
                     layout: ObservableLayout, seed=0, period_s=None,
                     robot: PointRobotState = None) -> EpisodeLog:
    """Same episode mechanics with the DMP baseline generating the targets."""
    if period_s is None:
        period_s = 2.0 * np.pi / dmp.omega
    ref = _reference(scenario, demo, period_s)
    gen = _DmpGenerator(dmp, scenario, ref, layout, scenario.control_dt)
    return _episode(gen, scenario, ref, layout, seed, robot,
                    _scenario_metadata(scenario, seed, "dmp"))
