"""Trajectory containers and observable channel layout."""

from dataclasses import dataclass, field

import numpy as np

from .validation import check_trajectory_matrix


@dataclass
class Trajectory:
    """Uniformly sampled time series, shape (steps, channels)."""

    data: np.ndarray
    dt: float

    def __post_init__(self):
        self.data = check_trajectory_matrix(self.data)
        if not self.dt > 0:
            raise ValueError("dt must be > 0")

    def __len__(self):
        return self.data.shape[0]

    @property
    def n_channels(self):
        return self.data.shape[1]

    @property
    def duration(self):
        return len(self) * self.dt

    @property
    def times(self):
        return np.arange(len(self)) * self.dt


@dataclass
class Dataset:
    """Trajectories sharing channel count and step size."""

    trajectories: list

    def __post_init__(self):
        if not self.trajectories:
            raise ValueError("dataset must contain at least one trajectory")
        n = self.trajectories[0].n_channels
        dt = self.trajectories[0].dt
        for traj in self.trajectories:
            if traj.n_channels != n:
                raise ValueError("all trajectories must share the channel count")
            if abs(traj.dt - dt) > 1e-9:
                raise ValueError("all trajectories must share the step size")

    @property
    def n_channels(self):
        return self.trajectories[0].n_channels

    @property
    def dt(self):
        return self.trajectories[0].dt

    @property
    def total_steps(self):
        return sum(len(t) for t in self.trajectories)

    def window_index(self, horizon):
        """All (trajectory, offset, length) windows of length horizon + 1.

        Trajectories shorter than horizon + 1 contribute one truncated
        window covering the whole trajectory.
        """
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        index = []
        for ti, traj in enumerate(self.trajectories):
            length = len(traj)
            if length >= horizon + 1:
                index.extend((ti, off, horizon + 1)
                             for off in range(length - horizon))
            else:
                index.append((ti, 0, length))
        return index

    def window(self, entry):
        ti, off, length = entry
        return self.trajectories[ti].data[off:off + length]


@dataclass(frozen=True)
class ObservableLayout:
    """Roles of observable channels: positions first, then velocities."""

    num_position: int
    num_velocity: int = 0

    def __post_init__(self):
        if self.num_position < 1 or self.num_velocity < 0:
            raise ValueError("layout needs >= 1 position channel")
        if self.num_velocity and self.num_velocity != self.num_position:
            raise ValueError("velocity channels must match position channels")

    @property
    def n_channels(self):
        return self.num_position + self.num_velocity

    @property
    def position(self):
        return slice(0, self.num_position)

    @property
    def velocity(self):
        return slice(self.num_position, self.num_position + self.num_velocity)
