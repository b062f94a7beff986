import numpy as np
import pytest

from smgid.simulate import Trajectory


def synthetic_trajectory(n: int, dt: float = 0.5e-3, seed: int = 0,
                         t0: float = 0.0) -> Trajectory:
    """Cheap structured trajectory for dataset/plumbing tests."""
    rng = np.random.default_rng(seed)
    t = np.arange(n) * dt
    states = np.empty((n, 9))
    states[:, 0] = 6000.0 + 80.0 * np.sin(2 * np.pi * 3.0 * t)
    for j in range(1, 7):
        states[:, j] = (100.0 * j + 30.0 * np.cos(2 * np.pi * (j + 1) * t)
                        + rng.normal(scale=0.5, size=n))
    states[:, 7] = 40.0 + 5.0 * np.sin(2 * np.pi * 0.8 * t)
    states[:, 8] = 45.0 + 4.0 * np.cos(2 * np.pi * 0.6 * t)
    inputs = np.zeros((n, 2))
    inputs[:, 0] = 5e6 * np.sign(np.sin(2 * np.pi * 1.2 * t + 0.3))
    inputs[:, 1] = 10e6
    return Trajectory(dt=dt, t0=t0, states=states, inputs=inputs)


@pytest.fixture
def traj_200():
    return synthetic_trajectory(200)
