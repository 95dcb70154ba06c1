import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

FS = 333_000.0


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def lms_oracle(u, d, taps, mu, normalized=False, eps=1e-6):
    """Independently written per-sample LMS using numpy vector ops."""
    b = np.zeros(taps)
    line = np.zeros(taps)
    y = np.empty(len(u))
    for k in range(len(u)):
        line = np.roll(line, 1)
        line[0] = u[k]
        y[k] = b @ line
        e = d[k] - y[k]
        step = mu / (eps + line @ line) if normalized else mu
        b = b + 2 * step * e * line
    return b, y
