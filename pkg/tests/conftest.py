import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

from nvc.core import CodecConfig, Frame
from nvc.model import build_model

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def cfg():
    return CodecConfig()


@pytest.fixture(scope="session")
def model(cfg):
    """One shared untrained (but seeded) model; tests must not mutate it."""

    return build_model(cfg, seed=3)


def random_frame(rng: np.random.Generator, width: int, height: int,
                 bit_depth: int = 8) -> Frame:
    maxv = (1 << bit_depth) - 1
    cw, ch = (width + 1) // 2, (height + 1) // 2
    return Frame(
        rng.integers(0, maxv + 1, (height, width), dtype=np.uint16),
        rng.integers(0, maxv + 1, (ch, cw), dtype=np.uint16),
        rng.integers(0, maxv + 1, (ch, cw), dtype=np.uint16),
        bit_depth,
    )


@pytest.fixture
def frame_factory():
    return random_frame


@pytest.fixture(autouse=True)
def _single_thread():
    # Keep BLAS fan-out from adding nondeterministic scheduling noise to
    # timing-sensitive tests; functional results do not depend on this.
    torch.set_num_threads(1)
    yield
