import numpy as np
import pytest

from vvdlab import channel
from vvdlab.channel import ArModel, ChannelConfig


@pytest.fixture(scope="session")
def ar_trace_25db():
    """Shared 40-packet AR(1) trace at 25 dB (phi=0.9, sigma_w^2=2e-3)."""
    cfg = ChannelConfig(snr_db=25.0, phase_drift_std_rad=0.0, rng_seed=1234)
    model = ArModel(order=1, phi=[0.9], process_noise_var=2e-3)
    return channel.generate_trace(cfg, model, 40)


@pytest.fixture(scope="session")
def noiseless_trace():
    """Shared 6-packet noiseless frozen-channel trace."""
    cfg = ChannelConfig(snr_db=float("inf"), phase_drift_std_rad=0.0, rng_seed=77)
    model = ArModel(order=1, phi=[1.0], process_noise_var=0.0)
    return channel.generate_trace(cfg, model, 6)


@pytest.fixture()
def rng():
    return np.random.default_rng(2024)
