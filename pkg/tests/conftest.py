import numpy as np
import pytest

from cmwnet import backend
from cmwnet.core import AblationSpec, NetworkConfig
from cmwnet.params import init_parameters


def toy_config(seed=0, dtype="f64", resolution=32):
    return NetworkConfig(input_resolution=resolution, block_channels=(4, 8, 8, 8, 8),
                         decoder_channels=(8, 8, 4), seed=seed, dtype=dtype)


@pytest.fixture
def toy_cfg():
    return toy_config()


@pytest.fixture
def toy_store(toy_cfg):
    return init_parameters(toy_cfg, AblationSpec())


@pytest.fixture(params=["numba", "numpy"])
def each_backend(request):
    if request.param == "numba" and not backend.have_numba():
        pytest.skip("numba unavailable")
    prev = backend.set_backend(request.param)
    yield request.param
    backend.set_backend(prev)


def conditioned_store(config, ablation=None, seed=77):
    """Parameter point with healthy activations for gradient checks: He
    weights and small random biases everywhere (plain init collapses deep
    activations at toy widths, leaving unresolvable ~1e-11 gradients)."""
    store = init_parameters(config, ablation or AblationSpec())
    rng = np.random.default_rng(seed)
    for key, spec in store.layout.items():
        w = store[key + ".weight"]
        fan_in = (w.shape[1] if spec.kind == "conv" else w.shape[0]) * w.shape[2] * w.shape[3]
        store._arrays[key + ".weight"] = rng.normal(
            0.0, np.sqrt(2.0 / fan_in), w.shape).astype(w.dtype)
        b = store[key + ".bias"]
        store._arrays[key + ".bias"] = rng.uniform(-0.1, 0.1, b.shape).astype(b.dtype)
    return store
