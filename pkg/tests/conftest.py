import numpy as np
import pytest
import torch

from collabsod.config import RunConfig
from collabsod.synthetic import generate_dataset


@pytest.fixture(autouse=True)
def _torch_defaults():
    torch.manual_seed(0)
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def data_root(tmp_path_factory):
    """8 training scenes with depth, 3 test scenes without depth (64x64)."""
    root = tmp_path_factory.mktemp("synthetic")
    generate_dataset(root, 8, "train", side=64, seed=0)
    generate_dataset(root, 3, "test", side=64, seed=1, with_depth=False)
    return root


def tiny_config(tmp_path, data_root, **kw):
    base = dict(scale="tiny", input_side=64, lr=1e-2, epochs=2, batch_size=2,
                augment=False, seed=0, train_data=str(data_root), out_dir=str(tmp_path))
    base.update(kw)
    return RunConfig(**base)


@pytest.fixture(scope="session")
def trained(tmp_path_factory, data_root):
    """A short tiny-model run shared by the evaluation/inference tests."""
    from collabsod.engine import train

    out = tmp_path_factory.mktemp("run")
    cfg = tiny_config(out, data_root)
    ckpt = train(cfg)
    return cfg, ckpt, out / "checkpoint.safetensors"


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[number])
