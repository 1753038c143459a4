import pytest
import torch

from collabsod.config import RunConfig
from collabsod.errors import ConfigError, GradCheckError
from collabsod.gradcheck import (
    GradEntry,
    KinkMonitor,
    analytic_gradients,
    central_difference,
    grad_check,
    synthetic_batch,
)
from collabsod.losses import LossWeights
from collabsod.network import build_network

CFG = RunConfig(scale="tiny", input_side=16, precision="float64")


def test_grad_check_small_sample():
    report = grad_check(CFG, n_samples=40, seed=1)
    n_tensors = len(list(build_network(CFG.backbone_config(), CFG.toggles()).parameters()))
    assert len(report.entries) == max(40, n_tensors)
    assert report.max_rel_err < 1e-4
    assert "max relative error" in report.summary()


def test_grad_check_rejects_large_models():
    with pytest.raises(ConfigError):
        grad_check(CFG.replace(input_side=32))
    with pytest.raises(ConfigError):
        grad_check(RunConfig(scale="full", input_side=16))


def test_rel_err_floor():
    assert GradEntry("p", 0, 0.0, 0.0).rel_err == 0
    assert GradEntry("p", 0, 1e-9, 0.0).rel_err == pytest.approx(1e-3)
    assert GradEntry("p", 0, 2.0, 1.0).rel_err == pytest.approx(0.5)


def test_central_difference_refines_across_a_kink():
    relu = torch.nn.ReLU()
    x = torch.tensor([5e-6], dtype=torch.float64)
    net = torch.nn.Sequential(relu)
    monitor = KinkMonitor(net)
    f = lambda: net(x).sum().item()  # noqa: E731
    num, step = central_difference(f, x, 0, 1e-5, monitor)
    monitor.close()
    assert step < 5e-6 and num == pytest.approx(1.0)


def test_analytic_gradients_cover_every_parameter():
    net = build_network(CFG.backbone_config(), CFG.toggles(), dtype=torch.float64)
    grads = analytic_gradients(net, synthetic_batch(16), LossWeights(0, 0, 0, 0))
    assert set(grads) == {n for n, _ in net.named_parameters()}
    assert all(torch.all(g == 0) for g in grads.values())


def test_grad_check_failure_lists_parameter(monkeypatch):
    import collabsod.gradcheck as gc

    monkeypatch.setattr(gc, "central_difference", lambda f, flat, i, step, m: (12345.0, step))
    with pytest.raises(GradCheckError, match=r"disagree.*\["):
        gc.grad_check(CFG, n_samples=5)
