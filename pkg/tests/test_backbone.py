import numpy as np
import pytest
import torch

import oracles
from collabsod.backbone import (
    FULL_WIDTHS,
    Backbone,
    BackboneConfig,
    LowLevelFusion,
    SideOutFeatures,
    Transitions,
    normalize_image,
)
from collabsod.errors import ConfigError, ShapeError
from collabsod.layers import upsample
from collabsod.network import build_network, count_parameters


def tiny(side=64, **kw):
    return BackboneConfig("tiny", side, **kw)


@pytest.mark.parametrize("side", [16, 32, 64, 96])
def test_tiny_side_outputs_follow_ratios(side):
    net = Backbone(tiny(side)).eval()
    s = net(torch.rand(1, 3, side, side))
    divisors = (2, 4, 8, 16, 16)
    for f, d, w in zip(s, divisors, (8, 16, 32, 64, 64)):
        assert f.shape == (1, w, side // d, side // d)


def test_tiny_64_example_shapes():
    s = Backbone(tiny(64, channel_widths=(8, 16, 32, 64, 64))).eval()(torch.rand(1, 3, 64, 64))
    assert s.f1.shape[1:] == (8, 32, 32)
    assert s.f5.shape[1:] == (64, 4, 4)


def test_zero_input_gives_finite_output():
    torch.manual_seed(0)
    s = Backbone(tiny(64)).eval()(torch.zeros(1, 3, 64, 64))
    assert all(torch.isfinite(f).all() for f in s)


def test_wrong_input_side_rejected():
    net = Backbone(tiny(64))
    with pytest.raises(ShapeError):
        net(torch.rand(1, 3, 32, 32))
    with pytest.raises(ShapeError):
        net(torch.rand(1, 1, 64, 64))


def test_missing_pretrained_weights_is_config_error(tmp_path):
    cfg = tiny(64, pretrained_weights_path=str(tmp_path / "nope.pt"))
    with pytest.raises(ConfigError):
        Backbone(cfg).load_pretrained()


def test_pretrained_weights_load(tmp_path):
    src = Backbone(tiny(32))
    path = tmp_path / "w.pt"
    torch.save(src.net.state_dict(), path)
    dst = Backbone(tiny(32, pretrained_weights_path=str(path)))
    dst.load_pretrained()
    for a, b in zip(src.net.state_dict().values(), dst.net.state_dict().values()):
        assert torch.equal(a, b)


@pytest.mark.parametrize("kw", [
    dict(scale="huge"),
    dict(scale="full", channel_widths=(8, 16, 32, 64, 64)),
    dict(input_side=60),
    dict(channel_widths=(8, 16, 32, 64)),
])
def test_backbone_config_validation(kw):
    with pytest.raises(ConfigError):
        BackboneConfig(**kw)


def test_transitions_full_width_rows():
    """trans1 and trans4 rows at full scale, using synthetic side outputs."""
    tr = Transitions(FULL_WIDTHS).eval()
    s = SideOutFeatures(
        torch.rand(1, 64, 128, 128), torch.rand(1, 256, 64, 64), torch.rand(1, 512, 32, 32),
        torch.rand(1, 1024, 16, 16), torch.rand(1, 2048, 16, 16),
    )
    with torch.no_grad():
        t = tr(s)
    assert t.t1.shape == (1, 64, 256, 256)
    assert t.t2.shape == (1, 256, 256, 256)
    for x in (t.t3, t.t4, t.t5):
        assert x.shape == (1, 64, 64, 64)


def test_transitions_reject_channel_mismatch():
    tr = Transitions((8, 16, 32, 64, 64))
    s = SideOutFeatures(*(torch.rand(1, c, n, n) for c, n in
                          zip((8, 16, 32, 60, 64), (32, 16, 8, 4, 4))))
    with pytest.raises(ShapeError):
        tr(s)


def test_t1_t2_are_pure_bilinear_upsampling():
    tr = Transitions((8, 16, 32, 64, 64))
    f1 = torch.rand(1, 8, 4, 4, dtype=torch.float64)
    f2 = torch.rand(1, 16, 2, 2, dtype=torch.float64)
    s = SideOutFeatures(f1, f2, torch.rand(1, 32, 4, 4), torch.rand(1, 64, 2, 2), torch.rand(1, 64, 2, 2))
    t = tr.eval()(s)
    np.testing.assert_allclose(t.t1[0].detach().numpy(), oracles.bilinear_resize(f1[0].numpy(), 8, 8), atol=1e-12)
    np.testing.assert_allclose(t.t2[0].detach().numpy(), oracles.bilinear_resize(f2[0].numpy(), 8, 8), atol=1e-12)


def test_constant_f3_gives_constant_interior():
    tr = Transitions((8, 16, 4, 64, 64)).double().eval()
    f3 = torch.full((1, 4, 6, 6), 0.7, dtype=torch.float64)
    up = upsample(f3, 2)
    out = tr.trans3(up)[0].detach().numpy()
    interior = out[:, 1:-1, 1:-1]
    assert np.allclose(interior, interior[:, :1, :1])
    # and that interior equals the loop oracle
    ref = oracles.conv_bn_prelu(up[0].numpy(), tr.trans3)
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_low_level_fusion_shapes_and_zero():
    fuse = LowLevelFusion(64, 256).eval()
    for m in fuse.modules():
        if isinstance(m, torch.nn.Conv2d):
            torch.nn.init.zeros_(m.bias)
        if isinstance(m, torch.nn.BatchNorm2d):
            m.bias.data.zero_()
    with torch.no_grad():
        out = fuse(torch.zeros(1, 64, 64, 64), torch.zeros(1, 256, 64, 64))
    assert out.shape == (1, 64, 64, 64)
    assert torch.all(out == 0)


def test_low_level_fusion_tiny_and_mismatch():
    fuse = LowLevelFusion(8, 16).eval()
    assert fuse(torch.rand(1, 8, 64, 64), torch.rand(1, 16, 64, 64)).shape == (1, 64, 64, 64)
    with pytest.raises(ShapeError):
        fuse(torch.rand(1, 8, 64, 64), torch.rand(1, 16, 32, 32))


def test_eval_forward_is_bitwise_deterministic():
    net = build_network(BackboneConfig("tiny", 32)).eval()
    x = torch.rand(2, 3, 32, 32)
    with torch.no_grad():
        a, b = net(x).s_final, net(x).s_final
    assert torch.equal(a, b)


def test_tiny_model_is_under_a_million_parameters():
    assert count_parameters(build_network(BackboneConfig("tiny", 64))) < 1_000_000


def test_normalize_image_ranges():
    rgb = np.zeros((4, 4, 3), np.uint8)
    rgb[0, 0] = 255
    x = normalize_image(rgb)
    assert x.shape == (1, 3, 4, 4) and float(x.max()) == 1.0 and float(x.min()) == 0.0
    z = normalize_image(np.zeros((4, 4, 3), np.uint8), pretrained=True)
    np.testing.assert_allclose(z[0, :, 0, 0].numpy(), [-0.485 / 0.229, -0.456 / 0.224, -0.406 / 0.225], rtol=1e-6)
