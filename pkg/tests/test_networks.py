"""Shape, determinism, and budget contracts for the three networks."""

import pytest
import torch

from ugda.errors import InvalidArgumentError
from ugda.networks import (
    DiscriminatorConfig,
    HeatmapNet,
    PatchDiscriminator,
    SegNet,
    StageNetConfig,
    count_parameters,
    heatmap_net_config,
    seg_net_config,
    summed_channel,
)


@pytest.fixture(scope="module")
def nets():
    torch.manual_seed(0)
    return HeatmapNet(), SegNet(), PatchDiscriminator()


class TestHeatmapNet:
    def test_output_shape(self, nets):
        h, _, _ = nets
        x = torch.rand(2, 1, 16, 16, 16)
        out, aux = h(x)
        assert out.shape == (2, 6, 16, 16, 16)
        assert len(aux) == h.config.n_stages - 1
        for a in aux:
            assert a.shape == out.shape

    def test_batch_independence(self, nets):
        h, _, _ = nets
        x = torch.rand(1, 1, 16, 16, 16)
        batch = torch.cat([x, x], dim=0)
        out, _ = h(batch)
        torch.testing.assert_close(out[0], out[1])

    def test_fully_convolutional_scaling(self, nets):
        h, _, _ = nets
        out16, _ = h(torch.rand(1, 1, 16, 16, 16))
        out32, _ = h(torch.rand(1, 1, 32, 32, 16))
        assert out16.shape[2:] == (16, 16, 16)
        assert out32.shape[2:] == (32, 32, 16)

    def test_rejects_bad_channels(self, nets):
        h, _, _ = nets
        with pytest.raises(InvalidArgumentError):
            h(torch.rand(1, 2, 16, 16, 16))

    def test_rejects_indivisible_dims(self, nets):
        h, _, _ = nets
        with pytest.raises(InvalidArgumentError):
            h(torch.rand(1, 1, 15, 16, 16))

    def test_eval_mode_deterministic(self, nets):
        h, _, _ = nets
        torch.manual_seed(3)
        x = torch.rand(1, 1, 16, 16, 16)
        a, _ = h(x)
        b, _ = h(x)
        torch.testing.assert_close(a, b)

    def test_summed_channel_clamps(self):
        stack = torch.full((1, 6, 4, 4, 4), 0.5)
        s = summed_channel(stack)
        assert s.shape == (1, 1, 4, 4, 4)
        assert s.max() == 1.0


class TestSegNet:
    def test_sigmoid_range_and_shape(self, nets):
        _, s, _ = nets
        x = torch.rand(2, 1, 16, 16, 16)
        hm = torch.rand(2, 1, 16, 16, 16)
        prob, aux = s(x, hm)
        assert prob.shape == (2, 1, 16, 16, 16)
        assert prob.min() >= 0.0 and prob.max() <= 1.0
        for a in aux:
            assert a.min() >= 0.0 and a.max() <= 1.0

    def test_misaligned_heatmap_rejected(self, nets):
        _, s, _ = nets
        with pytest.raises(InvalidArgumentError):
            s(torch.rand(1, 1, 16, 16, 16), torch.rand(1, 1, 8, 8, 8))

    def test_heatmap_input_changes_output(self, nets):
        _, s, _ = nets
        x = torch.rand(1, 1, 16, 16, 16)
        p0, _ = s(x, torch.zeros(1, 1, 16, 16, 16))
        p1, _ = s(x, torch.ones(1, 1, 16, 16, 16))
        assert not torch.allclose(p0, p1)


class TestDiscriminator:
    def test_patch_logit_shape(self, nets):
        _, _, d = nets
        y = torch.rand(2, 1, 16, 16, 16)
        e = torch.rand(2, 1, 16, 16, 16)
        logits = d(y, e)
        factor = d.config.downsample_factor
        assert logits.shape == (2, 1, 16 // factor, 16 // factor, 16 // factor)

    def test_batch_permutation(self, nets):
        _, _, d = nets
        y = torch.rand(2, 1, 16, 16, 16)
        e = torch.rand(2, 1, 16, 16, 16)
        out = d(y, e)
        flipped = d(y.flip(0), e.flip(0))
        torch.testing.assert_close(out.flip(0), flipped)

    def test_mask_only_config(self):
        torch.manual_seed(1)
        d = PatchDiscriminator(DiscriminatorConfig(in_channels=1))
        out = d(torch.rand(1, 1, 16, 16, 16))
        assert out.shape == (1, 1, 4, 4, 4)

    def test_wrong_channel_count_rejected(self, nets):
        _, _, d = nets
        with pytest.raises(InvalidArgumentError):
            d(torch.rand(1, 1, 16, 16, 16))  # pair expected, one channel given

    def test_misaligned_inputs_rejected(self, nets):
        _, _, d = nets
        with pytest.raises(InvalidArgumentError):
            d(torch.rand(1, 1, 16, 16, 16), torch.rand(1, 1, 8, 8, 8))


class TestBudgetAndConfig:
    def test_default_parameter_budget_under_5m(self, nets):
        assert count_parameters(*nets) < 5_000_000

    def test_stage_count_minimum(self):
        with pytest.raises(InvalidArgumentError):
            StageNetConfig(in_channels=1, out_channels=6, stage_channels=(8,),
                           blocks_per_stage=(1,))

    def test_config_defaults(self):
        assert heatmap_net_config().in_channels == 1
        assert heatmap_net_config().out_channels == 6
        assert seg_net_config().in_channels == 2
        assert seg_net_config().out_channels == 1

    def test_deep_supervision_off(self):
        torch.manual_seed(0)
        cfg = heatmap_net_config(deep_supervision=False)
        net = HeatmapNet(cfg)
        _, aux = net(torch.rand(1, 1, 16, 16, 16))
        assert aux == []
