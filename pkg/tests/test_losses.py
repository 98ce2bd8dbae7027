"""Closed-form values, gradient checks, and the anchor gradient contract."""

import math

import pytest
import torch

from ugda.errors import ContractViolationError, InvalidArgumentError
from ugda.losses import (
    BatchRole,
    LossWeights,
    ROLE_SOURCE,
    ROLE_TARGET_PS,
    ROLE_TARGET_UNLABELLED,
    adversarial_loss,
    anchored_heatmap_input,
    check_target_roles,
    discriminator_loss,
    extreme_point_loss,
    frozen_parameters,
    segmentation_loss,
    supervised_loss,
    total_loss,
)
from ugda.networks import (
    DiscriminatorConfig,
    HeatmapNet,
    PatchDiscriminator,
    SegNet,
    heatmap_net_config,
    seg_net_config,
)

LN2 = math.log(2.0)


def tiny_nets(seed=0):
    torch.manual_seed(seed)
    cfg = dict(stage_channels=(4, 8), blocks_per_stage=(1, 1), norm_groups=2)
    h = HeatmapNet(heatmap_net_config(**cfg))
    s = SegNet(seg_net_config(**cfg))
    d = PatchDiscriminator(DiscriminatorConfig(base_channels=4, dilations=(2,)))
    return h, s, d


class TestExtremePointLoss:
    def test_perfect_prediction_zero(self):
        t = torch.rand(2, 6, 4, 4, 4)
        assert extreme_point_loss(t, t).item() == 0.0

    def test_single_spike_is_one_over_v(self):
        target = torch.zeros(1, 1, 4, 5, 5)
        target[0, 0, 1, 2, 3] = 1.0
        pred = torch.zeros_like(target)
        v = target.numel()
        assert extreme_point_loss(pred, target).item() == pytest.approx(1.0 / v, rel=1e-6)

    def test_quadratic_homogeneity(self):
        torch.manual_seed(0)
        target = torch.rand(1, 6, 4, 4, 4)
        pred = target + 0.1
        pred2 = target + 0.2
        l1 = extreme_point_loss(pred, target).item()
        l2 = extreme_point_loss(pred2, target).item()
        assert l2 == pytest.approx(4.0 * l1, rel=1e-5)

    def test_aux_terms_added_with_weights(self):
        t = torch.zeros(1, 1, 2, 2, 2)
        p = torch.ones_like(t)
        base = extreme_point_loss(p, t).item()
        with_aux = extreme_point_loss(p, t, aux=[p, p], stage_weights=(0.5, 0.25)).item()
        assert with_aux == pytest.approx(base * 1.75, rel=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            extreme_point_loss(torch.zeros(1, 6, 4, 4, 4), torch.zeros(1, 6, 4, 4, 2))


class TestSegmentationLoss:
    def test_perfect_prediction_near_zero(self):
        mask = (torch.rand(1, 1, 4, 4, 4) > 0.5).float()
        assert segmentation_loss(mask, mask).item() <= 1e-5

    def test_single_voxel_closed_form(self):
        prob = torch.full((1, 1, 1, 1, 1), 0.5)
        mask = torch.ones_like(prob)
        expected_ce = LN2
        expected_dice = 1.0 - (2 * 0.5 + 1e-5) / (0.5 + 1.0 + 1e-5)
        got = segmentation_loss(prob, mask).item()
        assert got == pytest.approx(expected_ce + expected_dice, abs=1e-6)
        assert got == pytest.approx(1.026480, abs=1e-5)

    def test_empty_empty_dice_is_zero(self):
        z = torch.zeros(1, 1, 3, 3, 3)
        # CE at clipped 0 is ~1e-7; dice term exactly eps/eps = 0
        assert segmentation_loss(z, z).item() < 1e-5

    def test_out_of_range_rejected(self):
        with pytest.raises(InvalidArgumentError):
            segmentation_loss(torch.full((1, 1, 2, 2, 2), 1.5), torch.ones(1, 1, 2, 2, 2))

    def test_monotone_descent_towards_mask(self):
        torch.manual_seed(1)
        mask = (torch.rand(1, 1, 6, 6, 6) > 0.6).float()
        prev = None
        for alpha in torch.linspace(0, 0.95, 12):
            prob = 0.5 + alpha * (mask - 0.5)
            val = segmentation_loss(prob, mask).item()
            if prev is not None:
                assert val < prev
            prev = val


class TestSupervisedLoss:
    def test_unlabelled_only_batch_is_zero(self):
        assert supervised_loss().item() == 0.0

    def test_composition(self):
        torch.manual_seed(2)
        prob = torch.rand(2, 1, 4, 4, 4)
        mask = (torch.rand(2, 1, 4, 4, 4) > 0.5).float()
        pred = torch.rand(3, 6, 4, 4, 4)
        target = torch.rand(3, 6, 4, 4, 4)
        combined = supervised_loss(seg=(prob, mask, ()), ext=(pred, target, ()))
        separate = segmentation_loss(prob, mask) + extreme_point_loss(pred, target)
        assert combined.item() == pytest.approx(separate.item(), rel=1e-7)


class TestDiscriminatorAndAdversarial:
    def test_uniform_logits_closed_form(self):
        z = torch.zeros(2, 1, 3, 3, 3)
        assert discriminator_loss(z, z).item() == pytest.approx(2 * LN2, abs=1e-6)
        assert adversarial_loss(z).item() == pytest.approx(LN2, abs=1e-6)

    def test_perfect_separation_approaches_zero(self):
        src = torch.full((1, 1, 2, 2, 2), 30.0)
        tgt = torch.full((1, 1, 2, 2, 2), -30.0)
        assert discriminator_loss(src, tgt).item() < 1e-8
        assert adversarial_loss(-tgt).item() < 1e-8

    def test_swap_symmetry(self):
        torch.manual_seed(3)
        a, b = torch.randn(1, 1, 2, 2, 2), torch.randn(1, 1, 2, 2, 2)
        assert discriminator_loss(a, b).item() == pytest.approx(
            (adversarial_loss(a) + adversarial_loss(-b)).item(), rel=1e-6
        )

    def test_bce_identity_lower_bound(self):
        torch.manual_seed(4)
        z = torch.randn(2, 1, 3, 3, 3)
        s = adversarial_loss(z) + torch.nn.functional.softplus(z).mean()
        assert s.item() >= 2 * LN2 - 1e-6

    def test_role_guard(self):
        with pytest.raises(ContractViolationError):
            check_target_roles([BatchRole(ROLE_TARGET_PS), BatchRole(ROLE_SOURCE)])
        check_target_roles([BatchRole(ROLE_TARGET_PS), BatchRole(ROLE_TARGET_UNLABELLED)])


class TestTotalLoss:
    def test_arithmetic(self):
        sup = torch.tensor(1.0, dtype=torch.float64)
        adv = torch.tensor(0.5, dtype=torch.float64)
        out = total_loss(sup, adv, LossWeights(lambda_adv=1e-4))
        assert out.item() == pytest.approx(1.00005, abs=1e-12)

    def test_lambda_zero_bitwise_identity(self):
        sup = torch.tensor(0.1234567)
        adv = torch.tensor(123.0)
        out = total_loss(sup, adv, LossWeights(lambda_adv=0.0))
        assert out is sup


class TestGradientFlowContract:
    """The anchor rules: who receives gradient from which loss."""

    def _grads_zero(self, module):
        return all(p.grad is None or not p.grad.any() for p in module.parameters())

    def _forward_target(self, h, s, d, x, ps_present):
        heatmap_pred, _ = h(x)
        anchored = anchored_heatmap_input(heatmap_pred, ps_present)
        prob, _ = s(x, anchored)
        with frozen_parameters(d):
            logits = d(prob, anchored)
            loss = adversarial_loss(logits)
            loss.backward()

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_adversarial_loss_never_reaches_discriminator(self, seed):
        h, s, d = tiny_nets(seed)
        x = torch.rand(2, 1, 16, 16, 16)
        self._forward_target(h, s, d, x, [True, False])
        assert self._grads_zero(d)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_disc_loss_never_reaches_main_networks(self, seed):
        h, s, d = tiny_nets(seed)
        torch.manual_seed(seed + 10)
        x_src = torch.rand(1, 1, 16, 16, 16)
        x_tgt = torch.rand(1, 1, 16, 16, 16)
        outs = []
        for x in (x_src, x_tgt):
            hm, _ = h(x)
            from ugda.networks import summed_channel

            summed = summed_channel(hm)
            prob, _ = s(x, summed)
            outs.append((prob.detach(), summed.detach()))
        loss = discriminator_loss(d(*outs[0]), d(*outs[1]))
        loss.backward()
        assert self._grads_zero(h) and self._grads_zero(s)
        assert not self._grads_zero(d)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_ps_items_anchor_heatmap_net(self, seed):
        h, s, d = tiny_nets(seed)
        torch.manual_seed(seed + 20)
        x = torch.rand(2, 1, 16, 16, 16)
        self._forward_target(h, s, d, x, [True, True])
        assert self._grads_zero(h)
        assert not self._grads_zero(s)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_unlabelled_items_do_reach_heatmap_net(self, seed):
        h, s, d = tiny_nets(seed)
        torch.manual_seed(seed + 30)
        x = torch.rand(2, 1, 16, 16, 16)
        self._forward_target(h, s, d, x, [False, False])
        assert not self._grads_zero(h)
        assert not self._grads_zero(s)


class TestFiniteDifferences:
    """Analytic gradients of every loss match central differences."""

    DELTA = 1e-5
    REL_TOL = 1e-3

    def _check(self, fn, x):
        x = x.double().requires_grad_(True)
        loss = fn(x)
        loss.backward()
        analytic = x.grad.clone()
        flat = x.detach().reshape(-1)
        n_checks = min(6, flat.numel())
        idx = torch.randperm(flat.numel())[:n_checks]
        for i in idx:
            orig = flat[i].item()
            flat[i] = orig + self.DELTA
            hi = fn(x.detach()).item()
            flat[i] = orig - self.DELTA
            lo = fn(x.detach()).item()
            flat[i] = orig
            fd = (hi - lo) / (2 * self.DELTA)
            an = analytic.reshape(-1)[i].item()
            scale = max(abs(fd), abs(an), 1e-8)
            assert abs(fd - an) / scale < self.REL_TOL, (fd, an)

    @pytest.mark.parametrize("seed", range(10))
    def test_all_losses(self, seed):
        torch.manual_seed(seed)
        g = torch.Generator().manual_seed(seed)
        shape = (2, 1, 3, 4, 3)
        mask = (torch.rand(shape, generator=g) > 0.5).double()
        target = torch.rand((2, 6, 3, 4, 3), generator=g).double()
        other_logits = torch.randn(shape, generator=g).double()

        self._check(lambda p: extreme_point_loss(p, target),
                    torch.rand((2, 6, 3, 4, 3), generator=g))
        self._check(lambda p: segmentation_loss(p, mask),
                    0.2 + 0.6 * torch.rand(shape, generator=g))
        self._check(
            lambda p: supervised_loss(
                seg=(p, mask, ()),
                ext=(target * 0.9, target, ()),
            ),
            0.2 + 0.6 * torch.rand(shape, generator=g),
        )
        self._check(lambda z: adversarial_loss(z), torch.randn(shape, generator=g))
        self._check(lambda z: discriminator_loss(z, other_logits),
                    torch.randn(shape, generator=g))
        self._check(lambda z: discriminator_loss(other_logits, z),
                    torch.randn(shape, generator=g))
        self._check(
            lambda p: total_loss(
                segmentation_loss(p, mask), adversarial_loss(other_logits),
                LossWeights(lambda_adv=1e-4),
            ),
            0.2 + 0.6 * torch.rand(shape, generator=g),
        )
