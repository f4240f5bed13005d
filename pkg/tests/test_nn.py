"""Tests for the dense/attention primitives, parameter sets, AdamW and gradient checks."""

from __future__ import annotations

import itertools

import pytest
import torch
from torch import nn

from ocean_fm.errors import (
    ConfigurationError,
    DeterminismError,
    DimensionError,
    TrainingDivergenceError,
)
from ocean_fm.nn.core import (
    Dense,
    MultiHeadAttention,
    ParamSet,
    TransformerBlock,
    dense_forward,
    transformer_block_forward,
)
from ocean_fm.nn.gradcheck import finite_diff_check
from ocean_fm.nn.optim import OptimizerState, adamw_step

# ── Dense ──────────────────────────────────────────────────────────


class TestDenseForward:
    def test_matches_definition(self):
        x = torch.tensor([[1.0, 2.0]])
        w = torch.tensor([[1.0, 0.0, 2.0], [0.0, 1.0, -1.0]])
        b = torch.tensor([0.5, 0.0, 1.0])
        out = dense_forward(x, w, b)
        assert torch.allclose(out, torch.tensor([[1.5, 2.0, 1.0]]))

    def test_batched_leading_dims(self):
        out = dense_forward(torch.ones(2, 5, 3), torch.ones(3, 4), torch.zeros(4))
        assert out.shape == (2, 5, 4)
        assert torch.all(out == 3.0)

    def test_input_width_mismatch(self):
        with pytest.raises(DimensionError) as exc:
            dense_forward(torch.ones(2, 3), torch.ones(4, 2), torch.zeros(2))
        assert exc.value.code == "DIMENSION"

    def test_bias_mismatch(self):
        with pytest.raises(DimensionError):
            dense_forward(torch.ones(2, 3), torch.ones(3, 2), torch.zeros(3))

    def test_weight_is_input_major(self):
        layer = Dense(5, 7)
        assert tuple(layer.weight.shape) == (5, 7)


# ── Attention and blocks ───────────────────────────────────────────


class TestAttention:
    def test_probabilities_sum_to_one(self):
        torch.manual_seed(0)
        attn = MultiHeadAttention(8, 2)
        out, probs = attn(torch.randn(1, 5, 8), return_attention=True)
        assert out.shape == (1, 5, 8)
        assert probs.shape == (1, 2, 5, 5)
        assert torch.allclose(probs.sum(-1), torch.ones(1, 2, 5), atol=1e-6)

    def test_heads_must_divide_width(self):
        with pytest.raises(ConfigurationError):
            MultiHeadAttention(10, 3)


class TestTransformerBlock:
    def test_unbatched_tokens(self):
        torch.manual_seed(0)
        block = TransformerBlock(8, 2)
        out, probs = transformer_block_forward(
            torch.randn(6, 8), block, return_attention=True
        )
        assert out.shape == (6, 8)
        assert probs.shape == (2, 6, 6)

    def test_batched_matches_unbatched(self):
        torch.manual_seed(0)
        block = TransformerBlock(8, 2)
        tokens = torch.randn(2, 4, 8)
        batched = transformer_block_forward(tokens, block)
        single = transformer_block_forward(tokens[1], block)
        assert torch.allclose(batched[1], single, atol=1e-6)

    def test_width_mismatch(self):
        block = TransformerBlock(8, 2)
        with pytest.raises(DimensionError):
            transformer_block_forward(torch.randn(4, 6), block)

    def test_permutation_equivariant(self):
        torch.manual_seed(0)
        block = TransformerBlock(8, 2)
        tokens = torch.randn(7, 8)
        perm = torch.randperm(7)
        with torch.no_grad():
            permuted_first = transformer_block_forward(tokens[perm], block)
            permuted_after = transformer_block_forward(tokens, block)[perm]
        assert torch.allclose(permuted_first, permuted_after, atol=1e-5)

    def test_zero_output_projections_are_identity(self):
        torch.manual_seed(0)
        block = TransformerBlock(8, 2)
        with torch.no_grad():
            for layer in (block.attn.proj, block.mlp.fc2):
                layer.weight.zero_()
                layer.bias.zero_()
            tokens = torch.randn(2, 5, 8)
            assert torch.equal(transformer_block_forward(tokens, block), tokens)

    def test_layer_norm_standardizes_rows(self):
        torch.manual_seed(0)
        block = TransformerBlock(64, 4)
        tokens = 5.0 * torch.randn(10, 64) + 3.0
        with torch.no_grad():
            normed = block.norm1(tokens)
        assert normed.mean(dim=-1).abs().max() < 1e-5
        variance = normed.var(dim=-1, unbiased=False)
        assert (variance - 1.0).abs().max() < 1e-4


# ── ParamSet ───────────────────────────────────────────────────────


class TestParamSet:
    def test_from_module_names_and_shapes(self):
        params = ParamSet.from_module(Dense(3, 2))
        assert params.names() == ["weight", "bias"]
        assert params.shapes() == {"weight": (3, 2), "bias": (2,)}
        assert params.num_elements() == 8

    def test_gradient_defaults_to_zero(self):
        params = ParamSet.from_module(Dense(3, 2))
        assert torch.all(params.gradient("weight") == 0)

    def test_slice_by_prefix(self):
        block = TransformerBlock(8, 2)
        attn = ParamSet.from_module(block).slice("attn.")
        assert attn.names() and all(n.startswith("attn.") for n in attn.names())

    def test_from_tensors_rejects_plain_tensors(self):
        with pytest.raises(DimensionError):
            ParamSet.from_tensors({"x": torch.zeros(2)})

    def test_snapshot_is_detached(self):
        params = ParamSet.from_module(Dense(2, 2))
        snap = params.snapshot()
        with torch.no_grad():
            params["bias"].add_(1.0)
        assert torch.all(snap["bias"] == 0)


# ── Optimizer ──────────────────────────────────────────────────────


def _quadratic_params() -> tuple[ParamSet, nn.Parameter]:
    p = nn.Parameter(torch.tensor([3.0, -2.0], dtype=torch.float64))
    return ParamSet.from_tensors({"p": p}), p


class TestSchedule:
    def test_warmup_then_cosine(self):
        params, _ = _quadratic_params()
        opt = OptimizerState.create(params, peak_lr=1.0, total_steps=100, warmup_fraction=0.1)
        assert opt.warmup_steps == 10
        assert opt.lr_at(0) == pytest.approx(0.1)
        assert opt.lr_at(9) == pytest.approx(1.0)
        assert opt.lr_at(10) == pytest.approx(1.0)
        assert opt.lr_at(55) == pytest.approx(0.5)
        assert opt.lr_at(100) == pytest.approx(0.0, abs=1e-12)

    def test_rejects_bad_schedule(self):
        params, _ = _quadratic_params()
        with pytest.raises(ConfigurationError):
            OptimizerState.create(params, peak_lr=-1.0, total_steps=10)


class TestAdamW:
    def test_descends_a_quadratic(self):
        params, p = _quadratic_params()
        opt = OptimizerState.create(
            params, peak_lr=0.1, total_steps=200, warmup_fraction=0.0, weight_decay=0.0
        )
        for _ in range(200):
            params.zero_grad()
            (p**2).sum().backward()
            adamw_step(params, opt, opt.current_lr())
        assert opt.step == 200
        assert float((p**2).sum()) < 1e-2

    def test_moments_exist_after_a_step(self):
        params, p = _quadratic_params()
        opt = OptimizerState.create(params, peak_lr=0.1, total_steps=10)
        assert opt.moments("p") is None
        (p**2).sum().backward()
        adamw_step(params, opt, 0.1)
        m, v = opt.moments("p")
        assert m.shape == p.shape and v.shape == p.shape

    def test_zero_learning_rate_is_a_no_op(self):
        params, p = _quadratic_params()
        opt = OptimizerState.create(params, peak_lr=0.1, total_steps=10, weight_decay=0.05)
        before = p.detach().clone()
        for _ in range(3):
            params.zero_grad()
            (p**2).sum().backward()
            adamw_step(params, opt, 0.0)
        assert torch.equal(p.detach(), before)
        assert opt.step == 3

    def test_decay_only_closed_form(self):
        params, p = _quadratic_params()
        opt = OptimizerState.create(params, peak_lr=1.0, total_steps=10, weight_decay=0.01)
        before = p.detach().clone()
        for _ in range(10):
            p.grad = torch.zeros_like(p)
            adamw_step(params, opt, 1.0)
        expected = before * 0.99**10
        assert torch.allclose(p.detach(), expected, rtol=1e-12, atol=0.0)

    def test_non_finite_gradient_aborts(self):
        params, p = _quadratic_params()
        opt = OptimizerState.create(params, peak_lr=0.1, total_steps=10)
        p.grad = torch.tensor([float("nan"), 0.0], dtype=torch.float64)
        before = p.detach().clone()
        with pytest.raises(TrainingDivergenceError):
            adamw_step(params, opt, 0.1)
        assert torch.equal(p.detach(), before)
        assert opt.step == 0


# ── Finite-difference check ────────────────────────────────────────


class TestFiniteDiffCheck:
    def test_exact_on_smooth_loss(self):
        torch.manual_seed(0)
        layer = Dense(4, 3).double()
        x = torch.randn(5, 4, dtype=torch.float64)

        def loss_fn() -> torch.Tensor:
            return torch.tanh(layer(x)).pow(2).mean()

        worst = finite_diff_check(loss_fn, ParamSet.from_module(layer), 1e-5)
        assert worst < 1e-3

    def test_detects_a_wrong_gradient(self):
        p = nn.Parameter(torch.tensor([1.0, 2.0], dtype=torch.float64))

        class HalfGrad(torch.autograd.Function):
            @staticmethod
            def forward(ctx, x):
                ctx.save_for_backward(x)
                return (x**2).sum()

            @staticmethod
            def backward(ctx, grad):
                (x,) = ctx.saved_tensors
                return grad * x  # true gradient is 2x

        worst = finite_diff_check(lambda: HalfGrad.apply(p), ParamSet.from_tensors({"p": p}))
        assert worst > 0.4

    def test_eps_range(self):
        params, p = _quadratic_params()
        with pytest.raises(ConfigurationError):
            finite_diff_check(lambda: (p**2).sum(), params, 1e-7)

    def test_non_deterministic_loss(self):
        params, p = _quadratic_params()
        counter = itertools.count()

        def loss_fn() -> torch.Tensor:
            return (p**2).sum() + next(counter)

        with pytest.raises(DeterminismError):
            finite_diff_check(loss_fn, params)
