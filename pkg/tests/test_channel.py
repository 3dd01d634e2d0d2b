import math

import numpy as np
import pytest
import torch

from refgame.channel import (ChannelConfig, Message, MessageBatch,
                             effective_length, find_lengths,
                             gumbel_from_uniform, gumbel_softmax,
                             make_message, sample_gumbel,
                             straight_through_onehot)

EULER_MASCHERONI = 0.5772156649015329


def gen(seed=0):
    g = torch.Generator()
    g.manual_seed(seed)
    return g


class TestChannelConfig:
    def test_valid(self):
        cfg = ChannelConfig(vocab_size=100, max_len=5)
        assert cfg.temperature == 1.0 and cfg.eos_id == 0

    @pytest.mark.parametrize("kwargs", [
        dict(vocab_size=1, max_len=5),
        dict(vocab_size=10, max_len=0),
        dict(vocab_size=10, max_len=5, temperature=0.0),
        dict(vocab_size=10, max_len=5, eos_id=10),
        dict(vocab_size=10, max_len=5, eos_id=-1),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ChannelConfig(**kwargs)


class TestSampleGumbel:
    def test_fixed_point_of_transform(self):
        u = torch.full((4, 3), 1.0 / math.e)
        assert torch.allclose(gumbel_from_uniform(u), torch.zeros(4, 3),
                              atol=1e-6)

    def test_monte_carlo_mean_is_euler_mascheroni(self):
        draws = sample_gumbel((1_000_000,), gen(7))
        assert abs(float(draws.mean()) - EULER_MASCHERONI) < 0.005

    def test_same_seed_identical(self):
        a = sample_gumbel((100,), gen(3))
        b = sample_gumbel((100,), gen(3))
        assert torch.equal(a, b)

    def test_always_finite(self):
        draws = sample_gumbel((100_000,), gen(5))
        assert torch.isfinite(draws).all()

    def test_empty_shape_rejected(self):
        with pytest.raises(ValueError):
            sample_gumbel((), gen())


class TestGumbelSoftmax:
    def test_symmetry_with_zero_noise(self):
        out = gumbel_softmax(torch.zeros(2), 1.0, noise=torch.zeros(2))
        assert torch.allclose(out, torch.tensor([0.5, 0.5]))

    def test_closed_form_softmax(self):
        out = gumbel_softmax(torch.tensor([math.log(2.0), 0.0]), 1.0,
                             noise=torch.zeros(2))
        assert torch.allclose(out, torch.tensor([2 / 3, 1 / 3]), atol=1e-6)

    def test_argmax_frequencies_match_softmax(self):
        logits = torch.tensor([1.0, 0.0, -1.0])
        n = 100_000
        out = gumbel_softmax(logits.expand(n, 3), 1.0, gen(11))
        counts = torch.bincount(out.argmax(dim=1), minlength=3).float() / n
        expected = torch.softmax(logits, dim=0)
        assert torch.all((counts - expected).abs() < 0.01)

    def test_rows_sum_to_one_and_open_interval(self):
        logits = torch.randn(50, 7, generator=gen(2)) * 3
        out = gumbel_softmax(logits, 0.7, gen(3))
        assert torch.allclose(out.sum(dim=1), torch.ones(50), atol=1e-6)
        assert (out > 0).all() and (out < 1).all()

    def test_nonfinite_logits_rejected(self):
        with pytest.raises(ValueError):
            gumbel_softmax(torch.tensor([float("nan"), 0.0]), 1.0, gen())
        with pytest.raises(ValueError):
            gumbel_softmax(torch.tensor([float("inf"), 0.0]), 1.0, gen())

    def test_bad_temperature_rejected(self):
        with pytest.raises(ValueError):
            gumbel_softmax(torch.zeros(3), 0.0, gen())

    def test_argmax_invariant_to_temperature(self):
        logits = torch.randn(20, 6, generator=gen(4))
        noise = sample_gumbel((20, 6), gen(5))
        argmaxes = [gumbel_softmax(logits, t, noise=noise).argmax(dim=1)
                    for t in (0.1, 0.5, 1.0, 3.0, 10.0)]
        for other in argmaxes[1:]:
            assert torch.equal(argmaxes[0], other)

    def test_concentrates_as_temperature_drops(self):
        logits = torch.randn(6, generator=gen(6))
        noise = sample_gumbel((6,), gen(7))
        maxima = [float(gumbel_softmax(logits, t, noise=noise).max())
                  for t in (4.0, 2.0, 1.0, 0.5, 0.25, 0.05)]
        assert all(b > a for a, b in zip(maxima, maxima[1:]))
        assert maxima[-1] > 0.999


class TestStraightThrough:
    def test_basic_onehot(self):
        out = straight_through_onehot(torch.tensor([0.7, 0.2, 0.1]))
        assert torch.equal(out, torch.tensor([1.0, 0.0, 0.0]))

    def test_tie_breaks_to_lowest_index(self):
        out = straight_through_onehot(torch.tensor([0.5, 0.5]))
        assert torch.equal(out, torch.tensor([1.0, 0.0]))

    def test_exactly_one_hot_on_random_rows(self):
        relaxed = torch.softmax(torch.randn(40, 9, generator=gen(8)), dim=1)
        hard = straight_through_onehot(relaxed)
        assert torch.all(hard.sum(dim=1) == 1.0)
        assert torch.all((hard == 0) | (hard == 1))

    def test_gradient_matches_fd_linear_loss(self):
        # With a linear downstream loss the straight-through gradient equals
        # the gradient of the same loss on the relaxed sample exactly, so
        # central differences of the relaxed path are an independent oracle.
        for seed in range(20):
            g = gen(100 + seed)
            logits = (torch.randn(6, generator=g) * 2).double().requires_grad_()
            noise = sample_gumbel((6,), g).double()
            coeffs = torch.randn(6, generator=g).double()

            relaxed = gumbel_softmax(logits, 1.0, noise=noise)
            loss = (coeffs * straight_through_onehot(relaxed)).sum()
            loss.backward()
            grad = logits.grad.detach().numpy()

            def relaxed_loss(vec):
                probs = gumbel_softmax(torch.as_tensor(vec), 1.0, noise=noise)
                return float((coeffs * probs).sum())

            fd = _central_differences(relaxed_loss, logits.detach().numpy())
            np.testing.assert_allclose(grad, fd, rtol=1e-3, atol=1e-8)

    def test_gradient_matches_fd_quadratic_loss(self):
        # For a curved loss the straight-through gradient is the gradient of
        # the loss linearised at the hard sample, taken through the relaxed
        # path; finite differences of that surrogate are the oracle.
        for seed in range(20):
            g = gen(200 + seed)
            logits = (torch.randn(5, generator=g) * 2).double().requires_grad_()
            noise = sample_gumbel((5,), g).double()
            weights = torch.rand(5, generator=g).double() + 0.5
            targets = torch.randn(5, generator=g).double()

            relaxed = gumbel_softmax(logits, 1.0, noise=noise)
            hard = straight_through_onehot(relaxed)
            loss = (weights * (hard - targets) ** 2).sum()
            loss.backward()
            grad = logits.grad.detach().numpy()

            downstream = (2 * weights * (hard.detach() - targets)).numpy()

            def surrogate(vec):
                probs = gumbel_softmax(torch.as_tensor(vec), 1.0, noise=noise)
                return float((torch.as_tensor(downstream) * probs).sum())

            fd = _central_differences(surrogate, logits.detach().numpy())
            np.testing.assert_allclose(grad, fd, rtol=1e-3, atol=1e-8)


def _central_differences(fn, x, h=1e-6):
    out = np.zeros_like(x)
    for i in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi[i] += h
        lo[i] -= h
        out[i] = (fn(hi) - fn(lo)) / (2 * h)
    return out


class TestEffectiveLength:
    def test_eos_in_middle(self):
        assert effective_length([5, 3, 0, 7, 2], eos_id=0) == 3

    def test_eos_first(self):
        assert effective_length([0, 4, 4, 4, 4], eos_id=0) == 1

    def test_no_eos_full_length(self):
        assert effective_length([1, 2, 3, 4, 5], eos_id=0) == 5

    def test_counts_the_eos_token_itself(self):
        assert effective_length([7, 0], eos_id=0) == 2

    def test_find_lengths_matches_scalar(self):
        rng = np.random.default_rng(0)
        tokens = torch.from_numpy(rng.integers(0, 6, size=(64, 5)))
        lengths = find_lengths(tokens, eos_id=0)
        for row, length in zip(tokens, lengths):
            assert effective_length(row, 0) == int(length)


class TestMessage:
    def test_make_message_masks_after_eos(self):
        cfg = ChannelConfig(vocab_size=8, max_len=5)
        msg = make_message([3, 0, 6, 6, 1], cfg)
        assert msg.tokens == (3, 0, 0, 0, 0)
        assert msg.effective_len == 2

    def test_make_message_validates(self):
        cfg = ChannelConfig(vocab_size=8, max_len=5)
        with pytest.raises(ValueError):
            make_message([1, 2, 3], cfg)
        with pytest.raises(ValueError):
            make_message([1, 2, 3, 4, 9], cfg)

    def test_message_invariants(self):
        with pytest.raises(ValueError):
            Message(tokens=(1, 2, 3), effective_len=0)
        with pytest.raises(ValueError):
            Message(tokens=(1, 2, 3), effective_len=4)

    def test_message_batch_views(self):
        cfg = ChannelConfig(vocab_size=4, max_len=3)
        tokens = torch.tensor([[1, 0, 0], [2, 3, 1]])
        onehots = torch.nn.functional.one_hot(tokens, 4).float()
        batch = MessageBatch(onehots, tokens, find_lengths(tokens, 0), cfg)
        assert len(batch) == 2
        assert batch.message(0) == Message((1, 0, 0), 2)
        assert [m.effective_len for m in batch.messages()] == [2, 3]
