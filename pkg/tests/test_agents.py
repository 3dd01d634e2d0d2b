import numpy as np
import pytest
import torch

from refgame.agents import (AgentDims, Receiver, Sender, game_hinge_loss,
                            hinge_loss_all_targets)
from refgame.channel import ChannelConfig, MessageBatch, find_lengths


def gen(seed=0):
    g = torch.Generator()
    g.manual_seed(seed)
    return g


SMALL_DIMS = AgentDims(embed_dim=4, hidden_dim=6, feature_dim=5)
SMALL_CHANNEL = ChannelConfig(vocab_size=7, max_len=5)


def onehot_batch(tokens, vocab, eos_id=0):
    tokens = torch.as_tensor(tokens)
    onehots = torch.nn.functional.one_hot(tokens, vocab).float()
    return MessageBatch(onehots, tokens, find_lengths(tokens, eos_id),
                        ChannelConfig(vocab_size=vocab, max_len=tokens.shape[1],
                                      eos_id=eos_id))


class TestSender:
    def test_dominant_token_fills_message(self):
        channel = ChannelConfig(vocab_size=3, max_len=5)
        sender = Sender(AgentDims(4, 6, 5), channel, gen(1))
        with torch.no_grad():
            sender.hidden_to_logits.weight.zero_()
            sender.hidden_to_logits.bias.copy_(torch.tensor([0.0, 50.0, 0.0]))
        sender.eval()
        msg = sender(torch.randn(2, 5, generator=gen(2)))
        assert msg.tokens.tolist() == [[1] * 5, [1] * 5]
        assert msg.lengths.tolist() == [5, 5]

        sender.train()
        msg = sender(torch.randn(2, 5, generator=gen(3)), gen(4))
        assert msg.tokens.tolist() == [[1] * 5, [1] * 5]

    def test_contract_tokens_in_range(self):
        sender = Sender(SMALL_DIMS, SMALL_CHANNEL, gen(5))
        sender.train()
        msg = sender(torch.randn(16, 5, generator=gen(6)), gen(7))
        assert msg.tokens.shape == (16, 5)
        assert int(msg.tokens.min()) >= 0
        assert int(msg.tokens.max()) < SMALL_CHANNEL.vocab_size
        assert (msg.lengths >= 1).all() and (msg.lengths <= 5).all()

    def test_same_seed_and_weights_same_message(self):
        feats = torch.randn(6, 5, generator=gen(8))
        msgs = []
        for _ in range(2):
            sender = Sender(SMALL_DIMS, SMALL_CHANNEL, gen(9))
            sender.train()
            msgs.append(sender(feats, gen(10)))
        assert torch.equal(msgs[0].tokens, msgs[1].tokens)
        assert torch.equal(msgs[0].onehots, msgs[1].onehots)

    def test_mask_after_eos(self):
        sender = Sender(SMALL_DIMS, SMALL_CHANNEL, gen(11))
        sender.train()
        msg = sender(torch.randn(64, 5, generator=gen(12)), gen(13))
        for i in range(64):
            length = int(msg.lengths[i])
            tail = msg.tokens[i, length:]
            assert (tail == SMALL_CHANNEL.eos_id).all()

    def test_eval_mode_needs_no_rng_and_is_deterministic(self):
        sender = Sender(SMALL_DIMS, SMALL_CHANNEL, gen(14))
        sender.eval()
        feats = torch.randn(4, 5, generator=gen(15))
        a = sender(feats)
        b = sender(feats)
        assert torch.equal(a.tokens, b.tokens)

    def test_train_mode_without_rng_rejected(self):
        sender = Sender(SMALL_DIMS, SMALL_CHANNEL, gen(16))
        sender.train()
        with pytest.raises(ValueError):
            sender(torch.randn(4, 5, generator=gen(17)))

    def test_feature_dim_checked(self):
        sender = Sender(SMALL_DIMS, SMALL_CHANNEL, gen(18))
        with pytest.raises(ValueError):
            sender.encode(torch.randn(4, 9))


class TestReceiver:
    def test_inner_product_score(self):
        receiver = Receiver(AgentDims(4, 6, 2), ChannelConfig(5, 3), gen(20))
        receiver.eval()
        with torch.no_grad():
            receiver.projection.weight.zero_()
            receiver.projection.bias.copy_(torch.tensor([1.0, 0.0]))
        msg = onehot_batch([[1, 2, 0]], 5)
        scores = receiver(msg, torch.tensor([[3.0, 4.0]])).detach()
        assert scores.shape == (1, 1)
        assert float(scores[0, 0]) == pytest.approx(3.0)

    def test_candidate_permutation_equivariance(self):
        receiver = Receiver(SMALL_DIMS, SMALL_CHANNEL, gen(21))
        receiver.eval()
        msg = onehot_batch([[1, 2, 3, 0, 0], [4, 0, 0, 0, 0]], 7)
        cands = torch.randn(10, 5, generator=gen(22))
        scores = receiver(msg, cands)
        perm = torch.randperm(10, generator=gen(23))
        permuted = receiver(msg, cands[perm])
        assert torch.allclose(permuted, scores[:, perm], atol=1e-6)

    def test_dimension_mismatch_rejected(self):
        receiver = Receiver(SMALL_DIMS, SMALL_CHANNEL, gen(24))
        msg = onehot_batch([[1, 0, 0, 0, 0]], 7)
        with pytest.raises(ValueError):
            receiver(msg, torch.randn(3, 4))

    def test_hand_rolled_forward_oracle(self):
        # 2-token, 2-dim receiver with pinned weights, recomputed step by
        # step with plain numpy arithmetic.
        dims = AgentDims(embed_dim=2, hidden_dim=2, feature_dim=2)
        channel = ChannelConfig(vocab_size=2, max_len=2)
        receiver = Receiver(dims, channel, gen(25))
        receiver.eval()

        embedding = np.array([[0.1, -0.2], [0.3, 0.4]])
        w_ih = (np.arange(16).reshape(8, 2) / 20.0) - 0.3
        w_hh = (np.arange(16)[::-1].reshape(8, 2) / 25.0) - 0.2
        b_ih = np.linspace(-0.1, 0.2, 8)
        b_hh = np.linspace(0.05, -0.15, 8)
        proj_w = np.array([[0.5, -0.25], [0.75, 0.1]])
        proj_b = np.array([0.02, -0.03])
        with torch.no_grad():
            receiver.token_embedding.copy_(torch.tensor(embedding).float())
            receiver.cell.weight_ih.copy_(torch.tensor(w_ih).float())
            receiver.cell.weight_hh.copy_(torch.tensor(w_hh).float())
            receiver.cell.bias_ih.copy_(torch.tensor(b_ih).float())
            receiver.cell.bias_hh.copy_(torch.tensor(b_hh).float())
            receiver.projection.weight.copy_(torch.tensor(proj_w).float())
            receiver.projection.bias.copy_(torch.tensor(proj_b).float())

        tokens = [[1, 1]]  # no eos: both steps active
        msg = onehot_batch(tokens, 2)
        cands = np.array([[1.5, -0.5], [0.2, 0.9], [-1.0, 0.3]])
        scores = receiver(msg, torch.tensor(cands).float())

        def sigmoid(x):
            return 1.0 / (1.0 + np.exp(-x))

        h = np.zeros(2)
        c = np.zeros(2)
        for tok in tokens[0]:
            e = embedding[tok]
            gates = w_ih @ e + b_ih + w_hh @ h + b_hh
            i, f, g, o = gates[0:2], gates[2:4], gates[4:6], gates[6:8]
            c = sigmoid(f) * c + sigmoid(i) * np.tanh(g)
            h = sigmoid(o) * np.tanh(c)
        # batch-norm in eval mode with fresh running stats (mean 0, var 1)
        h_norm = h / np.sqrt(1.0 + 1e-5)
        u = proj_w @ h_norm + proj_b
        expected = cands @ u
        np.testing.assert_allclose(scores[0].detach().numpy(), expected,
                                   atol=1e-6)

    def test_tokens_after_eos_have_no_influence(self):
        receiver = Receiver(SMALL_DIMS, SMALL_CHANNEL, gen(26))
        receiver.eval()
        base = onehot_batch([[3, 0, 1, 1, 1], [2, 2, 0, 5, 5]], 7)
        perturbed = onehot_batch([[3, 0, 6, 4, 2], [2, 2, 0, 1, 3]], 7)
        assert torch.equal(base.lengths, perturbed.lengths)
        cands = torch.randn(8, 5, generator=gen(27))
        assert torch.allclose(receiver(base, cands),
                              receiver(perturbed, cands), atol=1e-7)


class TestGameHingeLoss:
    def test_margin_satisfied(self):
        assert float(game_hinge_loss(torch.tensor([2.0, 0.0]), 0)) == 0.0

    def test_all_equal_scores(self):
        assert float(game_hinge_loss(torch.tensor([0.0, 0.0, 0.0]), 0)) == 2.0

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(28)
        for _ in range(100):
            n = int(rng.integers(2, 12))
            scores = rng.normal(size=n) * 3
            target = int(rng.integers(0, n))
            expected = sum(max(0.0, 1.0 - scores[target] + scores[d])
                           for d in range(n) if d != target)
            got = float(game_hinge_loss(torch.tensor(scores), target))
            assert got == pytest.approx(expected, abs=1e-6)

    def test_invariant_to_constant_shift(self):
        scores = torch.tensor([0.3, -0.2, 1.4, 0.0])
        a = game_hinge_loss(scores, 2)
        b = game_hinge_loss(scores + 5.0, 2)
        assert float(a) == pytest.approx(float(b), abs=1e-6)

    def test_nonnegative_and_zero_iff_margins_met(self):
        rng = np.random.default_rng(29)
        for _ in range(200):
            n = int(rng.integers(2, 8))
            scores = rng.normal(size=n) * 2
            target = int(rng.integers(0, n))
            loss = float(game_hinge_loss(torch.tensor(scores), target))
            assert loss >= 0.0
            met = all(scores[target] >= scores[d] + 1.0
                      for d in range(n) if d != target)
            assert (loss == 0.0) == met

    def test_all_targets_matches_per_game(self):
        rng = np.random.default_rng(30)
        scores = torch.tensor(rng.normal(size=(6, 6)))
        batched = float(hinge_loss_all_targets(scores))
        per_game = np.mean([float(game_hinge_loss(scores[b], b))
                            for b in range(6)])
        assert batched == pytest.approx(per_game, abs=1e-6)

    def test_validation(self):
        with pytest.raises(ValueError):
            game_hinge_loss(torch.zeros(3, 3), 0)
        with pytest.raises(ValueError):
            game_hinge_loss(torch.zeros(3), 5)
        with pytest.raises(ValueError):
            hinge_loss_all_targets(torch.zeros(3, 4))

    def test_gradient_matches_finite_differences(self):
        dims = AgentDims(embed_dim=3, hidden_dim=4, feature_dim=3)
        channel = ChannelConfig(vocab_size=4, max_len=3)
        receiver = Receiver(dims, channel, gen(31)).double()
        receiver.eval()
        msg = onehot_batch([[1, 2, 3]], 4)
        msg = MessageBatch(msg.onehots.double(), msg.tokens, msg.lengths,
                           msg.config)
        cands = torch.randn(4, 3, generator=gen(32)).double() * 2

        def loss_value():
            scores = receiver(msg, cands)
            return game_hinge_loss(scores[0], 1)

        loss = loss_value()
        loss.backward()
        grad = receiver.projection.weight.grad.detach().numpy().copy()

        w = receiver.projection.weight
        fd = np.zeros_like(grad)
        h = 1e-6
        with torch.no_grad():
            for r in range(w.shape[0]):
                for cidx in range(w.shape[1]):
                    orig = float(w[r, cidx])
                    w[r, cidx] = orig + h
                    hi = float(loss_value())
                    w[r, cidx] = orig - h
                    lo = float(loss_value())
                    w[r, cidx] = orig
                    fd[r, cidx] = (hi - lo) / (2 * h)
        np.testing.assert_allclose(grad, fd, rtol=1e-3, atol=1e-8)
