import math
import unittest

import torch
import torch.nn.functional as F

from tapmicro._exceptions import InvalidConfigError, NumericError, UnsupportedModeError
from tapmicro._model._recurrent import RGLRU, CausalConv1d, RecurrentBlock, RecurrentState, clamp_forget_gate
from tapmicro._models import ModelConfig


def _config(**kwargs) -> ModelConfig:
    return ModelConfig(num_layers=1, width=16, num_heads=2, image_size=(8, 8), head_hidden=16, **kwargs)


class TestRGLRU(unittest.TestCase):
    def setUp(self):
        torch.manual_seed(0)
        self.lru = RGLRU(8)

    def test_zero_input_is_pure_decay(self):
        h = torch.randn(8)
        x = torch.zeros(8)
        a = torch.exp(-8.0 * F.softplus(self.lru.decay_param) * torch.sigmoid(self.lru.gate_r.bias))
        torch.testing.assert_close(self.lru.step(h, x), a * h)

    def test_large_decay_is_memoryless(self):
        with torch.no_grad():
            self.lru.decay_param.fill_(1e4)
        x = torch.randn(8)
        i = torch.sigmoid(self.lru.gate_i(x))
        torch.testing.assert_close(self.lru.step(torch.randn(8), x), i * x, atol=1e-6, rtol=0)

    def test_steps_match_unrolled_sum(self):
        x = torch.randn(5, 8, dtype=torch.float64)
        lru = self.lru.double()
        h = torch.zeros(8, dtype=torch.float64)
        for t in range(5):
            h = lru.step(h, x[t])
        a, b = lru.coefficients(x)
        expected = torch.zeros(8, dtype=torch.float64)
        for t in range(5):
            expected = expected + torch.prod(a[t + 1 :], dim=0) * b[t]
        torch.testing.assert_close(h, expected)

    def test_scan_matches_steps(self):
        g = torch.Generator().manual_seed(3)
        for num_steps in (1, 7, 64):
            x = torch.randn(2, num_steps, 8, generator=g)
            h0 = torch.randn(2, 8, generator=g)
            y, h_last = self.lru.scan(x, h0)
            h = h0
            for t in range(num_steps):
                h = self.lru.step(h, x[:, t])
                self.assertLess(float((y[:, t] - h).abs().max()), 1e-5)
            torch.testing.assert_close(h_last, h, atol=1e-5, rtol=1e-4)

    def test_state_stays_bounded(self):
        lru = self.lru.double()
        g = torch.Generator().manual_seed(5)
        x = torch.rand(500, 8, generator=g, dtype=torch.float64) * 2 - 1
        a, b = lru.coefficients(x)
        self.assertTrue(bool(((a > 0) & (a < 1)).all()))
        # Geometric series bound on |h_t| from a zero start.
        bound = b.abs().max(dim=0).values / (1 - a.max(dim=0).values)
        h = torch.zeros(8, dtype=torch.float64)
        for t in range(500):
            h = lru.step(h, x[t])
            self.assertTrue(bool((h.abs() <= bound + 1e-12).all()))

    def test_decay_init_range(self):
        lru = RGLRU(256)
        a = torch.exp(-lru.decay_constant * F.softplus(lru.decay_param) * 0.5)
        self.assertGreaterEqual(float(a.min()), 0.9 - 1e-5)
        self.assertLessEqual(float(a.max()), 0.999 + 1e-5)


class TestClampForgetGate(unittest.TestCase):
    def test_clamp(self):
        self.assertAlmostEqual(float(clamp_forget_gate(torch.tensor(0.5), 0.0, 0.1)), 0.1, places=6)
        self.assertAlmostEqual(float(clamp_forget_gate(torch.tensor(0.05), 0.0, 0.1)), 0.05, places=6)

    def test_invalid_range(self):
        with self.assertRaises(InvalidConfigError):
            clamp_forget_gate(torch.tensor(0.5), 0.2, 0.1)

    def test_clamped_decay_floor(self):
        torch.manual_seed(1)
        lru = RGLRU(8, forget_gate_clamp=(0.0, 0.1))
        a, _ = lru.coefficients(torch.randn(10, 8) * 5)
        floor = torch.exp(-8.0 * 0.1 * F.softplus(lru.decay_param))
        self.assertTrue(bool((a >= floor - 1e-6).all()))

    def test_decay_target(self):
        torch.manual_seed(1)
        lru = RGLRU(8, forget_gate_clamp=(0.0, 0.05), clamp_target="decay")
        a, _ = lru.coefficients(torch.randn(10, 8) * 5)
        self.assertTrue(bool((a >= 0.95 - 1e-6).all()))


class TestCausalConv1d(unittest.TestCase):
    def test_streaming_matches_full(self):
        torch.manual_seed(2)
        conv = CausalConv1d(4, 3)
        x = torch.randn(6, 4)
        full, _ = conv(x)
        history = None
        for t in range(6):
            y, history = conv(x[t : t + 1], history)
            torch.testing.assert_close(y[0], full[t])

    def test_causal(self):
        torch.manual_seed(2)
        conv = CausalConv1d(4, 3)
        x = torch.randn(6, 4)
        y1, _ = conv(x)
        x[4] += 1.0
        y2, _ = conv(x)
        torch.testing.assert_close(y1[:4], y2[:4])


class TestRecurrentBlock(unittest.TestCase):
    def setUp(self):
        torch.manual_seed(0)
        self.block = RecurrentBlock(_config())

    def test_scan_matches_step(self):
        tokens = torch.randn(9, 3, 16)
        out_scan, state_scan = self.block(tokens)
        state = self.block.initial_state((3,), dtype=tokens.dtype)
        rows = []
        for t in range(9):
            row, state = self.block(tokens[t : t + 1], state=state, mode="step")
            rows.append(row)
        torch.testing.assert_close(torch.cat(rows), out_scan, atol=1e-5, rtol=0)
        torch.testing.assert_close(state.h, state_scan.h, atol=1e-5, rtol=0)

    def test_tube_independence(self):
        tokens = torch.randn(5, 4, 16)
        perm = torch.tensor([2, 0, 3, 1])
        out, _ = self.block(tokens)
        out_perm, _ = self.block(tokens[:, perm])
        torch.testing.assert_close(out_perm, out[:, perm])

    def test_single_tube(self):
        tokens = torch.randn(5, 3, 16)
        out, _ = self.block(tokens)
        single, _ = self.block(tokens[:, 1:2])
        torch.testing.assert_close(single[:, 0], out[:, 1])

    def test_with_temporal_conv(self):
        torch.manual_seed(0)
        block = RecurrentBlock(_config(temporal_conv=True))
        tokens = torch.randn(6, 2, 16)
        out_scan, _ = block(tokens)
        state = block.initial_state((2,), dtype=tokens.dtype)
        self.assertIsNotNone(state.conv)
        rows = []
        for t in range(6):
            row, state = block(tokens[t : t + 1], state=state, mode="step")
            rows.append(row)
        torch.testing.assert_close(torch.cat(rows), out_scan, atol=1e-5, rtol=0)

    def test_step_without_state(self):
        with self.assertRaises(UnsupportedModeError):
            self.block(torch.randn(1, 2, 16), mode="step")

    def test_non_finite_state(self):
        state = self.block.initial_state((2,), dtype=torch.float32)
        state.h[0, 0] = math.inf
        with self.assertRaises(NumericError):
            self.block(torch.randn(1, 2, 16), state=state, mode="step")


class TestRecurrentState(unittest.TestCase):
    def test_append_tubes(self):
        state = RecurrentState.zeros((3,), 8, conv_width=4)
        state.h += 1.0
        grown = state.append_tubes(2)
        self.assertEqual(tuple(grown.h.shape), (5, 8))
        self.assertEqual(tuple(grown.conv.shape), (5, 3, 8))
        self.assertTrue(bool((grown.h[3:] == 0).all()))
        self.assertTrue(bool((grown.h[:3] == 1).all()))


if __name__ == "__main__":
    unittest.main()
