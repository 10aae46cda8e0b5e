import unittest

import torch

from tapmicro._exceptions import CoordinateRangeError
from tapmicro._model._heads import CoordinateHead, TrackHeads, one_hot_target, trunc_softargmax
from tapmicro._models import ModelConfig


class TestTruncSoftargmax(unittest.TestCase):
    def test_one_hot(self):
        p = torch.zeros(8)
        p[3] = 1.0
        self.assertAlmostEqual(float(trunc_softargmax(p, 2, 8.0)), 3.0, places=6)

    def test_uniform(self):
        p = torch.full((8,), 1 / 8)
        self.assertAlmostEqual(float(trunc_softargmax(p, 8, 8.0)), 3.5, places=5)

    def test_truncation_renormalizes(self):
        p = torch.tensor([0.1, 0.0, 0.0, 0.4, 0.5, 0.0, 0.0, 0.0])
        self.assertAlmostEqual(float(trunc_softargmax(p, 1, 8.0)), 32 / 9, places=5)

    def test_matches_direct_sum(self):
        g = torch.Generator().manual_seed(0)
        p = torch.softmax(torch.randn(5, 16, generator=g), dim=-1)
        result = trunc_softargmax(p, 3, 32.0)
        for row in range(5):
            center = int(torch.argmax(p[row]))
            lo, hi = max(center - 3, 0), min(center + 3, 15)
            weights = p[row, lo : hi + 1]
            expected = sum(float(w) * j for w, j in zip(weights, range(lo, hi + 1))) / float(weights.sum()) * 2.0
            self.assertAlmostEqual(float(result[row]), expected, places=4)

    def test_decoded_coordinates_scale_with_extent(self):
        g = torch.Generator().manual_seed(1)
        p = torch.softmax(torch.randn(6, 16, generator=g, dtype=torch.float64), dim=-1)
        for scale in (0.5, 3.0, 8.0):
            torch.testing.assert_close(trunc_softargmax(p, 2, 32.0 * scale), scale * trunc_softargmax(p, 2, 32.0))

    def test_window_has_no_gradient_path_outside(self):
        logits = torch.randn(8, requires_grad=True)
        p = torch.softmax(logits, dim=-1)
        trunc_softargmax(p, 1, 8.0).backward()
        self.assertTrue(bool(torch.isfinite(logits.grad).all()))


class TestOneHotTarget(unittest.TestCase):
    def test_examples(self):
        self.assertEqual(int(one_hot_target(torch.tensor(0.0), 8, 8.0)), 0)
        self.assertEqual(int(one_hot_target(torch.tensor(8.0), 8, 8.0)), 7)
        self.assertEqual(int(one_hot_target(torch.tensor(3.7), 8, 8.0)), 3)

    def test_out_of_range(self):
        with self.assertRaises(CoordinateRangeError):
            one_hot_target(torch.tensor(-0.1), 8, 8.0)
        with self.assertRaises(CoordinateRangeError):
            one_hot_target(torch.tensor([1.0, 8.5]), 8, 8.0)


class TestCoordinateHead(unittest.TestCase):
    def test_high_temperature_is_uniform(self):
        logits = torch.randn(4, 16) * 10
        dist = CoordinateHead.distribution(logits, logits, 1e6)
        torch.testing.assert_close(dist.p_x, torch.full((4, 16), 1 / 16), atol=1e-4, rtol=0)
        self.assertIs(dist.logits_x, logits)


class TestTrackHeads(unittest.TestCase):
    def setUp(self):
        torch.manual_seed(0)
        self.config = ModelConfig(num_layers=1, width=16, num_heads=2, image_size=(8, 12), num_bins=8, head_hidden=16)

    def test_zero_weights_give_uniform(self):
        heads = TrackHeads(self.config)
        with torch.no_grad():
            for param in heads.coordinate.parameters():
                param.zero_()
        out = heads(torch.randn(3, 2, 16))
        torch.testing.assert_close(out.distribution.p_x, torch.full((3, 2, 8), 1 / 8))
        torch.testing.assert_close(out.distribution.p_y, torch.full((3, 2, 8), 1 / 8))

    def test_coordinates_follow_frame_size(self):
        heads = TrackHeads(self.config).double()
        larger = TrackHeads(self.config.model_copy(update={"image_size": (24, 36)})).double()
        larger.load_state_dict(heads.state_dict())
        tokens = torch.randn(3, 2, 16, dtype=torch.float64)
        torch.testing.assert_close(larger(tokens).coords, 3.0 * heads(tokens).coords)

    def test_output_shapes(self):
        out = TrackHeads(self.config)(torch.randn(3, 2, 16))
        self.assertEqual(tuple(out.coords.shape), (3, 2, 2))
        self.assertEqual(tuple(out.visible_logit.shape), (3, 2))
        self.assertTrue(bool((out.coords[..., 0] <= 12).all()))
        self.assertTrue(bool((out.coords[..., 1] <= 8).all()))

    def test_regression_head(self):
        heads = TrackHeads(self.config.model_copy(update={"head_type": "regression"}))
        out = heads(torch.randn(3, 2, 16))
        self.assertIsNone(out.distribution)
        self.assertTrue(bool((out.coords >= 0).all()))
        self.assertTrue(bool((out.coords[..., 0] <= 12).all()))


if __name__ == "__main__":
    unittest.main()
