import unittest

import torch

from tapmicro._exceptions import DimensionMismatchError, InvalidQueryError
from tapmicro._model._codec import TokenCodec, patchify, sincos2d, unpatchify
from tapmicro._models import ModelConfig


class TestPatchify(unittest.TestCase):
    def test_shape(self):
        self.assertEqual(tuple(patchify(torch.rand(1, 16, 16, 3), 8).shape), (1, 4, 192))

    def test_constant_video(self):
        patches = patchify(torch.full((2, 8, 8, 3), 0.5), 4)
        self.assertTrue(bool((patches == 0.5).all()))

    def test_round_trip(self):
        video = torch.rand(3, 8, 8, 3)
        torch.testing.assert_close(unpatchify(patchify(video, 4), 4, (2, 2)), video, rtol=0, atol=0)

    def test_row_major_order(self):
        video = torch.zeros(1, 8, 8, 3)
        video[0, 0:4, 4:8] = 1.0
        patches = patchify(video, 4)
        self.assertTrue(bool((patches[0, 1] == 1).all()))
        self.assertTrue(bool((patches[0, 2] == 0).all()))

    def test_not_divisible(self):
        with self.assertRaises(DimensionMismatchError):
            patchify(torch.rand(1, 10, 8, 3), 4)

    def test_bad_channels(self):
        with self.assertRaises(DimensionMismatchError):
            patchify(torch.rand(1, 8, 8, 1), 4)


class TestSincos2d(unittest.TestCase):
    def test_origin(self):
        code = sincos2d(torch.tensor(0.0), torch.tensor(0.0), 16)
        self.assertTrue(bool((code[0:4] == 0).all()))
        self.assertTrue(bool((code[4:8] == 1).all()))
        self.assertTrue(bool((code[8:12] == 0).all()))
        self.assertTrue(bool((code[12:16] == 1).all()))

    def test_block_layout(self):
        x, y = torch.tensor(1.3, dtype=torch.float64), torch.tensor(-0.7, dtype=torch.float64)
        omega = torch.tensor([1.0, 100.0**-1, 1e-4], dtype=torch.float64)
        expected = torch.cat([torch.sin(x * omega), torch.cos(x * omega), torch.sin(y * omega), torch.cos(y * omega)])
        torch.testing.assert_close(sincos2d(x, y, 12), expected)

    def test_norm(self):
        xy = torch.rand(10, 2) * 64
        code = sincos2d(xy[:, 0], xy[:, 1], 32)
        torch.testing.assert_close(code.pow(2).sum(-1), torch.full((10,), 16.0))

    def test_width_not_divisible(self):
        with self.assertRaises(DimensionMismatchError):
            sincos2d(torch.tensor(0.0), torch.tensor(0.0), 10)


class TestTokenCodec(unittest.TestCase):
    def setUp(self):
        torch.manual_seed(0)
        self.config = ModelConfig(num_layers=1, width=16, num_heads=2, image_size=(8, 8), patch_size=4)
        self.codec = TokenCodec(self.config)

    def test_encode_single_query(self):
        queries = torch.tensor([[1.0, 3.0, 5.0]])
        tokens = self.codec.encode_queries(queries, 3)
        self.assertEqual(tuple(tokens.shape), (3, 1, 16))
        torch.testing.assert_close(tokens[0, 0], self.codec.mask_token.detach())
        torch.testing.assert_close(tokens[2, 0], self.codec.mask_token.detach())
        expected = sincos2d(torch.tensor(3.0 * 64 / 8), torch.tensor(5.0 * 64 / 8), 16)
        torch.testing.assert_close(tokens[1, 0], expected)

    def test_identical_queries(self):
        queries = torch.tensor([[0.0, 2.0, 2.0], [0.0, 2.0, 2.0]])
        tokens = self.codec.encode_queries(queries, 4)
        torch.testing.assert_close(tokens[:, 0], tokens[:, 1], rtol=0, atol=0)

    def test_no_queries(self):
        tokens = self.codec.encode_queries(torch.zeros(0, 3), 5)
        self.assertEqual(tuple(tokens.shape), (5, 0, 16))

    def test_query_broadcast(self):
        codec = TokenCodec(self.config.model_copy(update={"query_broadcast": True}))
        tokens = codec.encode_queries(torch.tensor([[1.0, 3.0, 5.0]]), 3)
        torch.testing.assert_close(tokens[1, 0], tokens[2, 0])
        torch.testing.assert_close(tokens[0, 0], codec.mask_token.detach())

    def test_query_embedding_is_resolution_relative(self):
        larger = TokenCodec(self.config.model_copy(update={"image_size": (24, 16)}))
        xy = torch.tensor([[0.0, 0.0], [3.0, 5.5], [8.0, 8.0]], dtype=torch.float64)
        scaled = xy * torch.tensor([16 / 8, 24 / 8], dtype=torch.float64)
        torch.testing.assert_close(larger.query_embedding(scaled), self.codec.query_embedding(xy))

    def test_placeholder_rows(self):
        tokens = self.codec.point_tokens(torch.tensor([[-1.0, 0.0, 0.0]]), torch.arange(3))
        self.assertTrue(bool((tokens == self.codec.mask_token.detach()).all()))

    def test_invalid_queries(self):
        with self.assertRaises(InvalidQueryError):
            self.codec.encode_queries(torch.tensor([[3.0, 1.0, 1.0]]), 3)
        with self.assertRaises(InvalidQueryError):
            self.codec.encode_queries(torch.tensor([[0.0, 9.0, 1.0]]), 3)
        with self.assertRaises(DimensionMismatchError):
            self.codec.encode_queries(torch.zeros(2, 2), 3)

    def test_fractional_query_frame(self):
        with self.assertRaises(InvalidQueryError):
            self.codec.point_tokens(torch.tensor([[1.5, 1.0, 1.0]]), torch.arange(3))
        with self.assertRaises(InvalidQueryError):
            self.codec.encode_queries(torch.tensor([[0.0, 1.0, 1.0], [2.0001, 1.0, 1.0]], dtype=torch.float64), 3)

    def test_assemble_layout(self):
        image = torch.randn(2, 4, 16)
        points = torch.randn(2, 2, 16)
        grid = TokenCodec.assemble_tokens(image, points)
        self.assertEqual(tuple(grid.tokens.shape), (2, 6, 16))
        torch.testing.assert_close(grid.tokens[:, 4], points[:, 0])
        torch.testing.assert_close(grid.point_tokens, points)

    def test_assemble_without_points(self):
        image = torch.randn(2, 4, 16)
        grid = TokenCodec.assemble_tokens(image, torch.zeros(2, 0, 16))
        torch.testing.assert_close(grid.tokens, image)

    def test_assemble_mismatch(self):
        with self.assertRaises(DimensionMismatchError):
            TokenCodec.assemble_tokens(torch.randn(2, 4, 16), torch.randn(3, 1, 16))

    def test_zero_frames_give_position_embedding(self):
        tokens = self.codec.embed_frames(torch.zeros(2, 8, 8, 3))
        pos = self.codec.image_pos_embedding.detach()
        torch.testing.assert_close(tokens[0].detach(), pos)
        torch.testing.assert_close(tokens[1].detach(), pos)

    def test_wrong_frame_size(self):
        with self.assertRaises(DimensionMismatchError):
            self.codec.embed_frames(torch.zeros(1, 12, 8, 3))

    def test_forward(self):
        grid = self.codec(torch.rand(3, 8, 8, 3), torch.tensor([[0.0, 1.0, 1.0]]))
        self.assertEqual(grid.num_image_tokens, 4)
        self.assertEqual(tuple(grid.tokens.shape), (3, 5, 16))


if __name__ == "__main__":
    unittest.main()
