import unittest

import numpy as np

from tapmicro._exceptions import GenerationError
from tapmicro._services._query_sampling import (
    build_query_batch,
    first_frame_queries,
    frame_zero_queries,
    sample_queries,
    strided_queries,
)
from tapmicro._types import GroundTruth


def _ground_truth(visible) -> GroundTruth:
    visible = np.asarray(visible, dtype=bool)
    num_frames, num_points = visible.shape
    tracks = np.zeros((num_frames, num_points, 2), dtype=np.float32)
    tracks[..., 0] = np.arange(num_frames)[:, None] + 10 * np.arange(num_points)[None, :]
    tracks[..., 1] = 1.0
    return GroundTruth(tracks=tracks, visible=visible)


class TestBuildQueryBatch(unittest.TestCase):
    def test_masks(self):
        gt = _ground_truth([[1, 1], [1, 0], [1, 1], [0, 1]])
        batch = build_query_batch(gt, np.array([1, 0]), np.array([0, 2]))
        self.assertEqual(batch.queries[0].t, 0)
        self.assertEqual(batch.queries[0].x, 10.0)
        self.assertEqual(batch.queries[1].x, 2.0)
        np.testing.assert_array_equal(batch.coord_loss_mask[:, 1], [False, False, True, True])
        np.testing.assert_array_equal(batch.coord_loss_mask[:, 0], [True, True, True, True])
        np.testing.assert_array_equal(batch.visibility_target[:, 1], [0.0, 0.0, 1.0, 0.0])
        np.testing.assert_array_equal(batch.visibility_target[:, 0], [1.0, 0.0, 1.0, 1.0])
        self.assertEqual(batch.target_coords.shape, (4, 2, 2))
        self.assertEqual(batch.query_array().shape, (2, 3))


class TestSampleQueries(unittest.TestCase):
    def test_all_at_frame_zero(self):
        gt = _ground_truth(np.ones((6, 5)))
        batch = sample_queries(gt, 20, 1.0, seed=0)
        self.assertTrue(all(q.t == 0 for q in batch.queries))

    def test_fraction_at_frame_zero(self):
        gt = _ground_truth(np.ones((6, 5)))
        batch = sample_queries(gt, 1000, 0.8, seed=1)
        fraction = np.mean([q.t == 0 for q in batch.queries])
        self.assertGreaterEqual(fraction, 0.76)
        self.assertLessEqual(fraction, 0.84)

    def test_only_visible_cells(self):
        visible = np.zeros((5, 3), dtype=bool)
        visible[2:, 1] = True
        batch = sample_queries(_ground_truth(visible), 50, 0.5, seed=2)
        for q, p in zip(batch.queries, batch.point_ids):
            self.assertTrue(visible[q.t, p])
            self.assertGreaterEqual(q.t, 2)

    def test_deterministic(self):
        gt = _ground_truth(np.ones((6, 5)))
        a = sample_queries(gt, 10, 0.5, seed=7)
        b = sample_queries(gt, 10, 0.5, seed=7)
        self.assertEqual(a.queries, b.queries)

    def test_no_visible_points(self):
        with self.assertRaises(GenerationError):
            sample_queries(_ground_truth(np.zeros((4, 3))), 5, 0.8, seed=0)


class TestEvaluationQueries(unittest.TestCase):
    def setUp(self):
        self.gt = _ground_truth([[1, 0, 0], [1, 1, 0], [0, 1, 0], [1, 1, 0], [1, 1, 0], [1, 1, 0]])

    def test_first_frame_queries(self):
        batch = first_frame_queries(self.gt)
        self.assertEqual(batch.point_ids.tolist(), [0, 1])
        self.assertEqual([q.t for q in batch.queries], [0, 1])

    def test_frame_zero_queries(self):
        batch = frame_zero_queries(self.gt)
        self.assertEqual(batch.point_ids.tolist(), [0])

    def test_strided_queries(self):
        batch = strided_queries(self.gt, stride=5)
        self.assertEqual(sorted(zip(batch.point_ids.tolist(), [q.t for q in batch.queries])), [(0, 0), (0, 5), (1, 5)])


if __name__ == "__main__":
    unittest.main()
