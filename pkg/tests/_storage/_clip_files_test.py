import os
import shutil
import tempfile
import unittest

import numpy as np
import pandas as pd
import torch

from tapmicro._exceptions import InvalidStorageError
from tapmicro._storage._clip_files import (
    TRACK_COLUMNS,
    list_clips,
    read_clip,
    read_ground_truth,
    read_queries,
    read_tracks,
    tracks_frame,
    write_clip,
    write_ground_truth,
    write_queries,
    write_tracks,
)
from tapmicro._types import GroundTruth, QueryPoint, TrackPrediction, VideoClip


class TestClipFiles(unittest.TestCase):
    def setUp(self):
        self.test_dir = tempfile.mkdtemp()
        rng = np.random.default_rng(0)
        self.clip = VideoClip(frames=rng.integers(0, 256, size=(3, 4, 5, 3)).astype(np.float32) / 255.0)
        self.gt = GroundTruth(
            tracks=np.array([[[1.0, 2.0], [3.5, 0.25]], [[1.5, 2.0], [3.0, 0.5]], [[2.0, 2.0], [2.5, 0.75]]]),
            visible=np.array([[True, False], [True, True], [False, True]]),
        )

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_clip_round_trip(self):
        paths = write_clip(self.test_dir, "clip_00000", self.clip, self.gt, seed=17)
        self.assertEqual(os.path.getsize(paths["clip"]), 3 * 4 * 5 * 3)
        clip, sidecar = read_clip(paths["clip"])
        np.testing.assert_allclose(clip.frames, self.clip.frames, atol=1e-6)
        self.assertEqual((sidecar.num_frames, sidecar.height, sidecar.width, sidecar.seed), (3, 4, 5, 17))
        gt = read_ground_truth(paths["ground_truth"], sidecar.num_frames)
        np.testing.assert_allclose(gt.tracks, self.gt.tracks, atol=1e-6)
        np.testing.assert_array_equal(gt.visible, self.gt.visible)

    def test_pixel_layout(self):
        paths = write_clip(self.test_dir, "clip", self.clip)
        raw = np.fromfile(paths["clip"], dtype=np.uint8)
        self.assertEqual(raw[(1 * 4 * 5 + 2 * 5 + 3) * 3 + 1], self.clip.to_uint8()[1, 2, 3, 1])

    def test_ground_truth_csv(self):
        path = os.path.join(self.test_dir, "gt.csv")
        write_ground_truth(path, self.gt)
        df = pd.read_csv(path)
        self.assertEqual(list(df.columns), ["point_id", "frame", "x", "y", "visible"])
        self.assertEqual(df["point_id"].tolist(), [0, 0, 0, 1, 1, 1])
        self.assertEqual(df["frame"].tolist(), [0, 1, 2, 0, 1, 2])

    def test_empty_ground_truth(self):
        path = os.path.join(self.test_dir, "gt.csv")
        write_ground_truth(
            path, GroundTruth(tracks=np.zeros((3, 0, 2), dtype=np.float32), visible=np.zeros((3, 0), dtype=bool))
        )
        gt = read_ground_truth(path, num_frames=3)
        self.assertEqual(gt.tracks.shape, (3, 0, 2))

    def test_truncated_clip(self):
        paths = write_clip(self.test_dir, "clip", self.clip)
        with open(paths["clip"], "r+b") as f:
            f.truncate(10)
        with self.assertRaises(InvalidStorageError):
            read_clip(paths["clip"])

    def test_missing_clip(self):
        with self.assertRaises(InvalidStorageError):
            read_clip(os.path.join(self.test_dir, "absent.rgb"))

    def test_list_clips(self):
        for name in ("clip_00001", "clip_00000"):
            write_clip(self.test_dir, name, self.clip)
        stems = list_clips(self.test_dir)
        self.assertEqual([os.path.basename(s) for s in stems], ["clip_00000", "clip_00001"])
        with self.assertRaises(InvalidStorageError):
            list_clips(os.path.join(self.test_dir, "missing"))


class TestTrackFiles(unittest.TestCase):
    def setUp(self):
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_queries_round_trip(self):
        path = os.path.join(self.test_dir, "queries.csv")
        queries = [QueryPoint(t=0, x=1.5, y=2.0), QueryPoint(t=3, x=0.0, y=7.25)]
        write_queries(path, queries, ["a", "b"])
        ids, loaded = read_queries(path)
        self.assertEqual(ids, ["a", "b"])
        self.assertEqual(loaded, queries)

    def test_queries_missing_columns(self):
        path = os.path.join(self.test_dir, "queries.csv")
        pd.DataFrame({"query_id": [0], "x": [1.0]}).to_csv(path, index=False)
        with self.assertRaises(InvalidStorageError):
            read_queries(path)

    def test_tracks(self):
        prediction = TrackPrediction(
            coords=torch.tensor([[[1.0, 2.0], [3.0, 4.0]], [[5.0, 6.0], [7.0, 8.0]]]),
            visible_prob=torch.tensor([[0.9, 0.1], [0.8, 0.7]]),
            occluded=torch.tensor([[False, True], [False, False]]),
            mass_in_radius=torch.tensor([[1.0, 0.2], [0.9, 0.6]]),
        )
        df = tracks_frame(prediction, [10, 20])
        self.assertEqual(list(df.columns), TRACK_COLUMNS)
        path = os.path.join(self.test_dir, "tracks.csv")
        write_tracks(path, df)
        loaded = read_tracks(path)
        self.assertEqual(loaded["query_id"].tolist(), [10, 10, 20, 20])
        self.assertEqual(loaded["frame"].tolist(), [0, 1, 0, 1])
        self.assertEqual(loaded["visible"].tolist(), [1, 1, 0, 1])
        np.testing.assert_allclose(loaded["x"].to_numpy(), [1.0, 5.0, 3.0, 7.0])

    def test_tracks_missing_columns(self):
        path = os.path.join(self.test_dir, "tracks.csv")
        pd.DataFrame({"query_id": [0]}).to_csv(path, index=False)
        with self.assertRaises(InvalidStorageError):
            read_tracks(path)


if __name__ == "__main__":
    unittest.main()
