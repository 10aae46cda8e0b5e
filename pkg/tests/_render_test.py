import os
import shutil
import tempfile
import unittest

import numpy as np
import pandas as pd

from tapmicro._exceptions import DimensionMismatchError
from tapmicro._render import PALETTE, image_array, render_frames, write_overlays
from tapmicro._types import VideoClip


def _tracks(rows) -> pd.DataFrame:
    return pd.DataFrame(rows, columns=["query_id", "frame", "x", "y", "visible", "mass_in_radius"])


class TestRender(unittest.TestCase):
    def setUp(self):
        self.clip = VideoClip(frames=np.zeros((3, 16, 16, 3), dtype=np.float32))
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_no_tracks(self):
        images = render_frames(self.clip, _tracks([]))
        self.assertEqual(len(images), 3)
        self.assertFalse(image_array(images[0]).any())

    def test_visible_marker_is_filled(self):
        tracks = _tracks([[0, 0, 8.0, 8.0, 1, 1.0], [1, 1, 8.0, 8.0, 0, 1.0]])
        images = render_frames(self.clip, tracks, radius=3.0)
        visible, occluded = image_array(images[0]), image_array(images[1])
        self.assertEqual(tuple(visible[8, 8]), PALETTE[0])
        self.assertEqual(tuple(occluded[8, 8]), (0, 0, 0))
        self.assertTrue(occluded.any())
        # Frame 2 has no prediction and stays untouched.
        self.assertFalse(image_array(images[2]).any())

    def test_colors_per_track(self):
        tracks = _tracks([[0, 0, 3.0, 3.0, 1, 1.0], [1, 0, 12.0, 12.0, 1, 1.0]])
        image = image_array(render_frames(self.clip, tracks)[0])
        self.assertEqual(tuple(image[3, 3]), PALETTE[0])
        self.assertEqual(tuple(image[12, 12]), PALETTE[1])

    def test_scale(self):
        tracks = _tracks([[0, 0, 2.0, 2.0, 1, 1.0]])
        image = image_array(render_frames(self.clip, tracks, scale=3)[0])
        self.assertEqual(image.shape, (48, 48, 3))
        self.assertEqual(tuple(image[6, 6]), PALETTE[0])

    def test_tail(self):
        tracks = _tracks([[0, t, 2.0 + 5 * t, 8.0, 1, 1.0] for t in range(3)])
        image = image_array(render_frames(self.clip, tracks, tail=2, radius=1.0)[2])
        # The polyline through earlier positions crosses x = 5 on row 8.
        self.assertEqual(tuple(image[8, 5]), PALETTE[0])

    def test_tracks_beyond_clip(self):
        with self.assertRaises(DimensionMismatchError):
            render_frames(self.clip, _tracks([[0, 5, 1.0, 1.0, 1, 1.0]]))

    def test_invalid_scale(self):
        with self.assertRaises(ValueError):
            render_frames(self.clip, _tracks([]), scale=0)

    def test_write_overlays(self):
        images = render_frames(self.clip, _tracks([]))
        paths = write_overlays(os.path.join(self.test_dir, "frames"), images)
        names = [os.path.basename(p) for p in paths]
        self.assertEqual(names, ["frame_00000.png", "frame_00001.png", "frame_00002.png"])
        self.assertTrue(all(os.path.exists(p) for p in paths))


if __name__ == "__main__":
    unittest.main()
