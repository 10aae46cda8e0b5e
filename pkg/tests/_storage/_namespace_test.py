import os
import shutil
import tempfile
import unittest
from typing import cast

from tapmicro._exceptions import InvalidStorageError
from tapmicro._storage._namespace import FAILED_PREFIX, Namespace, Workspace


class TestWorkspace(unittest.TestCase):
    def setUp(self):
        self.test_dir = os.path.join(tempfile.mkdtemp(), "workspace")
        self.workspace = Workspace(self.test_dir)

    def tearDown(self):
        shutil.rmtree(os.path.dirname(self.test_dir))

    def _with_checkpoints(self, *checkpoints: int) -> Workspace:
        for checkpoint in checkpoints:
            os.makedirs(os.path.join(self.test_dir, str(checkpoint)))
        return Workspace(self.test_dir)

    def test_new_workspace(self):
        ws = Workspace.new(self.test_dir)
        self.assertIsInstance(ws, Workspace)
        self.assertEqual(ws.working_dir, self.test_dir)
        self.assertTrue(os.path.isdir(self.test_dir))

    def test_get_load_path_no_checkpoint(self):
        self.assertEqual(self.workspace.get_load_path(), None)

    def test_get_save_path_requires_begin(self):
        with self.assertRaises(InvalidStorageError):
            self.workspace.get_save_path()

    def test_get_save_path_creates_directory(self):
        self.workspace.begin_save(7)
        save_path = self.workspace.get_save_path()
        self.assertEqual(save_path, os.path.join(self.test_dir, "7"))
        self.assertTrue(os.path.exists(save_path))

    def test_ignores_non_numeric_directories(self):
        os.makedirs(os.path.join(self.test_dir, f"{FAILED_PREFIX}9"))
        os.makedirs(os.path.join(self.test_dir, "logs"))
        self.assertEqual(self._with_checkpoints(2).checkpoints, [2])

    def test_pinned_checkpoint(self):
        for checkpoint in [1, 2]:
            os.makedirs(os.path.join(self.test_dir, str(checkpoint)))
        self.assertEqual(Workspace.new(self.test_dir, checkpoint=1).current_load_checkpoint, 1)

    def test_pinned_checkpoint_zero(self):
        ws = self._with_checkpoints(0, 5)
        self.assertEqual(ws.current_load_checkpoint, 5)
        pinned = Workspace.new(self.test_dir, checkpoint=0)
        self.assertEqual(pinned.current_load_checkpoint, 0)
        self.assertEqual(pinned.get_load_path(), os.path.join(self.test_dir, "0"))

    def test_with_checkpoint_failures(self):
        self.workspace = self._with_checkpoints(1, 2, 3)

        def sample_fn():
            if not cast(str, self.workspace.get_load_path()).endswith("1"):
                raise Exception("Checkpoint not loaded")
            return "success"

        with self.assertLogs("tapmicro", level="WARNING"):
            result = self.workspace.with_checkpoints(sample_fn)
        self.assertEqual(result, "success")
        self.assertEqual(self.workspace.current_load_checkpoint, 1)
        self.assertEqual(self.workspace.failed_checkpoints, ["3", "2"])

        self.workspace.finalize()
        self.assertEqual(
            sorted(os.listdir(self.test_dir)), sorted(["1", f"{FAILED_PREFIX}2", f"{FAILED_PREFIX}3"])
        )
        self.assertEqual(self.workspace.checkpoints, [1])

    def test_with_checkpoint_no_failure(self):
        self.workspace = self._with_checkpoints(1, 2, 3)
        result = self.workspace.with_checkpoints(lambda: "success")
        self.assertEqual(result, "success")
        self.assertEqual(self.workspace.current_load_checkpoint, 3)
        self.assertEqual(self.workspace.failed_checkpoints, [])

    def test_with_checkpoint_all_failures(self):
        self.workspace = self._with_checkpoints(1, 2, 3)

        def sample_fn():
            raise Exception("Checkpoint not loaded")

        with self.assertRaises(InvalidStorageError):
            self.workspace.with_checkpoints(sample_fn)
        self.assertEqual(self.workspace.current_load_checkpoint, None)
        self.assertEqual(self.workspace.failed_checkpoints, ["3", "2", "1"])

    def test_with_no_checkpoints(self):
        with self.assertRaises(InvalidStorageError):
            self.workspace.with_checkpoints(lambda: "success")

    def test_finalize_keeps_newest(self):
        self.workspace = self._with_checkpoints(1, 2, 3, 4)
        self.workspace.keep_n = 2
        self.workspace.finalize()
        self.assertEqual(sorted(os.listdir(self.test_dir)), ["3", "4"])
        self.assertEqual(self.workspace.checkpoints, [4, 3])


class TestNamespace(unittest.TestCase):
    def setUp(self):
        self.test_dir = tempfile.mkdtemp()
        self.workspace = Workspace(self.test_dir)
        self.namespace = Namespace(self.workspace, "model")

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_get_load_path_no_checkpoint(self):
        self.assertEqual(None, self.namespace.get_load_path("tensors.bin"))

    def test_get_load_path_with_checkpoint(self):
        self.workspace.current_load_checkpoint = 1
        load_path = self.namespace.get_load_path("tensors.bin")
        self.assertEqual(load_path, os.path.join(self.test_dir, "1", "model_tensors.bin"))

    def test_get_save_path_creates_directory(self):
        self.workspace.begin_save(2)
        save_path = self.namespace.get_save_path("tensors.bin")
        self.assertEqual(save_path, os.path.join(self.test_dir, "2", "model_tensors.bin"))
        self.assertTrue(os.path.isdir(os.path.dirname(save_path)))


if __name__ == "__main__":
    unittest.main()
