# type: ignore
import pickle
import unittest
from unittest.mock import MagicMock, mock_open, patch

from tapmicro._exceptions import InvalidStorageError
from tapmicro._storage._blob_pickle import PickleBlobStorage


class TestPickleBlobStorage(unittest.TestCase):
    def setUp(self):
        self.namespace = MagicMock()
        self.namespace.get_load_path.return_value = "trainer_blob_data.pkl"
        self.namespace.get_save_path.return_value = "trainer_blob_data.pkl"
        self.storage = PickleBlobStorage(namespace=self.namespace, config=None)

    def test_get(self):
        self.storage._data = {"step": 3}
        self.assertEqual(self.storage.get(), {"step": 3})

    def test_set(self):
        blob = {"optimizer": {"state": {}}, "step": 3}
        self.storage.set(blob)
        self.assertEqual(self.storage._data, blob)

    def test_save_start_volatile(self):
        storage = PickleBlobStorage(config=None)
        storage._data = {"step": 1}
        storage._save_start()
        self.assertIsNone(storage._data)

    @patch("builtins.open", new_callable=mock_open)
    def test_save_done(self, mock_file):
        self.storage._data = {"step": 3}
        self.storage._save_done()
        mock_file.assert_called_once_with("trainer_blob_data.pkl", "wb")
        mock_file().write.assert_called()

    @patch("builtins.open", side_effect=OSError("disk full"))
    def test_save_done_failure(self, _):
        self.storage._data = {"step": 3}
        with patch("tapmicro._storage._blob_pickle.logger") as mock_logger:
            with self.assertRaises(InvalidStorageError):
                self.storage._save_done()
            mock_logger.error.assert_called_once()

    @patch("builtins.open", new_callable=mock_open, read_data=pickle.dumps({"step": 3}))
    def test_load_start_with_existing_file(self, mock_file):
        self.storage._load_start()
        self.assertEqual(self.storage._data, {"step": 3})
        mock_file.assert_called_once_with("trainer_blob_data.pkl", "rb")

    @patch("tapmicro._storage._blob_pickle.logger")
    def test_load_start_without_checkpoint(self, mock_logger):
        self.namespace.get_load_path.return_value = None
        self.storage._load_start()
        self.assertIsNone(self.storage._data)
        mock_logger.info.assert_called_once()

    @patch("builtins.open", new_callable=mock_open, read_data=b"not a pickle")
    def test_load_start_with_invalid_file(self, _):
        with patch("tapmicro._storage._blob_pickle.logger") as mock_logger:
            with self.assertRaises(InvalidStorageError):
                self.storage._load_start()
            mock_logger.error.assert_called_once()

    def test_load_done(self):
        self.storage._load_done()


if __name__ == "__main__":
    unittest.main()
