import json
import shutil
import tempfile
import unittest
from pathlib import Path

import numpy as np
from loguru import logger
from numpy.testing import assert_allclose

from cmclab.utils.data_handling import (
    RunSetup,
    add_log_file_handler,
    atomic_write_text,
    publish_outputs,
    read_csv,
    remove_tmp_folder,
    write_csv,
    write_json,
)


class TestDataHandlingUtils(unittest.TestCase):
    def setUp(self):
        # Create a temporary directory
        self.test_dir = Path(tempfile.mkdtemp())
        self.output_folder = self.test_dir / "output"

    def tearDown(self):
        # Remove the temporary directory after the test
        shutil.rmtree(self.test_dir)

    def test_run_setup_with_log_file(self):
        tmp_log_file = self.test_dir / "logs" / "run.log"

        with RunSetup(log_file=tmp_log_file) as staging_folder:
            # Check that the staging folder is created
            self.assertTrue(staging_folder.is_dir())
            logger.debug("written to the log file only")

            # Check that the log file exists
            self.assertTrue(tmp_log_file.exists())

        # Check if the staging folder is cleaned up
        self.assertFalse(staging_folder.exists())
        self.assertIn("written to the log file only", tmp_log_file.read_text())

    def test_run_setup_without_log_file(self):
        tmp_log_file = self.test_dir / "run.log"

        with RunSetup() as staging_folder:
            self.assertTrue(staging_folder.is_dir())
            self.assertFalse(tmp_log_file.exists())  # Log file should not be created

        self.assertFalse(staging_folder.exists())

    def test_run_setup_cleans_up_on_error(self):
        with self.assertRaises(RuntimeError):
            with RunSetup() as staging_folder:
                (staging_folder / "partial.json").write_text("{}")
                raise RuntimeError("command failed")
        self.assertFalse(staging_folder.exists())

    def test_remove_tmp_folder_success(self):
        # Test successful removal of a folder
        temp_folder = Path(tempfile.mkdtemp())
        remove_tmp_folder(temp_folder)
        self.assertFalse(temp_folder.exists())

    def test_remove_tmp_folder_file_not_found(self):
        fake_folder = Path(self.test_dir / "non_existent_folder")
        # Ensure the folder does not exist
        self.assertFalse(fake_folder.exists())
        remove_tmp_folder(fake_folder)
        # No assertion needed as the function should handle the error internally

    def test_add_log_file_handler(self):
        log_file = self.test_dir / "handler.log"
        handler_id = add_log_file_handler(log_file)
        self.assertGreater(handler_id, 0)  # Ensure a positive handler ID is returned

        # Check that the log file exists and is writable
        self.assertTrue(log_file.exists())

        # Clean up
        logger.remove(handler_id)

    def test_add_log_file_handler_creates_folders(self):
        log_file = self.test_dir / "runs" / "surface" / "run.log"
        sink_id = add_log_file_handler(log_file)
        logger.debug("step-control diagnostics")
        logger.remove(sink_id)
        self.assertIn("step-control diagnostics", log_file.read_text())


class TestWriters(unittest.TestCase):
    def setUp(self):
        self.test_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_atomic_write_leaves_no_temporary_files(self):
        path = atomic_write_text(self.test_dir / "nested" / "note.txt", "first")
        atomic_write_text(path, "second")
        self.assertEqual(path.read_text(), "second")
        self.assertEqual([p.name for p in path.parent.iterdir()], ["note.txt"])

    def test_write_json(self):
        path = write_json(
            self.test_dir / "report.json",
            {
                "b": np.float64(1.5),
                "a": float("nan"),
                "arr": np.arange(3),
                "nested": {"inf": float("inf"), "ok": [1.0, float("-inf")]},
                "path": Path("out"),
                "flag": np.bool_(True),
            },
        )
        text = path.read_text()
        self.assertLess(text.index('"a"'), text.index('"b"'))
        report = json.loads(text)
        self.assertIsNone(report["a"])
        self.assertEqual(report["b"], 1.5)
        self.assertEqual(report["arr"], [0, 1, 2])
        self.assertEqual(report["nested"], {"inf": None, "ok": [1.0, None]})
        self.assertEqual(report["path"], "out")
        self.assertIs(report["flag"], True)

    def test_write_and_read_csv(self):
        data = np.array([[0.0, 1.0 / 3.0], [2.0, np.nan]])
        path = write_csv(self.test_dir / "table.csv", ["s", "V_0"], data)
        self.assertEqual(path.read_text().splitlines()[0], "s,V_0")
        columns, table = read_csv(path)
        self.assertEqual(columns, ["s", "V_0"])
        assert_allclose(table, data, rtol=1e-11)

    def test_write_csv_checks_columns(self):
        with self.assertRaises(ValueError):
            write_csv(self.test_dir / "table.csv", ["s"], np.zeros((2, 2)))
        self.assertFalse((self.test_dir / "table.csv").exists())

    def test_publish_outputs(self):
        staging = self.test_dir / "staging"
        staging.mkdir()
        (staging / "report.json").write_text("{}")
        (staging / "mesh.obj").write_text("v 0 0 0\n")
        (staging / "subdir").mkdir()

        output_folder = self.test_dir / "out"
        output_folder.mkdir()
        (output_folder / "report.json").write_text("old")

        published = publish_outputs(staging, output_folder)
        self.assertEqual([p.name for p in published], ["mesh.obj", "report.json"])
        self.assertEqual((output_folder / "report.json").read_text(), "{}")
        self.assertFalse((output_folder / "subdir").exists())
        self.assertEqual(sorted(p.name for p in output_folder.iterdir()), ["mesh.obj", "report.json"])


if __name__ == "__main__":
    unittest.main()
