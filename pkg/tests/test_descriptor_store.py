"""
Suite de Pruebas del Almacén de Descriptores
============================================

Cobertura de Pruebas:
- DescriptorDataset, BinaryCodeSet y GroundTruth
- Formatos binarios UTHD / UTHB / UTHM y CSV
- Normalización min-max y partición
- Configuración (RunConfig y presets)
- Validación de datos
"""

import os
import shutil
import struct
import tempfile
import unittest

import numpy as np

# Importar módulos a probar
import sys
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from triplet_hashing.models.config import FinetuneConfig, RbmTrainConfig, RunConfig, TripletSamplerConfig
from triplet_hashing.models.descriptors import BinaryCodeSet, DescriptorDataset, GroundTruth
from triplet_hashing.models.hashers import HasherModel
from triplet_hashing.models.rbm import RbmLayer, SrbmStack
from triplet_hashing.services.data_loader import DataLoader, apply_minmax, make_synthetic, normalize_minmax, split
from triplet_hashing.services.rbm_trainer import MIN_STEP_BUDGET, step_budget
from triplet_hashing.utils.errors import (
    ArgumentError,
    ConfigError,
    DataValidationError,
    DivergenceError,
    FormatError,
    exit_code_for,
)
from triplet_hashing.utils.file_handler import FileHandler
from triplet_hashing.utils.validators import DataValidator


def _ids(n, prefix="x"):
    return [f"{prefix}{i}" for i in range(n)]


class TestDescriptorDataset(unittest.TestCase):
    """Casos de prueba para DescriptorDataset."""

    def test_creation(self):
        dataset = DescriptorDataset(_ids(2), np.arange(6).reshape(2, 3))
        self.assertEqual(dataset.count, 2)
        self.assertEqual(dataset.dim, 3)
        self.assertEqual(dataset.data.dtype, np.float32)

    def test_rejects_nan_naming_row(self):
        data = np.zeros((3, 2))
        data[2, 1] = np.nan
        with self.assertRaises(DataValidationError) as ctx:
            DescriptorDataset(_ids(3), data)
        self.assertEqual(ctx.exception.row, 2)

    def test_rejects_duplicate_ids(self):
        with self.assertRaises(DataValidationError):
            DescriptorDataset(["a", "a"], np.zeros((2, 2)))

    def test_rejects_zero_dim(self):
        with self.assertRaises(ArgumentError):
            DescriptorDataset([], np.zeros((0, 0)))

    def test_subset_keeps_norm_meta(self):
        dataset = normalize_minmax(DescriptorDataset(_ids(4), np.arange(8).reshape(4, 2)))
        part = dataset.subset([3, 1])
        self.assertEqual(part.ids, ["x3", "x1"])
        self.assertIs(part.norm_meta, dataset.norm_meta)


class TestBinaryCodeSet(unittest.TestCase):
    """Casos de prueba para BinaryCodeSet."""

    def test_all_bits_set_32(self):
        codes = BinaryCodeSet.from_bits(["a"], np.ones((1, 32), dtype=np.uint8))
        self.assertEqual(codes.codes.tobytes(), b"\xff\xff\xff\xff")

    def test_padding_rule_12_bits(self):
        codes = BinaryCodeSet.from_bits(["a"], np.ones((1, 12), dtype=np.uint8))
        self.assertEqual(codes.codes.shape, (1, 2))
        self.assertEqual(codes.codes[0, 1] & 0xF0, 0)
        self.assertEqual(codes.codes[0, 1], 0x0F)

    def test_lsb_first_layout(self):
        bits = np.zeros((1, 10), dtype=np.uint8)
        bits[0, 0] = 1
        bits[0, 9] = 1
        codes = BinaryCodeSet.from_bits(["a"], bits)
        self.assertEqual(list(codes.codes[0]), [0x01, 0x02])
        np.testing.assert_array_equal(codes.to_bits(), bits)

    def test_padding_garbage_rejected(self):
        with self.assertRaises(DataValidationError):
            BinaryCodeSet(["a"], 12, np.array([[0x00, 0x10]], dtype=np.uint8))

    def test_zero_bits_rejected(self):
        with self.assertRaises(ArgumentError):
            BinaryCodeSet([], 0, np.zeros((0, 0), dtype=np.uint8))


class TestGroundTruth(unittest.TestCase):
    """Casos de prueba para GroundTruth."""

    def test_empty_relevant_set_rejected(self):
        with self.assertRaises(ArgumentError):
            GroundTruth({"q": []})

    def test_unresolved(self):
        gt = GroundTruth({"q1": ["a", "b"], "q2": ["c"]})
        self.assertEqual(gt.unresolved(["a", "c"]), ["b"])
        self.assertIn("q1", gt)
        self.assertEqual(gt["q2"], frozenset({"c"}))


class TestFileHandler(unittest.TestCase):
    """Casos de prueba para los formatos de archivo."""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()
        self.file_handler = FileHandler()
        self.rng = np.random.default_rng(0)

    def tearDown(self):
        shutil.rmtree(self.temp_dir)

    def path(self, name):
        return os.path.join(self.temp_dir, name)

    def test_descriptor_round_trip(self):
        dataset = DescriptorDataset(_ids(100), self.rng.standard_normal((100, 64)))
        self.file_handler.save_descriptors(dataset, self.path("d.uthd"))
        loaded = self.file_handler.load_descriptors(self.path("d.uthd"))
        self.assertEqual(loaded.ids, dataset.ids)
        np.testing.assert_array_equal(loaded.data, dataset.data)

    def test_descriptor_layout(self):
        dataset = DescriptorDataset(["a", "bc"], np.arange(6).reshape(2, 3))
        self.file_handler.save_descriptors(dataset, self.path("d.uthd"))
        with open(self.path("d.uthd"), "rb") as f:
            raw = f.read()
        self.assertEqual(raw[:4], b"UTHD")
        self.assertEqual(struct.unpack("<III", raw[4:16]), (1, 2, 3))
        payload = np.frombuffer(raw[16:40], dtype="<f4")
        np.testing.assert_array_equal(payload, np.arange(6, dtype=np.float32))
        self.assertEqual(raw[40:], b"\x01\x00a\x02\x00bc")
        self.assertEqual(self.file_handler.load_descriptors(self.path("d.uthd")).data.shape, (2, 3))

    def test_descriptor_round_trips_randomized(self):
        for trial in range(100):
            count, dim = int(self.rng.integers(0, 20)), int(self.rng.integers(1, 40))
            data = self.rng.standard_normal((count, dim)).astype(np.float32)
            dataset = DescriptorDataset([f"id-{trial}-{i}" for i in range(count)], data)
            self.file_handler.save_descriptors(dataset, self.path("r.uthd"))
            with open(self.path("r.uthd"), "rb") as f:
                first = f.read()
            loaded = self.file_handler.load_descriptors(self.path("r.uthd"))
            self.file_handler.save_descriptors(loaded, self.path("r2.uthd"))
            with open(self.path("r2.uthd"), "rb") as f:
                self.assertEqual(f.read(), first)

    def test_dim_zero_header(self):
        with open(self.path("bad.uthd"), "wb") as f:
            f.write(b"UTHD" + struct.pack("<III", 1, 2, 0))
        with self.assertRaises(FormatError) as ctx:
            self.file_handler.load_descriptors(self.path("bad.uthd"))
        self.assertEqual(ctx.exception.offset, 12)

    def test_bad_magic_and_version(self):
        with open(self.path("bad.uthd"), "wb") as f:
            f.write(b"XXXX" + struct.pack("<III", 1, 1, 1))
        with self.assertRaises(FormatError) as ctx:
            self.file_handler.load_descriptors(self.path("bad.uthd"), "binary")
        self.assertEqual(ctx.exception.offset, 0)
        with open(self.path("bad.uthd"), "wb") as f:
            f.write(b"UTHD" + struct.pack("<III", 7, 1, 1))
        with self.assertRaises(FormatError) as ctx:
            self.file_handler.load_descriptors(self.path("bad.uthd"))
        self.assertEqual(ctx.exception.offset, 4)

    def test_truncated_payload(self):
        with open(self.path("short.uthd"), "wb") as f:
            f.write(b"UTHD" + struct.pack("<III", 1, 2, 3) + b"\x00" * 10)
        with self.assertRaises(FormatError) as ctx:
            self.file_handler.load_descriptors(self.path("short.uthd"))
        self.assertEqual(ctx.exception.offset, 16)

    def test_nan_payload_names_row(self):
        payload = np.array([[1, 2], [3, np.nan]], dtype="<f4").tobytes()
        ids = b"\x01\x00a\x01\x00b"
        with open(self.path("nan.uthd"), "wb") as f:
            f.write(b"UTHD" + struct.pack("<III", 1, 2, 2) + payload + ids)
        with self.assertRaises(DataValidationError) as ctx:
            self.file_handler.load_descriptors(self.path("nan.uthd"))
        self.assertEqual(ctx.exception.row, 1)

    def test_csv_loading(self):
        with open(self.path("d.csv"), "w") as f:
            f.write("img1,0.5,1.5\nimg2,2,3\n")
        dataset = self.file_handler.load_descriptors(self.path("d.csv"))
        self.assertEqual(dataset.ids, ["img1", "img2"])
        np.testing.assert_array_equal(dataset.data, [[0.5, 1.5], [2, 3]])

    def test_csv_missing_value(self):
        with open(self.path("d.csv"), "w") as f:
            f.write("img1,0.5,1.5\nimg2,2,\n")
        with self.assertRaises(DataValidationError) as ctx:
            self.file_handler.load_descriptors(self.path("d.csv"))
        self.assertEqual(ctx.exception.row, 1)

    def test_csv_keeps_missing_value_markers_as_ids(self):
        with open(self.path("d.csv"), "w") as f:
            f.write("NA,0.5,1.5\nnull,2,3\nNaN,4,5\n")
        dataset = self.file_handler.load_descriptors(self.path("d.csv"))
        self.assertEqual(dataset.ids, ["NA", "null", "NaN"])
        np.testing.assert_array_equal(dataset.data[:, 0], [0.5, 2, 4])

    def test_code_round_trips_randomized(self):
        for trial in range(100):
            count, n_bits = int(self.rng.integers(0, 30)), int(self.rng.integers(1, 300))
            bits = self.rng.integers(0, 2, size=(count, n_bits))
            codes = BinaryCodeSet.from_bits([f"c{trial}-{i}" for i in range(count)], bits)
            self.file_handler.save_codes(codes, self.path("c.uthb"))
            loaded = self.file_handler.load_codes(self.path("c.uthb"))
            self.assertEqual(loaded.n_bits, n_bits)
            self.assertEqual(loaded.ids, codes.ids)
            np.testing.assert_array_equal(loaded.codes, codes.codes)
            np.testing.assert_array_equal(loaded.to_bits(), bits)

    def test_code_layout_and_garbage(self):
        codes = BinaryCodeSet.from_bits(["a"], np.ones((1, 32), dtype=np.uint8))
        self.file_handler.save_codes(codes, self.path("c.uthb"))
        with open(self.path("c.uthb"), "rb") as f:
            raw = bytearray(f.read())
        self.assertEqual(raw[:4], b"UTHB")
        self.assertEqual(bytes(raw[16:20]), b"\xff\xff\xff\xff")

        narrow = BinaryCodeSet.from_bits(["a"], np.ones((1, 12), dtype=np.uint8))
        self.file_handler.save_codes(narrow, self.path("n.uthb"))
        with open(self.path("n.uthb"), "rb") as f:
            raw = bytearray(f.read())
        raw[17] |= 0x80
        with open(self.path("n.uthb"), "wb") as f:
            f.write(bytes(raw))
        with self.assertRaises(DataValidationError):
            self.file_handler.load_codes(self.path("n.uthb"))

    def test_stack_model_round_trip(self):
        for trial in range(100):
            sizes = sorted(self.rng.choice(np.arange(1, 12), size=3, replace=False))[::-1]
            layers = [
                RbmLayer(self.rng.standard_normal((a, b)).astype(np.float32),
                         self.rng.standard_normal(a).astype(np.float32),
                         self.rng.standard_normal(b).astype(np.float32))
                for a, b in zip(sizes, sizes[1:])
            ]
            stack = SrbmStack(layers)
            self.file_handler.save_model(stack, self.path("m.uthm"))
            loaded = self.file_handler.load_model(self.path("m.uthm"))
            self.assertTrue(stack.allclose(loaded))
            with open(self.path("m.uthm"), "rb") as f:
                first = f.read()
            self.file_handler.save_model(loaded, self.path("m2.uthm"))
            with open(self.path("m2.uthm"), "rb") as f:
                self.assertEqual(f.read(), first)

    def test_stack_model_layout(self):
        stack = SrbmStack([RbmLayer.zeros(3, 2)])
        self.file_handler.save_model(stack, self.path("m.uthm"))
        with open(self.path("m.uthm"), "rb") as f:
            raw = f.read()
        self.assertEqual(raw[:4], b"UTHM")
        self.assertEqual(struct.unpack("<IIII", raw[4:20]), (1, 1, 3, 2))
        self.assertEqual(len(raw), 20 + 4 * (6 + 3 + 2))

    def test_hasher_model_round_trip(self):
        model = HasherModel("itq", 8, 16, {
            "pca_mean": self.rng.standard_normal(16),
            "pca_basis": self.rng.standard_normal((16, 8)),
            "rotation": np.eye(8),
        })
        self.file_handler.save_model(model, self.path("h.uthm"))
        loaded = self.file_handler.load_model(self.path("h.uthm"))
        self.assertEqual((loaded.method, loaded.n_bits, loaded.dim), ("itq", 8, 16))
        for name, value in model.params.items():
            np.testing.assert_array_equal(loaded.params[name], value)

    def test_ground_truth_manifest(self):
        with open(self.path("gt.tsv"), "w") as f:
            f.write("q1\ta,b\nq2\tc\n")
        gt = self.file_handler.load_ground_truth(self.path("gt.tsv"))
        self.assertEqual(gt["q1"], frozenset({"a", "b"}))
        with open(self.path("bad.tsv"), "w") as f:
            f.write("q1\ta\nq2 c\n")
        with self.assertRaises(FormatError) as ctx:
            self.file_handler.load_ground_truth(self.path("bad.tsv"))
        self.assertEqual(ctx.exception.offset, 5)

    def test_ground_truth_invalid_utf8(self):
        with open(self.path("gt.tsv"), "wb") as f:
            f.write(b"q1\ta\n\xff\xfe\tb\n")
        with self.assertRaises(FormatError) as ctx:
            self.file_handler.load_ground_truth(self.path("gt.tsv"))
        self.assertEqual(ctx.exception.offset, 5)
        self.assertEqual(exit_code_for(ctx.exception), 2)

    def test_pair_list_with_extra_field(self):
        with open(self.path("pairs.csv"), "w") as f:
            f.write("a,b\nc,d,e\n")
        with self.assertRaises(FormatError):
            self.file_handler.load_pairs(self.path("pairs.csv"))
        with open(self.path("na.csv"), "w") as f:
            f.write("NA,null\n")
        self.assertEqual(self.file_handler.load_pairs(self.path("na.csv")), [("NA", "null")])

    def test_format_detection(self):
        dataset = DescriptorDataset(["a"], np.zeros((1, 2)))
        self.file_handler.save_descriptors(dataset, self.path("d.bin"))
        self.assertEqual(self.file_handler.detect_format(self.path("d.bin")), "descriptors")
        with self.assertRaises(FileNotFoundError):
            self.file_handler.detect_format(self.path("missing.bin"))


class TestNormalizeAndSplit(unittest.TestCase):
    """Casos de prueba para normalización y partición."""

    def test_minmax_columns(self):
        data = np.array([[0, 3, -2], [5, 3, 0], [10, 3, 2]], dtype=np.float32)
        normalized = normalize_minmax(DescriptorDataset(_ids(3), data))
        np.testing.assert_array_equal(normalized.data[:, 0], [0, 0.5, 1])
        np.testing.assert_array_equal(normalized.data[:, 1], [0, 0, 0])
        np.testing.assert_array_equal(normalized.data[:, 2], [0, 0.5, 1])
        np.testing.assert_array_equal(normalized.norm_meta[0], [0, 3, -2])
        np.testing.assert_array_equal(normalized.norm_meta[1], [10, 3, 2])

    def test_minmax_idempotent(self):
        data = np.random.default_rng(3).standard_normal((50, 7))
        once = normalize_minmax(DescriptorDataset(_ids(50), data))
        twice = normalize_minmax(once)
        np.testing.assert_array_equal(once.data, twice.data)
        self.assertTrue(np.all((once.data >= 0) & (once.data <= 1)))

    def test_minmax_needs_rows(self):
        with self.assertRaises(ArgumentError):
            normalize_minmax(DescriptorDataset([], np.zeros((0, 3))))
        with self.assertRaises(ArgumentError):
            normalize_minmax(DescriptorDataset(_ids(2), np.ones((2, 3))))

    def test_apply_minmax_clips(self):
        train = normalize_minmax(DescriptorDataset(_ids(2), [[0.0], [10.0]]))
        other = apply_minmax(DescriptorDataset(["a", "b"], [[-5.0], [20.0]]), train.norm_meta)
        np.testing.assert_array_equal(other.data[:, 0], [0, 1])

    def test_split_sizes_and_determinism(self):
        dataset = DescriptorDataset(_ids(10), np.arange(20).reshape(10, 2))
        train, test = split(dataset, (0.8, 0.2), seed=7)
        self.assertEqual((train.count, test.count), (8, 2))
        again_train, _ = split(dataset, (0.8, 0.2), seed=7)
        self.assertEqual(train.ids, again_train.ids)
        self.assertEqual(set(train.ids) | set(test.ids), set(dataset.ids))
        self.assertFalse(set(train.ids) & set(test.ids))

    def test_split_seed_changes_partition(self):
        dataset = DescriptorDataset(_ids(1000), np.zeros((1000, 1)))
        a, _ = split(dataset, (0.5, 0.5), seed=1)
        b, _ = split(dataset, (0.5, 0.5), seed=2)
        self.assertNotEqual(set(a.ids), set(b.ids))

    def test_split_bad_fractions(self):
        dataset = DescriptorDataset(_ids(4), np.zeros((4, 1)))
        with self.assertRaises(ArgumentError):
            split(dataset, (0.0, 1.0), seed=0)
        with self.assertRaises(ArgumentError):
            split(dataset, (0.6, 0.6), seed=0)


class TestDataLoader(unittest.TestCase):
    """Casos de prueba para DataLoader."""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()
        self.data_loader = DataLoader()

    def tearDown(self):
        shutil.rmtree(self.temp_dir)

    def test_ingest_records_and_reuses_ranges(self):
        src = os.path.join(self.temp_dir, "in.csv")
        with open(src, "w") as f:
            f.write("a,0,10\nb,5,20\nc,10,30\n")
        norm = os.path.join(self.temp_dir, "norm.csv")
        out = os.path.join(self.temp_dir, "out.uthd")
        first = self.data_loader.ingest(src, out, normalize=True, norm_path=norm)
        self.assertTrue(os.path.exists(norm))
        np.testing.assert_array_equal(first.data[:, 1], [0, 0.5, 1])

        with open(src, "w") as f:
            f.write("d,20,20\n")
        second = self.data_loader.ingest(src, out, normalize=True, norm_path=norm)
        np.testing.assert_array_equal(second.data, [[1, 0.5]])

    def test_synthetic_fixture(self):
        fixture = make_synthetic(n_clusters=4, per_cluster=5, dim=8, train_per_cluster=3,
                                 n_match_pairs=10, seed=1)
        self.assertEqual(fixture.database.count, 20)
        self.assertEqual(fixture.train.count, 12)
        self.assertEqual(len(fixture.ground_truth["db000_0000"]), 4)
        self.assertNotIn("db000_0000", fixture.ground_truth["db000_0000"])
        self.assertEqual(len(fixture.nonmatch_pairs), 20)
        for a, b in fixture.match_pairs:
            self.assertEqual(fixture.labels[a], fixture.labels[b])

    def test_create_synthetic_dataset_files(self):
        paths = self.data_loader.create_synthetic_dataset(
            self.temp_dir, n_clusters=3, per_cluster=4, dim=6, train_per_cluster=2, n_match_pairs=5
        )
        for path in paths.values():
            self.assertTrue(os.path.exists(path))
        handler = FileHandler()
        self.assertEqual(handler.load_descriptors(paths["database"]).count, 12)
        self.assertEqual(len(handler.load_pairs(paths["match_pairs"])), 5)


class TestConfig(unittest.TestCase):
    """Casos de prueba para la configuración."""

    def test_config_invariants(self):
        with self.assertRaises(ConfigError):
            RbmTrainConfig(learning_rate=0)
        with self.assertRaises(ConfigError):
            RbmTrainConfig(momentum=1.0)
        with self.assertRaises(ConfigError):
            TripletSamplerConfig(t_p=2.0, t_n=1.0, tolerance=0.1)
        with self.assertRaises(ConfigError):
            FinetuneConfig(update_layers="middle")
        self.assertEqual(RbmTrainConfig().cd_steps, 1)

    def test_run_config_text(self):
        config = RunConfig.from_text("# comment\nlayer_sizes = 128-64-32\nfinetune = threshold\nseed=4\n")
        self.assertEqual(config.layer_sizes, [128, 64, 32])
        self.assertEqual(config.finetune, "threshold")
        self.assertEqual(config.seed, 4)
        reparsed = RunConfig.from_text(config.to_text())
        self.assertEqual(reparsed.get_values(), config.get_values())

    def test_unknown_key_rejected(self):
        with self.assertRaises(ConfigError):
            RunConfig.from_text("colour = blue\n")
        with self.assertRaises(ConfigError):
            RunConfig.from_text("finetune = sometimes\n")
        with self.assertRaises(ConfigError):
            RunConfig.from_text("sampler_p_percentile = 120\n")
        with self.assertRaises(ConfigError):
            RunConfig.from_text("methods = itq,magic\n")

    def test_run_defaults_give_enough_rbm_steps(self):
        config = RunConfig()
        self.assertGreaterEqual(step_budget(config.rbm_config(), 1000), MIN_STEP_BUDGET)
        self.assertLess(step_budget(RbmTrainConfig(epochs=50), 1000), MIN_STEP_BUDGET)

    def test_presets(self):
        config = RunConfig()
        config.apply_preset("paper-64")
        self.assertEqual(config.layer_sizes, [4096, 1024, 64])
        self.assertEqual(config.rbm_epochs, 150)
        self.assertEqual(config.rbm_learning_rate, 0.005)
        self.assertEqual(config.rbm_batch_size, 100)
        config.apply_preset("paper-32")
        self.assertEqual(config.layer_sizes, [4096, 2048, 32])


class TestDataValidator(unittest.TestCase):
    """Casos de prueba para DataValidator."""

    def setUp(self):
        self.validator = DataValidator()

    def test_matrix_errors(self):
        self.assertEqual(self.validator.get_matrix_errors(np.zeros((2, 2))), [])
        data = np.zeros((3, 2))
        data[1, 0] = np.inf
        errors = self.validator.get_matrix_errors(data)
        self.assertEqual(len(errors), 1)
        self.assertIn("row 1", errors[0])
        self.assertFalse(self.validator.validate_matrix(data))

    def test_unit_interval(self):
        self.validator.check_unit_interval(np.array([0.0, 0.5, 1.0]), "p")
        with self.assertRaises(ArgumentError):
            self.validator.check_unit_interval(np.array([1.5]), "p")

    def test_ground_truth_errors(self):
        errors = self.validator.get_ground_truth_errors({"q1": ["a", "zz"]}, ["q1", "q2"], ["a"])
        self.assertEqual(len(errors), 2)
        self.assertIn("q2", errors[0])
        self.assertIn("zz", errors[1])

    def test_validation_rules(self):
        self.validator.set_validation_rule("max_enumeration_units", 12)
        self.assertEqual(self.validator.get_validation_rules()["max_enumeration_units"], 12)
        self.assertFalse(self.validator.check_enumerable(13))

    def test_exit_codes(self):
        self.assertEqual(exit_code_for(ConfigError("x")), 1)
        self.assertEqual(exit_code_for(FormatError("x", offset=3)), 2)
        self.assertEqual(exit_code_for(FileNotFoundError("x")), 2)
        self.assertEqual(exit_code_for(DivergenceError("x", 0.1)), 3)


if __name__ == "__main__":
    unittest.main()
