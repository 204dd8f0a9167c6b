"""
Suite de Pruebas de los Hashers de Referencia
=============================================

Cobertura de Pruebas:
- PCA (orden, signo, reconstrucción)
- ITQ (punto fijo, monotonía, ortogonalidad)
- LSH, SKLSH, SH, PCAHash y BPBC
- Determinismo y persistencia de modelos
"""

import math
import os
import shutil
import tempfile
import unittest

import numpy as np
from scipy.stats import spearmanr

# Importar módulos a probar
import sys
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from triplet_hashing.models.descriptors import DescriptorDataset
from triplet_hashing.models.hashers import METHODS, HasherModel
from triplet_hashing.services.baseline_hashers import (
    BaselineHasher,
    default_bpbc_shape,
    encode_baseline,
    fit_baseline,
    fit_pca,
    itq_quantization_error,
    itq_rotation,
    random_orthogonal,
)
from triplet_hashing.utils.errors import ArgumentError
from triplet_hashing.utils.file_handler import FileHandler


def _dataset(data) -> DescriptorDataset:
    data = np.asarray(data, dtype=np.float32)
    return DescriptorDataset([f"x{i}" for i in range(len(data))], data)


def _max_orthogonality_error(matrix: np.ndarray) -> float:
    return float(np.max(np.abs(matrix.T @ matrix - np.eye(matrix.shape[1]))))


class TestPca(unittest.TestCase):
    """Casos de prueba para fit_pca."""

    def test_line_y_equals_x(self):
        t = np.random.default_rng(0).standard_normal(200)
        pca = fit_pca(_dataset(np.stack([t, t], axis=1)), 1)
        np.testing.assert_allclose(pca.basis[:, 0], [1 / math.sqrt(2), 1 / math.sqrt(2)], atol=1e-6)

    def test_full_rank_reconstruction(self):
        data = np.random.default_rng(1).standard_normal((300, 6))
        dataset = _dataset(data)
        pca = fit_pca(dataset, 6)
        self.assertLess(_max_orthogonality_error(pca.basis), 1e-8)
        self.assertTrue(np.all(np.diff(pca.eigenvalues) <= 0))
        self.assertTrue(np.all(pca.eigenvalues >= 0))
        np.testing.assert_allclose(pca.reconstruct(pca.project(dataset.data)), dataset.data, atol=1e-10)
        np.testing.assert_allclose(pca.eigenvalues, 1.0, atol=0.45)

    def test_known_covariance(self):
        data = np.random.default_rng(2).standard_normal((100_000, 2)) * [2.0, 1.0]
        pca = fit_pca(_dataset(data), 2)
        np.testing.assert_allclose(pca.eigenvalues, [4.0, 1.0], rtol=0.03)

    def test_sign_convention(self):
        pca = fit_pca(_dataset(np.random.default_rng(3).standard_normal((50, 5))), 3)
        pivots = np.argmax(np.abs(pca.basis), axis=0)
        self.assertTrue(np.all(pca.basis[pivots, np.arange(3)] > 0))

    def test_too_many_components(self):
        dataset = _dataset(np.random.default_rng(4).standard_normal((4, 6)))
        with self.assertRaises(ArgumentError):
            fit_pca(dataset, 4)
        with self.assertRaises(ArgumentError):
            fit_pca(dataset, 0)


class TestItq(unittest.TestCase):
    """Casos de prueba para ITQ."""

    def test_vertex_fixed_point(self):
        vertices = np.array([[(c >> b) & 1 for b in range(3)] for c in range(8)], dtype=np.float64)
        projected = np.tile(2 * vertices - 1, (5, 1))
        rotation, trace = itq_rotation(projected, n_iterations=5, init=np.eye(3))
        np.testing.assert_allclose(rotation, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(trace, 0.0, atol=1e-20)

    def test_monotone_trace_and_orthogonality(self):
        projected = np.random.default_rng(5).standard_normal((500, 8))
        rotation, trace = itq_rotation(projected, rng=np.random.default_rng(0))
        self.assertEqual(len(trace), 50)
        for before, after in zip(trace, trace[1:]):
            self.assertLessEqual(after, before + 1e-9)
        self.assertLess(_max_orthogonality_error(rotation), 1e-8)

    def test_quantization_error(self):
        rng = np.random.default_rng(6)
        projected = rng.standard_normal((20, 4))
        rotation = random_orthogonal(4, rng)
        self.assertAlmostEqual(itq_quantization_error(projected, rotation, projected @ rotation), 0.0)
        binary = np.where(rng.random((20, 4)) < 0.5, -1.0, 1.0)
        self.assertAlmostEqual(itq_quantization_error(0 * projected, rotation, binary), 4.0)

    def test_fitted_rotation_is_orthogonal(self):
        dataset = _dataset(np.random.default_rng(7).standard_normal((200, 16)))
        model = fit_baseline("itq", dataset, 8, seed=1)
        self.assertLess(_max_orthogonality_error(model.params["rotation"]), 1e-8)
        self.assertLess(_max_orthogonality_error(model.params["pca_basis"]), 1e-8)


class TestRandomHashers(unittest.TestCase):
    """Casos de prueba para LSH y SKLSH."""

    def test_lsh_antipodal(self):
        x = np.random.default_rng(8).standard_normal(16)
        dataset = _dataset(np.stack([x, -x]))
        model = fit_baseline("lsh", dataset, 64, seed=2)
        np.testing.assert_allclose(np.linalg.norm(model.params["projection"], axis=0), 1.0)
        bits = encode_baseline(model, dataset).to_bits()
        self.assertEqual(int(np.sum(bits[0] != bits[1])), 64)

    def test_lsh_angle_law(self):
        for degrees in (30, 60, 90):
            theta = math.radians(degrees)
            a = np.zeros(16)
            b = np.zeros(16)
            a[0] = 1.0
            b[0], b[1] = math.cos(theta), math.sin(theta)
            dataset = _dataset(np.stack([a, b]))
            bits = encode_baseline(fit_baseline("lsh", dataset, 10_000, seed=3), dataset).to_bits()
            self.assertLess(abs(np.mean(bits[0] != bits[1]) - theta / math.pi), 0.02, f"{degrees} degrees")

    def test_sklsh_agreement_falls_with_distance(self):
        rng = np.random.default_rng(9)
        anchors = rng.standard_normal((10_000, 8))
        directions = rng.standard_normal((10_000, 8))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        radii = rng.uniform(0.0, 8.0, size=(10_000, 1))
        data = np.empty((20_000, 8))
        data[0::2] = anchors
        data[1::2] = anchors + radii * directions
        dataset = _dataset(data)
        model = fit_baseline("sklsh", dataset, 128, seed=4)
        bits = encode_baseline(model, dataset).to_bits()
        agreement = np.mean(bits[0::2] == bits[1::2], axis=1)
        correlation, p_value = spearmanr(radii[:, 0], agreement)
        self.assertLess(correlation, 0)
        self.assertLess(p_value, 1e-6)
        self.assertGreater(model.params["gamma"][0], 0)


class TestPcaHashers(unittest.TestCase):
    """Casos de prueba para SH, PCAHash y BPBC."""

    def test_sh_bit_balance(self):
        rng = np.random.default_rng(10)
        data = rng.uniform(0.0, 1.0, size=(100_000, 4)) * [4.0, 3.0, 2.0, 1.0]
        dataset = _dataset(data)
        bits = encode_baseline(fit_baseline("sh", dataset, 4, seed=5), dataset).to_bits()
        np.testing.assert_allclose(bits.mean(axis=0), 0.5, atol=0.05)

    def test_sh_modes_prefer_wide_directions(self):
        data = np.random.default_rng(11).uniform(size=(2000, 3)) * [10.0, 1.0, 0.1]
        model = fit_baseline("sh", _dataset(data), 3, seed=0)
        modes = model.params["modes"]
        self.assertTrue(np.all(modes[:, 0] == 0))
        np.testing.assert_array_equal(modes[:, 1], [1, 2, 3])

    def test_pcahash_identity_rotation_is_pca_sign(self):
        dataset = _dataset(np.random.default_rng(12).standard_normal((100, 10)))
        model = fit_baseline("pcahash", dataset, 6, seed=6)
        self.assertLess(_max_orthogonality_error(model.params["rotation"]), 1e-8)
        params = dict(model.params, rotation=np.eye(6))
        plain = HasherModel("pcahash", 6, 10, params)
        pca = fit_pca(dataset, 6)
        expected = (pca.project(dataset.data) > 0).astype(np.uint8)
        np.testing.assert_array_equal(encode_baseline(plain, dataset).to_bits(), expected)

    def test_bpbc_codes(self):
        dataset = _dataset(np.random.default_rng(13).standard_normal((30, 12)))
        hasher = BaselineHasher(bpbc_shape=(2, 6))
        model = hasher.fit("bpbc", dataset, 10, seed=7)
        left, right = model.params["rotation_left"], model.params["rotation_right"]
        self.assertEqual((left.shape, right.shape), ((2, 2), (6, 6)))
        self.assertLess(_max_orthogonality_error(left), 1e-8)
        self.assertLess(_max_orthogonality_error(right), 1e-8)
        row = dataset.data[3].astype(np.float64) - model.params["mean"]
        expected = (left.T @ row.reshape(2, 6) @ right).reshape(-1)[:10] > 0
        np.testing.assert_array_equal(hasher.encode(model, dataset).to_bits()[3], expected)

    def test_bpbc_shapes(self):
        self.assertEqual(default_bpbc_shape(4096), (64, 64))
        self.assertEqual(default_bpbc_shape(12), (3, 4))
        with self.assertRaises(ArgumentError):
            default_bpbc_shape(13)
        dataset = _dataset(np.random.default_rng(14).standard_normal((10, 12)))
        with self.assertRaises(ArgumentError):
            BaselineHasher(bpbc_shape=(5, 5)).fit("bpbc", dataset, 8, seed=0)
        with self.assertRaises(ArgumentError):
            fit_baseline("bpbc", dataset, 13, seed=0)


class TestBaselineInterface(unittest.TestCase):
    """Casos de prueba para la interfaz común de ajuste y codificación."""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()
        self.dataset = _dataset(np.random.default_rng(15).standard_normal((200, 16)))

    def tearDown(self):
        shutil.rmtree(self.temp_dir)

    def test_every_method_deterministic(self):
        for method in METHODS:
            first = fit_baseline(method, self.dataset, 8, seed=1)
            second = fit_baseline(method, self.dataset, 8, seed=1)
            codes = encode_baseline(first, self.dataset)
            self.assertEqual(codes.n_bits, 8, method)
            self.assertEqual(codes.ids, self.dataset.ids)
            np.testing.assert_array_equal(codes.codes, encode_baseline(second, self.dataset).codes)
            np.testing.assert_array_equal(codes.codes, encode_baseline(first, self.dataset).codes)

    def test_model_file_round_trip(self):
        handler = FileHandler()
        for method in METHODS:
            model = fit_baseline(method, self.dataset, 8, seed=2)
            path = os.path.join(self.temp_dir, f"{method}_8.uthm")
            handler.save_model(model, path)
            loaded = handler.load_model(path)
            self.assertEqual(loaded.method, method)
            np.testing.assert_array_equal(encode_baseline(loaded, self.dataset).codes,
                                          encode_baseline(model, self.dataset).codes)

    def test_seed_changes_lsh(self):
        a = fit_baseline("lsh", self.dataset, 8, seed=1).params["projection"]
        b = fit_baseline("lsh", self.dataset, 8, seed=2).params["projection"]
        self.assertFalse(np.allclose(a, b))

    def test_errors(self):
        with self.assertRaises(ArgumentError):
            fit_baseline("pq", self.dataset, 8, seed=0)
        with self.assertRaises(ArgumentError):
            fit_baseline("itq", self.dataset, 17, seed=0)
        model = fit_baseline("lsh", self.dataset, 8, seed=0)
        with self.assertRaises(ArgumentError):
            encode_baseline(model, _dataset(np.zeros((2, 15))))
        empty = encode_baseline(model, DescriptorDataset([], np.zeros((0, 16))))
        self.assertEqual((empty.count, empty.n_bits), (0, 8))


if __name__ == "__main__":
    unittest.main()
