"""
Módulo de Servicio de Experimentos
==================================

Experimentos comparativos sobre un conjunto con verdad de referencia:
inicialización (SRBM frente a pesos aleatorios de norma unitaria), muestreo
de tripletas (umbral frente a uniforme), barrido de épocas de ajuste fino y
barrido de tasa de bits frente a descriptores sin comprimir. Cada
experimento devuelve sus filas y escribe un CSV en el directorio de salida.

Clases:
    ExperimentData: Conjuntos normalizados de un experimento
    ExperimentRunner: Ejecuta los experimentos con una configuración
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from ..models.config import RunConfig
from ..models.descriptors import BinaryCodeSet, DescriptorDataset, GroundTruth
from ..models.rbm import SrbmStack
from ..models.retrieval import EvalReport
from ..utils.errors import ArgumentError
from .baseline_hashers import BaselineHasher
from .data_loader import SyntheticFixture, apply_minmax, normalize_minmax
from .embedding import encode_binary
from .hashing_manager import HashingManager


EXPERIMENTS = ("init", "sampling", "epochs", "bitrate")


@dataclass(frozen=True, eq=False)
class ExperimentData:
    """
    Training and database sets normalized with the training ranges.

    The database doubles as the query set, each query excluded from its own ranking.
    """

    train: DescriptorDataset
    database: DescriptorDataset
    ground_truth: GroundTruth

    @classmethod
    def prepare(cls, train: DescriptorDataset, database: DescriptorDataset,
                ground_truth: GroundTruth) -> "ExperimentData":
        train = normalize_minmax(train)
        return cls(train, apply_minmax(database, train.norm_meta), ground_truth)

    @classmethod
    def from_fixture(cls, fixture: SyntheticFixture) -> "ExperimentData":
        return cls.prepare(fixture.train, fixture.database, fixture.ground_truth)


def random_codes(ids: Sequence[str], n_bits: int, seed: int) -> BinaryCodeSet:
    """Uniformly random codes, the chance-level reference."""
    rng = np.random.default_rng(seed)
    return BinaryCodeSet.from_bits(ids, rng.integers(0, 2, size=(len(ids), n_bits), dtype=np.uint8))


def hidden_width(dim: int, n_bits: int) -> int:
    """Intermediate layer width used when a sweep builds its own layer sizes."""
    return (dim + n_bits) // 2


class ExperimentRunner:
    """
    Runs the comparative experiments.

    Attributes:
        config (RunConfig): Training and evaluation settings
        manager (HashingManager): Pipeline steps and output handling
        logger (logging.Logger): Logger instance
    """

    def __init__(self, config: RunConfig, manager: Optional[HashingManager] = None):
        self.config = config
        self.manager = manager or HashingManager(config)
        self.logger = logging.getLogger(__name__)

    def _evaluate(self, scheme: str, bits: Optional[int], data: ExperimentData,
                  codes=None) -> EvalReport:
        searchable = data.database if codes is None else codes
        evaluator = self.manager.evaluator(exclude_self=True)
        return evaluator.evaluate(scheme, bits, searchable, searchable, data.ground_truth)

    def _evaluate_stack(self, scheme: str, stack: SrbmStack, data: ExperimentData) -> EvalReport:
        return self._evaluate(scheme, stack.n_bits, data, encode_binary(stack, data.database))

    def _layer_sizes(self, data: ExperimentData) -> List[int]:
        return self.manager.resolve_layer_sizes(data.train.dim)

    def _write(self, frame: pd.DataFrame, name: str) -> pd.DataFrame:
        self.manager.file_handler.write_frame(frame, self.manager.output_path(name))
        return frame

    def run_init_ablation(self, data: ExperimentData) -> EvalReport:
        """
        Random codes, SRBM, UniW and both after threshold fine-tuning.

        Writes init_ablation.csv.
        """
        sizes = self._layer_sizes(data)
        report = EvalReport()
        report.extend(self._evaluate("L2", None, data))
        report.extend(self._evaluate(
            "Random", sizes[-1], data, random_codes(data.database.ids, sizes[-1], self.config.seed)
        ))
        for init, label in (("srbm", "SRBM"), ("uniw", "UniW")):
            stack = self.manager.pretrain(data.train, sizes, init)
            report.extend(self._evaluate_stack(label, stack, data))
            tuned, _ = self.manager.finetune(stack, data.train, "threshold")
            report.extend(self._evaluate_stack(f"UTH_{label}", tuned, data))
        self._write(report.to_frame(), "init_ablation.csv")
        return report

    def run_sampling_ablation(self, data: ExperimentData) -> EvalReport:
        """
        Threshold against uniform triplet sampling from one SRBM initialisation.

        Writes sampling_ablation.csv.
        """
        stack = self.manager.pretrain(data.train, self._layer_sizes(data), "srbm")
        report = EvalReport()
        report.extend(self._evaluate_stack("SRBM", stack, data))
        for mode, label in (("threshold", "ThrTri"), ("uniform", "UniTri")):
            tuned, _ = self.manager.finetune(stack, data.train, mode)
            report.extend(self._evaluate_stack(label, tuned, data))
        self._write(report.to_frame(), "sampling_ablation.csv")
        return report

    def run_epoch_sweep(self, data: ExperimentData) -> pd.DataFrame:
        """
        mAP after every fine-tuning epoch, epoch 0 being the SRBM initialisation.

        Writes epoch_sweep.csv with columns epoch, mean_loss, mAP.
        """
        stack = self.manager.pretrain(data.train, self._layer_sizes(data), "srbm")
        initial = self._evaluate_stack("SRBM", stack, data).value("SRBM", "mAP")
        rows = [{"epoch": 0, "mean_loss": float("nan"), "mAP": initial}]

        def record(epoch: int, tuned: SrbmStack, mean_loss: float) -> None:
            value = self._evaluate_stack("UTH", tuned, data).value("UTH", "mAP")
            rows.append({"epoch": epoch, "mean_loss": mean_loss, "mAP": value})

        mode = self.config.finetune if self.config.finetune != "off" else "threshold"
        self.manager.finetune(stack, data.train, mode, epoch_callback=record)
        return self._write(pd.DataFrame(rows, columns=["epoch", "mean_loss", "mAP"]), "epoch_sweep.csv")

    def run_bitrate_sweep(self, data: ExperimentData, bits: Optional[Sequence[int]] = None) -> EvalReport:
        """
        UTH and the configured baselines at each bitrate, plus uncompressed L2.

        Each UTH network uses layer sizes dim - hidden_width(dim, bits) - bits.
        Writes bitrate_sweep.csv.
        """
        bits = list(bits or self.config.bits)
        dim = data.train.dim
        too_wide = [b for b in bits if b >= dim]
        if too_wide:
            raise ArgumentError(f"Bitrates {too_wide} are not below the descriptor dim {dim}")
        report = EvalReport()
        report.extend(self._evaluate("L2", None, data))
        hasher = BaselineHasher(self.config.itq_iterations, self.config.bpbc_shape,
                                self.config.sklsh_pairs, self.config.progress)
        for n_bits in bits:
            sizes = [dim, hidden_width(dim, n_bits), n_bits]
            stack = self.manager.pretrain(data.train, sizes, "srbm")
            tuned, _ = self.manager.finetune(stack, data.train, "threshold")
            report.extend(self._evaluate_stack("UTH", tuned, data))
            for method in self.config.methods:
                model = hasher.fit(method, data.train, n_bits, self.config.seed)
                report.extend(self._evaluate(method, n_bits, data, hasher.encode(model, data.database)))
        self._write(report.to_frame(), "bitrate_sweep.csv")
        return report

    def run(self, name: str, data: ExperimentData):
        """Run one experiment by name and echo the configuration."""
        if name not in EXPERIMENTS:
            raise ArgumentError(f"Unknown experiment {name!r}; choose from {EXPERIMENTS}")
        runner = {
            "init": self.run_init_ablation,
            "sampling": self.run_sampling_ablation,
            "epochs": self.run_epoch_sweep,
            "bitrate": self.run_bitrate_sweep,
        }[name]
        self.logger.info(f"Running {name} experiment on {data.database.count} database items")
        result = runner(data)
        self.manager.echo_config()
        return result
