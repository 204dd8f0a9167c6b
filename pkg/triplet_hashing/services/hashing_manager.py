"""
Módulo de Servicio Gestor de Hashing
====================================

Este módulo proporciona la clase de servicio principal que encadena el
flujo completo: preentrenamiento SRBM, ajuste fino por tripletas, ajuste de
los esquemas de referencia, codificación, evaluación e histogramas de
distancias. Cada operación escribe en el directorio de salida y deja allí
la configuración resuelta.

Clases:
    HashingManager: Clase de servicio principal para el flujo de hashing
"""

import logging
import os
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from ..models.config import RunConfig
from ..models.descriptors import BinaryCodeSet, DescriptorDataset
from ..models.hashers import HasherModel
from ..models.rbm import SrbmStack, check_layer_sizes
from ..models.retrieval import DistanceHistogram, EvalReport
from ..utils.errors import ArgumentError, ConfigError
from ..utils.file_handler import FileHandler
from .baseline_hashers import BaselineHasher
from .data_loader import DataLoader, apply_minmax, normalize_minmax
from .embedding import encode_binary, random_unit_stack
from .rbm_trainer import RbmTrainer
from .retrieval import RetrievalEvaluator
from .triplet_finetuner import (
    EpochCallback,
    TripletFinetuner,
    build_distance_table,
    default_sampler_config,
    match_distance_histogram,
)


MODEL_FILE = "model.uthm"
NORM_FILE = "norm.csv"
LOSS_TRACE_FILE = "loss_trace.csv"
REPORT_FILE = "report.csv"
HISTOGRAM_FILE = "dist_hist.csv"
RESOLVED_CONFIG_FILE = "resolved_config.txt"

Searchable = Union[BinaryCodeSet, DescriptorDataset]


class HashingManager:
    """
    Runs the pipeline steps for one resolved configuration.

    Attributes:
        config (RunConfig): Resolved configuration
        output_dir (str): Directory receiving every output
        file_handler (FileHandler): Handler for file operations
        data_loader (DataLoader): Descriptor loading and normalization
        logger (logging.Logger): Logger instance
    """

    def __init__(self, config: RunConfig, file_handler: Optional[FileHandler] = None):
        self.config = config
        self.output_dir = config.output_dir
        self.file_handler = file_handler or FileHandler()
        self.data_loader = DataLoader(self.file_handler)
        self.logger = logging.getLogger(__name__)

        os.makedirs(self.output_dir, exist_ok=True)

    def output_path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    def echo_config(self) -> str:
        """Write the resolved configuration next to the outputs."""
        path = self.output_path(RESOLVED_CONFIG_FILE)
        self.file_handler.write_text(self.config.to_text(), path)
        return path

    # ------------------------------------------------------------------
    # Datos

    def _require(self, key: str) -> str:
        path = getattr(self.config, key)
        if not path:
            raise ConfigError(f"Configuration key {key} is required for this command")
        return path

    def load_training_set(self) -> DescriptorDataset:
        """
        Load and, when configured, normalize the training descriptors.

        The recorded ranges are written to norm.csv in the output directory.
        """
        train = self.data_loader.load(self._require("train_path"))
        if self.config.normalize:
            train = normalize_minmax(train)
            self.file_handler.save_norm_meta(train.norm_meta, self.output_path(NORM_FILE))
        return train

    def load_searchable(self, path: str, norm_path: Optional[str] = None) -> Searchable:
        """Load a code file, or a descriptor file normalized with recorded ranges."""
        if self.file_handler.detect_format(path) == "codes":
            return self.file_handler.load_codes(path)
        dataset = self.data_loader.load(path)
        if norm_path:
            dataset = apply_minmax(dataset, self.file_handler.load_norm_meta(norm_path))
        return dataset

    def training_subset(self, train: DescriptorDataset) -> DescriptorDataset:
        """Cap the number of distance-table rows at max_train_size."""
        cap = self.config.max_train_size
        if train.count <= cap:
            return train
        rng = np.random.default_rng([self.config.seed, 1])
        rows = np.sort(rng.choice(train.count, cap, replace=False))
        self.logger.info(f"Using {cap} of {train.count} training descriptors for the distance table")
        return train.subset(rows)

    # ------------------------------------------------------------------
    # Entrenamiento

    def resolve_layer_sizes(self, dim: int) -> List[int]:
        if not self.config.layer_sizes:
            raise ConfigError("layer_sizes is not set; give it explicitly or use a preset")
        return check_layer_sizes(self.config.layer_sizes, dim)

    def pretrain(self, train: DescriptorDataset, layer_sizes: List[int],
                 init: Optional[str] = None) -> SrbmStack:
        """
        Initial stack: greedy SRBM training or random unit-norm weights.

        Args:
            train (DescriptorDataset): Normalized training descriptors
            layer_sizes (List[int]): Unit counts from input dim to output bits
            init (Optional[str]): 'srbm' or 'uniw', defaults to the configured value
        """
        init = init or self.config.init
        if init == "uniw":
            check_layer_sizes(layer_sizes, train.dim)
            return random_unit_stack(layer_sizes, self.config.seed)
        trainer = RbmTrainer(self.config.rbm_config(), show_progress=self.config.progress)
        return trainer.train_stack(train, layer_sizes)

    def finetune(
        self,
        stack: SrbmStack,
        train: DescriptorDataset,
        mode: Optional[str] = None,
        epoch_callback: Optional[EpochCallback] = None,
    ) -> Tuple[SrbmStack, List[float]]:
        """
        Triplet fine-tuning on at most max_train_size training rows.

        Args:
            stack (SrbmStack): Initial network
            train (DescriptorDataset): Normalized training descriptors
            mode (Optional[str]): 'threshold' or 'uniform', defaults to the configured value
            epoch_callback (Optional[EpochCallback]): Per-epoch hook

        Returns:
            Tuple[SrbmStack, List[float]]: Fine-tuned stack and loss trace
        """
        cfg = self.config
        mode = mode or cfg.finetune
        subset = self.training_subset(train)
        sampler = default_sampler_config(
            subset, cfg.triplets_per_epoch, cfg.sampler_t_p, cfg.sampler_t_n,
            cfg.sampler_tolerance, seed=cfg.seed,
            p_percentile=cfg.sampler_p_percentile, n_percentile=cfg.sampler_n_percentile,
        )
        window = sampler if cfg.windowed_table else None
        table = build_distance_table(subset, window=window)
        finetuner = TripletFinetuner(sampler, cfg.finetune_config(), show_progress=cfg.progress)
        return finetuner.finetune(stack, subset, table, mode, epoch_callback)

    def train(self) -> Dict[str, str]:
        """
        Train a model from the configured training file.

        Writes model.uthm, norm.csv (when normalizing), loss_trace.csv (when
        fine-tuning) and resolved_config.txt.

        Returns:
            Dict[str, str]: Written paths by role
        """
        train = self.load_training_set()
        stack = self.pretrain(train, self.resolve_layer_sizes(train.dim))
        paths = {}
        if self.config.finetune != "off":
            stack, trace = self.finetune(stack, train)
            paths["loss_trace"] = self.output_path(LOSS_TRACE_FILE)
            self.file_handler.write_frame(
                pd.DataFrame({"epoch": np.arange(1, len(trace) + 1), "mean_loss": trace}),
                paths["loss_trace"],
            )
        paths["model"] = self.output_path(MODEL_FILE)
        self.file_handler.save_model(stack, paths["model"])
        if self.config.normalize:
            paths["normalization"] = self.output_path(NORM_FILE)
        paths["config"] = self.echo_config()
        return paths

    def fit_baselines(self) -> Dict[str, str]:
        """
        Fit every configured method at every configured bitrate.

        Returns:
            Dict[str, str]: Model path per ``method_bits`` label
        """
        train = self.load_training_set()
        hasher = BaselineHasher(self.config.itq_iterations, self.config.bpbc_shape,
                                self.config.sklsh_pairs, self.config.progress)
        paths = {}
        for method in self.config.methods:
            for bits in self.config.bits:
                label = f"{method}_{bits}"
                model = hasher.fit(method, train, bits, self.config.seed)
                paths[label] = self.output_path(f"{label}.uthm")
                self.file_handler.save_model(model, paths[label])
        paths["config"] = self.echo_config()
        return paths

    # ------------------------------------------------------------------
    # Codificación y evaluación

    def encode_dataset(self, model: Union[SrbmStack, HasherModel],
                       dataset: DescriptorDataset) -> BinaryCodeSet:
        if isinstance(model, SrbmStack):
            return encode_binary(model, dataset)
        return BaselineHasher().encode(model, dataset)

    def encode(self, model_path: str, input_path: str, output_path: str,
               norm_path: Optional[str] = None) -> BinaryCodeSet:
        """
        Encode a descriptor file with an SRBM or baseline model.

        Args:
            model_path (str): UTHM model file
            input_path (str): Descriptor file
            output_path (str): Output UTHB code file
            norm_path (Optional[str]): Training ranges applied before encoding

        Returns:
            BinaryCodeSet: The written codes
        """
        model = self.file_handler.load_model(model_path)
        dataset = self.data_loader.load(input_path)
        if norm_path:
            dataset = apply_minmax(dataset, self.file_handler.load_norm_meta(norm_path))
        codes = self.encode_dataset(model, dataset)
        self.file_handler.save_codes(codes, output_path)
        self.echo_config()
        return codes

    def evaluator(self, exclude_self: Optional[bool] = None) -> RetrievalEvaluator:
        return RetrievalEvaluator(
            self.config.recall_at,
            self.config.recall_mode,
            self.config.exclude_self if exclude_self is None else exclude_self,
            self.config.threads,
        )

    def evaluate(self, scheme: str = "uth", norm_path: Optional[str] = None) -> EvalReport:
        """
        Evaluate configured database and queries against the ground truth.

        Code files are searched by Hamming distance, descriptor files by
        squared Euclidean distance. Writes report.csv.

        Args:
            scheme (str): Scheme label for the report rows
            norm_path (Optional[str]): Ranges applied to descriptor inputs

        Returns:
            EvalReport: The report
        """
        database = self.load_searchable(self._require("database_path"), norm_path)
        query_path = self.config.query_path or self.config.database_path
        queries = self.load_searchable(query_path, norm_path)
        ground_truth = self.file_handler.load_ground_truth(self._require("ground_truth_path"))
        distractors = None
        if self.config.distractor_path:
            distractors = self.load_searchable(self.config.distractor_path, norm_path)
        bits = database.n_bits if isinstance(database, BinaryCodeSet) else None
        report = self.evaluator().evaluate(scheme, bits, database, queries, ground_truth, distractors)
        self.file_handler.write_frame(report.to_frame(), self.output_path(REPORT_FILE))
        self.echo_config()
        return report

    def distance_histogram(self, descriptor_path: str, match_path: str,
                           nonmatch_path: str, n_bins: int = 50) -> DistanceHistogram:
        """Write match / non-match squared-distance histograms to dist_hist.csv."""
        dataset = self.data_loader.load(descriptor_path)
        match_pairs = self.file_handler.load_pairs(match_path)
        nonmatch_pairs = self.file_handler.load_pairs(nonmatch_path)
        if not match_pairs or not nonmatch_pairs:
            raise ArgumentError("Pair files must not be empty")
        histogram = match_distance_histogram(match_pairs, nonmatch_pairs, dataset, n_bins)
        self.file_handler.write_frame(histogram.to_frame(), self.output_path(HISTOGRAM_FILE))
        self.echo_config()
        return histogram
