"""
Módulo de Servicio Cargador de Datos
====================================

Este módulo proporciona la ingesta, normalización y partición de conjuntos
de descriptores, además del generador de conjuntos sintéticos por clusters.

Clases:
    SyntheticFixture: Conjunto sintético con verdad de referencia
    DataLoader: Clase de servicio para cargar y preparar descriptores
"""

import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..models.descriptors import DescriptorDataset, GroundTruth, NormMeta
from ..utils.errors import ArgumentError
from ..utils.file_handler import FileHandler


logger = logging.getLogger(__name__)


def normalize_minmax(dataset: DescriptorDataset) -> DescriptorDataset:
    """
    Map every dimension affinely onto [0, 1], recording (min, max).

    Constant dimensions map to 0.

    Args:
        dataset (DescriptorDataset): Input descriptors

    Returns:
        DescriptorDataset: Normalized copy with norm_meta set

    Raises:
        ArgumentError: Fewer than two rows, or every dimension constant
    """
    if dataset.count < 2:
        raise ArgumentError(f"Need at least 2 rows to normalize, got {dataset.count}")
    data = dataset.data.astype(np.float64)
    mins, maxs = data.min(axis=0), data.max(axis=0)
    if not np.any(maxs > mins):
        raise ArgumentError("Every dimension is constant; nothing to normalize")
    return apply_minmax(dataset, (mins, maxs))


def apply_minmax(dataset: DescriptorDataset, norm_meta: NormMeta) -> DescriptorDataset:
    """
    Normalize with previously recorded per-dimension ranges.

    Values falling outside the recorded range are clipped to [0, 1].

    Args:
        dataset (DescriptorDataset): Descriptors to map
        norm_meta (NormMeta): (mins, maxs) recorded on the training set

    Returns:
        DescriptorDataset: Normalized copy carrying norm_meta
    """
    mins = np.asarray(norm_meta[0], dtype=np.float64)
    maxs = np.asarray(norm_meta[1], dtype=np.float64)
    if mins.shape != (dataset.dim,) or maxs.shape != (dataset.dim,):
        raise ArgumentError(
            f"Normalization ranges of length {mins.size} do not match dim {dataset.dim}"
        )
    span = maxs - mins
    varying = span > 0
    scaled = np.zeros((dataset.count, dataset.dim), dtype=np.float64)
    scaled[:, varying] = (dataset.data[:, varying] - mins[varying]) / span[varying]
    np.clip(scaled, 0.0, 1.0, out=scaled)
    return DescriptorDataset(ids=dataset.ids, data=scaled.astype(np.float32),
                             norm_meta=(mins, maxs))


def split(
    dataset: DescriptorDataset,
    fractions: Tuple[float, float],
    seed: int,
) -> Tuple[DescriptorDataset, DescriptorDataset]:
    """
    Deterministically partition rows into train and test sets.

    Args:
        dataset (DescriptorDataset): Rows to partition
        fractions (Tuple[float, float]): (train, test), positive, summing to 1
        seed (int): Permutation seed

    Returns:
        Tuple[DescriptorDataset, DescriptorDataset]: (train, test), each in original row order
    """
    train_fraction, test_fraction = fractions
    if train_fraction <= 0 or test_fraction <= 0:
        raise ArgumentError(f"Fractions must be positive, got {fractions}")
    if abs(train_fraction + test_fraction - 1.0) > 1e-9:
        raise ArgumentError(f"Fractions must sum to 1, got {fractions}")
    permutation = np.random.default_rng(seed).permutation(dataset.count)
    n_train = int(round(train_fraction * dataset.count))
    train_rows = np.sort(permutation[:n_train])
    test_rows = np.sort(permutation[n_train:])
    return dataset.subset(train_rows), dataset.subset(test_rows)


@dataclass(frozen=True, eq=False)
class SyntheticFixture:
    """
    Gaussian cluster fixture for end-to-end checks.

    Attributes:
        train (DescriptorDataset): Independent training sample
        database (DescriptorDataset): Searchable set, also used as the query set
        ground_truth (GroundTruth): Same-cluster ids per database id, itself excluded
        labels (Dict[str, int]): Cluster label per id (train and database)
        match_pairs (List[Tuple[str, str]]): Same-cluster database pairs
        nonmatch_pairs (List[Tuple[str, str]]): Cross-cluster database pairs
    """

    train: DescriptorDataset
    database: DescriptorDataset
    ground_truth: GroundTruth
    labels: Dict[str, int]
    match_pairs: List[Tuple[str, str]]
    nonmatch_pairs: List[Tuple[str, str]]


def make_synthetic(
    n_clusters: int = 20,
    per_cluster: int = 50,
    dim: int = 128,
    sigma: float = 0.6,
    train_per_cluster: int = 50,
    n_match_pairs: int = 1000,
    seed: int = 0,
) -> SyntheticFixture:
    """
    Draw Gaussian clusters around unit-variance centers.

    Args:
        n_clusters (int): Number of clusters
        per_cluster (int): Database points per cluster
        dim (int): Descriptor dimension
        sigma (float): Within-cluster standard deviation
        train_per_cluster (int): Training points per cluster, drawn independently
        n_match_pairs (int): Match pairs to list; twice as many non-match pairs are listed
        seed (int): Random seed

    Returns:
        SyntheticFixture: The fixture
    """
    if n_clusters < 2 or per_cluster < 2:
        raise ArgumentError("Need at least 2 clusters of at least 2 points")
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((n_clusters, dim))

    def draw(count: int, prefix: str) -> Tuple[List[str], np.ndarray, np.ndarray]:
        labels = np.repeat(np.arange(n_clusters), count)
        data = centers[labels] + sigma * rng.standard_normal((labels.size, dim))
        ids = [f"{prefix}{c:03d}_{i:04d}" for c in range(n_clusters) for i in range(count)]
        return ids, data, labels

    db_ids, db_data, db_labels = draw(per_cluster, "db")
    tr_ids, tr_data, tr_labels = draw(train_per_cluster, "tr")

    members: Dict[int, List[str]] = {}
    for item, label in zip(db_ids, db_labels):
        members.setdefault(int(label), []).append(item)
    relevant = {
        item: [other for other in members[int(label)] if other != item]
        for item, label in zip(db_ids, db_labels)
    }

    match_pairs, nonmatch_pairs = [], []
    while len(match_pairs) < n_match_pairs:
        a, b = rng.choice(db_labels.size, 2, replace=False)
        if db_labels[a] == db_labels[b]:
            match_pairs.append((db_ids[a], db_ids[b]))
        elif len(nonmatch_pairs) < 2 * n_match_pairs:
            nonmatch_pairs.append((db_ids[a], db_ids[b]))
    while len(nonmatch_pairs) < 2 * n_match_pairs:
        a, b = rng.choice(db_labels.size, 2, replace=False)
        if db_labels[a] != db_labels[b]:
            nonmatch_pairs.append((db_ids[a], db_ids[b]))

    labels = {item: int(l) for item, l in zip(db_ids, db_labels)}
    labels.update({item: int(l) for item, l in zip(tr_ids, tr_labels)})
    return SyntheticFixture(
        train=DescriptorDataset(ids=tr_ids, data=tr_data.astype(np.float32)),
        database=DescriptorDataset(ids=db_ids, data=db_data.astype(np.float32)),
        ground_truth=GroundTruth(relevant),
        labels=labels,
        match_pairs=match_pairs,
        nonmatch_pairs=nonmatch_pairs,
    )


class DataLoader:
    """
    Service class for loading, preparing and writing descriptor sets.

    Attributes:
        file_handler (FileHandler): Handler for file operations
        logger (logging.Logger): Logger instance
    """

    def __init__(self, file_handler: Optional[FileHandler] = None):
        self.file_handler = file_handler or FileHandler()
        self.logger = logging.getLogger(__name__)

    def load(self, file_path: str, format_type: Optional[str] = None) -> DescriptorDataset:
        return self.file_handler.load_descriptors(file_path, format_type)

    def ingest(
        self,
        input_path: str,
        output_path: str,
        format_type: Optional[str] = None,
        normalize: bool = False,
        norm_path: Optional[str] = None,
    ) -> DescriptorDataset:
        """
        Convert a descriptor file to the binary format, optionally normalizing.

        Args:
            input_path (str): CSV or binary descriptor file
            output_path (str): Output UTHD path
            format_type (Optional[str]): Input format, detected when None
            normalize (bool): Min-max normalize; when norm_path exists its ranges are reused
            norm_path (Optional[str]): Where ranges are read from or recorded to

        Returns:
            DescriptorDataset: The written dataset
        """
        dataset = self.load(input_path, format_type)
        if normalize:
            if norm_path and os.path.exists(norm_path):
                dataset = apply_minmax(dataset, self.file_handler.load_norm_meta(norm_path))
                self.logger.info(f"Applied recorded ranges from {norm_path}")
            else:
                dataset = normalize_minmax(dataset)
                if norm_path:
                    self.file_handler.save_norm_meta(dataset.norm_meta, norm_path)
        self.file_handler.save_descriptors(dataset, output_path)
        return dataset

    def split_file(
        self,
        input_path: str,
        train_path: str,
        test_path: str,
        train_fraction: float,
        seed: int,
    ) -> Tuple[DescriptorDataset, DescriptorDataset]:
        train, test = split(self.load(input_path), (train_fraction, 1.0 - train_fraction), seed)
        self.file_handler.save_descriptors(train, train_path)
        self.file_handler.save_descriptors(test, test_path)
        self.logger.info(f"Split into {train.count} train / {test.count} test rows")
        return train, test

    def create_synthetic_dataset(self, output_dir: str, **kwargs) -> Dict[str, str]:
        """
        Generate the cluster fixture and write all of its files.

        Args:
            output_dir (str): Output directory
            **kwargs: Passed to make_synthetic

        Returns:
            Dict[str, str]: Written paths by role
        """
        fixture = make_synthetic(**kwargs)
        paths = {
            "train": os.path.join(output_dir, "train.uthd"),
            "database": os.path.join(output_dir, "database.uthd"),
            "ground_truth": os.path.join(output_dir, "ground_truth.tsv"),
            "match_pairs": os.path.join(output_dir, "match_pairs.csv"),
            "nonmatch_pairs": os.path.join(output_dir, "nonmatch_pairs.csv"),
        }
        self.file_handler.save_descriptors(fixture.train, paths["train"])
        self.file_handler.save_descriptors(fixture.database, paths["database"])
        self.file_handler.save_ground_truth(fixture.ground_truth, paths["ground_truth"])
        self.file_handler.save_pairs(fixture.match_pairs, paths["match_pairs"])
        self.file_handler.save_pairs(fixture.nonmatch_pairs, paths["nonmatch_pairs"])
        self.logger.info(f"Created synthetic fixture in {output_dir}")
        return paths
