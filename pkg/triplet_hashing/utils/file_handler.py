"""
Módulo de Utilidad Manejador de Archivos
========================================

Este módulo define los formatos binarios exactos del proyecto (descriptores
UTHD, códigos UTHB, modelos UTHM) y la lectura de CSV y manifiestos.

Clases:
    FileHandler: Clase principal para operaciones de archivos y manejo de formatos
"""

import logging
import os
import struct
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from ..models.descriptors import BinaryCodeSet, DescriptorDataset, GroundTruth, NormMeta
from ..models.hashers import HasherModel
from ..models.rbm import RbmLayer, SrbmStack
from .errors import ArgumentError, DataValidationError, FormatError
from .validators import DataValidator


DESCRIPTOR_MAGIC = b"UTHD"
CODE_MAGIC = b"UTHB"
MODEL_MAGIC = b"UTHM"
FORMAT_VERSION = 1
SRBM_MODEL_VERSION = 1
HASHER_MODEL_VERSION = 2


class _Reader:
    """Cursor over a byte buffer that reports the failing offset."""

    def __init__(self, buffer: bytes):
        self.buffer = buffer
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.buffer):
            raise FormatError(
                f"Truncated file while reading {what}: need {n} bytes, "
                f"{len(self.buffer) - self.offset} left",
                offset=self.offset,
            )
        chunk = self.buffer[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def u16(self, what: str) -> int:
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def array(self, count: int, dtype: str, what: str) -> np.ndarray:
        size = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(count * size, what), dtype=dtype, count=count).copy()

    def text(self, what: str) -> str:
        start = self.offset
        raw = self.take(self.u16(what), what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"Invalid UTF-8 in {what}", offset=start) from e

    def finish(self) -> None:
        if self.offset != len(self.buffer):
            raise FormatError(
                f"{len(self.buffer) - self.offset} unexpected trailing bytes", offset=self.offset
            )


def _pack_text(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


class FileHandler:
    """
    Reads and writes every file the pipeline produces or consumes.

    Attributes:
        logger (logging.Logger): Logger instance
        validator (DataValidator): Payload validation rules
        supported_formats (Dict[bytes, str]): Magic -> content kind
    """

    def __init__(self):
        """Initialize the FileHandler."""
        self.logger = logging.getLogger(__name__)
        self.validator = DataValidator()

        self.supported_formats = {
            DESCRIPTOR_MAGIC: "descriptors",
            CODE_MAGIC: "codes",
            MODEL_MAGIC: "model",
        }

    def detect_format(self, file_path: str) -> str:
        """
        Detect the content kind of a file from its magic or extension.

        Args:
            file_path (str): Path to the file

        Returns:
            str: 'descriptors', 'codes', 'model', 'csv' or 'Unknown'
        """
        if not os.path.exists(file_path):
            raise FileNotFoundError(f"File not found: {file_path}")
        with open(file_path, "rb") as f:
            magic = f.read(4)
        if magic in self.supported_formats:
            return self.supported_formats[magic]
        if file_path.lower().endswith(".csv"):
            return "csv"
        return "Unknown"

    def _read_bytes(self, file_path: str) -> bytes:
        if not os.path.exists(file_path):
            raise FileNotFoundError(f"File not found: {file_path}")
        with open(file_path, "rb") as f:
            return f.read()

    def _write_bytes(self, file_path: str, payload: bytes) -> None:
        directory = os.path.dirname(file_path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(file_path, "wb") as f:
            f.write(payload)
        self.logger.info(f"Wrote {len(payload)} bytes to {file_path}")

    def _read_header(self, reader: _Reader, magic: bytes) -> Tuple[int, int]:
        if reader.take(4, "magic") != magic:
            raise FormatError(f"Bad magic, expected {magic.decode()}", offset=0)
        version = reader.u32("version")
        if version != FORMAT_VERSION:
            raise FormatError(f"Unsupported version {version}", offset=4)
        return reader.u32("count"), reader.u32("dimension")

    def _read_ids(self, reader: _Reader, count: int) -> List[str]:
        ids = [reader.text(f"id {row}") for row in range(count)]
        self.validator.check_ids(ids)
        return ids

    def _pack_ids(self, ids: List[str]) -> bytes:
        self.validator.check_ids(ids)
        return b"".join(_pack_text(item) for item in ids)

    # ------------------------------------------------------------------
    # Descriptores

    def load_descriptors(self, file_path: str, format_type: Optional[str] = None) -> DescriptorDataset:
        """
        Load a descriptor dataset.

        Args:
            file_path (str): Path to the file
            format_type (Optional[str]): 'binary' or 'csv'; detected when None

        Returns:
            DescriptorDataset: Parsed dataset

        Raises:
            FileNotFoundError: If the file does not exist
            FormatError: Malformed header or payload, with byte offset
            DataValidationError: NaN/Inf payload or duplicate ids, naming the row
        """
        if format_type is None:
            format_type = "csv" if self.detect_format(file_path) == "csv" else "binary"
        if format_type == "csv":
            return self._load_descriptor_csv(file_path)
        if format_type != "binary":
            raise ArgumentError(f"Unknown descriptor format {format_type!r}")

        reader = _Reader(self._read_bytes(file_path))
        count, dim = self._read_header(reader, DESCRIPTOR_MAGIC)
        if dim == 0:
            raise FormatError("Header declares dim=0", offset=12)
        data = reader.array(count * dim, "<f4", "descriptor payload").reshape(count, dim)
        self.validator.check_finite_rows(data)
        ids = self._read_ids(reader, count)
        reader.finish()
        self.logger.info(f"Loaded {count}x{dim} descriptors from {file_path}")
        return DescriptorDataset(ids=ids, data=data)

    def save_descriptors(self, dataset: DescriptorDataset, file_path: str) -> None:
        """
        Save descriptors in the UTHD binary format.

        Args:
            dataset (DescriptorDataset): Dataset to write
            file_path (str): Output path
        """
        header = DESCRIPTOR_MAGIC + struct.pack("<III", FORMAT_VERSION, dataset.count, dataset.dim)
        payload = np.ascontiguousarray(dataset.data, dtype="<f4").tobytes()
        self._write_bytes(file_path, header + payload + self._pack_ids(dataset.ids))

    def _load_descriptor_csv(self, file_path: str) -> DescriptorDataset:
        if not os.path.exists(file_path):
            raise FileNotFoundError(f"File not found: {file_path}")
        try:
            frame = pd.read_csv(file_path, header=None, dtype=str, skipinitialspace=True,
                                keep_default_na=False, na_filter=False)
        except pd.errors.EmptyDataError as e:
            raise FormatError("Empty CSV file, descriptor dimension unknown", offset=0) from e
        except (pd.errors.ParserError, ValueError) as e:
            raise FormatError(f"Unparsable CSV: {e}") from e
        if frame.shape[1] < 2:
            raise FormatError("CSV rows need an id and at least one value", offset=0)
        # ids como "NA" o "null" se conservan; solo las celdas de valor vacías pasan a NaN
        cells = frame.iloc[:, 1:].to_numpy(dtype=object)
        cells[cells == ""] = np.nan
        try:
            data = cells.astype(np.float64)
        except ValueError as e:
            raise FormatError(f"Non-numeric descriptor value: {e}") from e
        # valores fuera de rango de float32 llegan como Inf
        data = data.astype(np.float32)
        self.validator.check_finite_rows(data)
        ids = frame.iloc[:, 0].astype(str).tolist()
        self.validator.check_ids(ids)
        self.logger.info(f"Loaded {data.shape[0]}x{data.shape[1]} descriptors from {file_path}")
        return DescriptorDataset(ids=ids, data=data)

    def save_descriptor_csv(self, dataset: DescriptorDataset, file_path: str) -> None:
        frame = pd.DataFrame(dataset.data.astype(np.float64))
        frame.insert(0, "id", dataset.ids)
        self.write_frame(frame, file_path, header=False)

    # ------------------------------------------------------------------
    # Códigos binarios

    def load_codes(self, file_path: str) -> BinaryCodeSet:
        """
        Load a UTHB code file.

        Raises:
            FormatError: Malformed header or truncated payload
            DataValidationError: Non-zero padding bits or duplicate ids
        """
        reader = _Reader(self._read_bytes(file_path))
        count, n_bits = self._read_header(reader, CODE_MAGIC)
        if n_bits == 0:
            raise FormatError("Header declares n_bits=0", offset=12)
        n_bytes = (n_bits + 7) // 8
        codes = reader.array(count * n_bytes, "u1", "code payload").reshape(count, n_bytes)
        ids = self._read_ids(reader, count)
        reader.finish()
        self.logger.info(f"Loaded {count} codes of {n_bits} bits from {file_path}")
        return BinaryCodeSet(ids=ids, n_bits=n_bits, codes=codes)

    def save_codes(self, code_set: BinaryCodeSet, file_path: str) -> None:
        header = CODE_MAGIC + struct.pack("<III", FORMAT_VERSION, code_set.count, code_set.n_bits)
        payload = np.ascontiguousarray(code_set.codes, dtype=np.uint8).tobytes()
        self._write_bytes(file_path, header + payload + self._pack_ids(code_set.ids))

    # ------------------------------------------------------------------
    # Modelos

    def save_model(self, model: Union[SrbmStack, HasherModel], file_path: str) -> None:
        """
        Save an SRBM stack (version 1) or a baseline hasher (version 2).

        SRBM parameters are stored as binary32; hasher arrays as binary64.

        Args:
            model (Union[SrbmStack, HasherModel]): Model to save
            file_path (str): Output path
        """
        if isinstance(model, SrbmStack):
            parts = [MODEL_MAGIC, struct.pack("<II", SRBM_MODEL_VERSION, len(model.layers))]
            for layer in model.layers:
                parts.append(struct.pack("<II", layer.n_vis, layer.n_hid))
                for array in (layer.weights, layer.bias_vis, layer.bias_hid):
                    parts.append(np.ascontiguousarray(array, dtype="<f4").tobytes())
        elif isinstance(model, HasherModel):
            parts = [MODEL_MAGIC, struct.pack("<I", HASHER_MODEL_VERSION), _pack_text(model.method),
                     struct.pack("<III", model.n_bits, model.dim, len(model.params))]
            for name in sorted(model.params):
                array = model.params[name]
                parts.append(_pack_text(name))
                parts.append(struct.pack("<I", array.ndim))
                parts.append(struct.pack(f"<{array.ndim}I", *array.shape))
                parts.append(np.ascontiguousarray(array, dtype="<f8").tobytes())
        else:
            raise ArgumentError(f"Cannot save object of type {type(model).__name__}")
        self._write_bytes(file_path, b"".join(parts))

    def load_model(self, file_path: str) -> Union[SrbmStack, HasherModel]:
        """
        Load a UTHM model file.

        Returns:
            Union[SrbmStack, HasherModel]: Model selected by the version field

        Raises:
            FormatError: Malformed content
        """
        reader = _Reader(self._read_bytes(file_path))
        if reader.take(4, "magic") != MODEL_MAGIC:
            raise FormatError("Bad magic, expected UTHM", offset=0)
        version = reader.u32("version")
        if version == SRBM_MODEL_VERSION:
            model = self._read_stack(reader)
        elif version == HASHER_MODEL_VERSION:
            model = self._read_hasher(reader)
        else:
            raise FormatError(f"Unsupported model version {version}", offset=4)
        reader.finish()
        self.logger.info(f"Loaded {model} from {file_path}")
        return model

    def _read_stack(self, reader: _Reader) -> SrbmStack:
        n_layers = reader.u32("layer count")
        if n_layers == 0:
            raise FormatError("Model declares zero layers", offset=8)
        layers = []
        for index in range(n_layers):
            start = reader.offset
            n_vis, n_hid = reader.u32("n_vis"), reader.u32("n_hid")
            if n_vis == 0 or n_hid == 0:
                raise FormatError(f"Layer {index} has an empty side", offset=start)
            weights = reader.array(n_vis * n_hid, "<f4", f"layer {index} weights")
            bias_vis = reader.array(n_vis, "<f4", f"layer {index} visible biases")
            bias_hid = reader.array(n_hid, "<f4", f"layer {index} hidden biases")
            try:
                layers.append(RbmLayer(weights.reshape(n_vis, n_hid), bias_vis, bias_hid))
            except DataValidationError as e:
                raise FormatError(f"Layer {index}: {e}", offset=start) from e
        try:
            return SrbmStack(layers)
        except ArgumentError as e:
            raise FormatError(str(e)) from e

    def _read_hasher(self, reader: _Reader) -> HasherModel:
        method = reader.text("method tag")
        n_bits, dim, n_arrays = reader.u32("n_bits"), reader.u32("dim"), reader.u32("array count")
        params: Dict[str, np.ndarray] = {}
        for _ in range(n_arrays):
            name = reader.text("array name")
            ndim = reader.u32(f"{name} ndim")
            shape = tuple(reader.u32(f"{name} shape") for _ in range(ndim))
            params[name] = reader.array(int(np.prod(shape, dtype=np.int64)), "<f8", name).reshape(shape)
        try:
            return HasherModel(method=method, n_bits=n_bits, dim=dim, params=params)
        except ArgumentError as e:
            raise FormatError(str(e)) from e

    # ------------------------------------------------------------------
    # Manifiestos y tablas

    def load_ground_truth(self, file_path: str) -> GroundTruth:
        """
        Read a ``query_id<TAB>rel1,rel2,...`` manifest.

        Raises:
            FormatError: Invalid UTF-8, a line without a tab or with an empty relevant list
        """
        relevant: Dict[str, List[str]] = {}
        offset = 0
        with open(file_path, "rb") as f:
            for raw in f:
                try:
                    line = raw.decode("utf-8").rstrip("\r\n")
                except UnicodeDecodeError as e:
                    raise FormatError("Ground truth is not valid UTF-8", offset=offset + e.start) from e
                if line.strip():
                    if "\t" not in line:
                        raise FormatError("Ground-truth line without a tab", offset=offset)
                    query_id, rest = line.split("\t", 1)
                    rel = [item.strip() for item in rest.split(",") if item.strip()]
                    if not rel:
                        raise FormatError(f"Query '{query_id}' has no relevant ids", offset=offset)
                    relevant.setdefault(query_id, []).extend(rel)
                offset += len(raw)
        self.logger.info(f"Loaded ground truth for {len(relevant)} queries from {file_path}")
        return GroundTruth(relevant)

    def save_ground_truth(self, ground_truth: GroundTruth, file_path: str) -> None:
        lines = [f"{q}\t{','.join(sorted(rel))}" for q, rel in ground_truth.relevant.items()]
        self._write_bytes(file_path, ("\n".join(lines) + "\n").encode("utf-8"))

    def load_pairs(self, file_path: str) -> List[Tuple[str, str]]:
        """
        Read an id-pair list, one ``id_a,id_b`` (or tab-separated) pair per line.

        Returns:
            List[Tuple[str, str]]: Pairs in file order

        Raises:
            FormatError: Invalid UTF-8 or a line with other than two fields
        """
        if not os.path.exists(file_path):
            raise FileNotFoundError(f"File not found: {file_path}")
        try:
            frame = pd.read_csv(file_path, header=None, sep=r"[,\t]", engine="python", dtype=str,
                                keep_default_na=False, na_filter=False)
        except pd.errors.EmptyDataError:
            return []
        except (pd.errors.ParserError, UnicodeDecodeError) as e:
            raise FormatError(f"Unparsable pair file: {e}") from e
        if frame.shape[1] != 2:
            raise FormatError(f"Pair file must have two columns, found {frame.shape[1]}")
        return list(zip(frame[0].str.strip(), frame[1].str.strip()))

    def save_pairs(self, pairs: List[Tuple[str, str]], file_path: str) -> None:
        self.write_frame(pd.DataFrame(pairs), file_path, header=False)

    def save_norm_meta(self, norm_meta: NormMeta, file_path: str) -> None:
        mins, maxs = norm_meta
        frame = pd.DataFrame({"dim": np.arange(mins.size), "min": mins, "max": maxs})
        self.write_frame(frame, file_path)

    def load_norm_meta(self, file_path: str) -> NormMeta:
        frame = pd.read_csv(file_path)
        if list(frame.columns) != ["dim", "min", "max"]:
            raise FormatError(f"Normalization file needs dim,min,max columns: {file_path}")
        return (frame["min"].to_numpy(np.float64), frame["max"].to_numpy(np.float64))

    def write_frame(self, frame: pd.DataFrame, file_path: str, header: bool = True) -> None:
        """Write a table as CSV with full float precision."""
        directory = os.path.dirname(file_path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        frame.to_csv(file_path, index=False, header=header, float_format="%.17g")
        self.logger.info(f"Wrote {len(frame)} rows to {file_path}")

    def write_text(self, text: str, file_path: str) -> None:
        self._write_bytes(file_path, text.encode("utf-8"))
