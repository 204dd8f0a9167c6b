"""
Módulo de Utilidad de Validadores de Datos
==========================================

Este módulo proporciona utilidades de validación para descriptores,
vectores de probabilidad y verdad de referencia.

Clases:
    DataValidator: Clase principal para operaciones de validación de datos
"""

import logging
from typing import Any, Dict, Iterable, List, Sequence

import numpy as np

from .errors import ArgumentError, DataValidationError


class DataValidator:
    """
    Validation rules shared by the loaders and the training code.

    Attributes:
        logger (logging.Logger): Logger instance
        validation_rules (Dict[str, Any]): Tunable limits
    """

    def __init__(self):
        """Initialize the DataValidator."""
        self.logger = logging.getLogger(__name__)

        self.validation_rules = {
            "max_enumeration_units": 20,  # exact partition function cap
            "max_id_bytes": 0xFFFF,  # u16 length prefix in the id table
            "unit_interval_atol": 0.0,
        }

    def get_matrix_errors(self, data: np.ndarray) -> List[str]:
        """
        Get detailed problems of a descriptor matrix.

        Args:
            data (np.ndarray): Matrix to check

        Returns:
            List[str]: Validation error messages
        """
        errors = []
        if not isinstance(data, np.ndarray):
            return ["Descriptor data must be a numpy array"]
        if data.ndim != 2:
            errors.append(f"Descriptor data must be 2-D, got {data.ndim}-D")
            return errors
        if data.shape[1] == 0:
            errors.append("Descriptor dimension must be positive")
        finite = np.all(np.isfinite(data), axis=1)
        if not np.all(finite):
            row = int(np.flatnonzero(~finite)[0])
            errors.append(f"Descriptor data contains NaN/Inf values in row {row}")
        return errors

    def validate_matrix(self, data: np.ndarray) -> bool:
        """
        Validate a descriptor matrix, logging each problem.

        Args:
            data (np.ndarray): Matrix to check

        Returns:
            bool: True if the matrix is usable
        """
        errors = self.get_matrix_errors(data)
        for error in errors:
            self.logger.warning(f"Validation error: {error}")
        return not errors

    def check_finite_rows(self, data: np.ndarray) -> None:
        """
        Raise on the first row holding NaN or Inf.

        Raises:
            DataValidationError: Naming the offending row
        """
        finite = np.all(np.isfinite(data), axis=1)
        if not np.all(finite):
            row = int(np.flatnonzero(~finite)[0])
            self.logger.warning(f"Non-finite descriptor payload in row {row}")
            raise DataValidationError("Descriptor payload contains NaN/Inf", row=row)

    def check_ids(self, ids: Sequence[str]) -> None:
        """
        Check ids are unique and fit the id table encoding.

        Raises:
            DataValidationError: Duplicate or oversized id
        """
        limit = self.validation_rules["max_id_bytes"]
        seen = set()
        for row, item in enumerate(ids):
            if item in seen:
                raise DataValidationError(f"Duplicate id '{item}'", row=row)
            if len(item.encode("utf-8")) > limit:
                raise DataValidationError(f"Id longer than {limit} bytes", row=row)
            seen.add(item)

    def check_unit_interval(self, values: np.ndarray, name: str) -> None:
        """
        Require every value in [0, 1].

        Args:
            values (np.ndarray): Values to check
            name (str): Name used in the error message

        Raises:
            ArgumentError: If a value lies outside [0, 1]
        """
        atol = self.validation_rules["unit_interval_atol"]
        values = np.asarray(values)
        if values.size and (np.min(values) < -atol or np.max(values) > 1 + atol
                            or not np.all(np.isfinite(values))):
            raise ArgumentError(f"{name} must lie in [0, 1]")

    def check_enumerable(self, n_units: int) -> bool:
        return n_units <= self.validation_rules["max_enumeration_units"]

    def get_ground_truth_errors(
        self,
        relevant: Dict[str, Iterable[str]],
        query_ids: Iterable[str],
        database_ids: Iterable[str],
    ) -> List[str]:
        """
        Check ground truth against query and database ids.

        Args:
            relevant (Dict[str, Iterable[str]]): Query id -> relevant ids
            query_ids (Iterable[str]): Queries to evaluate
            database_ids (Iterable[str]): Searchable ids

        Returns:
            List[str]: Problems, naming offending ids
        """
        errors = []
        known = set(database_ids)
        missing_queries = [q for q in query_ids if q not in relevant]
        if missing_queries:
            errors.append("Queries without ground truth: " + ", ".join(sorted(missing_queries)[:20]))
        unresolved = sorted({r for rel in relevant.values() for r in rel} - known)
        if unresolved:
            errors.append("Unresolved relevant ids: " + ", ".join(unresolved[:20]))
        return errors

    def set_validation_rule(self, rule_name: str, value: Any) -> None:
        """
        Set a custom validation rule.

        Args:
            rule_name (str): Name of the rule
            value (Any): Rule value
        """
        self.validation_rules[rule_name] = value
        self.logger.info(f"Updated validation rule: {rule_name} = {value}")

    def get_validation_rules(self) -> Dict[str, Any]:
        return self.validation_rules.copy()
