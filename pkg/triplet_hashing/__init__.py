"""
Paquete de Hashing No Supervisado por Tripletas
===============================================

Compresión de descriptores globales de imagen en códigos binarios cortos
para búsqueda por distancia de Hamming.

Este paquete proporciona funcionalidad para:
- Ingesta, normalización y partición de descriptores
- Preentrenamiento voraz de pilas de RBMs por divergencia contrastiva
- Ajuste fino no supervisado con pérdida de ranking por tripletas
- Seis esquemas de hashing de referencia (LSH, SKLSH, SH, PCAHash, ITQ, BPBC)
- Búsqueda lineal exacta y métricas recall@R y mAP

Versión: 1.0.0
Licencia: MIT
"""

__version__ = "1.0.0"

from .models.config import FinetuneConfig, RbmTrainConfig, RunConfig, TripletSamplerConfig
from .models.descriptors import BinaryCodeSet, DescriptorDataset, GroundTruth
from .models.hashers import HasherModel, PcaModel
from .models.rbm import RbmLayer, SrbmStack
from .models.retrieval import DistanceHistogram, EvalReport, RankedList
from .services.data_loader import DataLoader
from .services.hashing_manager import HashingManager

__all__ = [
    "BinaryCodeSet",
    "DataLoader",
    "DescriptorDataset",
    "DistanceHistogram",
    "EvalReport",
    "FinetuneConfig",
    "GroundTruth",
    "HasherModel",
    "HashingManager",
    "PcaModel",
    "RankedList",
    "RbmLayer",
    "RbmTrainConfig",
    "RunConfig",
    "SrbmStack",
    "TripletSamplerConfig",
]
