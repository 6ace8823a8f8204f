"""Multilingual semantic slot extraction and sign-language gloss generation.

Pipeline pieces: template corpus generation, byte-level BPE tokenization, a
compact transformer slot extractor trained from scratch on CPU, gloss
transduction, evaluation/benchmarking, and a self-contained deployment
package format. `CsfExtractor` wraps the whole train/predict path behind a
scikit-learn style estimator.
"""

from .schema import (
    CONDITION_CATEGORIES,
    HEAD_CLASS_COUNTS,
    SLOT_NAMES,
    SLOT_VALUES,
    CsfFrame,
    SlotVocabulary,
    condition_category,
    index_to_label,
    label_to_index,
    vocabulary,
)
from .gloss import GLOSS_ORDER, frame_to_gloss, gloss_record, render_gloss
from .tokenizer import BpeTokenizer, Encoding
from .model import ModelConfig, ModelParameters, forward, init_parameters, predict, predict_batch
from .templates import TemplateBank
from .corpus import DatasetSplit, Sample, expand, read_dataset, write_dataset
from .trainer import TrainConfig, TrainHistory, train
from .evaluator import BenchReport, EvalReport, benchmark, confusion_pairs, evaluate
from .store import build_package, load_checkpoint, load_package, save_checkpoint
from .estimator import CsfExtractor

__version__ = "0.1.0"

__all__ = [
    "BenchReport",
    "BpeTokenizer",
    "CONDITION_CATEGORIES",
    "CsfExtractor",
    "CsfFrame",
    "DatasetSplit",
    "Encoding",
    "EvalReport",
    "GLOSS_ORDER",
    "HEAD_CLASS_COUNTS",
    "ModelConfig",
    "ModelParameters",
    "Sample",
    "SLOT_NAMES",
    "SLOT_VALUES",
    "SlotVocabulary",
    "TemplateBank",
    "TrainConfig",
    "TrainHistory",
    "benchmark",
    "build_package",
    "condition_category",
    "confusion_pairs",
    "evaluate",
    "expand",
    "forward",
    "frame_to_gloss",
    "gloss_record",
    "index_to_label",
    "init_parameters",
    "label_to_index",
    "load_checkpoint",
    "load_package",
    "predict",
    "predict_batch",
    "read_dataset",
    "render_gloss",
    "save_checkpoint",
    "train",
    "vocabulary",
    "write_dataset",
]
