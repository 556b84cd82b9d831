"""Lexical, dense and hybrid retrieval with reciprocal rank fusion over system pools."""

from __future__ import annotations

from rankfusion.errors import ParseError, RankFusionError, ValidationError
from rankfusion.evaluation import Cutoffs, EvalResult, evaluate, evaluate_residual, residual_filter
from rankfusion.fusion import (
    FusionParams,
    RunPool,
    hierarchical_fuse,
    rescore_top,
    rrf_fuse,
    weighted_hierarchical_fuse,
)
from rankfusion.kernels import BACKEND
from rankfusion.lexical import BM25Params, InvertedIndex, QuerySpec, build_index, search
from rankfusion.stats import TTestReport, paired_t_test
from rankfusion.trec import Doc, Qrels, Run, RunEntry, Topic

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BM25Params",
    "Cutoffs",
    "Doc",
    "EvalResult",
    "FusionParams",
    "InvertedIndex",
    "ParseError",
    "Qrels",
    "QuerySpec",
    "RankFusionError",
    "Run",
    "RunEntry",
    "RunPool",
    "TTestReport",
    "Topic",
    "ValidationError",
    "build_index",
    "evaluate",
    "evaluate_residual",
    "hierarchical_fuse",
    "paired_t_test",
    "rescore_top",
    "residual_filter",
    "rrf_fuse",
    "search",
    "weighted_hierarchical_fuse",
]
