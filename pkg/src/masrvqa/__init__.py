"""Three-agent retrieval-augmented pipeline for multiple-choice radiology VQA.

The pipeline chains a context agent (retrieve, rerank, vote task/category),
a multimodal reasoning agent (answer + explanation), and a validation agent
(confidence gate + revision) over pluggable model backends. ``VqaPipeline``
exposes the whole thing behind a fit/predict estimator API.
"""

from .metrics import EvalReport
from .orchestrator import PipelineDeps, RunResult, run_batch, run_example
from .pipeline import VqaPipeline
from .types import (
    AnswerLetter,
    ContextBundle,
    ImageRef,
    McqExample,
    PipelineConfig,
    PipelineMode,
    PipelineTrace,
    Prediction,
    RetrievalCandidate,
    RetrievedExample,
    validate_example,
)

__version__ = "0.1.0"

__all__ = [
    "AnswerLetter",
    "ContextBundle",
    "EvalReport",
    "ImageRef",
    "McqExample",
    "PipelineConfig",
    "PipelineDeps",
    "PipelineMode",
    "PipelineTrace",
    "Prediction",
    "RetrievalCandidate",
    "RetrievedExample",
    "RunResult",
    "VqaPipeline",
    "run_batch",
    "run_example",
    "validate_example",
    "__version__",
]
