from .base import (
    K_MAX,
    OOV_PENALTY,
    LanguageModel,
    LogitsModel,
    RankedCandidates,
    Token,
    TokenScore,
    candidate_entropy,
    log_softmax,
    top_k_indices,
)
from .reference import ReferenceLmConfig, ReferenceModel, bundled_corpus_path, bundled_human_path, split_words

__all__ = [
    "K_MAX",
    "OOV_PENALTY",
    "LanguageModel",
    "LogitsModel",
    "RankedCandidates",
    "ReferenceLmConfig",
    "ReferenceModel",
    "Token",
    "TokenScore",
    "bundled_corpus_path",
    "bundled_human_path",
    "candidate_entropy",
    "log_softmax",
    "split_words",
    "top_k_indices",
]
