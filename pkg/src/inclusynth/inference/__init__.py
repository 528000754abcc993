"""Concurrent inference over (endpoint, prompt, sample) combinations."""

from .backends import Backend, ChatCompletionsBackend
from .endpoints import ModelEndpoint, load_endpoints, parse_endpoints
from .harness import InferenceRecord, RunManifest, arun_inference, load_records, run_inference
from .mock import MockBackend, MockPolicy, mock_respond

__all__ = [
    "Backend",
    "ChatCompletionsBackend",
    "InferenceRecord",
    "MockBackend",
    "MockPolicy",
    "ModelEndpoint",
    "RunManifest",
    "arun_inference",
    "load_endpoints",
    "load_records",
    "mock_respond",
    "parse_endpoints",
    "run_inference",
]
