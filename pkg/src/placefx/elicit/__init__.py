"""Structured four-prompt elicitation against a vision-language endpoint."""

from .chain import (
    ElicitationResult,
    EndpointRequest,
    EndpointUnavailable,
    HttpEndpointClient,
    PromptCache,
    PromptChainConfig,
    ValidationFailedAllRetries,
    run_chain,
)
from .mock import MockEndpointClient, mock_endpoint
from .schema import (
    BandCutpoint,
    BandValueMismatch,
    BandedEstimate,
    CountMismatch,
    IllegalZero,
    NotJson,
    Prompt1Response,
    Prompt2Response,
    ResponseValidationError,
    SchemaViolation,
    UnknownToken,
    validate_response,
)

__all__ = [
    "BandCutpoint",
    "BandValueMismatch",
    "BandedEstimate",
    "CountMismatch",
    "ElicitationResult",
    "EndpointRequest",
    "EndpointUnavailable",
    "HttpEndpointClient",
    "IllegalZero",
    "MockEndpointClient",
    "NotJson",
    "Prompt1Response",
    "Prompt2Response",
    "PromptCache",
    "PromptChainConfig",
    "ResponseValidationError",
    "SchemaViolation",
    "UnknownToken",
    "ValidationFailedAllRetries",
    "mock_endpoint",
    "run_chain",
    "validate_response",
]
