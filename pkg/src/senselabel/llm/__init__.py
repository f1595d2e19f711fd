"""Chat-completion backend client, rate limiting and a local mock server."""
from .client import (
    DEFAULT_RATE_PER_MINUTE,
    AnnotationRecord,
    BackendConfig,
    ChatClient,
    annotate_batch,
    estimate_tokens,
    read_log,
    write_log,
)
from .mock import MockBackend, mock_token_count, oracle_responder
from .ratelimit import SlidingWindowLimiter, VirtualClock, max_in_window
