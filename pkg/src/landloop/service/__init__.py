"""HTTP review service for the human failure-triage step."""

from .app import create_app
from .state import DecisionRecord, ReviewState, ServiceConfig, load_service_config

__all__ = [
    "create_app",
    "DecisionRecord",
    "ReviewState",
    "ServiceConfig",
    "load_service_config",
]
