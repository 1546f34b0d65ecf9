"""fedfair: a deterministic federated-learning simulator with fairness analytics."""

__version__ = "0.1.0"

RESULTS_SCHEMA_VERSION = "1"
