"""fedfair-report: read-only chart generation over fedfair results files."""

__version__ = "0.1.0"

SUPPORTED_RESULTS_SCHEMA = "1"
