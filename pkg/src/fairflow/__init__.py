"""Provenance-first data ingestion and analysis orchestration engine."""

__version__ = "0.1.0"
