"""Data package: dataset ingestion, splits and statistics."""
