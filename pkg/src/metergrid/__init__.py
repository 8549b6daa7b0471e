"""Smart energy-meter monitoring platform: simulator, ingest, billing."""

__version__ = "0.1.0"
