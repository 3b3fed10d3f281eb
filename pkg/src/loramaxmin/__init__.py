"""Max-min throughput planning for single-gateway LoRa cells."""

__version__ = "0.1.0"
