"""Hybrid P2P-CDN live streaming simulator and serving decision engine."""

__version__ = "0.1.0"
