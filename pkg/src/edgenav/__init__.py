"""Latency-aware scheduling of on-board vs edge navigation inference for drones."""

from __future__ import annotations

__version__ = "0.1.0"
