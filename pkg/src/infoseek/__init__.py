"""Simulator and evaluation harness for yes/no information-seeking games.

A hidden target city lives in a five-level geography taxonomy. A seeker
asks yes/no questions, an oracle answers truthfully, and a pruner removes
eliminated candidates; progress is scored in bits of information gained.
"""

from __future__ import annotations

__version__ = "0.1.0"
