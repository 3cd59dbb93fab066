"""Shared plotting setup for the narrative scripts."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

OUT = Path(__file__).resolve().parent / "out"
OUT.mkdir(exist_ok=True)
