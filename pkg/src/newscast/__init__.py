"""Desk-scale news-to-return forecasting.

Mini encoder/decoder language models trained from scratch, LoRA fine-tuning
to predict forward stock returns from concatenated newsflow, decile metrics,
and a monthly-rebalanced portfolio backtester with a lexicon-sentiment
baseline.
"""

__version__ = "0.1.0"

from .backend import backend_name

__all__ = ["backend_name", "__version__"]
