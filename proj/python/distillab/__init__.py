"""Desk-scale contrastive sentence embeddings with logit distillation."""

from ._distillab import *  # noqa: F401,F403
from ._distillab import __doc__  # noqa: F401

__version__ = "0.1.0"
