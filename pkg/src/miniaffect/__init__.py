"""miniaffect: desk-scale essay affect modeling.

Empathy/distress regression and 7-class emotion classification with a
from-scratch micro-transformer, tape-based autodiff, AdamW, pool-based
augmentation, prediction ensembling and a Pearson/macro-F1 evaluation harness.
"""

__version__ = "0.1.0"
