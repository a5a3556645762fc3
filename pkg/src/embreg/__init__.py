"""Benchmark harness for regression over different input representations.

Builds regression tasks from closed-form objectives or offline tables, embeds
inputs with interchangeable backends (hand-engineered features, token pooling,
a seeded transformer encoder, or a remote embedding service), trains one fixed
MLP head, and diagnoses performance gaps with Lipschitz-factor smoothness
statistics.
"""

__version__ = "0.1.0"
