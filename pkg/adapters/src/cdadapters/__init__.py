"""Thin adapters that run pretrained checkpoints (class-agnostic mask
generation, dense visual features, image/text embeddings) and export the
change-detection pipeline's provider file formats.

The adapters never post-process model outputs; every fusion decision stays in
the consuming pipeline so ablations remain attributable. A built-in ``--stub``
mode needs no checkpoint and carries the file-format contract in CI.
"""

__version__ = "0.1.0"
