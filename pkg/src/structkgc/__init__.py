"""Knowledge-graph completion with structure-augmented text encoders.

The package couples a from-scratch float64 autodiff core with a toy
transformer text encoder, trainable structural embeddings, three
contrastive negative-sampling strategies and a filtered-ranking
evaluation stack with relation-based re-ranking.
"""

__version__ = "0.1.0"
