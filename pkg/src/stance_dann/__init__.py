"""Stance detection with adversarial domain adaptation.

Claim/document pairs are encoded with bag-of-words and convolutional
features; a label head predicts the stance while a domain classifier
behind a gradient reversal layer pushes the learned features to be
domain-invariant, letting plentiful source-domain data improve a
low-resource target domain.
"""

from stance_dann.kernels import backend_name

__version__ = "0.1.0"

__all__ = ["backend_name", "__version__"]
