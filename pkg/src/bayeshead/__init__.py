"""Linear decision heads on fixed embedding vectors.

Deterministic (softmax/sigmoid) and mean-field Gaussian variational heads,
seeded minibatch training, multimodal fusion, ensembling, UAR / Spearman
evaluation, and Monte-Carlo confidence analysis.
"""

__version__ = "0.1.0"
