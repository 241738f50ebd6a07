"""Tri-modal (video, audio, language) explicit-content segment classification.

Library layout:

- :mod:`trifuse.tensor`: float64 tensors with tape-based reverse-mode autodiff
- :mod:`trifuse.fusion`: concatenation / unified / combinatorial attention models
- :mod:`trifuse.features`: mel spectrograms, frame statistics, hashed text features
- :mod:`trifuse.data`, :mod:`trifuse.training`, :mod:`trifuse.metrics`,
  :mod:`trifuse.experiments`: segmentation, training, F1 evaluation, harnesses
- :mod:`trifuse.summarize`: chunked captioning of explicit segments
- :mod:`trifuse.cli`: the ``trifuse`` command
"""

__version__ = "0.1.0"
