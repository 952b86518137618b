"""Aesthetic attribute captioning toolkit.

Builds attribute-labelled caption corpora by keyword transfer from a fully
annotated corpus, trains a multi-attribute captioner (shared convolutional
trunk, channel+spatial attention, per-attribute LSTM decoders) in two stages,
and scores generated captions with standard caption metrics.
"""

__version__ = "0.1.0"
