"""Multimodal, multilingual fake-news detection kit.

Four feature pathways (text, image, crossmodal, caption) feed a projection
and classification head. Stub encoders make the whole pipeline runnable and
bit-reproducible without pretrained weights.
"""

__version__ = "0.1.0"
