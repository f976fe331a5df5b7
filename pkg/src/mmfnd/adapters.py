"""Adapters for pretrained encoders (MuRIL, FLAVA, NASNet, BLIP-2, BERT).

Nothing here is imported unless a config names a non-stub backend, and no
weights ship with the kit. Encoders are frozen: they run under ``no_grad`` in
eval mode and only the fusion head is trained.

Image inputs arrive as float32 ``(224, 224, 3)`` arrays in [0, 1]. The
HuggingFace processors are called with ``do_rescale=False`` and apply their
own mean/std normalisation; the Keras NASNet adapter rescales to [0, 255]
and then applies ``nasnet.preprocess_input`` (maps to [-1, 1]).

Example backend specs::

    text_indic:   {kind: hf, model: google/muril-base-cased}
    text_english: {kind: hf, arch: flava_text, model: facebook/flava-full}
    image_patch:  {kind: hf, arch: flava_image, model: facebook/flava-full}
    multimodal:   {kind: hf, arch: flava_multimodal, model: facebook/flava-full}
    image_conv:   {kind: keras, model: NASNetLarge}
    caption_gen:  {kind: hf, arch: blip2, model: Salesforce/blip2-opt-2.7b}
    caption_text: {kind: hf, model: bert-base-uncased}
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from . import encoders as enc
from .errors import ConfigError


def _descriptor(role: str, spec: dict, dim: int, exclusive: bool = True) -> enc.EncoderBackendDescriptor:
    return enc.EncoderBackendDescriptor(
        backend_id=f"{spec.get('kind')}:{spec['model']}:{spec.get('arch', 'auto')}",
        role=role, output_dim=int(spec.get("output_dim", dim)),
        version=str(spec.get("revision", "main")), deterministic=True, exclusive=exclusive)


@dataclass
class HFVocab:
    tokenizer: Any

    @property
    def cls_id(self) -> int:
        return self.tokenizer.cls_token_id

    @property
    def sep_id(self) -> int:
        return self.tokenizer.sep_token_id

    @property
    def pad_id(self) -> int:
        return self.tokenizer.pad_token_id

    def tokenize(self, text: str) -> list[int]:
        return self.tokenizer(text, add_special_tokens=False)["input_ids"]


class HFTextEncoder:
    def __init__(self, role: str, spec: dict):
        import torch
        from transformers import AutoModel, AutoTokenizer, FlavaTextModel

        self._torch = torch
        name, rev = spec["model"], spec.get("revision", "main")
        self.vocab = HFVocab(AutoTokenizer.from_pretrained(name, revision=rev))
        model_cls = FlavaTextModel if spec.get("arch") == "flava_text" else AutoModel
        self.model = model_cls.from_pretrained(name, revision=rev).eval()
        self.descriptor = _descriptor(role, spec, self.model.config.hidden_size)

    def encode(self, seq: enc.TokenSequence) -> np.ndarray:
        torch = self._torch
        with torch.no_grad():
            out = self.model(input_ids=torch.tensor(seq.tokens[None, :]),
                             attention_mask=torch.tensor(seq.attention_mask[None, :].astype(np.int64)))
        return out.last_hidden_state[0].float().numpy()


def _pixel_values(processor, img: np.ndarray):
    return processor(images=[img], return_tensors="pt", do_rescale=False, do_resize=False)["pixel_values"]


class FlavaImageEncoder:
    def __init__(self, role: str, spec: dict):
        import torch
        from transformers import FlavaImageModel, FlavaImageProcessor

        self._torch = torch
        name, rev = spec["model"], spec.get("revision", "main")
        self.processor = FlavaImageProcessor.from_pretrained(name, revision=rev)
        self.model = FlavaImageModel.from_pretrained(name, revision=rev).eval()
        self.descriptor = _descriptor(role, spec, self.model.config.hidden_size)

    def encode(self, img: np.ndarray) -> np.ndarray:
        with self._torch.no_grad():
            out = self.model(pixel_values=_pixel_values(self.processor, img))
        return out.last_hidden_state[0, 0].float().numpy()


class FlavaMultimodalEncoder:
    def __init__(self, role: str, spec: dict):
        import torch
        from transformers import FlavaModel, FlavaProcessor

        self._torch = torch
        name, rev = spec["model"], spec.get("revision", "main")
        self.processor = FlavaProcessor.from_pretrained(name, revision=rev)
        self.model = FlavaModel.from_pretrained(name, revision=rev).eval()
        self.n_max = int(spec.get("n_max", enc.DEFAULT_N_MAX))
        self.descriptor = _descriptor(role, spec, self.model.config.multimodal_config.hidden_size)

    def encode(self, text: str, img: np.ndarray) -> np.ndarray:
        inputs = self.processor(text=[text], images=[img], return_tensors="pt", padding="max_length",
                                truncation=True, max_length=self.n_max, do_rescale=False, do_resize=False)
        with self._torch.no_grad():
            out = self.model(**inputs)
        return out.multimodal_embeddings[0, 0].float().numpy()


class Blip2Captioner:
    def __init__(self, role: str, spec: dict):
        import torch
        from transformers import Blip2ForConditionalGeneration, Blip2Processor

        self._torch = torch
        name, rev = spec["model"], spec.get("revision", "main")
        self.processor = Blip2Processor.from_pretrained(name, revision=rev)
        self.model = Blip2ForConditionalGeneration.from_pretrained(name, revision=rev).eval()
        self.max_new_tokens = int(spec.get("max_new_tokens", 30))
        self.descriptor = _descriptor(role, spec, 1)

    def generate(self, img: np.ndarray) -> str:
        inputs = self.processor(images=[img], return_tensors="pt", do_rescale=False)
        with self._torch.no_grad():
            ids = self.model.generate(**inputs, max_new_tokens=self.max_new_tokens, do_sample=False)
        return self.processor.batch_decode(ids, skip_special_tokens=True)[0].strip()


class KerasNASNetEncoder:
    """Global-average-pooled NASNet features (penultimate layer)."""

    def __init__(self, role: str, spec: dict):
        from tensorflow.keras.applications import nasnet

        arch = spec.get("model", "NASNetLarge")
        if arch not in ("NASNetLarge", "NASNetMobile"):
            raise ConfigError(f"unsupported NASNet variant {arch!r}")
        self._preprocess = nasnet.preprocess_input
        self.model = getattr(nasnet, arch)(include_top=False, pooling="avg",
                                           weights=spec.get("weights", "imagenet"),
                                           input_shape=enc.IMAGE_SHAPE)
        self.descriptor = _descriptor(role, {**spec, "model": arch}, int(self.model.output_shape[-1]),
                                      exclusive=False)

    def encode(self, img: np.ndarray) -> np.ndarray:
        x = self._preprocess(img[None].astype(np.float32) * 255.0)
        return np.asarray(self.model(x, training=False))[0]


_ARCHS = {
    ("hf", "auto"): HFTextEncoder,
    ("hf", "flava_text"): HFTextEncoder,
    ("hf", "flava_image"): FlavaImageEncoder,
    ("hf", "flava_multimodal"): FlavaMultimodalEncoder,
    ("hf", "blip2"): Blip2Captioner,
    ("keras", "auto"): KerasNASNetEncoder,
    ("keras", "nasnet"): KerasNASNetEncoder,
}

_ROLE_CLASSES = {
    enc.TEXT_INDIC: {HFTextEncoder}, enc.TEXT_ENGLISH: {HFTextEncoder}, enc.CAPTION_TEXT: {HFTextEncoder},
    enc.IMAGE_PATCH: {FlavaImageEncoder}, enc.MULTIMODAL: {FlavaMultimodalEncoder},
    enc.CAPTION_GEN: {Blip2Captioner}, enc.IMAGE_CONV: {KerasNASNetEncoder},
}


def resolve(role: str, spec: dict) -> type:
    """The adapter class a spec selects, validated against the role; loads nothing."""
    if "model" not in spec:
        raise ConfigError(f"backend for role {role!r} needs a 'model'")
    arch = spec.get("arch", "auto")
    cls = _ARCHS.get((spec.get("kind"), arch))
    if cls is None or cls not in _ROLE_CLASSES[role]:
        raise ConfigError(f"backend kind={spec.get('kind')!r} arch={arch!r} cannot serve role {role!r}")
    return cls


def build(role: str, spec: dict):
    return resolve(role, spec)(role, spec)
