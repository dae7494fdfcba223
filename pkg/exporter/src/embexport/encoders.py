"""Frozen encoders producing per-position embedding stacks.

Every encoder maps one input item to a (positions, dim) float array; pooling
(mean over positions, or the designated summary position 0) happens in the
export step. All built-in encoders are deterministic functions of their
input, so identical inputs always yield identical feature rows.
"""

from __future__ import annotations

import hashlib
import wave
from pathlib import Path

import numpy as np


class EncoderError(ValueError):
    """Unknown encoder, unreadable input, or encoder/layer mismatch."""


def _hash_vector(token: str, layer: int, dim: int) -> np.ndarray:
    """Deterministic pseudo-random unit-scale vector for one token."""
    digest = hashlib.sha256(f"{layer}\x00{token}".encode("utf-8")).digest()
    seed = int.from_bytes(digest[:8], "little")
    rng = np.random.default_rng(seed)
    return rng.standard_normal(dim)


class HashedTokenTextEncoder:
    """Offline text encoder: one hashed pseudo-embedding per whitespace token.

    A leading summary position aggregates the whole input (its hash covers
    the full text), mirroring the summary-token convention of transformer
    text encoders.
    """

    def __init__(self, dim: int = 64, layer: int = 0):
        if dim < 1:
            raise EncoderError("dim must be positive")
        self.dim = dim
        self.layer = layer

    def encode(self, item: dict) -> np.ndarray:
        text = item.get("text")
        if text is None:
            raise EncoderError("hash encoder needs a 'text' field")
        tokens = text.split()
        rows = [_hash_vector(text, self.layer, self.dim)]  # summary position
        rows += [_hash_vector(tok, self.layer, self.dim) for tok in tokens]
        return np.stack(rows)


class SpectralAudioEncoder:
    """Offline audio encoder: log-magnitude FFT features per fixed-size frame."""

    def __init__(self, dim: int = 64, frame: int = 1024, layer: int = 0):
        if dim < 1 or frame < 2 * dim:
            raise EncoderError("need frame >= 2*dim")
        self.dim = dim
        self.frame = frame
        self.layer = layer

    def _read_wav(self, path) -> np.ndarray:
        try:
            with wave.open(str(path), "rb") as wav:
                raw = wav.readframes(wav.getnframes())
                width = wav.getsampwidth()
                channels = wav.getnchannels()
        except (OSError, wave.Error) as e:
            raise EncoderError(f"unreadable audio file {path}: {e}") from None
        dtype = {1: np.int8, 2: np.int16, 4: np.int32}.get(width)
        if dtype is None:
            raise EncoderError(f"unsupported sample width {width} in {path}")
        samples = np.frombuffer(raw, dtype=dtype).astype(np.float64)
        if channels > 1:
            samples = samples.reshape(-1, channels).mean(axis=1)
        return samples / max(1.0, np.abs(samples).max())

    def encode(self, item: dict) -> np.ndarray:
        path = item.get("path")
        if path is None:
            raise EncoderError("spectral encoder needs a 'path' field")
        samples = self._read_wav(path)
        n_frames = max(1, len(samples) // self.frame)
        rows = []
        for f in range(n_frames):
            chunk = samples[f * self.frame : (f + 1) * self.frame]
            if len(chunk) < self.frame:
                chunk = np.pad(chunk, (0, self.frame - len(chunk)))
            spectrum = np.abs(np.fft.rfft(chunk))[: self.dim]
            rows.append(np.log1p(spectrum))
        stack = np.stack(rows)
        # summary position: whole-clip average prepended, like a [CLS] slot
        return np.vstack([stack.mean(axis=0), stack])


class TransformerTextEncoder:
    """Hidden states of a locally available Hugging Face text model."""

    def __init__(self, model_name: str, layer: int = -1):
        try:
            import torch  # noqa: F401
            from transformers import AutoModel, AutoTokenizer
        except ImportError as e:
            raise EncoderError(f"transformers backend unavailable: {e}") from None
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(model_name)
            self.model = AutoModel.from_pretrained(
                model_name, output_hidden_states=True
            )
        except Exception as e:
            raise EncoderError(f"cannot load model {model_name!r}: {e}") from None
        self.model.eval()
        self.layer = layer

    def encode(self, item: dict) -> np.ndarray:
        import torch

        text = item.get("text")
        if text is None:
            raise EncoderError("transformer text encoder needs a 'text' field")
        inputs = self.tokenizer(text, return_tensors="pt", truncation=True)
        with torch.no_grad():
            out = self.model(**inputs)
        hidden = out.hidden_states
        if not -len(hidden) <= self.layer < len(hidden):
            raise EncoderError(
                f"layer {self.layer} out of range for {len(hidden)} hidden states"
            )
        return hidden[self.layer][0].numpy().astype(np.float64)


def build_encoder(name: str, layer: int, dim: int):
    """Encoder registry: 'hash', 'spectral', or 'hf:<model-name>'."""
    if name == "hash":
        return HashedTokenTextEncoder(dim=dim, layer=layer)
    if name == "spectral":
        return SpectralAudioEncoder(dim=dim, layer=layer)
    if name.startswith("hf:"):
        return TransformerTextEncoder(name[3:], layer=layer)
    raise EncoderError(f"unknown encoder {name!r}")
