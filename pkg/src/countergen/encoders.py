"""Text encoders shared by the detector models.

Every detector consumes a pooled sentence representation from a
bidirectional encoder. Which encoder is a configuration choice:

* ``tiny``   a small randomly-initialized transformer trained from scratch,
             word-level vocabulary; the default, and the one used by every
             test (runs on CPU in seconds).
* ``hf:<checkpoint>``  any pretrained bidirectional encoder available to the
             ``transformers`` library. Optional; requires the package and a
             downloaded checkpoint.

The pooled representation is the hidden state of the first token passed
through a tanh dense layer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Sequence

import torch
from torch import nn

from .errors import ConfigError, SchemaError

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
BOS_TOKEN = "<bos>"
EOS_TOKEN = "<eos>"
SEP_TOKEN = "<sep>"

BASE_SPECIAL_TOKENS = (PAD_TOKEN, UNK_TOKEN, BOS_TOKEN, EOS_TOKEN, SEP_TOKEN)


class Vocabulary:
    """Word-level vocabulary with stable integer ids.

    Tokenization is lowercased whitespace splitting; special tokens (and
    feature-code tokens, which are single angle-bracketed words) therefore
    survive as single tokens.
    """

    def __init__(self, tokens: Sequence[str]):
        self.tokens = list(tokens)
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise SchemaError("vocabulary contains duplicate tokens")
        for tok in BASE_SPECIAL_TOKENS:
            if tok not in self.index:
                raise SchemaError(f"vocabulary missing special token {tok!r}")

    # -- construction ----------------------------------------------------

    @classmethod
    def build(
        cls,
        texts: Sequence[str],
        *,
        extra_tokens: Sequence[str] = (),
        min_count: int = 1,
    ) -> "Vocabulary":
        counts: dict[str, int] = {}
        for text in texts:
            for tok in cls.tokenize(text):
                counts[tok] = counts.get(tok, 0) + 1
        words = sorted(tok for tok, n in counts.items() if n >= min_count)
        tokens = list(BASE_SPECIAL_TOKENS)
        tokens += [t for t in extra_tokens if t not in tokens]
        tokens += [w for w in words if w not in set(tokens)]
        return cls(tokens)

    @staticmethod
    def tokenize(text: str) -> list[str]:
        return text.lower().split()

    def add_tokens(self, tokens: Sequence[str]) -> list[int]:
        """Append new tokens (idempotent); returns their ids."""
        ids = []
        for tok in tokens:
            if tok not in self.index:
                self.index[tok] = len(self.tokens)
                self.tokens.append(tok)
            ids.append(self.index[tok])
        return ids

    # -- encode / decode ---------------------------------------------------

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def pad_id(self) -> int:
        return self.index[PAD_TOKEN]

    @property
    def unk_id(self) -> int:
        return self.index[UNK_TOKEN]

    @property
    def bos_id(self) -> int:
        return self.index[BOS_TOKEN]

    @property
    def eos_id(self) -> int:
        return self.index[EOS_TOKEN]

    @property
    def sep_id(self) -> int:
        return self.index[SEP_TOKEN]

    def id_of(self, token: str) -> int:
        return self.index.get(token, self.unk_id)

    def encode(self, text: str) -> list[int]:
        return [self.id_of(tok) for tok in self.tokenize(text)]

    def decode(self, ids: Sequence[int], *, skip_special: bool = True) -> str:
        words = []
        special = set(BASE_SPECIAL_TOKENS)
        for i in ids:
            tok = self.tokens[i]
            if skip_special and (tok in special or _is_marker(tok)):
                continue
            words.append(tok)
        return " ".join(words)

    # -- persistence -------------------------------------------------------

    def to_json(self) -> str:
        return json.dumps({"tokens": self.tokens}, ensure_ascii=False)

    @classmethod
    def from_json(cls, payload: str) -> "Vocabulary":
        return cls(json.loads(payload)["tokens"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def _is_marker(token: str) -> bool:
    return token.startswith("<") and token.endswith(">")


def pad_id_batches(
    sequences: Sequence[Sequence[int]], pad_id: int
) -> tuple[torch.Tensor, torch.Tensor]:
    """Pad variable-length id lists into (ids, attention_mask) long tensors."""
    width = max(len(s) for s in sequences)
    ids = torch.full((len(sequences), width), pad_id, dtype=torch.long)
    mask = torch.zeros((len(sequences), width), dtype=torch.long)
    for row, seq in enumerate(sequences):
        ids[row, : len(seq)] = torch.tensor(seq, dtype=torch.long)
        mask[row, : len(seq)] = 1
    return ids, mask


# ---------------------------------------------------------------------------
# Encoder spec and tiny encoder
# ---------------------------------------------------------------------------

@dataclass
class EncoderSpec:
    """Configuration naming an encoder. ``name`` is `tiny` or `hf:<checkpoint>`."""

    name: str = "tiny"
    d_model: int = 64
    nhead: int = 4
    num_layers: int = 2
    dim_feedforward: int = 128
    max_len: int = 256
    dropout: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "EncoderSpec":
        return cls(**raw)


class TinyTextEncoder(nn.Module):
    """Small bidirectional transformer with a first-token pooled output."""

    def __init__(self, vocab: Vocabulary, spec: EncoderSpec | None = None):
        super().__init__()
        self.spec = spec or EncoderSpec()
        self.vocab = vocab
        self.embedding = nn.Embedding(
            len(vocab), self.spec.d_model, padding_idx=vocab.pad_id
        )
        self.positions = nn.Embedding(self.spec.max_len, self.spec.d_model)
        layer = nn.TransformerEncoderLayer(
            d_model=self.spec.d_model,
            nhead=self.spec.nhead,
            dim_feedforward=self.spec.dim_feedforward,
            dropout=self.spec.dropout,
            batch_first=True,
        )
        # nested-tensor fast path disabled: keeps padded batches on the plain
        # deterministic kernel
        self.transformer = nn.TransformerEncoder(
            layer, num_layers=self.spec.num_layers, enable_nested_tensor=False
        )
        self.pooler = nn.Linear(self.spec.d_model, self.spec.d_model)

    @property
    def hidden_size(self) -> int:
        return self.spec.d_model

    def extend_embeddings(self, n_new: int) -> None:
        """Grow the embedding table after adding tokens to the vocabulary."""
        if n_new <= 0:
            return
        old = self.embedding
        new = nn.Embedding(
            old.num_embeddings + n_new, old.embedding_dim, padding_idx=old.padding_idx
        )
        with torch.no_grad():
            new.weight[: old.num_embeddings] = old.weight
        self.embedding = new

    def forward(
        self, input_ids: torch.Tensor, attention_mask: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Returns (hidden [B,T,H], pooled [B,H])."""
        b, t = input_ids.shape
        if t > self.spec.max_len:
            input_ids = input_ids[:, : self.spec.max_len]
            attention_mask = attention_mask[:, : self.spec.max_len]
            t = self.spec.max_len
        pos = torch.arange(t, device=input_ids.device).unsqueeze(0).expand(b, t)
        x = self.embedding(input_ids) + self.positions(pos)
        hidden = self.transformer(x, src_key_padding_mask=attention_mask == 0)
        pooled = torch.tanh(self.pooler(hidden[:, 0]))
        return hidden, pooled

    # -- text helpers --------------------------------------------------------

    def encode_texts(
        self, texts: Sequence[str], pair: Sequence[str] | None = None
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Build [BOS] a [EOS] (or [BOS] a [SEP] b [EOS]) id batches."""
        sequences = []
        for i, text in enumerate(texts):
            ids = [self.vocab.bos_id] + self.vocab.encode(text)
            if pair is not None:
                ids += [self.vocab.sep_id] + self.vocab.encode(pair[i])
            ids.append(self.vocab.eos_id)
            sequences.append(ids[: self.spec.max_len])
        return pad_id_batches(sequences, self.vocab.pad_id)

    def pool_texts(
        self, texts: Sequence[str], pair: Sequence[str] | None = None
    ) -> torch.Tensor:
        ids, mask = self.encode_texts(texts, pair)
        _, pooled = self.forward(ids, mask)
        return pooled


class PretrainedTextEncoder(nn.Module):
    """Adapter for a pretrained bidirectional encoder via `transformers`.

    Provided for configuration completeness; requires the optional
    ``transformers`` dependency and a locally available checkpoint. The test
    suite exercises the tiny encoder only.
    """

    def __init__(self, checkpoint: str):
        super().__init__()
        try:
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:  # pragma: no cover - optional dependency
            raise ConfigError(
                "encoder 'hf:...' requires the transformers package"
            ) from exc
        self.tokenizer = AutoTokenizer.from_pretrained(checkpoint)
        self.model = AutoModel.from_pretrained(checkpoint)
        self.pooler = nn.Linear(
            self.model.config.hidden_size, self.model.config.hidden_size
        )

    @property
    def hidden_size(self) -> int:  # pragma: no cover - optional dependency
        return self.model.config.hidden_size

    def pool_texts(self, texts, pair=None):  # pragma: no cover - optional dependency
        batch = self.tokenizer(
            list(texts),
            text_pair=list(pair) if pair is not None else None,
            padding=True,
            truncation=True,
            return_tensors="pt",
        )
        out = self.model(**batch)
        return torch.tanh(self.pooler(out.last_hidden_state[:, 0]))


def build_text_encoder(spec: EncoderSpec, vocab: Vocabulary | None = None) -> nn.Module:
    """Resolve an EncoderSpec to an encoder module."""
    if spec.name == "tiny":
        if vocab is None:
            raise ConfigError("the tiny encoder needs a vocabulary")
        return TinyTextEncoder(vocab, spec)
    if spec.name.startswith("hf:"):
        return PretrainedTextEncoder(spec.name[len("hf:") :])
    raise ConfigError(
        f"unknown encoder {spec.name!r}; expected 'tiny' or 'hf:<checkpoint>'"
    )
