"""Control-code-conditioned encoder-decoder response generation.

Feature codes steer generation through their placement, computed as a set
delta between the query's and the response's features: codes only present in
the query prefix the encoder input, codes only present in the response seed
the decoder. Shared codes cancel. The encoder otherwise sees the dialogue
context and current query with per-role turn markers; the decoder is trained
with teacher forcing on the gold response.

The bundled model is a small randomly-initialized transformer encoder-decoder
over a word-level vocabulary, which keeps every mechanism (vocabulary
extension, code placement, beam search, checkpointing) exercisable on a CPU
in minutes. Model size and beam width are configuration.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import torch
import torch.nn.functional as F
from torch import nn

from .annotator import AnnotatedCorpus
from .corpus import GenerationExample
from .encoders import Vocabulary, pad_id_batches
from .errors import ConfigError, SchemaError, StateError
from .features import FeatureVocabulary, default_vocabulary
from .training import TrainHistory, TrainingConfig, run_training, seed_everything

IGNORE_INDEX = -100

HATE_MARKER = "<hatespeech>"
COUNTER_MARKER = "<counterspeech>"


# ---------------------------------------------------------------------------
# Code placement
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CodePlacement:
    """Where each feature code goes: encoder prefix or decoder seed."""

    encoder_codes: frozenset[str]
    decoder_codes: frozenset[str]

    def __post_init__(self) -> None:
        overlap = self.encoder_codes & self.decoder_codes
        if overlap:
            raise SchemaError(f"codes on both sides of the placement: {sorted(overlap)}")


def feature_delta(
    query_features: Sequence[str] | frozenset[str],
    response_features: Sequence[str] | frozenset[str],
    vocabulary: FeatureVocabulary | None = None,
) -> CodePlacement:
    """Encoder codes = query minus response; decoder codes = response minus query."""
    vocabulary = vocabulary or default_vocabulary()
    query = vocabulary.validate_codes(query_features)
    response = vocabulary.validate_codes(response_features)
    return CodePlacement(
        encoder_codes=query - response,
        decoder_codes=response - query,
    )


@dataclass(frozen=True)
class AnnotatedExample:
    """A generation example extended with its per-side feature sets."""

    example: GenerationExample
    query_features: frozenset[str]
    response_features: frozenset[str]


def annotated_examples(annotated: AnnotatedCorpus) -> list[AnnotatedExample]:
    """Derive per-turn training units from an annotated corpus."""
    out: list[AnnotatedExample] = []
    for dialogue in annotated:
        context: list[tuple[str, str]] = []
        for at in dialogue.turns:
            out.append(
                AnnotatedExample(
                    example=GenerationExample(
                        dialogue_id=dialogue.dialogue_id,
                        turn_index=at.turn.turn_index,
                        context=tuple(context),
                        query=at.turn.hate_text,
                        response=at.turn.counter_text,
                        topic=dialogue.topic,
                    ),
                    query_features=at.hate_features,
                    response_features=at.counter_features,
                )
            )
            context.append((at.turn.hate_text, at.turn.counter_text))
    return out


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class GenerationConfig:
    active_families: tuple[str, ...] = ()
    beam_width: int = 5
    max_source_len: int = 512
    max_target_len: int = 64
    context_window: int | None = None   # max context turns fed to the encoder
    decoder_codes_mode: str = "delta"   # "delta" or "raw" desired codes
    codes_before_bos: bool = True

    def __post_init__(self) -> None:
        if self.beam_width < 1:
            raise ConfigError("beam_width must be at least 1")
        if self.decoder_codes_mode not in ("delta", "raw"):
            raise ConfigError(f"unknown decoder_codes_mode {self.decoder_codes_mode!r}")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["active_families"] = list(self.active_families)
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "GenerationConfig":
        raw = dict(raw)
        raw["active_families"] = tuple(raw.get("active_families", ()))
        return cls(**raw)


@dataclass
class Seq2SeqSpec:
    d_model: int = 64
    nhead: int = 4
    encoder_layers: int = 2
    decoder_layers: int = 2
    dim_feedforward: int = 128
    max_len: int = 512
    dropout: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "Seq2SeqSpec":
        return cls(**raw)


# ---------------------------------------------------------------------------
# Batch construction
# ---------------------------------------------------------------------------

@dataclass
class GeneratorBatch:
    """Unpadded id rows; ``tensorize`` pads and builds attention masks."""

    encoder_ids: list[list[int]]
    decoder_input_ids: list[list[int]]
    target_ids: list[list[int]]

    def __post_init__(self) -> None:
        for dec, tgt in zip(self.decoder_input_ids, self.target_ids):
            if len(dec) != len(tgt):
                raise SchemaError("decoder input and target lengths differ")


def make_placement(
    query_features: Sequence[str] | frozenset[str],
    response_features: Sequence[str] | frozenset[str],
    config: GenerationConfig,
    vocabulary: FeatureVocabulary | None = None,
) -> CodePlacement:
    """Filter both feature sets to the active families, then take the delta."""
    vocabulary = vocabulary or default_vocabulary()
    qf = vocabulary.filter_to_families(query_features, config.active_families)
    rf = vocabulary.filter_to_families(response_features, config.active_families)
    return feature_delta(qf, rf, vocabulary)


def _code_ids(
    codes: frozenset[str], vocab: Vocabulary, vocabulary: FeatureVocabulary
) -> list[int]:
    ids = []
    for code in vocabulary.sort_codes(codes):
        token = vocabulary.token(code)
        if token not in vocab.index:
            raise ConfigError(f"code token {token!r} missing from the vocabulary")
        ids.append(vocab.index[token])
    return ids


def build_encoder_ids(
    context: Sequence[tuple[str, str]],
    query: str,
    encoder_codes: frozenset[str],
    vocab: Vocabulary,
    config: GenerationConfig,
    vocabulary: FeatureVocabulary | None = None,
) -> list[int]:
    """[code tokens][<hate> h <counter> c ...][<hate> query], oldest context
    turns dropped first when the result exceeds the source length limit."""
    vocabulary = vocabulary or default_vocabulary()
    code_ids = _code_ids(encoder_codes, vocab, vocabulary)
    hate_id = vocab.id_of(HATE_MARKER)
    counter_id = vocab.id_of(COUNTER_MARKER)
    query_ids = [hate_id] + vocab.encode(query)

    turns = list(context)
    if config.context_window is not None:
        turns = turns[len(turns) - config.context_window :] if config.context_window else []

    def total_len(active_turns: list[tuple[str, str]]) -> int:
        n = len(code_ids) + len(query_ids)
        for hate, counter in active_turns:
            n += 1 + len(vocab.encode(hate)) + 1 + len(vocab.encode(counter))
        return n

    while turns and total_len(turns) > config.max_source_len:
        turns.pop(0)

    ids = list(code_ids)
    for hate, counter in turns:
        ids += [hate_id] + vocab.encode(hate)
        ids += [counter_id] + vocab.encode(counter)
    ids += query_ids

    if len(ids) > config.max_source_len:
        warnings.warn("query exceeds max_source_len; truncating its tail", stacklevel=2)
        keep = config.max_source_len
        ids = ids[:keep]
    return ids


def build_training_batch(
    example: AnnotatedExample,
    placement: CodePlacement | None = None,
    *,
    vocab: Vocabulary,
    config: GenerationConfig,
    vocabulary: FeatureVocabulary | None = None,
) -> GeneratorBatch:
    """Single-example batch; codes are filtered to the active families before
    the delta decides their side."""
    vocabulary = vocabulary or default_vocabulary()
    if placement is None:
        placement = make_placement(
            example.query_features, example.response_features, config, vocabulary
        )
    else:
        for code in placement.encoder_codes | placement.decoder_codes:
            if vocabulary.family_of(code) not in config.active_families:
                raise ConfigError(
                    f"placement code {code!r} is outside the active families"
                )

    encoder_ids = build_encoder_ids(
        example.example.context,
        example.example.query,
        placement.encoder_codes,
        vocab,
        config,
        vocabulary,
    )

    decoder_code_ids = _code_ids(placement.decoder_codes, vocab, vocabulary)
    response_ids = vocab.encode(example.example.response)[: config.max_target_len]
    if config.codes_before_bos:
        decoder_input = decoder_code_ids + [vocab.bos_id] + response_ids
    else:
        decoder_input = [vocab.bos_id] + decoder_code_ids + response_ids
    # Code positions never contribute to the loss; the first predicted token
    # is the response's first word, the last is EOS.
    targets = [IGNORE_INDEX] * len(decoder_code_ids) + response_ids + [vocab.eos_id]

    return GeneratorBatch(
        encoder_ids=[encoder_ids],
        decoder_input_ids=[decoder_input],
        target_ids=[targets],
    )


def merge_batches(batches: Sequence[GeneratorBatch]) -> GeneratorBatch:
    return GeneratorBatch(
        encoder_ids=[row for b in batches for row in b.encoder_ids],
        decoder_input_ids=[row for b in batches for row in b.decoder_input_ids],
        target_ids=[row for b in batches for row in b.target_ids],
    )


def tensorize(
    batch: GeneratorBatch, pad_id: int
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
    enc_ids, enc_mask = pad_id_batches(batch.encoder_ids, pad_id)
    dec_ids, dec_mask = pad_id_batches(batch.decoder_input_ids, pad_id)
    width = dec_ids.shape[1]
    targets = torch.full((len(batch.target_ids), width), IGNORE_INDEX, dtype=torch.long)
    for row, seq in enumerate(batch.target_ids):
        targets[row, : len(seq)] = torch.tensor(seq, dtype=torch.long)
    return enc_ids, enc_mask, dec_ids, dec_mask, targets


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

class TinySeq2Seq(nn.Module):
    """Word-level transformer encoder-decoder with shared embeddings."""

    def __init__(self, vocab_size: int, spec: Seq2SeqSpec, pad_id: int):
        super().__init__()
        self.spec = spec
        self.pad_id = pad_id
        self.embedding = nn.Embedding(vocab_size, spec.d_model, padding_idx=pad_id)
        self.positions = nn.Embedding(spec.max_len, spec.d_model)
        enc_layer = nn.TransformerEncoderLayer(
            d_model=spec.d_model,
            nhead=spec.nhead,
            dim_feedforward=spec.dim_feedforward,
            dropout=spec.dropout,
            batch_first=True,
        )
        dec_layer = nn.TransformerDecoderLayer(
            d_model=spec.d_model,
            nhead=spec.nhead,
            dim_feedforward=spec.dim_feedforward,
            dropout=spec.dropout,
            batch_first=True,
        )
        # nested-tensor fast path disabled for deterministic padded batches
        self.encoder = nn.TransformerEncoder(
            enc_layer, num_layers=spec.encoder_layers, enable_nested_tensor=False
        )
        self.decoder = nn.TransformerDecoder(dec_layer, num_layers=spec.decoder_layers)
        self.out = nn.Linear(spec.d_model, vocab_size)

    def _embed(self, ids: torch.Tensor) -> torch.Tensor:
        b, t = ids.shape
        pos = torch.arange(t, device=ids.device).unsqueeze(0).expand(b, t)
        return self.embedding(ids) + self.positions(pos)

    def encode(self, enc_ids: torch.Tensor, enc_mask: torch.Tensor) -> torch.Tensor:
        return self.encoder(self._embed(enc_ids), src_key_padding_mask=enc_mask == 0)

    def decode(
        self,
        memory: torch.Tensor,
        memory_mask: torch.Tensor,
        dec_ids: torch.Tensor,
        dec_mask: torch.Tensor | None = None,
    ) -> torch.Tensor:
        t = dec_ids.shape[1]
        causal = torch.triu(
            torch.ones(t, t, dtype=torch.bool, device=dec_ids.device), diagonal=1
        )
        hidden = self.decoder(
            self._embed(dec_ids),
            memory,
            tgt_mask=causal,
            tgt_key_padding_mask=None if dec_mask is None else dec_mask == 0,
            memory_key_padding_mask=memory_mask == 0,
        )
        return self.out(hidden)

    def forward(
        self,
        enc_ids: torch.Tensor,
        enc_mask: torch.Tensor,
        dec_ids: torch.Tensor,
        dec_mask: torch.Tensor | None = None,
    ) -> torch.Tensor:
        memory = self.encode(enc_ids, enc_mask)
        return self.decode(memory, enc_mask, dec_ids, dec_mask)


def sequence_loss(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    return F.cross_entropy(
        logits.reshape(-1, logits.shape[-1]),
        targets.reshape(-1),
        ignore_index=IGNORE_INDEX,
    )


# ---------------------------------------------------------------------------
# Training and checkpoints
# ---------------------------------------------------------------------------

def build_generator_vocab(
    examples: Sequence[AnnotatedExample],
    config: GenerationConfig,
    vocabulary: FeatureVocabulary | None = None,
) -> Vocabulary:
    """Corpus vocabulary plus role markers, plus one token per active code."""
    vocabulary = vocabulary or default_vocabulary()
    texts: list[str] = []
    for ex in examples:
        texts.append(ex.example.query)
        texts.append(ex.example.response)
        for hate, counter in ex.example.context:
            texts.append(hate)
            texts.append(counter)
    extra = [HATE_MARKER, COUNTER_MARKER]
    for family in config.active_families:
        extra.extend(vocabulary.token(c) for c in vocabulary.codes(family))
    return Vocabulary.build(texts, extra_tokens=extra)


@dataclass
class GeneratorCheckpoint:
    model: TinySeq2Seq
    vocab: Vocabulary
    gen_config: GenerationConfig
    seq2seq_spec: Seq2SeqSpec
    vocabulary: FeatureVocabulary
    training_config: TrainingConfig | None = None
    history: TrainHistory | None = None

    @property
    def code_token_map(self) -> dict[str, int]:
        out = {}
        for family in self.gen_config.active_families:
            for code in self.vocabulary.codes(family):
                token = self.vocabulary.token(code)
                if token in self.vocab.index:
                    out[code] = self.vocab.index[token]
        return out

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        torch.save(self.model.state_dict(), directory / "model.pt")
        self.vocab.save(directory / "vocab.json")
        payload = {
            "gen_config": self.gen_config.to_dict(),
            "seq2seq_spec": self.seq2seq_spec.to_dict(),
            "families": {f: list(c) for f, c in self.vocabulary.families.items()},
            "code_token_map": self.code_token_map,
            "training_config": (
                self.training_config.to_dict() if self.training_config else None
            ),
            "history": (
                {
                    "train_loss": self.history.train_loss,
                    "val_loss": self.history.val_loss,
                    "stopped_epoch": self.history.stopped_epoch,
                    "steps": self.history.steps,
                }
                if self.history
                else None
            ),
        }
        (directory / "config.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, directory: str | Path) -> "GeneratorCheckpoint":
        directory = Path(directory)
        payload = json.loads((directory / "config.json").read_text(encoding="utf-8"))
        vocab = Vocabulary.load(directory / "vocab.json")
        gen_config = GenerationConfig.from_dict(payload["gen_config"])
        spec = Seq2SeqSpec.from_dict(payload["seq2seq_spec"])
        model = TinySeq2Seq(len(vocab), spec, vocab.pad_id)
        model.load_state_dict(torch.load(directory / "model.pt", weights_only=True))
        model.eval()
        history = None
        if payload.get("history"):
            history = TrainHistory(
                train_loss=payload["history"]["train_loss"],
                val_loss=payload["history"]["val_loss"],
                stopped_epoch=payload["history"]["stopped_epoch"],
                steps=payload["history"]["steps"],
            )
        training_config = (
            TrainingConfig.from_dict(payload["training_config"])
            if payload.get("training_config")
            else None
        )
        vocabulary = FeatureVocabulary(
            {f: tuple(c) for f, c in payload["families"].items()}
        )
        return cls(
            model=model,
            vocab=vocab,
            gen_config=gen_config,
            seq2seq_spec=spec,
            vocabulary=vocabulary,
            training_config=training_config,
            history=history,
        )


def train_generator(
    train_examples: Sequence[AnnotatedExample],
    val_examples: Sequence[AnnotatedExample],
    gen_config: GenerationConfig,
    seq2seq_spec: Seq2SeqSpec | None = None,
    training_config: TrainingConfig | None = None,
    vocabulary: FeatureVocabulary | None = None,
) -> tuple[GeneratorCheckpoint, TrainHistory]:
    """Teacher-forced cross-entropy training of the response generator."""
    vocabulary = vocabulary or default_vocabulary()
    spec = seq2seq_spec or Seq2SeqSpec()
    config = training_config or TrainingConfig(learning_rate=1e-5)
    vocab = build_generator_vocab(list(train_examples) + list(val_examples), gen_config, vocabulary)
    # Weight init draws from the global RNG; seed here so a checkpoint is a
    # pure function of (data, configs, seed) regardless of what ran before.
    seed_everything(config.seed)
    model = TinySeq2Seq(len(vocab), spec, vocab.pad_id)

    def batch_loss(m: TinySeq2Seq, batch: list[AnnotatedExample]):
        rows = [
            build_training_batch(ex, vocab=vocab, config=gen_config, vocabulary=vocabulary)
            for ex in batch
        ]
        enc_ids, enc_mask, dec_ids, dec_mask, targets = tensorize(
            merge_batches(rows), vocab.pad_id
        )
        logits = m(enc_ids, enc_mask, dec_ids, dec_mask)
        return sequence_loss(logits, targets)

    history = run_training(model, train_examples, val_examples, batch_loss, config)
    checkpoint = GeneratorCheckpoint(
        model=model,
        vocab=vocab,
        gen_config=gen_config,
        seq2seq_spec=spec,
        vocabulary=vocabulary,
        training_config=config,
        history=history,
    )
    return checkpoint, history


def validation_loss(
    checkpoint: GeneratorCheckpoint, examples: Sequence[AnnotatedExample]
) -> float:
    """Recompute the teacher-forced validation loss a checkpoint logged."""
    from .training import evaluate_loss

    config = checkpoint.training_config or TrainingConfig()

    def batch_loss(m: TinySeq2Seq, batch: list[AnnotatedExample]):
        rows = [
            build_training_batch(
                ex,
                vocab=checkpoint.vocab,
                config=checkpoint.gen_config,
                vocabulary=checkpoint.vocabulary,
            )
            for ex in batch
        ]
        enc_ids, enc_mask, dec_ids, dec_mask, targets = tensorize(
            merge_batches(rows), checkpoint.vocab.pad_id
        )
        return sequence_loss(m(enc_ids, enc_mask, dec_ids, dec_mask), targets)

    return evaluate_loss(checkpoint.model, list(examples), batch_loss, config)


# ---------------------------------------------------------------------------
# Beam search and generation
# ---------------------------------------------------------------------------

def beam_search(
    model: TinySeq2Seq,
    enc_ids: torch.Tensor,
    enc_mask: torch.Tensor,
    seed_ids: list[int],
    *,
    beam_width: int,
    max_len: int,
    eos_id: int,
) -> list[tuple[float, list[int]]]:
    """Deterministic beam search; scores are summed token log-probabilities.

    With beam_width 1 this is exactly greedy decoding. Ties break toward the
    lexicographically smaller token sequence.
    """
    model.eval()
    with torch.no_grad():
        memory = model.encode(enc_ids, enc_mask)
        beams: list[tuple[float, list[int], bool]] = [(0.0, list(seed_ids), False)]
        for _ in range(max_len):
            if all(done for _, _, done in beams):
                break
            candidates: list[tuple[float, list[int], bool]] = []
            for score, ids, done in beams:
                if done:
                    candidates.append((score, ids, True))
                    continue
                dec = torch.tensor([ids], dtype=torch.long)
                logits = model.decode(memory, enc_mask, dec)[0, -1]
                logprobs = F.log_softmax(logits, dim=-1)
                top = torch.topk(logprobs, min(beam_width, logprobs.shape[-1]))
                for lp, tok in zip(top.values.tolist(), top.indices.tolist()):
                    candidates.append(
                        (score + lp, ids + [tok], tok == eos_id)
                    )
            candidates.sort(key=lambda c: (-c[0], c[1]))
            beams = candidates[:beam_width]
    return [(score, ids) for score, ids, _ in beams]


@dataclass(frozen=True)
class GenerationResult:
    response: str
    beam_scores: tuple[float, ...]


def generate(
    context: Sequence[tuple[str, str]],
    query: str,
    desired_codes: Sequence[str] | frozenset[str],
    checkpoint: GeneratorCheckpoint,
    *,
    query_features: Sequence[str] | frozenset[str] = frozenset(),
    config: GenerationConfig | None = None,
) -> GenerationResult:
    """Generate a response conditioned on the desired feature codes.

    Decoder codes default to delta(desired, query features), mirroring the
    training convention; ``decoder_codes_mode="raw"`` seeds the desired codes
    verbatim. The top beam is returned with code and marker tokens stripped.
    """
    cfg = config or checkpoint.gen_config
    vocabulary = checkpoint.vocabulary
    desired = vocabulary.validate_codes(desired_codes)
    for code in desired:
        family = vocabulary.family_of(code)
        if family not in cfg.active_families:
            raise ConfigError(
                f"desired code {code!r} belongs to inactive family {family!r}"
            )
    qf = vocabulary.filter_to_families(query_features, cfg.active_families)

    if cfg.decoder_codes_mode == "delta":
        decoder_codes = frozenset(desired - qf)
    else:
        decoder_codes = frozenset(desired)
    encoder_codes = frozenset(qf - desired)

    vocab = checkpoint.vocab
    enc_row = build_encoder_ids(context, query, encoder_codes, vocab, cfg, vocabulary)
    enc_ids, enc_mask = pad_id_batches([enc_row], vocab.pad_id)
    code_ids = _code_ids(decoder_codes, vocab, vocabulary)
    seed = code_ids + [vocab.bos_id] if cfg.codes_before_bos else [vocab.bos_id] + code_ids

    beams = beam_search(
        checkpoint.model,
        enc_ids,
        enc_mask,
        seed,
        beam_width=cfg.beam_width,
        max_len=cfg.max_target_len,
        eos_id=vocab.eos_id,
    )
    top_score, top_ids = beams[0]
    response = vocab.decode(top_ids[len(seed) :], skip_special=True)
    leaked = [t for t in response.split() if t.startswith("<") and t.endswith(">")]
    if leaked:
        raise StateError(f"code tokens leaked into the response: {leaked}")
    return GenerationResult(
        response=response, beam_scores=tuple(score for score, _ in beams)
    )
