"""Generator: code placement, batch layout, beam search, toy training."""

from __future__ import annotations

import random

import pytest
import torch

from countergen.corpus import GenerationExample
from countergen.encoders import Vocabulary, pad_id_batches
from countergen.errors import ConfigError, SchemaError
from countergen.features import default_vocabulary
from countergen.generator import (
    COUNTER_MARKER,
    HATE_MARKER,
    IGNORE_INDEX,
    AnnotatedExample,
    CodePlacement,
    GenerationConfig,
    GeneratorCheckpoint,
    annotated_examples,
    beam_search,
    build_generator_vocab,
    build_training_batch,
    feature_delta,
    generate,
    make_placement,
    validation_loss,
)
from countergen.toydata import make_template_corpus

VOCABULARY = default_vocabulary()


def example(context=(), query="some query words", response="a reply", qf=(), rf=()):
    return AnnotatedExample(
        example=GenerationExample(
            dialogue_id="d",
            turn_index=len(context),
            context=tuple(context),
            query=query,
            response=response,
            topic="robots",
        ),
        query_features=frozenset(qf),
        response_features=frozenset(rf),
    )


def vocab_for(examples, families=("big5", "humVal", "argSch", "argType")):
    return build_generator_vocab(
        list(examples), GenerationConfig(active_families=tuple(families)), VOCABULARY
    )


# -- feature delta ----------------------------------------------------------------

def test_delta_spec_example():
    placement = feature_delta(
        {"openness", "facts"}, {"facts", "rule_or_principle"}
    )
    assert placement.encoder_codes == {"openness"}
    assert placement.decoder_codes == {"rule_or_principle"}


def test_delta_empty_sets():
    placement = feature_delta(set(), set())
    assert placement.encoder_codes == frozenset()
    assert placement.decoder_codes == frozenset()


def test_delta_shared_codes_cancel():
    placement = feature_delta({"openness"}, {"openness"})
    assert placement.encoder_codes == frozenset()
    assert placement.decoder_codes == frozenset()


def test_delta_rejects_unknown_codes():
    with pytest.raises(SchemaError):
        feature_delta({"banana"}, set())


def test_delta_partition_property_against_set_oracle():
    rng = random.Random(4)
    codes = list(VOCABULARY.codes())
    for _ in range(200):
        query = frozenset(rng.sample(codes, rng.randint(0, 8)))
        response = frozenset(rng.sample(codes, rng.randint(0, 8)))
        placement = feature_delta(query, response)
        shared = query & response
        # brute-force set oracle: the three parts partition the union
        assert placement.encoder_codes | shared | placement.decoder_codes == query | response
        assert placement.encoder_codes.isdisjoint(shared)
        assert placement.decoder_codes.isdisjoint(shared)
        assert placement.encoder_codes.isdisjoint(placement.decoder_codes)
        assert placement.encoder_codes == query - response
        assert placement.decoder_codes == response - query


def test_placement_rejects_overlap():
    with pytest.raises(SchemaError):
        CodePlacement(frozenset({"openness"}), frozenset({"openness"}))


def test_make_placement_filters_then_deltas():
    config = GenerationConfig(active_families=("big5",))
    placement = make_placement(
        {"openness", "facts"}, {"facts", "neuroticism"}, config
    )
    # argType codes are gone before the delta, so "facts" never cancels anything
    assert placement.encoder_codes == {"openness"}
    assert placement.decoder_codes == {"neuroticism"}


# -- batch construction --------------------------------------------------------------

def test_baseline_encoder_is_query_alone():
    ex = example()
    config = GenerationConfig(active_families=())
    vocab = vocab_for([ex], families=())
    batch = build_training_batch(ex, vocab=vocab, config=config)
    expected = [vocab.id_of(HATE_MARKER)] + vocab.encode(ex.example.query)
    assert batch.encoder_ids[0] == expected


def test_family_filter_discards_before_placement():
    ex = example(qf=("openness",), rf=("facts", "benevolence_caring"))
    config = GenerationConfig(active_families=("argSch", "big5"))
    vocab = vocab_for([ex])
    batch = build_training_batch(ex, vocab=vocab, config=config)
    code_ids = {vocab.id_of(VOCABULARY.token(c)) for c in ("facts", "benevolence_caring")}
    # humval/argtype codes were filtered out before the delta
    assert not code_ids & set(batch.encoder_ids[0])
    assert not code_ids & set(batch.decoder_input_ids[0])
    openness = vocab.id_of(VOCABULARY.token("openness"))
    assert openness in batch.encoder_ids[0]


def test_token_count_accounting_oracle():
    rng = random.Random(8)
    for _ in range(40):
        context = [
            (f"h {i} " + " ".join(rng.choices("abcdef", k=rng.randint(1, 4))),
             f"c {i} " + " ".join(rng.choices("abcdef", k=rng.randint(1, 4))))
            for i in range(rng.randint(0, 3))
        ]
        qf = frozenset(rng.sample(("openness", "facts", "achievement"), rng.randint(0, 3)))
        ex = example(context=context, qf=qf)
        config = GenerationConfig(active_families=("big5", "humVal", "argSch", "argType"))
        vocab = vocab_for([ex])
        batch = build_training_batch(ex, vocab=vocab, config=config)
        # oracle: recount every contribution independently
        n_codes = len(qf)  # response features empty, so all query codes prefix
        expected = n_codes + sum(
            1 + len(h.split()) + 1 + len(c.split()) for h, c in context
        ) + 1 + len(ex.example.query.split())
        assert len(batch.encoder_ids[0]) == expected


def test_decoder_layout_and_target_alignment():
    ex = example(qf=(), rf=("facts", "question"))
    config = GenerationConfig(active_families=("argType",))
    vocab = vocab_for([ex])
    batch = build_training_batch(ex, vocab=vocab, config=config)
    dec = batch.decoder_input_ids[0]
    tgt = batch.target_ids[0]
    assert len(dec) == len(tgt)
    code_ids = [vocab.id_of(VOCABULARY.token(c)) for c in ("facts", "question")]
    assert dec[:2] == code_ids            # canonical order, codes before BOS
    assert dec[2] == vocab.bos_id
    assert dec[3:] == vocab.encode(ex.example.response)
    assert tgt[:2] == [IGNORE_INDEX, IGNORE_INDEX]
    assert tgt[2:-1] == vocab.encode(ex.example.response)
    assert tgt[-1] == vocab.eos_id


def test_truncation_drops_oldest_context_first():
    context = [(f"old {i} words here", f"reply {i} words here") for i in range(6)]
    ex = example(context=context)
    config = GenerationConfig(active_families=(), max_source_len=30)
    vocab = vocab_for([ex], families=())
    batch = build_training_batch(ex, vocab=vocab, config=config)
    ids = batch.encoder_ids[0]
    # query must survive at the tail
    assert ids[-len(vocab.encode(ex.example.query)) :] == vocab.encode(ex.example.query)
    old0 = vocab.id_of("old")
    joined = " ".join(str(i) for i in ids)
    # the oldest turn's distinctive index token "0" is gone, later ones may stay
    assert vocab.id_of("0") not in ids or old0 not in ids[:2]
    assert len(ids) <= 30


def test_overlong_query_truncates_tail_with_warning():
    ex = example(query=" ".join(f"w{i}" for i in range(50)))
    config = GenerationConfig(active_families=(), max_source_len=20)
    vocab = vocab_for([ex], families=())
    with pytest.warns(UserWarning, match="truncat"):
        batch = build_training_batch(ex, vocab=vocab, config=config)
    assert len(batch.encoder_ids[0]) == 20
    assert batch.encoder_ids[0][1] == vocab.id_of("w0")  # head kept, tail dropped


def test_placement_outside_active_families_rejected():
    ex = example()
    config = GenerationConfig(active_families=("big5",))
    vocab = vocab_for([ex])
    placement = CodePlacement(frozenset(), frozenset({"facts"}))
    with pytest.raises(ConfigError):
        build_training_batch(ex, placement, vocab=vocab, config=config)


def test_missing_code_token_raises_config_error():
    ex = example(rf=("facts",))
    config = GenerationConfig(active_families=("argType",))
    vocab = vocab_for([ex], families=())  # vocabulary without code tokens
    with pytest.raises(ConfigError, match="missing"):
        build_training_batch(ex, vocab=vocab, config=config)


def test_annotated_examples_mirror_corpus():
    corpus = make_template_corpus(n_turns=10, seed=0)
    examples = annotated_examples(corpus)
    assert len(examples) == 10
    for ex in examples:
        assert len(ex.response_features) == 1
        assert ex.example.context == ()


# -- beam search ------------------------------------------------------------------------

def greedy_oracle(model, enc_ids, enc_mask, seed_ids, max_len, eos_id):
    """Token-by-token argmax decode, independent of the beam implementation."""
    ids = list(seed_ids)
    with torch.no_grad():
        memory = model.encode(enc_ids, enc_mask)
        for _ in range(max_len):
            dec = torch.tensor([ids], dtype=torch.long)
            logits = model.decode(memory, enc_mask, dec)[0, -1]
            nxt = int(torch.argmax(logits))
            ids.append(nxt)
            if nxt == eos_id:
                break
    return ids


def test_beam_width_one_equals_greedy(template_toy):
    ck = template_toy.checkpoint
    vocab = ck.vocab
    for ex in template_toy.val_examples[:10]:
        enc_row = vocab.encode(ex.example.query)
        enc_ids, enc_mask = pad_id_batches(
            [[vocab.id_of(HATE_MARKER)] + enc_row], vocab.pad_id
        )
        seed = [vocab.bos_id]
        beams = beam_search(
            ck.model, enc_ids, enc_mask, seed, beam_width=1, max_len=16, eos_id=vocab.eos_id
        )
        oracle = greedy_oracle(ck.model, enc_ids, enc_mask, seed, 16, vocab.eos_id)
        assert beams[0][1] == oracle


def test_generation_deterministic(template_toy):
    ex = template_toy.val_examples[0]
    a = generate(
        ex.example.context, ex.example.query, ex.response_features,
        template_toy.checkpoint, query_features=ex.query_features,
    )
    b = generate(
        ex.example.context, ex.example.query, ex.response_features,
        template_toy.checkpoint, query_features=ex.query_features,
    )
    assert a.response == b.response
    assert a.beam_scores == b.beam_scores


def test_beam_scores_sorted_and_sized(template_toy):
    ex = template_toy.val_examples[0]
    result = generate(
        ex.example.context, ex.example.query, ex.response_features,
        template_toy.checkpoint, query_features=ex.query_features,
    )
    assert len(result.beam_scores) == 5
    assert list(result.beam_scores) == sorted(result.beam_scores, reverse=True)


def test_no_code_tokens_in_output(template_toy):
    for ex in template_toy.val_examples[:10]:
        result = generate(
            ex.example.context, ex.example.query, ex.response_features,
            template_toy.checkpoint, query_features=ex.query_features,
        )
        assert "<" not in result.response and ">" not in result.response


def test_inactive_family_code_rejected(template_toy):
    ex = template_toy.val_examples[0]
    with pytest.raises(ConfigError, match="inactive family"):
        generate(
            ex.example.context, ex.example.query, {"openness"},
            template_toy.checkpoint,
        )


def test_baseline_generates_without_codes(template_toy):
    ex = template_toy.val_examples[0]
    result = generate(
        ex.example.context, ex.example.query, frozenset(),
        template_toy.baseline_checkpoint,
    )
    assert isinstance(result.response, str) and result.response


def test_raw_decoder_codes_mode(template_toy):
    ex = template_toy.val_examples[0]
    cfg = GenerationConfig(
        active_families=("argType",), beam_width=5, max_target_len=16,
        max_source_len=64, decoder_codes_mode="raw",
    )
    result = generate(
        ex.example.context, ex.example.query, ex.response_features,
        template_toy.checkpoint, query_features=ex.query_features, config=cfg,
    )
    assert result.response  # same seeding here since query features are empty


# -- training contracts -------------------------------------------------------------------

def test_validation_loss_decreases_over_first_three_epochs(template_toy):
    losses = template_toy.history.val_loss
    assert losses[0] > losses[1] > losses[2]


def test_checkpoint_resume_reproduces_validation_loss(tmp_path, template_toy):
    directory = tmp_path / "ck"
    template_toy.checkpoint.save(directory)
    loaded = GeneratorCheckpoint.load(directory)
    recomputed = validation_loss(loaded, template_toy.val_examples)
    assert recomputed == pytest.approx(min(template_toy.history.val_loss), abs=1e-5)
    assert loaded.code_token_map == template_toy.checkpoint.code_token_map
    assert loaded.gen_config.active_families == ("argType",)


def test_template_accuracy_with_and_without_codes(template_toy):
    assert template_toy.accuracy_with_codes >= 0.9
    assert template_toy.accuracy_without_codes <= 0.3


def test_code_conditioning_improves_perplexity(template_toy):
    assert template_toy.ppl_with_codes <= template_toy.ppl_baseline


def test_baseline_vocabulary_is_unmodified(template_toy):
    base_vocab = template_toy.baseline_checkpoint.vocab
    assert not [t for t in base_vocab.tokens if t.startswith("<") and ":" not in t
                and t not in ("<pad>", "<unk>", "<bos>", "<eos>", "<sep>",
                              HATE_MARKER, COUNTER_MARKER)]
    assert template_toy.baseline_checkpoint.code_token_map == {}
