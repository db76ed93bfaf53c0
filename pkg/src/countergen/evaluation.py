"""Automatic evaluation: corpus BLEU, Rouge-L, perplexity, and the
feature-combination grid.

Metric tokenization is fixed for reproducibility: lowercase, words and
punctuation split apart. BLEU is corpus-level (aggregated clipped n-gram
counts with brevity penalty, no smoothing); a separately named smoothed
sentence BLEU exists for diagnostics only. Rouge-L is the LCS F-measure
with equal precision/recall weighting, averaged over sentences when
reported for a corpus. Perplexity is the exponentiated token-weighted mean
cross-entropy of the gold response under teacher forcing; control-code
positions are excluded from the loss mask.

The grid trains one generator per subset of the four feature families (16
rows including the no-feature baseline) with identical splits, seeds and
decode settings, and reports all three metrics per row.
"""

from __future__ import annotations

import json
import logging
import math
import random
import re
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import torch

from .errors import ConfigError, DimensionError
from .features import (
    FAMILY_ORDER,
    STRUCTURE_FAMILIES,
    VALUE_FAMILIES,
    FeatureVocabulary,
    default_vocabulary,
)
from .generator import (
    AnnotatedExample,
    GenerationConfig,
    GeneratorBatch,
    GeneratorCheckpoint,
    IGNORE_INDEX,
    Seq2SeqSpec,
    build_training_batch,
    generate,
    merge_batches,
    tensorize,
    train_generator,
)
from .training import TrainingConfig
from .taxonomy import train_validation_split

logger = logging.getLogger(__name__)

METRIC_TOKENIZATION = "lowercase; words and punctuation split"

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def metric_tokens(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


# ---------------------------------------------------------------------------
# BLEU
# ---------------------------------------------------------------------------

def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(
    hypotheses: Sequence[str], references: Sequence[str], max_n: int = 4
) -> float:
    """Corpus-level BLEU in [0, 100]: clipped n-gram counts aggregated over
    all pairs, geometric mean over orders 1..max_n, brevity penalty, no
    smoothing.

    Orders with no hypothesis n-grams at all (a corpus shorter than max_n
    everywhere) are excluded from the geometric mean, so identical corpora
    score 100 regardless of length; any order with zero matches still yields
    0 as usual.
    """
    if len(hypotheses) != len(references):
        raise DimensionError(
            f"hypothesis/reference counts differ: {len(hypotheses)} vs {len(references)}"
        )
    if not hypotheses:
        raise DimensionError("corpus_bleu needs at least one pair")

    clipped = [0] * max_n
    totals = [0] * max_n
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_toks = metric_tokens(hyp)
        ref_toks = metric_tokens(ref)
        hyp_len += len(hyp_toks)
        ref_len += len(ref_toks)
        for n in range(1, max_n + 1):
            hyp_counts = _ngrams(hyp_toks, n)
            ref_counts = _ngrams(ref_toks, n)
            totals[n - 1] += sum(hyp_counts.values())
            clipped[n - 1] += sum(
                min(count, ref_counts[gram]) for gram, count in hyp_counts.items()
            )

    if hyp_len == 0:
        return 0.0
    log_sum = 0.0
    orders = 0
    for c, t in zip(clipped, totals):
        if t == 0:
            continue
        if c == 0:
            return 0.0
        log_sum += math.log(c / t)
        orders += 1
    if orders == 0:
        return 0.0
    brevity = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / max(hyp_len, 1))
    return 100.0 * brevity * math.exp(log_sum / orders)


def sentence_bleu_smoothed(hypothesis: str, reference: str, max_n: int = 4) -> float:
    """Diagnostic sentence BLEU with add-one smoothing on orders above 1.

    Not comparable with corpus_bleu; clearly labeled as smoothed.
    """
    hyp_toks = metric_tokens(hypothesis)
    ref_toks = metric_tokens(reference)
    if not hyp_toks:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        hyp_counts = _ngrams(hyp_toks, n)
        ref_counts = _ngrams(ref_toks, n)
        total = sum(hyp_counts.values())
        clip = sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
        if n == 1:
            if clip == 0 or total == 0:
                return 0.0
            log_sum += math.log(clip / total)
        else:
            log_sum += math.log((clip + 1) / (total + 1))
    brevity = (
        1.0
        if len(hyp_toks) > len(ref_toks)
        else math.exp(1.0 - len(ref_toks) / len(hyp_toks))
    )
    return 100.0 * brevity * math.exp(log_sum / max_n)


# ---------------------------------------------------------------------------
# Rouge-L
# ---------------------------------------------------------------------------

def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_l(hypothesis: str, reference: str) -> float:
    """LCS-based F-measure in [0, 1] with equal precision/recall weighting."""
    hyp = metric_tokens(hypothesis)
    ref = metric_tokens(reference)
    if not hyp or not ref:
        return 0.0
    lcs = _lcs_length(hyp, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(hyp)
    recall = lcs / len(ref)
    return 2.0 * precision * recall / (precision + recall)


def rouge_l_corpus(hypotheses: Sequence[str], references: Sequence[str]) -> float:
    """Sentence-level Rouge-L averaged over pairs, scaled to [0, 100]."""
    if len(hypotheses) != len(references):
        raise DimensionError("hypothesis/reference counts differ")
    if not hypotheses:
        raise DimensionError("rouge_l_corpus needs at least one pair")
    return 100.0 * sum(rouge_l(h, r) for h, r in zip(hypotheses, references)) / len(
        hypotheses
    )


# ---------------------------------------------------------------------------
# Perplexity and macro-F1
# ---------------------------------------------------------------------------

def perplexity_from_batches(
    model, batches: Sequence[GeneratorBatch], pad_id: int
) -> float:
    """exp(token-weighted mean cross-entropy) over the non-masked targets."""
    if not batches:
        raise ConfigError("perplexity requires a non-empty dataset")
    total_nll = 0.0
    total_tokens = 0
    model.eval()
    with torch.no_grad():
        for batch in batches:
            enc_ids, enc_mask, dec_ids, dec_mask, targets = tensorize(batch, pad_id)
            logits = model(enc_ids, enc_mask, dec_ids, dec_mask)
            nll = torch.nn.functional.cross_entropy(
                logits.reshape(-1, logits.shape[-1]),
                targets.reshape(-1),
                ignore_index=IGNORE_INDEX,
                reduction="sum",
            )
            total_nll += float(nll)
            total_tokens += int((targets != IGNORE_INDEX).sum())
    if total_tokens == 0:
        raise ConfigError("perplexity dataset has no unmasked target tokens")
    return math.exp(total_nll / total_tokens)


def perplexity(
    checkpoint: GeneratorCheckpoint,
    examples: Sequence[AnnotatedExample],
    batch_size: int = 16,
) -> float:
    """Teacher-forced perplexity of the gold responses under a checkpoint.

    Batches are formatted exactly as in training (codes included per the
    checkpoint's active families); code positions are excluded from the loss.
    """
    if not examples:
        raise ConfigError("perplexity requires a non-empty dataset")
    batches = []
    for start in range(0, len(examples), batch_size):
        rows = [
            build_training_batch(
                ex,
                vocab=checkpoint.vocab,
                config=checkpoint.gen_config,
                vocabulary=checkpoint.vocabulary,
            )
            for ex in examples[start : start + batch_size]
        ]
        batches.append(merge_batches(rows))
    return perplexity_from_batches(checkpoint.model, batches, checkpoint.vocab.pad_id)


def macro_f1(
    true_rows: Sequence[Sequence[int]], pred_rows: Sequence[Sequence[int]]
) -> float:
    """Macro-averaged binary F1 over label columns (0 for empty classes)."""
    if len(true_rows) != len(pred_rows) or not true_rows:
        raise DimensionError("true/pred row counts differ or are empty")
    width = len(true_rows[0])
    scores = []
    for j in range(width):
        tp = fp = fn = 0
        for t_row, p_row in zip(true_rows, pred_rows):
            t, p = t_row[j], p_row[j]
            tp += int(t == 1 and p == 1)
            fp += int(t == 0 and p == 1)
            fn += int(t == 1 and p == 0)
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return sum(scores) / width


# ---------------------------------------------------------------------------
# Feature-combination grid
# ---------------------------------------------------------------------------

def grid_variants(
    families: Sequence[str] = FAMILY_ORDER,
) -> list[tuple[str, ...]]:
    """All subsets of the families (including the empty baseline), ordered by
    size then canonical family order."""
    families = tuple(families)
    subsets: list[tuple[str, ...]] = [()]
    for size in range(1, len(families) + 1):
        subsets.extend(_combinations(families, size))
    return subsets


def _combinations(families: tuple[str, ...], size: int) -> list[tuple[str, ...]]:
    from itertools import combinations

    return [tuple(c) for c in combinations(families, size)]


def variant_name(families: Sequence[str]) -> str:
    families = tuple(families)
    if not families:
        return "baseline"
    if set(families) == set(FAMILY_ORDER):
        return "all"
    order = {f: i for i, f in enumerate(FAMILY_ORDER)}
    return "+".join(sorted(families, key=order.__getitem__))


def parse_variant_name(name: str) -> tuple[str, ...]:
    if name == "baseline":
        return ()
    if name == "all":
        return FAMILY_ORDER
    families = tuple(name.split("+"))
    unknown = [f for f in families if f not in FAMILY_ORDER]
    if unknown:
        raise ConfigError(f"unknown families in variant {name!r}: {unknown}")
    order = {f: i for i, f in enumerate(FAMILY_ORDER)}
    return tuple(sorted(set(families), key=order.__getitem__))


def combo_type(families: Sequence[str]) -> str:
    fams = set(families)
    if not fams:
        return "Baseline"
    if fams <= set(VALUE_FAMILIES):
        return "Val"
    if fams <= set(STRUCTURE_FAMILIES):
        return "Struct"
    return "Val+Struct"


@dataclass
class MetricReport:
    row_id: int
    variant: str
    combo_type: str
    families: tuple[str, ...]
    bleu: float | None
    rouge_l: float | None
    perplexity: float | None
    sample_count: int
    status: str = "ok"
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "row_id": self.row_id,
            "variant": self.variant,
            "combo_type": self.combo_type,
            "families": list(self.families),
            "bleu": self.bleu,
            "rouge_l": self.rouge_l,
            "perplexity": self.perplexity,
            "sample_count": self.sample_count,
            "status": self.status,
            "error": self.error,
            "tokenization": METRIC_TOKENIZATION,
        }


def _context_display(example: AnnotatedExample) -> str:
    parts = []
    for hate, counter in example.example.context:
        parts.append(f"<hateSpeech> {hate}")
        parts.append(f"<counterSpeech> {counter}")
    parts.append(f"<hateSpeech> {example.example.query}")
    return " ".join(parts)


def evaluate_generator(
    checkpoint: GeneratorCheckpoint,
    examples: Sequence[AnnotatedExample],
) -> tuple[float, float, float, list[dict]]:
    """BLEU / Rouge-L / PPL of a checkpoint on examples, plus the raw
    generation records. Desired codes per example are its gold response
    features filtered to the checkpoint's active families."""
    cfg = checkpoint.gen_config
    vocabulary = checkpoint.vocabulary
    hypotheses: list[str] = []
    references: list[str] = []
    records: list[dict] = []
    for ex in examples:
        desired = vocabulary.filter_to_families(
            ex.response_features, cfg.active_families
        )
        result = generate(
            ex.example.context,
            ex.example.query,
            desired,
            checkpoint,
            query_features=ex.query_features,
        )
        hypotheses.append(result.response)
        references.append(ex.example.response)
        records.append(
            {
                "context": _context_display(ex),
                "query": ex.example.query,
                "response": result.response,
                "reference": ex.example.response,
                "codes": sorted(desired),
            }
        )
    bleu = corpus_bleu(hypotheses, references)
    rouge = rouge_l_corpus(hypotheses, references)
    ppl = perplexity(checkpoint, examples)
    return bleu, rouge, ppl, records


def _grid_row_task(task: dict) -> tuple[dict, list[dict]]:
    """Train and evaluate one grid row; runs in-process or in a worker.

    Self-seeding (via the shared training config) makes the result identical
    whether the row runs alone, in a restricted grid, or in parallel.
    """
    families = tuple(task["families"])
    vocabulary = FeatureVocabulary(
        {f: tuple(c) for f, c in task["vocabulary_families"].items()}
    )
    row_config = GenerationConfig.from_dict(
        {**task["gen_config"], "active_families": list(families)}
    )
    training_config = (
        TrainingConfig.from_dict(task["training_config"])
        if task["training_config"]
        else None
    )
    seq2seq_spec = (
        Seq2SeqSpec.from_dict(task["seq2seq_spec"]) if task["seq2seq_spec"] else None
    )
    try:
        checkpoint, _ = train_generator(
            task["train"],
            task["val"],
            row_config,
            seq2seq_spec=seq2seq_spec,
            training_config=training_config,
            vocabulary=vocabulary,
        )
        bleu, rouge, ppl, records = evaluate_generator(checkpoint, task["val"])
        report = MetricReport(
            row_id=task["row_id"],
            variant=task["name"],
            combo_type=combo_type(families),
            families=families,
            bleu=bleu,
            rouge_l=rouge,
            perplexity=ppl,
            sample_count=len(task["val"]),
        )
        if task["row_dir"] is not None:
            row_dir = Path(task["row_dir"])
            row_dir.mkdir(parents=True, exist_ok=True)
            checkpoint.save(row_dir / "checkpoint")
            (row_dir / "metrics.json").write_text(
                json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
                encoding="utf-8",
            )
            with (row_dir / "generations.jsonl").open("w", encoding="utf-8") as fh:
                for record in records:
                    fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        return report.to_dict(), records
    except Exception as exc:
        logger.exception("grid row %s failed", task["name"])
        report = MetricReport(
            row_id=task["row_id"],
            variant=task["name"],
            combo_type=combo_type(families),
            families=families,
            bleu=None,
            rouge_l=None,
            perplexity=None,
            sample_count=len(task["val"]),
            status="failed",
            error=f"{type(exc).__name__}: {exc}",
        )
        return report.to_dict(), []


def _report_from_dict(raw: dict) -> MetricReport:
    return MetricReport(
        row_id=raw["row_id"],
        variant=raw["variant"],
        combo_type=raw["combo_type"],
        families=tuple(raw["families"]),
        bleu=raw["bleu"],
        rouge_l=raw["rouge_l"],
        perplexity=raw["perplexity"],
        sample_count=raw["sample_count"],
        status=raw.get("status", "ok"),
        error=raw.get("error"),
    )


def run_feature_grid(
    examples: Sequence[AnnotatedExample],
    *,
    subsets: Sequence[Sequence[str]] | None = None,
    gen_config: GenerationConfig | None = None,
    seq2seq_spec: Seq2SeqSpec | None = None,
    training_config: TrainingConfig | None = None,
    validation_fraction: float = 0.2,
    split_seed: int = 13,
    workdir: str | Path | None = None,
    vocabulary: FeatureVocabulary | None = None,
    resume: bool = False,
    workers: int = 1,
) -> tuple[list[MetricReport], dict[str, list[dict]]]:
    """Train and evaluate one generator per feature-family subset.

    Every row shares the same train/validation split, seeds and decode
    settings; each row's training re-seeds, so a restricted rerun (or a
    parallel run with ``workers`` > 1) reproduces its rows exactly. A row
    that fails is reported with status "failed" and the grid continues.
    With ``workdir`` set, per-row artifacts (checkpoint, metrics,
    generations) are persisted; ``resume`` reuses a row's stored metrics.

    Returns (reports, generations-by-variant).
    """
    vocabulary = vocabulary or default_vocabulary()
    base = gen_config or GenerationConfig()
    variant_sets = (
        [tuple(s) for s in subsets] if subsets is not None else grid_variants()
    )
    train, val = train_validation_split(
        list(examples), validation_fraction=validation_fraction, seed=split_seed
    )
    if not train or not val:
        raise ConfigError("grid needs non-empty train and validation splits")

    reports: dict[int, MetricReport] = {}
    generations: dict[str, list[dict]] = {}
    tasks: list[dict] = []
    for row_id, families in enumerate(variant_sets, start=1):
        name = variant_name(families)
        row_dir = Path(workdir) / "rows" / name if workdir is not None else None
        if row_dir is not None and resume and (row_dir / "metrics.json").exists():
            stored = json.loads((row_dir / "metrics.json").read_text(encoding="utf-8"))
            stored["row_id"] = row_id
            reports[row_id] = _report_from_dict(stored)
            gen_file = row_dir / "generations.jsonl"
            if gen_file.exists():
                generations[name] = [
                    json.loads(line)
                    for line in gen_file.read_text(encoding="utf-8").splitlines()
                    if line
                ]
            logger.info("grid row %s: resumed from %s", name, row_dir)
            continue
        tasks.append(
            {
                "row_id": row_id,
                "name": name,
                "families": list(families),
                "train": train,
                "val": val,
                "gen_config": base.to_dict(),
                "seq2seq_spec": seq2seq_spec.to_dict() if seq2seq_spec else None,
                "training_config": (
                    training_config.to_dict() if training_config else None
                ),
                "row_dir": str(row_dir) if row_dir is not None else None,
                "vocabulary_families": {
                    f: list(c) for f, c in vocabulary.families.items()
                },
            }
        )

    if workers <= 1 or len(tasks) <= 1:
        results = [_grid_row_task(task) for task in tasks]
    else:
        import multiprocessing
        from concurrent.futures import ProcessPoolExecutor

        # spawn, not fork: forking a process with live torch thread pools
        # can deadlock the children
        context = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=workers, mp_context=context) as pool:
            results = list(pool.map(_grid_row_task, tasks))

    for task, (report_dict, records) in zip(tasks, results):
        reports[task["row_id"]] = _report_from_dict(report_dict)
        if records:
            generations[task["name"]] = records
    return [reports[row_id] for row_id in sorted(reports)], generations


def write_grid_csv(reports: Sequence[MetricReport], path: str | Path) -> None:
    import csv

    def display(report: MetricReport) -> str:
        if report.variant == "baseline":
            return "None"
        if report.variant == "all":
            return "All"
        return report.variant

    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ID", "Type", "Features", "BLEU", "RougeL", "PPL"])
        for report in reports:
            writer.writerow(
                [
                    report.row_id,
                    report.combo_type,
                    display(report),
                    "" if report.bleu is None else f"{report.bleu:.2f}",
                    "" if report.rouge_l is None else f"{report.rouge_l:.2f}",
                    "" if report.perplexity is None else f"{report.perplexity:.2f}",
                ]
            )


# ---------------------------------------------------------------------------
# Human-evaluation packets
# ---------------------------------------------------------------------------

PACKET_LEGEND = (
    "# Arg: argumentativeness, Likert 1 (low) .. 5 (high)",
    "# Flu: fluency, 0 = not fluent, 1 = fluent",
    "# Hal: hallucination, 0 = none, 1 = hallucinated or illogical content",
)

PACKET_COLUMNS = (
    "item_id",
    "blinded_variant",
    "context",
    "response",
    "ann1_arg",
    "ann1_flu",
    "ann1_hal",
    "ann2_arg",
    "ann2_flu",
    "ann2_hal",
)


def export_human_eval_packets(
    reports: Sequence[MetricReport],
    generations: Mapping[str, Sequence[dict]],
    *,
    sample_size: int,
    seed: int = 0,
    path: str | Path | None = None,
) -> tuple[list[dict], dict[str, str]]:
    """Blinded annotation packet for the variants that beat the baseline BLEU.

    Each sampled generation becomes one row with two blank annotator slots.
    Returns (rows, blinding key mapping blinded id -> variant name); the key
    is never written into the packet itself.
    """
    baseline = next(
        (r for r in reports if r.variant == "baseline" and r.status == "ok"), None
    )
    if baseline is None or baseline.bleu is None:
        raise ConfigError("packet export needs a successful baseline row")
    eligible = [
        r
        for r in reports
        if r.variant != "baseline"
        and r.status == "ok"
        and r.bleu is not None
        and r.bleu > baseline.bleu
    ]
    rng = random.Random(seed)
    ordered = sorted(r.variant for r in eligible)
    rng.shuffle(ordered)
    key = {f"V{i + 1:02d}": variant for i, variant in enumerate(ordered)}

    rows: list[dict] = []
    for blinded in sorted(key):
        variant = key[blinded]
        pool = list(generations.get(variant, ()))
        take = sample_size
        if take > len(pool):
            warnings.warn(
                f"variant {variant!r} has {len(pool)} generations; "
                f"capping sample at that",
                stacklevel=2,
            )
            take = len(pool)
        picked = rng.sample(range(len(pool)), take)
        for k, idx in enumerate(sorted(picked)):
            record = pool[idx]
            rows.append(
                {
                    "item_id": f"{blinded}-{k:03d}",
                    "blinded_variant": blinded,
                    "context": record["context"],
                    "response": record["response"],
                    "ann1_arg": "",
                    "ann1_flu": "",
                    "ann1_hal": "",
                    "ann2_arg": "",
                    "ann2_flu": "",
                    "ann2_hal": "",
                }
            )
    if path is not None:
        _write_packet_csv(rows, path)
    return rows, key


def _write_packet_csv(rows: Sequence[dict], path: str | Path) -> None:
    import csv

    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        for line in PACKET_LEGEND:
            fh.write(line + "\n")
        writer = csv.DictWriter(fh, fieldnames=PACKET_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def read_packet_csv(path: str | Path) -> list[dict]:
    import csv

    with Path(path).open(encoding="utf-8", newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))
