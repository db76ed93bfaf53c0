"""Command-line entry point wiring the pipeline into reproducible runs.

Every command reads one declarative JSON config (``--config``), optionally
overridden by repeated ``--set key=value`` flags (flags win), and writes its
artifacts under a run directory containing::

    config.json     the effective configuration
    manifest.json   config hash, master seed, versions, status, artifacts
    artifacts/      command outputs
    logs/           per-run log file

Commands: ingest, train-values, train-argtype, annotate, train-generator,
generate, eval-grid, report, export-humeval.

Exit codes: 0 success, 1 usage/config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import __version__
from .errors import ConfigError, PipelineError
from .features import FAMILY_ARGSCH, FAMILY_ARGTYPE, FAMILY_BIG5, FAMILY_HUMVAL, FAMILY_ORDER

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    """Declarative run configuration; defaults follow the documented recipe
    (classifier/generator learning rate 1e-5, embedder 2e-5, early-stop
    patience 4 for the classifier and 5 for the embedders, beam width 5)."""

    # inputs
    corpus: str | None = None
    corpus_format: str = "canonical"
    taxonomy: str | None = None
    arguments_train: str | None = None
    arguments_validation: str | None = None
    pairs_train: str | None = None
    annotated_corpus: str | None = None
    checkpoint: str | None = None

    # outputs
    output_dir: str = "runs"
    run_name: str | None = None

    # reproducibility
    master_seed: int = 0

    # feature families active for generation
    families: list[str] = field(default_factory=lambda: list(FAMILY_ORDER))

    # learning rates and early stopping
    classifier_learning_rate: float = 1e-5
    embedder_learning_rate: float = 2e-5
    generator_learning_rate: float = 1e-5
    classifier_patience: int = 4
    embedder_patience: int = 5
    generator_patience: int = 5

    # decoding and batching
    beam_width: int = 5
    batch_size: int = 16
    max_epochs: int = 50
    max_steps: int | None = None
    decision_threshold: float = 0.5
    validation_fraction: float = 0.1
    max_source_len: int = 512
    max_target_len: int = 64

    # data prep
    quadruple_total: int = 702
    entailment_negative_ratio: float = 1.0

    # model sizes (tiny defaults; "hf:<checkpoint>" selects a pretrained encoder)
    encoder: dict = field(default_factory=dict)
    encoder_b: dict = field(default_factory=lambda: {"d_model": 96})
    seq2seq: dict = field(default_factory=dict)

    def validate(self, *, require: Sequence[str] = ()) -> None:
        problems: list[str] = []
        for name in require:
            value = getattr(self, name)
            if value is None:
                problems.append(f"{name}: required for this command")
            elif name in (
                "corpus",
                "taxonomy",
                "arguments_train",
                "arguments_validation",
                "pairs_train",
                "annotated_corpus",
                "checkpoint",
            ):
                if not str(value).startswith("@") and not Path(value).exists():
                    problems.append(f"{name}: path does not exist: {value}")
        unknown = [f for f in self.families if f not in FAMILY_ORDER]
        if unknown:
            problems.append(f"families: unknown {unknown}")
        if self.beam_width < 1:
            problems.append("beam_width: must be >= 1")
        if not 0 < self.validation_fraction < 1:
            problems.append("validation_fraction: must be in (0, 1)")
        if problems:
            raise ConfigError("; ".join(problems))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_file(cls, path: str | Path | None, overrides: Sequence[str] = ()) -> "RunConfig":
        raw: dict = {}
        if path is not None:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        config = cls(**raw)
        for override in overrides:
            if "=" not in override:
                raise ConfigError(f"--set expects key=value, got {override!r}")
            key, value = override.split("=", 1)
            if key not in known:
                raise ConfigError(f"unknown config field {key!r}")
            try:
                parsed = json.loads(value)
            except json.JSONDecodeError:
                parsed = value
            setattr(config, key, parsed)
        return config

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    # -- derived objects -----------------------------------------------------

    def training(self, *, learning_rate: float, patience: int) -> "TrainingConfig":
        from .training import TrainingConfig

        return TrainingConfig(
            learning_rate=learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=patience,
            max_steps=self.max_steps,
            seed=self.master_seed,
        )

    def encoder_spec(self, which: str = "a") -> "EncoderSpec":
        from .encoders import EncoderSpec

        raw = dict(self.encoder if which == "a" else self.encoder_b)
        return EncoderSpec(**{**EncoderSpec().to_dict(), **raw})

    def seq2seq_spec(self) -> "Seq2SeqSpec":
        from .generator import Seq2SeqSpec

        return Seq2SeqSpec(**{**Seq2SeqSpec().to_dict(), **self.seq2seq})

    def generation_config(self) -> "GenerationConfig":
        from .generator import GenerationConfig

        return GenerationConfig(
            active_families=tuple(self.families),
            beam_width=self.beam_width,
            max_source_len=self.max_source_len,
            max_target_len=self.max_target_len,
        )


# ---------------------------------------------------------------------------
# Run directories and manifests
# ---------------------------------------------------------------------------

@dataclass
class RunContext:
    directory: Path
    config: RunConfig
    artifacts: list[str] = field(default_factory=list)

    @property
    def artifacts_dir(self) -> Path:
        return self.directory / "artifacts"

    def artifact(self, name: str) -> Path:
        path = self.artifacts_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        self.artifacts.append(str(path.relative_to(self.directory)))
        return path

    def finish(self, command: str, status: str) -> None:
        import datetime

        manifest = {
            "command": command,
            "status": status,
            "config_hash": self.config.config_hash(),
            "master_seed": self.config.master_seed,
            "versions": {
                "python": sys.version.split()[0],
                "countergen": __version__,
                "torch": _torch_version(),
            },
            "finished": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "artifacts": sorted(set(self.artifacts)),
        }
        (self.directory / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


def _torch_version() -> str:
    import torch

    return torch.__version__


def make_run_context(command: str, config: RunConfig) -> RunContext:
    run_dir = Path(config.output_dir) / (config.run_name or command)
    (run_dir / "artifacts").mkdir(parents=True, exist_ok=True)
    (run_dir / "logs").mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(
        json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    handler = logging.FileHandler(run_dir / "logs" / f"{command}.log")
    handler.setFormatter(logging.Formatter("%(asctime)s %(name)s %(message)s"))
    logging.getLogger("countergen").addHandler(handler)
    return RunContext(directory=run_dir, config=config)


def _resolve_corpus_path(value: str) -> tuple[Path, str]:
    """Resolve '@toy' to the bundled corpus; returns (path, format)."""
    from .toydata import toy_corpus_path

    if value == "@toy":
        return toy_corpus_path(), "canonical"
    return Path(value), ""


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_ingest(config: RunConfig, args: argparse.Namespace) -> int:
    from .corpus import build_generation_examples, load_dialogue_corpus, save_corpus

    config.validate(require=["corpus"])
    ctx = make_run_context("ingest", config)
    path, forced = _resolve_corpus_path(config.corpus)
    corpus = load_dialogue_corpus(path, forced or config.corpus_format)
    out = ctx.artifact("corpus.jsonl")
    save_corpus(corpus, out)
    examples = build_generation_examples(corpus)
    stats = ctx.artifact("corpus_stats.json")
    stats.write_text(
        json.dumps(
            {
                "dialogues": len(corpus),
                "turns": corpus.total_turns,
                "topics": list(corpus.topics),
                "generation_examples": len(examples),
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    ctx.finish("ingest", "ok")
    print(f"ingested {len(corpus)} dialogues ({corpus.total_turns} turns) -> {out}")
    return 0


def cmd_train_values(config: RunConfig, args: argparse.Namespace) -> int:
    from .taxonomy import (
        build_entailment_pairs,
        build_similarity_pairs,
        load_labeled_arguments,
        load_taxonomy,
        sample_quadruples,
        train_validation_split,
    )
    from .encoders import Vocabulary
    from .value_detector import (
        EntailmentValueModel,
        ValueClassificationModel,
        save_classification_model,
        save_embedding_space,
        save_entailment_model,
        train_argument_embedder,
        train_descriptor_embedder,
        train_entailment_model,
        train_value_classifier,
    )

    config.validate(require=["taxonomy", "arguments_train"])
    ctx = make_run_context("train-values", config)
    taxonomy = load_taxonomy(config.taxonomy)
    train_args = load_labeled_arguments(config.arguments_train)
    if config.arguments_validation:
        val_args = load_labeled_arguments(config.arguments_validation)
    else:
        train_args, val_args = train_validation_split(
            train_args,
            validation_fraction=config.validation_fraction,
            seed=config.master_seed,
        )

    clf_training = config.training(
        learning_rate=config.classifier_learning_rate,
        patience=config.classifier_patience,
    )
    emb_training = config.training(
        learning_rate=config.embedder_learning_rate,
        patience=config.embedder_patience,
    )

    vocab = Vocabulary.build(
        [a.text for a in train_args] + list(taxonomy.descriptors)
    )

    clf = ValueClassificationModel(
        taxonomy, config.encoder_spec(), vocab, threshold=config.decision_threshold
    )
    train_value_classifier(clf, train_args, val_args, clf_training)
    save_classification_model(ctx.artifact("values/classification"), clf, clf_training)

    entailment_train = build_entailment_pairs(
        train_args,
        taxonomy,
        negative_ratio=config.entailment_negative_ratio,
        seed=config.master_seed,
    )
    entailment_val = build_entailment_pairs(
        val_args,
        taxonomy,
        negative_ratio=config.entailment_negative_ratio,
        seed=config.master_seed + 1,
    )
    ent = EntailmentValueModel(
        taxonomy, config.encoder_spec(), vocab, threshold=config.decision_threshold
    )
    train_entailment_model(ent, entailment_train, entailment_val, clf_training)
    save_entailment_model(ctx.artifact("values/entailment"), ent, clf_training)

    quadruples = sample_quadruples(
        taxonomy, total=config.quadruple_total, seed=config.master_seed
    )
    q_train, q_val = train_validation_split(
        quadruples, validation_fraction=0.1, seed=config.master_seed
    )
    space, _ = train_descriptor_embedder(
        q_train, q_val, taxonomy, config.encoder_spec(), emb_training
    )
    sim_train = build_similarity_pairs(train_args, taxonomy, seed=config.master_seed)
    sim_val = build_similarity_pairs(val_args, taxonomy, seed=config.master_seed + 1)
    space, _ = train_argument_embedder(
        sim_train, sim_val, space, config.encoder_spec(), emb_training
    )
    save_embedding_space(ctx.artifact("values/similarity"), space, taxonomy, emb_training)

    counts = {
        "arguments_train": len(train_args),
        "arguments_validation": len(val_args),
        "entailment_pairs_train": len(entailment_train),
        "entailment_pairs_validation": len(entailment_val),
        "similarity_pairs_train": len(sim_train),
        "similarity_pairs_validation": len(sim_val),
        "quadruples": len(quadruples),
    }
    ctx.artifact("values/counts.json").write_text(
        json.dumps(counts, indent=2) + "\n", encoding="utf-8"
    )
    ctx.finish("train-values", "ok")
    print(f"trained 3 value models -> {ctx.artifacts_dir / 'values'}")
    return 0


def cmd_train_argtype(config: RunConfig, args: argparse.Namespace) -> int:
    from .argtype_detector import (
        ArgTypeVariant,
        curate_topic_keywords,
        expand_keywords,
        load_labeled_pairs,
        save_argtype_model,
        train_argtype_model,
    )
    from .corpus import load_dialogue_corpus
    from .taxonomy import train_validation_split

    config.validate(require=["pairs_train"])
    ctx = make_run_context("train-argtype", config)
    pairs = load_labeled_pairs(config.pairs_train)
    train_pairs, val_pairs = train_validation_split(
        pairs, validation_fraction=config.validation_fraction, seed=config.master_seed
    )

    keywords = None
    if config.corpus:
        path, forced = _resolve_corpus_path(config.corpus)
        corpus = load_dialogue_corpus(path, forced or config.corpus_format)
        keywords = expand_keywords(curate_topic_keywords(corpus))
        keywords.save(ctx.artifact("argtype/keywords.json"))

    training = config.training(
        learning_rate=config.classifier_learning_rate,
        patience=config.classifier_patience,
    )
    variants = [
        ArgTypeVariant("a-masked", masked=True, encoder_spec=config.encoder_spec("a")),
        ArgTypeVariant("a-plain", masked=False, encoder_spec=config.encoder_spec("a")),
        ArgTypeVariant("b-masked", masked=True, encoder_spec=config.encoder_spec("b")),
        ArgTypeVariant("b-plain", masked=False, encoder_spec=config.encoder_spec("b")),
    ]
    for variant in variants:
        if variant.masked and keywords is None:
            logger.warning(
                "skipping masked variant %s: no corpus given for keyword curation",
                variant.name,
            )
            continue
        model, _ = train_argtype_model(
            train_pairs,
            val_pairs,
            variant,
            training,
            keywords=keywords if variant.masked else None,
        )
        save_argtype_model(ctx.artifact(f"argtype/{variant.name}"), model)
    ctx.finish("train-argtype", "ok")
    print(f"trained argument-type variants -> {ctx.artifacts_dir / 'argtype'}")
    return 0


def _stub_ports():
    from .annotator import stub_port

    return (
        stub_port(FAMILY_BIG5, {"openness"}, name="stub-big5"),
        stub_port(FAMILY_HUMVAL, {"benevolence_caring"}, name="stub-humval"),
        stub_port(FAMILY_ARGSCH, {"rule_or_principle"}, name="stub-scheme"),
        stub_port(FAMILY_ARGTYPE, {"facts"}, name="stub-argtype"),
    )


def _checkpoint_ports(root: Path):
    """Build the four annotation ports from a train-values/train-argtype
    artifact layout rooted at `root`."""
    from .annotator import ClassifierPort
    from .argtype_detector import ensemble_predict_argtype, load_argtype_model
    from .features import ARGTYPE_CODES, HUMVAL_CODES
    from .value_detector import (
        TOP6_L2_CATEGORIES,
        ensemble_predict,
        l2_code,
        load_classification_model,
        load_embedding_space,
        load_entailment_model,
        predict_entailment,
        predict_similarity,
    )
    from .annotator import load_single_label_model, baseline_port

    clf = load_classification_model(root / "values" / "classification")
    ent = load_entailment_model(root / "values" / "entailment")
    space = load_embedding_space(root / "values" / "similarity")
    labels = tuple(
        l2 for l2 in TOP6_L2_CATEGORIES if l2 in clf.taxonomy.l2_categories
    ) or clf.taxonomy.l2_categories
    predictors = [
        clf,
        lambda text: predict_entailment(text, ent, labels=labels),
        lambda text: predict_similarity(text, space, labels=labels),
    ]

    def humval_predict(text: str) -> set[str]:
        pred = ensemble_predict(text, predictors, labels=labels)
        # L2 categories outside the feature vocabulary (possible with a
        # non-official taxonomy) contribute nothing; empty sets are valid
        return {l2_code(label) for label in pred.positive_labels} & set(HUMVAL_CODES)

    humval = ClassifierPort(
        name="value-ensemble", family=FAMILY_HUMVAL, predict=humval_predict
    )

    argtype_models = [
        load_argtype_model(p) for p in sorted((root / "argtype").iterdir()) if p.is_dir()
    ]

    def argtype_predict(hate: str, counter: str) -> set[str]:
        label = ensemble_predict_argtype(hate, counter, argtype_models)
        return set(label.positive_classes()) & set(ARGTYPE_CODES)

    argtype = ClassifierPort(
        name="argtype-ensemble", family=FAMILY_ARGTYPE, predict=argtype_predict
    )

    big5 = baseline_port(
        FAMILY_BIG5, load_single_label_model(root / "big5"), name="big5-baseline"
    )
    scheme = baseline_port(
        FAMILY_ARGSCH, load_single_label_model(root / "scheme"), name="scheme-baseline"
    )
    return big5, humval, scheme, argtype


def cmd_annotate(config: RunConfig, args: argparse.Namespace) -> int:
    from .annotator import (
        annotate_corpus,
        feature_distribution_report,
        save_annotated_corpus,
        write_report_csv,
    )
    from .corpus import load_dialogue_corpus

    config.validate(require=["corpus"])
    ctx = make_run_context("annotate", config)
    path, forced = _resolve_corpus_path(config.corpus)
    corpus = load_dialogue_corpus(path, forced or config.corpus_format)
    if args.stub_ports:
        big5, humval, scheme, argtype = _stub_ports()
    else:
        if not config.checkpoint:
            raise ConfigError("annotate needs --set checkpoint=<dir> or --stub-ports")
        big5, humval, scheme, argtype = _checkpoint_ports(Path(config.checkpoint))
    annotated = annotate_corpus(corpus, big5, humval, scheme, argtype)
    out = ctx.artifact("annotated.jsonl")
    save_annotated_corpus(annotated, out)
    rows = feature_distribution_report(annotated)
    write_report_csv(rows, ctx.artifact("feature_report.csv"))
    errors = sum(1 for d in annotated for t in d.turns if t.error)
    ctx.finish("annotate", "ok")
    print(
        f"annotated {annotated.total_turns} turns "
        f"({errors} flagged) -> {out}"
    )
    return 0


def cmd_train_generator(config: RunConfig, args: argparse.Namespace) -> int:
    from .annotator import load_annotated_corpus
    from .generator import annotated_examples, train_generator
    from .taxonomy import train_validation_split

    config.validate(require=["annotated_corpus"])
    ctx = make_run_context("train-generator", config)
    annotated = load_annotated_corpus(config.annotated_corpus)
    examples = annotated_examples(annotated)
    train, val = train_validation_split(
        examples, validation_fraction=config.validation_fraction, seed=config.master_seed
    )
    training = config.training(
        learning_rate=config.generator_learning_rate,
        patience=config.generator_patience,
    )
    checkpoint, history = train_generator(
        train,
        val,
        config.generation_config(),
        seq2seq_spec=config.seq2seq_spec(),
        training_config=training,
    )
    out = ctx.artifact("generator")
    checkpoint.save(out)
    ctx.finish("train-generator", "ok")
    print(
        f"trained generator ({history.stopped_epoch} epochs, "
        f"val loss {history.val_loss[-1]:.4f}) -> {out}"
    )
    return 0


def cmd_generate(config: RunConfig, args: argparse.Namespace) -> int:
    from .generator import GeneratorCheckpoint, generate

    config.validate(require=["checkpoint"])
    ctx = make_run_context("generate", config)
    checkpoint = GeneratorCheckpoint.load(config.checkpoint)
    if args.request:
        request = json.loads(Path(args.request).read_text(encoding="utf-8"))
    else:
        if not args.query:
            raise ConfigError("generate needs --request FILE or --query TEXT")
        request = {
            "context": [],
            "query": args.query,
            "codes": args.codes.split(",") if args.codes else [],
        }
    result = generate(
        [tuple(pair) for pair in request.get("context", [])],
        request["query"],
        [c for c in request.get("codes", []) if c],
        checkpoint,
        query_features=request.get("query_features", []),
    )
    response = {
        "response": result.response,
        "beam_scores": list(result.beam_scores),
    }
    ctx.artifact("response.json").write_text(
        json.dumps(response, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    ctx.finish("generate", "ok")
    print(json.dumps(response, ensure_ascii=False))
    return 0


def cmd_eval_grid(config: RunConfig, args: argparse.Namespace) -> int:
    from .annotator import load_annotated_corpus
    from .evaluation import parse_variant_name, run_feature_grid, write_grid_csv
    from .generator import annotated_examples

    config.validate(require=["annotated_corpus"])
    ctx = make_run_context("eval-grid", config)
    annotated = load_annotated_corpus(config.annotated_corpus)
    examples = annotated_examples(annotated)
    subsets = None
    if args.rows:
        subsets = [parse_variant_name(name.strip()) for name in args.rows.split(",")]
    training = config.training(
        learning_rate=config.generator_learning_rate,
        patience=config.generator_patience,
    )
    reports, generations = run_feature_grid(
        examples,
        subsets=subsets,
        gen_config=config.generation_config(),
        seq2seq_spec=config.seq2seq_spec(),
        training_config=training,
        validation_fraction=config.validation_fraction,
        split_seed=config.master_seed,
        workdir=ctx.artifacts_dir / "grid",
        resume=args.resume,
        workers=args.workers,
    )
    ctx.artifacts.append("artifacts/grid")
    write_grid_csv(reports, ctx.artifact("grid/grid.csv"))
    ctx.finish("eval-grid", "ok")
    for report in reports:
        line = (
            f"{report.row_id:2d} {report.variant:<24s} "
            + (
                f"BLEU {report.bleu:6.2f}  RougeL {report.rouge_l:6.2f}  PPL {report.perplexity:7.3f}"
                if report.status == "ok"
                else f"FAILED: {report.error}"
            )
        )
        print(line)
    return 0


def cmd_report(config: RunConfig, args: argparse.Namespace) -> int:
    from .annotator import (
        feature_distribution_report,
        load_annotated_corpus,
        write_report_csv,
    )

    config.validate(require=["annotated_corpus"])
    ctx = make_run_context("report", config)
    annotated = load_annotated_corpus(config.annotated_corpus)
    rows = feature_distribution_report(annotated)
    out = ctx.artifact("feature_report.csv")
    write_report_csv(rows, out)
    ctx.finish("report", "ok")
    print(f"wrote {len(rows)} report rows -> {out}")
    return 0


def cmd_export_humeval(config: RunConfig, args: argparse.Namespace) -> int:
    from .evaluation import (
        _report_from_dict,
        export_human_eval_packets,
    )

    ctx = make_run_context("export-humeval", config)
    grid_dir = Path(args.grid)
    rows_dir = grid_dir / "rows"
    if not rows_dir.exists():
        raise ConfigError(f"no grid rows under {grid_dir}")
    reports = []
    generations = {}
    for i, row_dir in enumerate(sorted(rows_dir.iterdir()), start=1):
        metrics_file = row_dir / "metrics.json"
        if not metrics_file.exists():
            continue
        stored = json.loads(metrics_file.read_text(encoding="utf-8"))
        stored["row_id"] = i
        reports.append(_report_from_dict(stored))
        gen_file = row_dir / "generations.jsonl"
        if gen_file.exists():
            generations[stored["variant"]] = [
                json.loads(line)
                for line in gen_file.read_text(encoding="utf-8").splitlines()
                if line
            ]
    packet_path = ctx.artifact("humeval_packet.csv")
    rows, key = export_human_eval_packets(
        reports,
        generations,
        sample_size=args.sample_size,
        seed=config.master_seed,
        path=packet_path,
    )
    ctx.artifact("humeval_key.json").write_text(
        json.dumps(key, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    ctx.finish("export-humeval", "ok")
    print(f"exported {len(rows)} packet rows over {len(key)} variants -> {packet_path}")
    return 0


# ---------------------------------------------------------------------------
# Parser and dispatch
# ---------------------------------------------------------------------------

COMMANDS = {
    "ingest": cmd_ingest,
    "train-values": cmd_train_values,
    "train-argtype": cmd_train_argtype,
    "annotate": cmd_annotate,
    "train-generator": cmd_train_generator,
    "generate": cmd_generate,
    "eval-grid": cmd_eval_grid,
    "report": cmd_report,
    "export-humeval": cmd_export_humeval,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="countergen",
        description="Controllable counter-argument generation pipeline",
    )
    parser.add_argument("--config", help="JSON run configuration file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config field (repeatable; flags win over the file)",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        if name == "annotate":
            cmd.add_argument("--stub-ports", action="store_true")
        if name == "generate":
            cmd.add_argument("--request", help="JSON request file")
            cmd.add_argument("--query")
            cmd.add_argument("--codes", help="comma-separated feature codes")
        if name == "eval-grid":
            cmd.add_argument("--rows", help="restrict to these variants (comma list)")
            cmd.add_argument("--workers", type=int, default=1)
            cmd.add_argument("--resume", action="store_true")
        if name == "export-humeval":
            cmd.add_argument("--grid", required=True, help="grid artifacts directory")
            cmd.add_argument("--sample-size", type=int, default=20)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help, 2 for usage errors; map usage to 1
        return 0 if exc.code in (0, None) else 1
    if not args.command:
        parser.print_usage(sys.stderr)
        return 1
    try:
        config = RunConfig.from_file(args.config, args.overrides)
        return COMMANDS[args.command](config, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # unexpected runtime failure
        logger.exception("command failed")
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
