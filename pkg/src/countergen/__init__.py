"""countergen: controllable counter-hate argument generation.

A pipeline that (1) annotates hate/counter dialogue corpora with 20 value-
and structure-based feature codes using trainable classifier ensembles,
(2) trains a control-code-conditioned encoder-decoder response generator
with delta-based code placement, and (3) evaluates feature combinations
with corpus BLEU, Rouge-L and perplexity over a 16-row grid.
"""

__version__ = "0.1.0"

from .corpus import (
    Dialogue,
    DialogueCorpus,
    GenerationExample,
    Turn,
    build_generation_examples,
    load_dialogue_corpus,
    save_corpus,
)
from .features import FeatureVocabulary, default_vocabulary
from .taxonomy import (
    EntailmentPair,
    LabeledArgument,
    Quadruple,
    SimilarityPair,
    ValueTaxonomy,
    build_entailment_pairs,
    build_similarity_pairs,
    load_taxonomy,
    sample_quadruples,
)
from .value_detector import (
    EmbeddingSpace,
    MultiTaskWeights,
    ValuePrediction,
    ensemble_predict,
    multitask_loss,
    predict_entailment,
    predict_similarity,
    quadruple_loss,
    train_argument_embedder,
    train_descriptor_embedder,
)
from .argtype_detector import (
    ArgTypeLabel,
    TopicKeywordSet,
    curate_topic_keywords,
    ensemble_predict_argtype,
    expand_keywords,
    mask_text,
    train_argtype_model,
)
from .annotator import (
    AnnotatedCorpus,
    AnnotatedTurn,
    ClassifierPort,
    annotate_corpus,
    feature_distribution_report,
    merge_scheme_labels,
)
from .generator import (
    CodePlacement,
    GenerationConfig,
    GeneratorCheckpoint,
    build_training_batch,
    feature_delta,
    generate,
    train_generator,
)
from .evaluation import (
    MetricReport,
    corpus_bleu,
    export_human_eval_packets,
    perplexity,
    rouge_l,
    run_feature_grid,
)

__all__ = [name for name in dir() if not name.startswith("_")]
