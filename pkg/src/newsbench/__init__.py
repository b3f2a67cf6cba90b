"""newsbench: benchmark harness for fake-news detection and virality prediction.

Label design (tail threshold vs median split), input views (text, numeric,
fused), and checkpoint-selection policy (F1 vs recall-weighted F-beta) are
first-class experiment dimensions; everything is deterministic given a seed.
"""
from .corpus import (
    Article,
    SyntheticSpec,
    Tweet,
    TweetSeries,
    generate_synthetic_corpus,
    load_articles,
    load_tweet_series,
    normalize_timestamps,
    validate_corpus,
    write_corpus,
)
from .errors import (
    ConfigError,
    DataError,
    IntegrityError,
    MissingEmbeddingError,
    NewsbenchError,
    ParseError,
    RunError,
    ValidationError,
)
from .evaluation import (
    Hyperparameters,
    MetricsReport,
    SelectionPolicy,
    aggregate_folds,
    compute_metrics,
    f_beta,
    stratified_kfold,
    train_fold,
    weighted_bce,
)
from .features import (
    EmbeddingStore,
    FusionParams,
    NumericTransform,
    apply_numeric_transform,
    build_series_input,
    concat_with_source_feature,
    encode_tweet,
    fit_numeric_transform,
    gated_fusion,
)
from .harness import (
    ExperimentConfig,
    config_from_dict,
    emit_report,
    load_config,
    pearson_r,
    run_ablation,
    run_embedding_swap,
    run_experiment,
    run_length_sweep,
)
from .labeling import (
    ImbalanceReport,
    LabeledInstance,
    LabelRule,
    imbalance_diagnostics,
    label_by_threshold,
    median_split_labels,
    percentile_threshold,
)
from .models import Checkpoint, ModelConfig, build_model, classical_baseline_fit_predict

__version__ = "0.1.0"
