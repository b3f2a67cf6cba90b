"""Configuration-driven experiment orchestration.

Wires corpora, label rules, input views, models, and the cross-validation
engine into complete runs: the main benchmark table row, the text/numeric
ablation, the sequence-length sweep, and the embedding-backend swap. Every
run writes a manifest (dataset hash, label provenance, config echo, per-fold
reports, aggregate) that is byte-identical across reruns with the same seed.
"""
from __future__ import annotations

import hashlib
import json
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import corpus as corpus_mod
from . import features as features_mod
from . import labeling as labeling_mod
from .corpus import Article, SyntheticSpec, TweetSeries
from .errors import ConfigError, MissingEmbeddingError, RunError, ValidationError
from .evaluation import (
    PROFILES,
    AggregateReport,
    FoldSplit,
    Hyperparameters,
    MetricsReport,
    SelectionPolicy,
    aggregate_folds,
    compute_metrics,
    positive_class_weight,
    stratified_kfold,
    train_fold,
)
from .features import EmbeddingStore
from .models import (
    CLASSICAL_FAMILIES,
    MLP_FAMILIES,
    SEQUENCE_FAMILIES,
    ModelConfig,
    build_model,
    classical_baseline_fit_predict,
)

K_FOLDS = 10
SWEEP_LENGTHS = (2, 3, 5, 10, 20, 40)
ABLATION_VIEWS = ("all", "text_only", "numeric_only")
TABLE_COLUMNS = ("Acc", "BalAcc", "F1", "Prec", "Rec", "ROC-AUC")
_METRIC_KEYS = ("accuracy", "balanced_accuracy", "f1", "precision", "recall", "roc_auc")

ARTICLE_VIEWS = ("text_only", "source_emb", "avg_eng", "gating")
SERIES_VIEWS = ("all", "text_only", "numeric_only")
_VIEW_FOR_MLP_FAMILY = {
    "mlp": "text_only",
    "mlp+source_emb": "source_emb",
    "mlp+avg_eng": "avg_eng",
    "mlp+gating": "gating",
}

_REQUIRED_KEYS = ("corpus", "task", "label", "view", "model", "profile", "selection", "seed", "out_dir")
_OPTIONAL_KEYS = (
    "hyper",
    "max_len",
    "embedding_store",
    "embedding_store_b",
    "workers",
    "threshold",
    "nested_selection_fraction",
)


@dataclass
class ExperimentConfig:
    corpus_shape: str
    task: str
    label_rule: labeling_mod.LabelRule
    view: str
    model: dict
    profile: str
    hyper: Hyperparameters
    selection: SelectionPolicy
    seed: int
    out_dir: str
    corpus_path: str | None = None
    synthetic: SyntheticSpec | None = None
    max_len: int | None = None
    embedding_store: str | None = None
    embedding_store_b: str | dict | None = None
    workers: int = 1
    threshold: float = 0.5
    nested_selection_fraction: float | None = None
    raw: dict = field(default_factory=dict)

    @property
    def family(self) -> str:
        return self.model["family"]

    @property
    def dataset_label(self) -> str:
        if self.synthetic is not None:
            return f"synthetic-{self.corpus_shape}/{self.task}"
        stem = os.path.splitext(os.path.basename(self.corpus_path or ""))[0]
        return f"{stem}/{self.task}"


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def config_from_dict(data: dict) -> ExperimentConfig:
    """Validate a config dict; every experiment dimension must be set explicitly."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - set(_REQUIRED_KEYS) - set(_OPTIONAL_KEYS)
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    missing = [k for k in _REQUIRED_KEYS if k not in data]
    if missing:
        raise ConfigError(f"unset config fields: {missing}")

    corpus_spec = data["corpus"]
    synthetic = None
    corpus_path = None
    if "synthetic" in corpus_spec:
        syn = dict(corpus_spec["synthetic"])
        if "series_length_range" in syn:
            syn["series_length_range"] = tuple(syn["series_length_range"])
        try:
            synthetic = SyntheticSpec(**syn)
        except (TypeError, ValidationError) as exc:
            raise ConfigError(f"invalid synthetic corpus spec: {exc}") from exc
        corpus_shape = synthetic.corpus_shape
    elif "path" in corpus_spec:
        corpus_path = corpus_spec["path"]
        if "shape" not in corpus_spec:
            raise ConfigError("file corpora need corpus.shape ('article' or 'series')")
        corpus_shape = corpus_spec["shape"]
        if data.get("embedding_store") is None:
            raise ConfigError("file corpora need embedding_store")
    else:
        raise ConfigError("corpus must give either 'path'+'shape' or 'synthetic'")
    if corpus_shape not in ("article", "series"):
        raise ConfigError(f"unknown corpus shape {corpus_shape!r}")

    task = data["task"]
    if task not in ("veracity", "virality"):
        raise ConfigError(f"unknown task {task!r}")
    label = data["label"]
    rule_name = label.get("rule")
    if rule_name == "passthrough":
        if task != "veracity":
            raise ConfigError("passthrough labels require task 'veracity'")
        label_rule = labeling_mod.LabelRule(task=task, rule="passthrough")
    elif rule_name == "percentile_threshold":
        if task != "virality" or corpus_shape != "article":
            raise ConfigError("percentile_threshold labels require task 'virality' on an article corpus")
        if "parameter" not in label:
            raise ConfigError("percentile_threshold needs a percentile parameter")
        label_rule = labeling_mod.LabelRule(task=task, rule="percentile_threshold", parameter=float(label["parameter"]))
    elif rule_name == "median_split":
        if task != "virality" or corpus_shape != "series":
            raise ConfigError("median_split labels require task 'virality' on a series corpus")
        label_rule = labeling_mod.LabelRule(task=task, rule="median_split")
    else:
        raise ConfigError(f"unknown label rule {rule_name!r}")

    model = dict(data["model"])
    if "family" not in model:
        raise ConfigError("model.family is unset")
    family = model["family"]
    view = data["view"]
    _check_view(corpus_shape, family, view)

    profile = data["profile"]
    if profile in PROFILES:
        hyper = PROFILES[profile]
        if "hyper" in data and data["hyper"] is not None:
            raise ConfigError(f"profile {profile!r} fixes the hyperparameters; drop 'hyper'")
    elif profile == "custom":
        if "hyper" not in data or data["hyper"] is None:
            raise ConfigError("profile 'custom' requires a complete 'hyper' block")
        try:
            hyper = Hyperparameters(**data["hyper"])
        except (TypeError, ValidationError) as exc:
            raise ConfigError(f"invalid hyperparameters: {exc}") from exc
    else:
        raise ConfigError(f"unknown profile {profile!r}")

    sel = data["selection"]
    try:
        selection = SelectionPolicy(criterion=sel.get("criterion", ""), beta=sel.get("beta"))
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc

    max_len = data.get("max_len")
    if corpus_shape == "series":
        if max_len is None:
            raise ConfigError("series corpora need max_len")
        max_len = int(max_len)
        if max_len < 1:
            raise ConfigError("max_len must be >= 1")

    return ExperimentConfig(
        corpus_shape=corpus_shape,
        task=task,
        label_rule=label_rule,
        view=view,
        model=model,
        profile=profile,
        hyper=hyper,
        selection=selection,
        seed=int(data["seed"]),
        out_dir=data["out_dir"],
        corpus_path=corpus_path,
        synthetic=synthetic,
        max_len=max_len,
        embedding_store=data.get("embedding_store"),
        embedding_store_b=data.get("embedding_store_b"),
        workers=int(data.get("workers", 1)),
        threshold=float(data.get("threshold", 0.5)),
        nested_selection_fraction=data.get("nested_selection_fraction"),
        raw=data,
    )


def derive_config(config: ExperimentConfig, **changes) -> ExperimentConfig:
    """Clone a config with changes, keeping the manifest's config echo in sync."""
    raw = dict(config.raw)
    for key, value in changes.items():
        if key in ("view", "max_len", "out_dir", "seed", "embedding_store"):
            raw[key] = value
    return replace(config, raw=raw, **changes)


def _check_view(corpus_shape: str, family: str, view: str) -> None:
    if family in CLASSICAL_FAMILIES:
        if view != "text_only":
            raise ConfigError(f"classical baselines consume text embeddings only; use view 'text_only'")
        return
    if corpus_shape == "article":
        if family not in MLP_FAMILIES:
            raise ConfigError(f"family {family!r} does not run on article corpora")
        expected = _VIEW_FOR_MLP_FAMILY[family]
        if view != expected:
            raise ConfigError(f"family {family!r} requires view {expected!r}, got {view!r}")
    else:
        if family not in SEQUENCE_FAMILIES:
            raise ConfigError(f"family {family!r} does not run on series corpora")
        if view not in SERIES_VIEWS:
            raise ConfigError(f"series views are {SERIES_VIEWS}, got {view!r}")


# ---------------------------------------------------------------------------
# data resolution


@dataclass
class DataBundle:
    items: list
    store: EmbeddingStore
    labels: np.ndarray
    instances: list[labeling_mod.LabeledInstance]
    truth: dict[str, int] | None  # generator ground truth for synthetic corpora
    dataset_hash: str


def required_store_ids(items: Sequence, corpus_shape: str, max_len: int | None = None) -> list[str]:
    ids: list[str] = []
    if corpus_shape == "article":
        for a in items:
            ids.append(a.title_key())
            ids.append(a.description_key())
    else:
        for s in items:
            limit = len(s.tweets) if max_len is None else min(max_len, len(s.tweets))
            ids.extend(t.id for t in s.tweets[:limit])
    return ids


def _check_coverage(store: EmbeddingStore, items, corpus_shape: str, max_len: int | None) -> None:
    missing = store.missing(required_store_ids(items, corpus_shape, max_len))
    if missing:
        head = ", ".join(missing[:10])
        raise MissingEmbeddingError(
            f"{len(missing)} required ids missing from the embedding store: {head}"
            + ("..." if len(missing) > 10 else "")
        )


def dataset_fingerprint(items: Sequence, store: EmbeddingStore) -> str:
    digest = hashlib.sha256()
    for item in items:
        if isinstance(item, Article):
            record = corpus_mod._canonical_article_record(item)
        else:
            record = corpus_mod._canonical_series_record(item)
        digest.update(json.dumps(record, ensure_ascii=False, separators=(",", ":")).encode("utf-8"))
        digest.update(b"\n")
    for key in sorted(store.ids()):
        digest.update(key.encode("utf-8"))
        digest.update(store[key].tobytes())
    return digest.hexdigest()


def resolve_data(config: ExperimentConfig, store_override: EmbeddingStore | None = None) -> DataBundle:
    """Load or synthesize the corpus + store, fit the label rule, hash everything."""
    truth = None
    if config.synthetic is not None:
        items, store, truth = corpus_mod.generate_synthetic_corpus(config.synthetic)
    else:
        if config.corpus_shape == "article":
            items = corpus_mod.load_articles(config.corpus_path)
        else:
            items = corpus_mod.load_tweet_series(config.corpus_path)
        store = EmbeddingStore.load(config.embedding_store)
    if store_override is not None:
        store = store_override
    report = corpus_mod.validate_corpus(items)
    if not report.ok:
        raise ValidationError(f"corpus failed validation:\n{report.render()}")
    _check_coverage(store, items, config.corpus_shape, config.max_len)

    instances = labeling_mod.apply_rule(items, config.label_rule)
    labels = np.array([inst.label for inst in instances], dtype=np.int64)
    return DataBundle(
        items=list(items),
        store=store,
        labels=labels,
        instances=instances,
        truth=truth,
        dataset_hash=dataset_fingerprint(items, store),
    )


# ---------------------------------------------------------------------------
# per-fold input assembly


def _series_static_arrays(bundle: DataBundle, max_len: int):
    n = len(bundle.items)
    dim = bundle.store.dim
    text = np.zeros((n, max_len, dim), dtype=np.float64)
    raw4 = np.zeros((n, max_len, 4), dtype=np.float64)  # delta_t, followers, following, likes
    verified = np.zeros((n, max_len), dtype=np.float64)
    mask = np.zeros((n, max_len), dtype=np.float64)
    for i, series in enumerate(bundle.items):
        for j, tweet in enumerate(series.tweets[:max_len]):
            text[i, j] = bundle.store[tweet.id]
            raw4[i, j] = (tweet.delta_t, tweet.followers, tweet.following, tweet.likes)
            verified[i, j] = tweet.verified
            mask[i, j] = 1.0
    return text, raw4, verified, mask


def _series_fold_numeric(
    raw4: np.ndarray, verified: np.ndarray, mask: np.ndarray, train_idx: np.ndarray
) -> np.ndarray:
    """Standardize log1p(raw) with statistics from the training fold's real tweets."""
    train_mask = mask[train_idx].astype(bool)
    logged = np.log1p(raw4)
    train_vals = logged[train_idx][train_mask]
    means = train_vals.mean(axis=0)
    stds = train_vals.std(axis=0)
    stds = np.where(stds == 0.0, 1.0, stds)
    z = (logged - means) / stds
    numeric = np.concatenate([z[..., :3], verified[..., None], z[..., 3:]], axis=-1)
    return numeric * mask[..., None]  # keep padded rows at zero


def _article_fold_arrays(bundle: DataBundle, config: ExperimentConfig, x_text: np.ndarray,
                         train_idx: np.ndarray) -> tuple[dict[str, np.ndarray], dict, int]:
    """View-specific batch arrays plus per-fold notes and the model input dim."""
    arrays: dict[str, np.ndarray] = {"x": x_text}
    notes: dict = {}
    extra: dict = {}
    articles = bundle.items
    if config.view == "source_emb":
        vocab = features_mod.fit_source_vocab([articles[i] for i in train_idx])
        idx = np.empty(len(articles), dtype=np.int64)
        fallbacks = 0
        for i, a in enumerate(articles):
            idx[i], unseen = vocab.lookup(a.source)
            fallbacks += int(unseen)
        arrays["source_idx"] = idx
        notes["unseen_source_fallbacks"] = fallbacks
        extra["source_vocab_size"] = vocab.size
    elif config.view in ("avg_eng", "gating"):
        se = features_mod.fit_source_engagement([articles[i] for i in train_idx])
        vals = np.empty(len(articles), dtype=np.float64)
        fallbacks = 0
        for i, a in enumerate(articles):
            vals[i], unseen = se.value(a.source)
            fallbacks += int(unseen)
        arrays["avg_eng"] = vals
        notes["unseen_source_fallbacks"] = fallbacks
    return arrays, notes, extra.get("source_vocab_size", 0)


def _model_config_for_fold(
    config: ExperimentConfig, bundle: DataBundle, fold_index: int, source_vocab_size: int, x_width: int
) -> ModelConfig:
    overrides = {k: v for k, v in config.model.items() if k != "family"}
    family = config.family
    base = dict(
        family=family,
        dropout=config.hyper.dropout,
        seed=config.seed * 1000 + fold_index,
    )
    if config.corpus_shape == "article":
        base["input_dim"] = x_width
        if family == "mlp+source_emb":
            base["source_vocab_size"] = source_vocab_size
    else:
        base["input_dim"] = bundle.store.dim
        base["view"] = config.view
        base["max_len"] = config.max_len
    base.update(overrides)
    return ModelConfig(**base)


def _classical_inputs(bundle: DataBundle, config: ExperimentConfig) -> np.ndarray:
    if config.corpus_shape == "article":
        return features_mod.article_text_matrix(bundle.items, bundle.store)
    text, _, _, mask = _series_static_arrays(bundle, config.max_len)
    counts = mask.sum(axis=1, keepdims=True)
    return (text * mask[:, :, None]).sum(axis=1) / counts


# ---------------------------------------------------------------------------
# experiment runs


@dataclass
class ResultRow:
    dataset_task: str
    model: str
    aggregate: AggregateReport

    def metric_means(self) -> dict[str, float]:
        m = self.aggregate.mean
        return {
            "accuracy": m.accuracy,
            "balanced_accuracy": m.balanced_accuracy,
            "f1": m.f1,
            "precision": m.precision,
            "recall": m.recall,
            "roc_auc": m.roc_auc,
        }


@dataclass
class RunOutcome:
    manifest: dict
    row: ResultRow
    fold_reports: list[MetricsReport]
    out_dir: str | None = None


def fold_id_hash(items: Sequence, heldout_idx: np.ndarray) -> str:
    ids = sorted(items[i].id for i in heldout_idx)
    return hashlib.sha256("\n".join(ids).encode("utf-8")).hexdigest()[:16]


def _neural_fold_payload(config, bundle, x_text, text, raw4, verified, mask, split):
    """Assemble per-fold batch arrays and the per-fold model config."""
    notes: dict = {}
    if config.corpus_shape == "article":
        arrays, notes, vocab_size = _article_fold_arrays(bundle, config, x_text, split.train_idx)
        model_config = _model_config_for_fold(config, bundle, split.fold_index, vocab_size, x_text.shape[1])
    else:
        numeric = _series_fold_numeric(raw4, verified, mask, split.train_idx)
        arrays = {"text": text, "numeric": numeric, "mask": mask}
        model_config = _model_config_for_fold(config, bundle, split.fold_index, 0, 0)
    return arrays, model_config, notes


def _run_neural_fold(payload) -> dict:
    arrays, model_config, labels, split, hyper, selection, threshold, nested = payload
    model = build_model(model_config)
    result = train_fold(
        model,
        arrays,
        labels,
        split,
        hyper,
        policy=selection,
        threshold=threshold,
        nested_selection_fraction=nested,
    )
    return {
        "fold_index": result.fold_index,
        "report": result.report,
        "checkpoint": result.checkpoint,
        "positive_weight": result.positive_weight,
        "best_epoch": result.checkpoint.epoch,
        "selection_score": result.checkpoint.selection_score,
        "protocol": result.protocol,
    }


def run_experiment(config: ExperimentConfig, write_outputs: bool = True,
                   store_override: EmbeddingStore | None = None) -> RunOutcome:
    """Stratified 10-fold cross-validation end to end, deterministic given the seed."""
    bundle = resolve_data(config, store_override=store_override)
    splits = stratified_kfold(bundle.labels, k=K_FOLDS, seed=config.seed)
    diag = labeling_mod.imbalance_diagnostics(bundle.labels.tolist())

    x_text = text = raw4 = verified = mask = None
    if config.family not in CLASSICAL_FAMILIES:
        if config.corpus_shape == "article":
            x_text = features_mod.article_text_matrix(bundle.items, bundle.store)
        else:
            text, raw4, verified, mask = _series_static_arrays(bundle, config.max_len)

    fold_records: list[dict] = []
    failure: Exception | None = None
    try:
        if config.family in CLASSICAL_FAMILIES:
            features = _classical_inputs(bundle, config)
            for split in splits:
                scores, preds = classical_baseline_fit_predict(
                    config.family,
                    features[split.train_idx],
                    bundle.labels[split.train_idx],
                    features[split.heldout_idx],
                    seed=config.seed * 1000 + split.fold_index,
                )
                report = compute_metrics(
                    preds, scores, bundle.labels[split.heldout_idx], fold=split.fold_index
                )
                fold_records.append(
                    {
                        "fold_index": split.fold_index,
                        "report": report,
                        "checkpoint": None,
                        "positive_weight": positive_class_weight(bundle.labels[split.train_idx]),
                        "best_epoch": None,
                        "selection_score": None,
                        "protocol": "fit-once",
                    }
                )
        else:
            payloads = []
            for split in splits:
                arrays, model_config, notes = _neural_fold_payload(
                    config, bundle, x_text, text, raw4, verified, mask, split
                )
                payloads.append(
                    (
                        (arrays, model_config, bundle.labels, split, config.hyper,
                         config.selection, config.threshold, config.nested_selection_fraction),
                        notes,
                    )
                )
            if config.workers > 1:
                with ProcessPoolExecutor(max_workers=config.workers) as pool:
                    results = list(pool.map(_run_neural_fold, [p for p, _ in payloads]))
            else:
                results = [_run_neural_fold(p) for p, _ in payloads]
            for (_, notes), record in zip(payloads, results):
                record["notes"] = notes
                fold_records.append(record)
    except Exception as exc:  # noqa: BLE001 - recorded in the manifest, then re-raised
        failure = exc

    fold_records.sort(key=lambda r: r["fold_index"])
    reports = [r["report"] for r in fold_records]
    manifest = {
        "version": 1,
        "protocol": f"stratified-{K_FOLDS}fold",
        "dataset": config.dataset_label,
        "dataset_hash": bundle.dataset_hash,
        "config": config.raw,
        "label_provenance": {
            "task": config.label_rule.task,
            "rule": config.label_rule.rule,
            "parameter": config.label_rule.parameter,
            "threshold_value": bundle.instances[0].provenance.threshold_value if bundle.instances else None,
            "n_items": int(diag.n_items),
            "n_positive": int(diag.n_positive),
            "prevalence": diag.prevalence,
            "expected_dummy_f1": diag.expected_dummy_f1,
        },
        "seed": config.seed,
        "fold_hashes": [fold_id_hash(bundle.items, s.heldout_idx) for s in splits],
        "input_shapes": _input_shape_note(config, bundle),
        "folds": [
            {
                "fold": r["fold_index"],
                "report": r["report"].as_dict(),
                "positive_weight": r["positive_weight"],
                "best_epoch": r["best_epoch"],
                "selection_score": r["selection_score"],
                "protocol": r["protocol"],
                "notes": r.get("notes", {}),
            }
            for r in fold_records
        ],
    }

    if failure is not None:
        manifest["status"] = "failed"
        manifest["error"] = f"{type(failure).__name__}: {failure}"
        if write_outputs:
            _write_manifest(config.out_dir, manifest)
        if isinstance(failure, (RunError, ValidationError, MissingEmbeddingError, ConfigError)):
            raise failure
        raise RunError(str(failure)) from failure

    aggregate = aggregate_folds(reports)
    manifest["aggregate"] = aggregate.as_dict()
    manifest["status"] = "ok"
    row = ResultRow(dataset_task=config.dataset_label, model=config.family, aggregate=aggregate)

    out_dir = None
    if write_outputs:
        out_dir = config.out_dir
        _write_manifest(out_dir, manifest)
        emit_report([row], out_dir, basename="table")
        ckpt_dir = os.path.join(out_dir, "checkpoints")
        for record in fold_records:
            if record["checkpoint"] is not None:
                os.makedirs(ckpt_dir, exist_ok=True)
                record["checkpoint"].save(os.path.join(ckpt_dir, f"fold{record['fold_index']}.npz"))
    return RunOutcome(manifest=manifest, row=row, fold_reports=reports, out_dir=out_dir)


def _input_shape_note(config: ExperimentConfig, bundle: DataBundle) -> dict:
    if config.corpus_shape == "article":
        return {"text_width": 2 * bundle.store.dim}
    width = {"all": bundle.store.dim + 32, "text_only": bundle.store.dim, "numeric_only": 32}[
        config.view if config.family not in CLASSICAL_FAMILIES else "text_only"
    ]
    if config.family in CLASSICAL_FAMILIES:
        width = bundle.store.dim
    return {"max_len": config.max_len, "step_width": width}


def _write_manifest(out_dir: str, manifest: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# the three paper-shaped studies


def run_ablation(config: ExperimentConfig, views: Sequence[str] = ABLATION_VIEWS) -> list[RunOutcome]:
    """Re-run the same series experiment under each input view, sharing folds."""
    if config.corpus_shape != "series":
        raise ConfigError("the text/numeric ablation runs on series corpora")
    if config.family not in SEQUENCE_FAMILIES:
        raise ConfigError("the ablation needs a sequence family (the reference setup used a GRU)")
    outcomes = []
    for view in views:
        sub = derive_config(config, view=view, out_dir=os.path.join(config.out_dir, f"view_{view}"))
        outcomes.append(run_experiment(sub))
    hashes = {tuple(o.manifest["fold_hashes"]) for o in outcomes}
    if len(hashes) != 1:
        raise RunError("ablation views disagree on fold assignments")
    emit_report([o.row for o in outcomes], config.out_dir, basename="ablation",
                row_labels=[f"{config.family}[{v}]" for v in views])
    return outcomes


def run_length_sweep(
    config: ExperimentConfig, lengths: Sequence[int] = SWEEP_LENGTHS
) -> dict:
    """One run per maximum series length; reports per-length F1 and r(length, F1)."""
    if config.corpus_shape != "series":
        raise ConfigError("the length sweep runs on series corpora")
    outcomes = []
    for length in lengths:
        sub = derive_config(config, max_len=int(length), out_dir=os.path.join(config.out_dir, f"len_{length}"))
        outcomes.append(run_experiment(sub))
    f1s = [o.row.aggregate.mean.f1 for o in outcomes]
    zero_variance = all(f == f1s[0] for f in f1s) or all(l == lengths[0] for l in lengths)
    r = 0.0 if zero_variance else pearson_r(list(lengths), f1s)
    emit_report([o.row for o in outcomes], config.out_dir, basename="length_sweep",
                row_labels=[f"{config.family}[l={l}]" for l in lengths])
    summary = {
        "lengths": list(map(int, lengths)),
        "f1": f1s,
        "pearson_r": r,
        "zero_variance": zero_variance,
    }
    os.makedirs(config.out_dir, exist_ok=True)
    with open(os.path.join(config.out_dir, "length_sweep.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {"outcomes": outcomes, **summary}


def run_embedding_swap(
    config: ExperimentConfig,
    store_b: EmbeddingStore | None = None,
) -> dict:
    """Two identical runs differing only in the embedding store; reports deltas."""
    outcome_a = run_experiment(
        derive_config(config, out_dir=os.path.join(config.out_dir, "store_a"))
    )
    if store_b is None:
        store_b = _resolve_store_b(config)
    outcome_b = run_experiment(
        derive_config(config, out_dir=os.path.join(config.out_dir, "store_b")),
        store_override=store_b,
    )
    means_a = outcome_a.row.metric_means()
    means_b = outcome_b.row.metric_means()
    deltas = {k: means_b[k] - means_a[k] for k in means_a}
    emit_report([outcome_a.row, outcome_b.row], config.out_dir, basename="embedding_swap",
                row_labels=[f"{config.family}[store_a]", f"{config.family}[store_b]"])
    summary = {"deltas": deltas, "delta_f1": deltas["f1"]}
    os.makedirs(config.out_dir, exist_ok=True)
    with open(os.path.join(config.out_dir, "embedding_swap.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {"a": outcome_a, "b": outcome_b, **summary}


def _resolve_store_b(config: ExperimentConfig) -> EmbeddingStore:
    spec = config.embedding_store_b
    if spec is None:
        raise ConfigError("embedding swap needs embedding_store_b (path or synthetic spec)")
    if isinstance(spec, str):
        return EmbeddingStore.load(spec)
    if isinstance(spec, dict):
        if config.synthetic is None:
            raise ConfigError("synthetic embedding_store_b specs need a synthetic corpus")
        unknown = set(spec) - {"dim", "seed", "text_signal_strength", "signal_placement"}
        if unknown:
            raise ConfigError(f"unknown embedding_store_b fields: {sorted(unknown)}")
        items, _, truth = corpus_mod.generate_synthetic_corpus(config.synthetic)
        return corpus_mod.regenerate_embeddings(
            items,
            truth,
            dim=int(spec["dim"]),
            text_signal_strength=float(
                spec.get("text_signal_strength", config.synthetic.text_signal_strength)
            ),
            seed=int(spec.get("seed", config.synthetic.seed + 1)),
            signal_placement=spec.get("signal_placement", config.synthetic.signal_placement),
        )
    raise ConfigError("embedding_store_b must be a path or a synthetic spec object")


# ---------------------------------------------------------------------------
# statistics + report emission


def pearson_r(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Sample Pearson correlation; zero-variance inputs report 0 with a warning."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape:
        raise ValidationError("pearson_r needs equal-length inputs")
    if x.size < 2:
        raise ValidationError("pearson_r needs at least two points")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.sqrt((dx**2).sum())
    sy = np.sqrt((dy**2).sum())
    if sx == 0.0 or sy == 0.0:
        warnings.warn("pearson_r saw a zero-variance input; reporting 0", UserWarning, stacklevel=2)
        return 0.0
    return float((dx * dy).sum() / (sx * sy))


def emit_report(
    rows: Sequence[ResultRow],
    out_dir: str,
    basename: str = "table",
    row_labels: Sequence[str] | None = None,
) -> tuple[str, str]:
    """Write the aligned-text and delimited forms of a result table.

    Column order is fixed (Acc, BalAcc, F1, Prec, Rec, ROC-AUC); the text
    format marks each column's maximum with '*'; the CSV stores means and
    stds at 6 decimal places and round-trips losslessly at that precision.
    """
    if not rows:
        raise ValidationError("emit_report needs at least one row")
    labels = list(row_labels) if row_labels is not None else [r.model for r in rows]
    means = np.array([[r.metric_means()[k] for k in _METRIC_KEYS] for r in rows])
    stds = np.array(
        [
            [
                r.aggregate.std.accuracy,
                r.aggregate.std.balanced_accuracy,
                r.aggregate.std.f1,
                r.aggregate.std.precision,
                r.aggregate.std.recall,
                r.aggregate.std.roc_auc,
            ]
            for r in rows
        ]
    )
    col_max = means.max(axis=0)

    os.makedirs(out_dir, exist_ok=True)
    text_path = os.path.join(out_dir, f"{basename}.txt")
    csv_path = os.path.join(out_dir, f"{basename}.csv")

    name_width = max(len("dataset/task"), max(len(r.dataset_task) for r in rows))
    model_width = max(len("model"), max(len(l) for l in labels))
    header = (
        f"{'dataset/task':<{name_width}}  {'model':<{model_width}}  "
        + "  ".join(f"{c:>14}" for c in TABLE_COLUMNS)
    )
    lines = [header, "-" * len(header)]
    for i, row in enumerate(rows):
        cells = []
        for j in range(len(_METRIC_KEYS)):
            marker = "*" if len(rows) > 1 and means[i, j] == col_max[j] else " "
            cells.append(f"{means[i, j]:.3f}±{stds[i, j]:.3f}{marker}".rjust(14))
        lines.append(f"{row.dataset_task:<{name_width}}  {labels[i]:<{model_width}}  " + "  ".join(cells))
    with open(text_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")

    with open(csv_path, "w", encoding="utf-8") as fh:
        cols = ["dataset_task", "model"]
        for key in _METRIC_KEYS:
            cols.extend([f"{key}_mean", f"{key}_std"])
        fh.write(",".join(cols) + "\n")
        for i, row in enumerate(rows):
            cells = [row.dataset_task, labels[i]]
            for j in range(len(_METRIC_KEYS)):
                cells.extend([f"{means[i, j]:.6f}", f"{stds[i, j]:.6f}"])
            fh.write(",".join(cells) + "\n")
    return text_path, csv_path


def read_report_csv(path: str) -> list[dict]:
    """Parse a delimited result table back into row dicts of floats."""
    import csv as csv_lib

    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv_lib.DictReader(fh)
        rows = []
        for record in reader:
            parsed: dict = {}
            for key, value in record.items():
                if key in ("dataset_task", "model"):
                    parsed[key] = value
                else:
                    parsed[key] = float(value)
            rows.append(parsed)
    return rows
