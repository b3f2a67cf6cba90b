"""Model-ready representations: embedding lookup, numeric transforms, fusion.

The embedding store is an immutable id -> vector map with a simple on-disk
format (header line, then one tab-separated record per line). Numeric tweet
features are log(1+x)-transformed and standardized with statistics fitted on
training folds only; the binary verified flag passes through untouched.
Fusion utilities cover the learned 5 -> 32 numeric projection, per-tweet
concatenation to store.dim + 32, series padding/truncation, the GMU-style
gated combination of a text branch and an engagement branch, and the
source-feature concatenations used by the article-side model variants.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .corpus import Article, Tweet, TweetSeries
from .errors import IntegrityError, MissingEmbeddingError, ParseError, ValidationError

NUMERIC_ORDER = ("delta_t", "followers", "following", "verified", "likes")
TRANSFORMED_FEATURES = ("delta_t", "followers", "following", "likes")  # verified passes through
PROJECTION_DIM = 32


class FeatureWarning(UserWarning):
    """Non-fatal feature-fitting oddity (constant feature, unseen source)."""


class EmbeddingStore:
    """Immutable map from item id to a fixed-dimension float vector."""

    def __init__(self, vectors: dict[str, np.ndarray], dim: int):
        self._dim = int(dim)
        self._vectors: dict[str, np.ndarray] = {}
        for key, vec in vectors.items():
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (self._dim,):
                raise ValidationError(
                    f"vector for {key!r} has shape {arr.shape}, expected ({self._dim},)"
                )
            arr = arr.copy()
            arr.setflags(write=False)
            self._vectors[key] = arr

    @classmethod
    def from_dict(cls, vectors: dict[str, np.ndarray], dim: int) -> "EmbeddingStore":
        return cls(vectors, dim)

    @property
    def dim(self) -> int:
        return self._dim

    def __len__(self) -> int:
        return len(self._vectors)

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._vectors

    def __getitem__(self, item_id: str) -> np.ndarray:
        try:
            return self._vectors[item_id]
        except KeyError:
            raise MissingEmbeddingError(f"no embedding for id {item_id!r}") from None

    def ids(self) -> list[str]:
        return list(self._vectors)

    def missing(self, required_ids: Iterable[str]) -> list[str]:
        return [i for i in required_ids if i not in self._vectors]

    # -- file format: "dim=<d> count=<n>" header, then "id\tv1,v2,...,vd" rows

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"dim={self._dim} count={len(self._vectors)}\n")
            for key, vec in self._vectors.items():
                fh.write(key + "\t" + ",".join(repr(float(v)) for v in vec) + "\n")

    @classmethod
    def load(cls, path: str) -> "EmbeddingStore":
        try:
            fh = open(path, "r", encoding="utf-8")
        except OSError as exc:
            raise ParseError(f"cannot read embedding store {path!r}: {exc}") from exc
        with fh:
            header = fh.readline().strip()
            parts = dict(p.split("=", 1) for p in header.split() if "=" in p)
            if "dim" not in parts or "count" not in parts:
                raise ParseError("embedding store header must be 'dim=<d> count=<n>'", line=1)
            dim, count = int(parts["dim"]), int(parts["count"])
            vectors: dict[str, np.ndarray] = {}
            for line_no, line in enumerate(fh, start=2):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    key, payload = line.split("\t", 1)
                except ValueError:
                    raise ParseError("expected 'id<TAB>floats'", line=line_no) from None
                if key in vectors:
                    raise IntegrityError(f"duplicate embedding id {key!r} on line {line_no}")
                try:
                    vec = np.array([float(x) for x in payload.split(",")], dtype=np.float64)
                except ValueError as exc:
                    raise ParseError(f"bad float in vector: {exc}", line=line_no) from exc
                if vec.shape != (dim,):
                    raise ValidationError(
                        f"line {line_no}: vector for {key!r} has {vec.size} components, expected {dim}"
                    )
                vectors[key] = vec
        if len(vectors) != count:
            raise ValidationError(
                f"store header promises count={count} but file holds {len(vectors)} records"
            )
        return cls(vectors, dim)


def fetch_embeddings(
    texts: Sequence[str],
    url: str,
    batch_size: int = 32,
    timeout: float = 30.0,
    session=None,
) -> np.ndarray:
    """Request embeddings from an external service in batches.

    The service contract is POST {"texts": [...]} -> {"vectors": [[...], ...]}.
    A requests-compatible session can be injected for testing.
    """
    if batch_size < 1:
        raise ValidationError("batch_size must be >= 1")
    if session is None:
        import requests

        session = requests.Session()
    rows: list[list[float]] = []
    for start in range(0, len(texts), batch_size):
        batch = list(texts[start : start + batch_size])
        response = session.post(url, json={"texts": batch}, timeout=timeout)
        response.raise_for_status()
        payload = response.json()
        vectors = payload.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(batch):
            raise ValidationError(
                f"embedding service returned {0 if not isinstance(vectors, list) else len(vectors)} "
                f"vectors for a batch of {len(batch)}"
            )
        rows.extend(vectors)
    out = np.asarray(rows, dtype=np.float64)
    if out.ndim != 2:
        raise ValidationError("embedding service returned ragged vectors")
    return out


def cache_embeddings(
    ids: Sequence[str],
    texts: Sequence[str],
    url: str,
    path: str,
    batch_size: int = 32,
    timeout: float = 30.0,
    session=None,
) -> EmbeddingStore:
    """Fetch embeddings for (id, text) pairs and persist them in the store format.

    Every experiment is then re-runnable offline from the cached file.
    """
    if len(ids) != len(texts):
        raise ValidationError("ids and texts must have equal length")
    matrix = fetch_embeddings(texts, url, batch_size=batch_size, timeout=timeout, session=session)
    store = EmbeddingStore.from_dict(
        {i: matrix[k] for k, i in enumerate(ids)}, dim=matrix.shape[1]
    )
    store.save(path)
    return store


# ---------------------------------------------------------------------------
# numeric transform


@dataclass(frozen=True)
class NumericTransform:
    """Per-feature mean/std of log(1+x), fitted once on a training fold."""

    means: np.ndarray  # aligned with TRANSFORMED_FEATURES
    stds: np.ndarray
    constant_features: tuple[str, ...] = ()

    def apply(self, tweet: Tweet) -> np.ndarray:
        raw = np.array(
            [tweet.delta_t, tweet.followers, tweet.following, tweet.likes], dtype=np.float64
        )
        z = (np.log1p(raw) - self.means) / self.stds
        return np.array([z[0], z[1], z[2], float(tweet.verified), z[3]], dtype=np.float64)


def fit_numeric_transform(tweets: Sequence[Tweet]) -> NumericTransform:
    """Fit log1p mean/std on training tweets; constant features get std 1 and a warning."""
    if len(tweets) == 0:
        raise ValidationError("fit_numeric_transform requires a non-empty training set")
    raw = np.array(
        [[t.delta_t, t.followers, t.following, t.likes] for t in tweets], dtype=np.float64
    )
    logged = np.log1p(raw)
    means = logged.mean(axis=0)
    stds = logged.std(axis=0)
    constant = [TRANSFORMED_FEATURES[j] for j in range(4) if stds[j] == 0.0]
    if constant:
        warnings.warn(
            f"constant features in training fold: {constant}; std set to 1",
            FeatureWarning,
            stacklevel=2,
        )
        stds = np.where(stds == 0.0, 1.0, stds)
    return NumericTransform(means=means, stds=stds, constant_features=tuple(constant))


def apply_numeric_transform(transform: NumericTransform, tweet: Tweet) -> np.ndarray:
    """Ordered 5-vector (delta_t', followers', following', verified, likes')."""
    return transform.apply(tweet)


# ---------------------------------------------------------------------------
# fusion parameters and pure-numpy fusion math


@dataclass(frozen=True)
class FusionParams:
    """Numeric 5 -> 32 projection and (optionally) GMU gate parameters.

    Gate coefficients are sigmoid outputs, hence in [0, 1] elementwise by
    construction; the fused vector is a per-dimension convex combination of
    the two branch activations.
    """

    proj_weight: np.ndarray  # (5, 32)
    proj_bias: np.ndarray  # (32,)
    text_branch: np.ndarray | None = None  # (d_text, width)
    eng_branch: np.ndarray | None = None  # (d_eng, width)
    gate: np.ndarray | None = None  # (d_text + d_eng, width)

    def __post_init__(self):
        if self.proj_weight.shape[0] != 5:
            raise ValidationError("numeric projection expects 5 input features")
        if self.proj_bias.shape != (self.proj_weight.shape[1],):
            raise ValidationError("projection bias width does not match weights")


def init_fusion_params(
    rng: np.random.Generator,
    proj_dim: int = PROJECTION_DIM,
    text_dim: int | None = None,
    eng_dim: int | None = None,
    width: int | None = None,
) -> FusionParams:
    """Fan-in-scaled uniform initialization; gate blocks only when dims are given."""

    def fan_in_uniform(shape):
        bound = 1.0 / np.sqrt(shape[0])
        return rng.uniform(-bound, bound, size=shape)

    text_branch = eng_branch = gate = None
    if text_dim is not None and eng_dim is not None and width is not None:
        text_branch = fan_in_uniform((text_dim, width))
        eng_branch = fan_in_uniform((eng_dim, width))
        gate = fan_in_uniform((text_dim + eng_dim, width))
    return FusionParams(
        proj_weight=fan_in_uniform((5, proj_dim)),
        proj_bias=np.zeros(proj_dim),
        text_branch=text_branch,
        eng_branch=eng_branch,
        gate=gate,
    )


def project_numeric(numeric: np.ndarray, params: FusionParams) -> np.ndarray:
    """Affine 5 -> 32 map applied to the transformed numeric features."""
    return np.asarray(numeric, dtype=np.float64) @ params.proj_weight + params.proj_bias


def gated_fusion(text_vec: np.ndarray, eng_vec: np.ndarray, params: FusionParams) -> np.ndarray:
    """GMU-style fusion: h = z * tanh(Wt x_t) + (1 - z) * tanh(We x_e).

    z = sigmoid(Wz [x_t || x_e]) gates each output dimension, so h lies
    elementwise between the two branch activations.
    """
    if params.text_branch is None or params.eng_branch is None or params.gate is None:
        raise ValidationError("FusionParams has no gate block; use init_fusion_params with dims")
    text_vec = np.asarray(text_vec, dtype=np.float64)
    eng_vec = np.asarray(eng_vec, dtype=np.float64)
    if text_vec.shape[-1] != params.text_branch.shape[0]:
        raise ValidationError(
            f"text width {text_vec.shape[-1]} does not match gate config {params.text_branch.shape[0]}"
        )
    if eng_vec.shape[-1] != params.eng_branch.shape[0]:
        raise ValidationError(
            f"engagement width {eng_vec.shape[-1]} does not match gate config {params.eng_branch.shape[0]}"
        )
    a = np.tanh(text_vec @ params.text_branch)
    b = np.tanh(eng_vec @ params.eng_branch)
    z = 1.0 / (1.0 + np.exp(-np.concatenate([text_vec, eng_vec], axis=-1) @ params.gate))
    return z * a + (1.0 - z) * b


# ---------------------------------------------------------------------------
# per-tweet encoding and series assembly


def encode_tweet(
    tweet: Tweet,
    store: EmbeddingStore,
    transform: NumericTransform,
    projection: FusionParams,
) -> np.ndarray:
    """Concatenate the tweet's text embedding with the projected numeric features."""
    text = store[tweet.id]
    numeric = transform.apply(tweet)
    return np.concatenate([text, project_numeric(numeric, projection)])


def build_series_input(
    series: TweetSeries,
    max_len: int,
    store: EmbeddingStore,
    transform: NumericTransform,
    projection: FusionParams,
) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-length encoded series: (max_len, store.dim + proj_dim) matrix plus mask.

    Truncation keeps the earliest tweets; padding rows are zero with mask 0.
    """
    if max_len < 1:
        raise ValidationError("max_len must be >= 1")
    width = store.dim + projection.proj_weight.shape[1]
    matrix = np.zeros((max_len, width), dtype=np.float64)
    mask = np.zeros(max_len, dtype=np.float64)
    for j, tweet in enumerate(series.tweets[:max_len]):
        matrix[j] = encode_tweet(tweet, store, transform, projection)
        mask[j] = 1.0
    return matrix, mask


def series_raw_arrays(
    series: TweetSeries,
    max_len: int,
    store: EmbeddingStore,
    transform: NumericTransform,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unprojected series tensors (text, numeric-5, mask) for in-model projection.

    Training keeps the 5 -> 32 projection inside the model graph so it is
    learned; this provides the raw ingredients in the same layout as
    build_series_input.
    """
    if max_len < 1:
        raise ValidationError("max_len must be >= 1")
    text = np.zeros((max_len, store.dim), dtype=np.float64)
    numeric = np.zeros((max_len, 5), dtype=np.float64)
    mask = np.zeros(max_len, dtype=np.float64)
    for j, tweet in enumerate(series.tweets[:max_len]):
        text[j] = store[tweet.id]
        numeric[j] = transform.apply(tweet)
        mask[j] = 1.0
    return text, numeric, mask


# ---------------------------------------------------------------------------
# article-side source features


@dataclass(frozen=True)
class SourceEngagement:
    """Mean log(1+engagement) per source, fitted on training articles only."""

    means: dict[str, float]
    global_mean: float

    def value(self, source: str) -> tuple[float, bool]:
        """Return (scalar, fallback_used); unseen sources get the global mean."""
        if source in self.means:
            return self.means[source], False
        return self.global_mean, True


def fit_source_engagement(articles: Sequence[Article]) -> SourceEngagement:
    if len(articles) == 0:
        raise ValidationError("fit_source_engagement requires a non-empty training set")
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    total = 0.0
    for a in articles:
        logged = float(np.log1p(a.engagement))
        sums[a.source] = sums.get(a.source, 0.0) + logged
        counts[a.source] = counts.get(a.source, 0) + 1
        total += logged
    means = {s: sums[s] / counts[s] for s in sums}
    return SourceEngagement(means=means, global_mean=total / len(articles))


@dataclass(frozen=True)
class SourceVocab:
    """Source -> embedding-row index map with a dedicated unknown slot."""

    index: dict[str, int]

    @property
    def unknown_index(self) -> int:
        return len(self.index)

    @property
    def size(self) -> int:
        return len(self.index) + 1

    def lookup(self, source: str) -> tuple[int, bool]:
        if source in self.index:
            return self.index[source], False
        return self.unknown_index, True


def fit_source_vocab(articles: Sequence[Article]) -> SourceVocab:
    sources = sorted({a.source for a in articles})
    return SourceVocab(index={s: k for k, s in enumerate(sources)})


def concat_with_source_feature(text_vec: np.ndarray, feature) -> np.ndarray:
    """Append a source feature (scalar mean engagement or a learned embedding)."""
    text_vec = np.asarray(text_vec, dtype=np.float64)
    feature_arr = np.atleast_1d(np.asarray(feature, dtype=np.float64))
    return np.concatenate([text_vec, feature_arr])


def article_text_matrix(articles: Sequence[Article], store: EmbeddingStore) -> np.ndarray:
    """(n, 2 * dim) matrix of concatenated title and description embeddings."""
    out = np.empty((len(articles), 2 * store.dim), dtype=np.float64)
    for i, a in enumerate(articles):
        out[i, : store.dim] = store[a.title_key()]
        out[i, store.dim :] = store[a.description_key()]
    return out
