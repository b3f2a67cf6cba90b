"""Corpus schemas, loaders, timestamp normalization, validation, and synthetic data.

Two corpus shapes exist: flat news articles (title/description text, source,
aggregate engagement) and tweet series (time-ordered propagation paths whose
tweets carry text plus five numeric signals). Both load from UTF-8 JSONL
files, are immutable after construction, and can be written back in a
canonical byte-stable form.

The synthetic generator plants class signal of configurable strength into
text embeddings and numeric features so the whole pipeline can be exercised
at desk scale without access-restricted data.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import IntegrityError, ParseError, ValidationError

ARTICLE_FIELDS = ("id", "title", "description", "source", "engagement", "veracity")
SERIES_FIELDS = ("id", "veracity", "tweets")
TWEET_FIELDS = ("id", "text", "timestamp", "followers", "following", "verified", "likes")

TITLE_KEY_SUFFIX = "#title"
DESCRIPTION_KEY_SUFFIX = "#description"


class CorpusWarning(UserWarning):
    """Non-fatal data oddity noticed while loading (e.g. unknown fields)."""


@dataclass(frozen=True)
class Article:
    """One news item with aggregate engagement and an optional veracity label (1 = fake)."""

    id: str
    title: str
    description: str
    source: str
    engagement: int
    veracity: int | None = None

    def title_key(self) -> str:
        return self.id + TITLE_KEY_SUFFIX

    def description_key(self) -> str:
        return self.id + DESCRIPTION_KEY_SUFFIX


@dataclass(frozen=True)
class Tweet:
    """One tweet in a propagation path; delta_t is seconds since the series start."""

    id: str
    text: str
    delta_t: float
    followers: int
    following: int
    verified: int
    likes: int


@dataclass(frozen=True)
class TweetSeries:
    """Time-ordered tweets referring to one story; optional veracity label (1 = fake)."""

    id: str
    tweets: tuple[Tweet, ...]
    veracity: int | None = None

    def total_likes(self) -> int:
        return sum(t.likes for t in self.tweets)


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a deterministic synthetic corpus with planted class signal.

    signal_placement controls where per-series signal lives: "cumulative"
    spreads it evenly over tweets (evidence accumulates with observed length),
    "first_tweet" concentrates all of it in the series' first tweet.
    """

    n_items: int
    task: str  # "veracity" | "virality"
    corpus_shape: str  # "article" | "series"
    positive_rate: float
    text_signal_strength: float
    numeric_signal_strength: float
    embedding_dim: int
    series_length_range: tuple[int, int] = (2, 8)
    seed: int = 0
    signal_placement: str = "cumulative"

    def __post_init__(self):
        if self.n_items < 2:
            raise ValidationError("n_items must be >= 2")
        if self.task not in ("veracity", "virality"):
            raise ValidationError(f"unknown task {self.task!r}")
        if self.corpus_shape not in ("article", "series"):
            raise ValidationError(f"unknown corpus_shape {self.corpus_shape!r}")
        if not 0.0 < self.positive_rate < 1.0:
            raise ValidationError("positive_rate must lie in (0, 1)")
        if self.text_signal_strength < 0 or self.numeric_signal_strength < 0:
            raise ValidationError("signal strengths must be non-negative")
        if self.embedding_dim < 1:
            raise ValidationError("embedding_dim must be >= 1")
        lo, hi = self.series_length_range
        if lo < 1 or hi < lo:
            raise ValidationError("series_length_range must satisfy 1 <= lo <= hi")
        if self.signal_placement not in ("cumulative", "first_tweet"):
            raise ValidationError(f"unknown signal_placement {self.signal_placement!r}")


@dataclass(frozen=True)
class Violation:
    item_id: str
    rule: str
    detail: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, item_id: str, rule: str, detail: str) -> None:
        self.violations.append(Violation(item_id, rule, detail))

    def render(self) -> str:
        if self.ok:
            return "corpus valid: no violations\n"
        lines = [f"{v.item_id}\t{v.rule}\t{v.detail}" for v in self.violations]
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# timestamp normalization


def normalize_timestamps(raw: Sequence[float]) -> list[float]:
    """Convert raw timestamps into delays from the earliest one.

    The input is sorted ascending first; output[0] is 0 and output[j] is
    sorted[j] - sorted[0].
    """
    if len(raw) == 0:
        raise ValidationError("cannot normalize an empty timestamp list")
    ordered = sorted(float(t) for t in raw)
    first = ordered[0]
    return [t - first for t in ordered]


# ---------------------------------------------------------------------------
# loaders / writers


def _require(record: dict, key: str, line: int):
    if key not in record:
        raise ParseError(f"missing required field {key!r}", line)
    return record[key]


def _check_unknown(record: dict, known: tuple[str, ...], line: int, kind: str) -> None:
    extra = [k for k in record if k not in known]
    if extra:
        warnings.warn(
            f"{kind} record on line {line} has unknown fields {extra}; ignored",
            CorpusWarning,
            stacklevel=3,
        )


def _parse_optional_binary(value, name: str, line: int) -> int | None:
    if value is None:
        return None
    if value in (0, 1):
        return int(value)
    raise ValidationError(f"line {line}: field {name!r} must be 0, 1, or null, got {value!r}")


def load_articles(path: str, allow_empty_description: bool = False) -> list[Article]:
    """Load an article corpus from a JSONL file.

    Either every record parses and validates or the whole load fails with a
    line-numbered error. Duplicate ids are integrity errors. Unknown fields
    are ignored with a warning.
    """
    articles: list[Article] = []
    seen: set[str] = set()
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read article file {path!r}: {exc}") from exc
    with fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"malformed record: {exc.msg}", line_no) from exc
            if not isinstance(record, dict):
                raise ParseError("record is not an object", line_no)
            _check_unknown(record, ARTICLE_FIELDS, line_no, "article")
            art_id = str(_require(record, "id", line_no))
            title = str(_require(record, "title", line_no))
            description = str(_require(record, "description", line_no))
            source = str(_require(record, "source", line_no))
            engagement = _require(record, "engagement", line_no)
            if not isinstance(engagement, int) or isinstance(engagement, bool):
                raise ParseError(f"field 'engagement' must be an integer, got {engagement!r}", line_no)
            if engagement < 0:
                raise ValidationError(f"line {line_no}: field 'engagement' must be >= 0, got {engagement}")
            if not title.strip():
                raise ValidationError(f"line {line_no}: field 'title' is empty after trim")
            if not description.strip() and not allow_empty_description:
                raise ValidationError(f"line {line_no}: field 'description' is empty after trim")
            veracity = _parse_optional_binary(record.get("veracity"), "veracity", line_no)
            if art_id in seen:
                raise IntegrityError(f"duplicate article id {art_id!r} on line {line_no}")
            seen.add(art_id)
            articles.append(Article(art_id, title, description, source, engagement, veracity))
    return articles


def _parse_count(record: dict, name: str, line: int) -> int:
    value = _require(record, name, line)
    if not isinstance(value, int) or isinstance(value, bool):
        raise ParseError(f"field {name!r} must be an integer, got {value!r}", line)
    if value < 0:
        raise ValidationError(f"line {line}: field {name!r} must be >= 0, got {value}")
    return value


def load_tweet_series(path: str) -> list[TweetSeries]:
    """Load a tweet-series corpus from a JSONL file.

    Tweets are sorted by raw timestamp and the timestamps replaced by
    delta_t delays from the series' first tweet.
    """
    out: list[TweetSeries] = []
    seen: set[str] = set()
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read series file {path!r}: {exc}") from exc
    with fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"malformed record: {exc.msg}", line_no) from exc
            if not isinstance(record, dict):
                raise ParseError("record is not an object", line_no)
            _check_unknown(record, SERIES_FIELDS, line_no, "series")
            series_id = str(_require(record, "id", line_no))
            if series_id in seen:
                raise IntegrityError(f"duplicate series id {series_id!r} on line {line_no}")
            seen.add(series_id)
            veracity = _parse_optional_binary(record.get("veracity"), "veracity", line_no)
            raw_tweets = _require(record, "tweets", line_no)
            if not isinstance(raw_tweets, list) or not raw_tweets:
                raise ValidationError(f"line {line_no}: series {series_id!r} has no tweets")
            parsed = []
            tweet_ids: set[str] = set()
            for tw in raw_tweets:
                if not isinstance(tw, dict):
                    raise ParseError("tweet entry is not an object", line_no)
                _check_unknown(tw, TWEET_FIELDS, line_no, "tweet")
                tweet_id = str(_require(tw, "id", line_no))
                if tweet_id in tweet_ids:
                    raise IntegrityError(
                        f"duplicate tweet id {tweet_id!r} within series {series_id!r} on line {line_no}"
                    )
                tweet_ids.add(tweet_id)
                ts_raw = _require(tw, "timestamp", line_no)
                try:
                    ts = float(ts_raw)
                except (TypeError, ValueError) as exc:
                    raise ParseError(f"unparseable timestamp {ts_raw!r}", line_no) from exc
                if not math.isfinite(ts):
                    raise ParseError(f"unparseable timestamp {ts_raw!r}", line_no)
                verified = tw.get("verified")
                if verified not in (0, 1):
                    raise ValidationError(
                        f"line {line_no}: field 'verified' must be 0 or 1, got {verified!r}"
                    )
                parsed.append(
                    (
                        ts,
                        tweet_id,
                        str(_require(tw, "text", line_no)),
                        _parse_count(tw, "followers", line_no),
                        _parse_count(tw, "following", line_no),
                        int(verified),
                        _parse_count(tw, "likes", line_no),
                    )
                )
            parsed.sort(key=lambda item: item[0])
            deltas = normalize_timestamps([p[0] for p in parsed])
            tweets = tuple(
                Tweet(tid, text, dt, followers, following, verified, likes)
                for dt, (_, tid, text, followers, following, verified, likes) in zip(deltas, parsed)
            )
            out.append(TweetSeries(series_id, tweets, veracity))
    return out


def _canonical_article_record(article: Article) -> dict:
    record = {
        "id": article.id,
        "title": article.title,
        "description": article.description,
        "source": article.source,
        "engagement": article.engagement,
    }
    if article.veracity is not None:
        record["veracity"] = article.veracity
    return record


def _canonical_series_record(series: TweetSeries) -> dict:
    record: dict = {"id": series.id}
    if series.veracity is not None:
        record["veracity"] = series.veracity
    record["tweets"] = [
        {
            "id": t.id,
            "text": t.text,
            "timestamp": float(t.delta_t),
            "followers": t.followers,
            "following": t.following,
            "verified": t.verified,
            "likes": t.likes,
        }
        for t in series.tweets
    ]
    return record


def write_corpus(items: Sequence[Article] | Sequence[TweetSeries], path: str) -> None:
    """Write a corpus in canonical JSONL form (fixed key order, compact separators).

    Canonicalization is idempotent: loading the output and writing it again
    reproduces the same bytes. Series timestamps are stored already rebased
    to delta_t.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            if isinstance(item, Article):
                record = _canonical_article_record(item)
            elif isinstance(item, TweetSeries):
                record = _canonical_series_record(item)
            else:
                raise TypeError(f"cannot serialize {type(item).__name__}")
            fh.write(json.dumps(record, ensure_ascii=False, separators=(",", ":")) + "\n")


# ---------------------------------------------------------------------------
# validation


def validate_corpus(items: Sequence[Article] | Sequence[TweetSeries]) -> ValidationReport:
    """Check every corpus invariant; violations become report rows, never exceptions."""
    report = ValidationReport()
    seen: set[str] = set()
    for item in items:
        if item.id in seen:
            report.add(item.id, "unique-id", "duplicate id in corpus")
        seen.add(item.id)
        if isinstance(item, Article):
            if item.engagement < 0:
                report.add(item.id, "engagement-non-negative", f"engagement={item.engagement}")
            if not item.title.strip():
                report.add(item.id, "title-non-empty", "title empty after trim")
            if not item.description.strip():
                report.add(item.id, "description-non-empty", "description empty after trim")
            if item.veracity not in (None, 0, 1):
                report.add(item.id, "veracity-binary", f"veracity={item.veracity!r}")
        elif isinstance(item, TweetSeries):
            if not item.tweets:
                report.add(item.id, "series-non-empty", "series has no tweets")
                continue
            if item.tweets[0].delta_t != 0:
                report.add(item.id, "delta-t-starts-at-zero", f"first delta_t={item.tweets[0].delta_t}")
            prev = None
            tweet_ids: set[str] = set()
            for t in item.tweets:
                if prev is not None and t.delta_t < prev:
                    report.add(item.id, "delta-t-non-decreasing", f"{t.delta_t} after {prev}")
                prev = t.delta_t
                if t.id in tweet_ids:
                    report.add(item.id, "unique-tweet-id", f"duplicate tweet id {t.id!r}")
                tweet_ids.add(t.id)
                if t.delta_t < 0:
                    report.add(item.id, "delta-t-non-negative", f"tweet {t.id}: delta_t={t.delta_t}")
                if t.followers < 0 or t.following < 0 or t.likes < 0:
                    report.add(item.id, "counts-non-negative", f"tweet {t.id}")
                if t.verified not in (0, 1):
                    report.add(item.id, "verified-binary", f"tweet {t.id}: verified={t.verified!r}")
            if item.veracity not in (None, 0, 1):
                report.add(item.id, "veracity-binary", f"veracity={item.veracity!r}")
    return report


# ---------------------------------------------------------------------------
# synthetic generation


def _planted_labels(n: int, rate: float, rng: np.random.Generator) -> np.ndarray:
    n_pos = int(round(rate * n))
    n_pos = min(max(n_pos, 1), n - 1)  # keep both classes at tiny n
    labels = np.zeros(n, dtype=np.int64)
    labels[:n_pos] = 1
    rng.shuffle(labels)
    return labels


def _signal_direction(dim: int, rng: np.random.Generator) -> np.ndarray:
    direction = rng.standard_normal(dim)
    return direction / np.linalg.norm(direction)


def _article_embeddings(
    labels: np.ndarray, dim: int, strength: float, rng: np.random.Generator
) -> dict[str, np.ndarray]:
    # one shared signal direction; title and description get independent noise
    direction = _signal_direction(dim, rng)
    shift = (strength / 2.0) * direction
    vectors: dict[str, np.ndarray] = {}
    for i, y in enumerate(labels):
        mean = shift if y == 1 else -shift
        art_id = f"a{i:06d}"
        vectors[art_id + TITLE_KEY_SUFFIX] = mean + rng.standard_normal(dim)
        vectors[art_id + DESCRIPTION_KEY_SUFFIX] = mean + rng.standard_normal(dim)
    return vectors


def _series_tweet_counts(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    lo, hi = spec.series_length_range
    return rng.integers(lo, hi + 1, size=spec.n_items)


def _tweet_signal_share(j: int, placement: str) -> float:
    """Fraction of the full per-item signal carried by tweet j."""
    if placement == "first_tweet":
        return 1.0 if j == 0 else 0.0
    return 1.0  # cumulative: every tweet carries the full per-tweet shift


def generate_synthetic_corpus(spec: SyntheticSpec):
    """Build (corpus, embedding store, ground-truth labels) from a SyntheticSpec.

    Deterministic given the seed. Text embeddings are class-conditional
    Gaussians whose mean separation is text_signal_strength; numeric features
    (likes, followers, source choice) shift with the label in proportion to
    numeric_signal_strength. Returns labels as {item_id: 0/1}.
    """
    from .features import EmbeddingStore  # local import to avoid a cycle

    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0xC0FFEE]))
    labels = _planted_labels(spec.n_items, spec.positive_rate, rng)

    if spec.corpus_shape == "article":
        articles = _generate_articles(spec, labels, rng)
        vectors = _article_embeddings(labels, spec.embedding_dim, spec.text_signal_strength, rng)
        store = EmbeddingStore.from_dict(vectors, dim=spec.embedding_dim)
        truth = {a.id: int(y) for a, y in zip(articles, labels)}
        return articles, store, truth

    series, vectors = _generate_series(spec, labels, rng)
    store = EmbeddingStore.from_dict(vectors, dim=spec.embedding_dim)
    truth = {s.id: int(y) for s, y in zip(series, labels)}
    return series, store, truth


def _generate_articles(spec: SyntheticSpec, labels: np.ndarray, rng: np.random.Generator):
    n = spec.n_items
    n_pos = int(labels.sum())
    # skewed engagement like real shares data; for the virality task the top
    # block is assigned to positive items so a tail-percentile rule recovers them
    engagement = np.rint(rng.lognormal(mean=5.4, sigma=1.6, size=n)).astype(np.int64)
    engagement = np.maximum(engagement, 0)
    if spec.task == "virality":
        ordered = np.sort(engagement)
        neg_vals, pos_vals = ordered[: n - n_pos], ordered[n - n_pos :]
        if n_pos and neg_vals.size and pos_vals[0] <= neg_vals[-1]:
            pos_vals = pos_vals + (neg_vals[-1] - pos_vals[0] + 1)
        engagement = np.empty(n, dtype=np.int64)
        engagement[labels == 0] = rng.permutation(neg_vals)
        engagement[labels == 1] = rng.permutation(pos_vals)

    n_sources = 12
    bias = spec.numeric_signal_strength / (1.0 + spec.numeric_signal_strength)
    sources = np.empty(n, dtype=np.int64)
    for i, y in enumerate(labels):
        if rng.random() < bias:
            block = np.arange(n_sources // 2) if y == 1 else np.arange(n_sources // 2, n_sources)
            sources[i] = rng.choice(block)
        else:
            sources[i] = rng.integers(0, n_sources)

    articles = []
    for i, y in enumerate(labels):
        art_id = f"a{i:06d}"
        articles.append(
            Article(
                id=art_id,
                title=f"synthetic headline {i}",
                description=f"synthetic description for item {i}",
                source=f"outlet-{sources[i]:02d}",
                engagement=int(engagement[i]),
                veracity=int(y) if spec.task == "veracity" else None,
            )
        )
    return articles


def _generate_series(spec: SyntheticSpec, labels: np.ndarray, rng: np.random.Generator):
    dim = spec.embedding_dim
    direction = _signal_direction(dim, rng)
    text_shift = (spec.text_signal_strength / 2.0) * direction
    counts = _series_tweet_counts(spec, rng)

    series_list: list[TweetSeries] = []
    vectors: dict[str, np.ndarray] = {}
    for i, y in enumerate(labels):
        m = int(counts[i])
        series_id = f"s{i:06d}"
        gaps = rng.exponential(scale=600.0, size=m)
        delta = np.concatenate([[0.0], np.cumsum(gaps[1:])]) if m > 1 else np.array([0.0])
        followers = np.rint(rng.lognormal(5.0, 1.5, size=m)).astype(np.int64)
        following = np.rint(rng.lognormal(4.5, 1.2, size=m)).astype(np.int64)
        verified_p = 0.08 + (0.1 * min(1.0, spec.numeric_signal_strength) if y == 1 else 0.0)
        verified = (rng.random(m) < verified_p).astype(np.int64)
        likes = np.empty(m, dtype=np.int64)
        tweets = []
        for j in range(m):
            share = _tweet_signal_share(j, spec.signal_placement)
            like_mu = 1.0 + (spec.numeric_signal_strength * share if y == 1 else 0.0)
            likes[j] = int(np.rint(rng.lognormal(like_mu, 1.0)))
            tweet_id = f"{series_id}t{j:03d}"
            mean = text_shift * share if y == 1 else -text_shift * share
            vectors[tweet_id] = mean + rng.standard_normal(dim)
            tweets.append(
                Tweet(
                    id=tweet_id,
                    text=f"synthetic tweet {j} of {series_id}",
                    delta_t=float(delta[j]),
                    followers=int(followers[j]),
                    following=int(following[j]),
                    verified=int(verified[j]),
                    likes=int(likes[j]),
                )
            )
        series_list.append(
            TweetSeries(
                id=series_id,
                tweets=tuple(tweets),
                veracity=int(y) if spec.task == "veracity" else None,
            )
        )
    return series_list, vectors


def regenerate_embeddings(
    items: Sequence[Article] | Sequence[TweetSeries],
    truth: dict[str, int],
    dim: int,
    text_signal_strength: float,
    seed: int,
    signal_placement: str = "cumulative",
):
    """Synthesize a fresh embedding store for an existing corpus.

    Used by the embedding-swap experiment: the class-mean separation equals
    text_signal_strength regardless of dim, so stores of different widths
    carry equal planted signal.
    """
    from .features import EmbeddingStore

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE313]))
    direction = _signal_direction(dim, rng)
    shift = (text_signal_strength / 2.0) * direction
    vectors: dict[str, np.ndarray] = {}
    for item in items:
        y = truth[item.id]
        if isinstance(item, Article):
            mean = shift if y == 1 else -shift
            vectors[item.title_key()] = mean + rng.standard_normal(dim)
            vectors[item.description_key()] = mean + rng.standard_normal(dim)
        else:
            for j, tweet in enumerate(item.tweets):
                share = _tweet_signal_share(j, signal_placement)
                mean = shift * share if y == 1 else -shift * share
                vectors[tweet.id] = mean + rng.standard_normal(dim)
    return EmbeddingStore.from_dict(vectors, dim=dim)
