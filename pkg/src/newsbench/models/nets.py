"""Neural model zoo: article-side MLP variants and series-side sequence encoders.

Every family exposes the same surface: seeded parameter construction from a
ModelConfig, `forward(batch, train, rng)` returning one logit per item, and a
`parameters()` dict consumed by the optimizer, the checkpointer, and the
finite-difference gradient checks. Sequence models are mask-aware: logits are
invariant to the content of padded positions.

Article batches carry "x" (text matrix) plus, per variant, "source_idx" or
"avg_eng". Series batches carry "text" (n, l, d), "numeric" (n, l, 5) and
"mask" (n, l); the 5 -> 32 numeric projection is a trainable part of the
graph.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ..errors import ConfigError, ValidationError
from . import autodiff as ad
from .autodiff import Tensor

MLP_FAMILIES = ("mlp", "mlp+source_emb", "mlp+avg_eng", "mlp+gating")
SEQUENCE_FAMILIES = ("rnn", "gru", "lstm", "cnn", "transformer")
CLASSICAL_FAMILIES = ("dummy_stratified", "linear", "tree_ensemble")
NEURAL_FAMILIES = MLP_FAMILIES + SEQUENCE_FAMILIES
ALL_FAMILIES = NEURAL_FAMILIES + CLASSICAL_FAMILIES

_FAMILY_SALT = {name: 101 + i for i, name in enumerate(ALL_FAMILIES)}


@dataclass
class ModelConfig:
    """Architecture knobs for one model family.

    input_dim is the text width the model consumes: the concatenated
    title+description width for article models, the per-tweet embedding dim
    for sequence models.
    """

    family: str
    input_dim: int
    view: str = "all"  # sequence families: all | text_only | numeric_only
    head_hidden: int = 256
    rnn_hidden: int = 128
    cnn_channels: int = 128
    d_model: int = 256
    n_heads: int = 8
    ffn_dim: int = 512
    max_len: int | None = None
    dropout: float = 0.1
    source_vocab_size: int | None = None
    source_emb_dim: int = 16
    proj_dim: int = 32
    numeric_dim: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.family not in ALL_FAMILIES:
            raise ConfigError(f"unknown model family {self.family!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.input_dim < 1 and self.view != "numeric_only":
            raise ConfigError("input_dim must be positive")
        if self.family in SEQUENCE_FAMILIES and self.view not in ("all", "text_only", "numeric_only"):
            raise ConfigError(f"unknown view {self.view!r}")
        if self.family == "transformer":
            if self.d_model % self.n_heads != 0:
                raise ConfigError(
                    f"d_model {self.d_model} must be divisible by n_heads {self.n_heads}"
                )
            if self.max_len is None:
                raise ConfigError("transformer needs max_len for its positional table")
        if self.family == "mlp+source_emb" and not self.source_vocab_size:
            raise ConfigError("mlp+source_emb needs source_vocab_size")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown ModelConfig fields: {sorted(unknown)}")
        if "max_len" in data and isinstance(data["max_len"], float):
            data = {**data, "max_len": int(data["max_len"])}
        return cls(**data)


# ---------------------------------------------------------------------------
# initialization helpers


def _fan_in_uniform(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    bound = 1.0 / np.sqrt(shape[0])
    return rng.uniform(-bound, bound, size=shape)


def _orthogonal(rng: np.random.Generator, size: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((size, size)))
    return q * np.sign(np.diag(r))


def _head_params(rng: np.random.Generator, in_dim: int, hidden: int) -> dict[str, Tensor]:
    return {
        "head_w1": ad.parameter(_fan_in_uniform(rng, (in_dim, hidden))),
        "head_b1": ad.parameter(np.zeros(hidden)),
        "head_w2": ad.parameter(_fan_in_uniform(rng, (hidden, 1))),
        "head_b2": ad.parameter(np.zeros(1)),
    }


class NeuralModel:
    """Common plumbing: parameter registry, seeded init RNG, head forward."""

    def __init__(self, config: ModelConfig):
        self.config = config
        self.params: dict[str, Tensor] = {}
        self._init_rng = np.random.default_rng(
            np.random.SeedSequence([config.seed, _FAMILY_SALT[config.family]])
        )

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def set_parameters(self, arrays: dict[str, np.ndarray]) -> None:
        if set(arrays) != set(self.params):
            raise ValidationError(
                f"parameter name mismatch: expected {sorted(self.params)}, got {sorted(arrays)}"
            )
        for name, arr in arrays.items():
            if arr.shape != self.params[name].value.shape:
                raise ValidationError(f"parameter {name!r} shape mismatch")
            self.params[name].value = np.array(arr, dtype=np.float64)

    def parameter_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self.params.items()}

    def _head(self, x: Tensor, train: bool, rng: np.random.Generator | None) -> Tensor:
        h = ad.gelu(x @ self.params["head_w1"] + self.params["head_b1"])
        h = ad.dropout(h, self.config.dropout, rng, train)
        logits = h @ self.params["head_w2"] + self.params["head_b2"]
        return ad.reshape(logits, (-1,))

    def forward(self, batch: dict[str, np.ndarray], train: bool = False,
                rng: np.random.Generator | None = None) -> Tensor:
        raise NotImplementedError

    def _require(self, batch: dict[str, np.ndarray], key: str) -> np.ndarray:
        if key not in batch:
            raise ConfigError(f"{self.config.family} expects batch key {key!r}")
        return batch[key]


# ---------------------------------------------------------------------------
# article-side models


class MlpModel(NeuralModel):
    """Two affine layers with GELU and dropout on the concatenated text embedding."""

    def __init__(self, config: ModelConfig):
        super().__init__(config)
        self.params = _head_params(self._init_rng, config.input_dim, config.head_hidden)

    def forward(self, batch, train=False, rng=None):
        x = Tensor(self._require(batch, "x"))
        if x.shape[1] != self.config.input_dim:
            raise ConfigError(
                f"input width {x.shape[1]} does not match configured input_dim {self.config.input_dim}"
            )
        return self._head(x, train, rng)


class SourceEmbMlp(NeuralModel):
    """MLP over [text || learned source embedding]."""

    def __init__(self, config: ModelConfig):
        super().__init__(config)
        rng = self._init_rng
        self.params = {
            "source_table": ad.parameter(
                rng.normal(0.0, 0.1, size=(config.source_vocab_size, config.source_emb_dim))
            )
        }
        self.params.update(
            _head_params(rng, config.input_dim + config.source_emb_dim, config.head_hidden)
        )

    def forward(self, batch, train=False, rng=None):
        x = Tensor(self._require(batch, "x"))
        idx = np.asarray(self._require(batch, "source_idx"), dtype=np.int64)
        emb = ad.gather_rows(self.params["source_table"], idx)
        return self._head(ad.concat([x, emb], axis=-1), train, rng)


class AvgEngMlp(NeuralModel):
    """MLP over [text || scalar source average engagement]."""

    def __init__(self, config: ModelConfig):
        super().__init__(config)
        self.params = _head_params(self._init_rng, config.input_dim + 1, config.head_hidden)

    def forward(self, batch, train=False, rng=None):
        x = Tensor(self._require(batch, "x"))
        scalar = Tensor(np.asarray(self._require(batch, "avg_eng"), dtype=np.float64).reshape(-1, 1))
        return self._head(ad.concat([x, scalar], axis=-1), train, rng)


class GatedMlp(NeuralModel):
    """GMU-style gate between the text branch and a lifted engagement branch.

    The scalar source average engagement is lifted by a learned affine map to
    the branch width (the text width); branch maps and the gate are bias-free
    so the fused vector is h = z * tanh(Wt x) + (1 - z) * tanh(We e).
    """

    def __init__(self, config: ModelConfig):
        super().__init__(config)
        rng = self._init_rng
        d = config.input_dim
        self.params = {
            "lift_w": ad.parameter(_fan_in_uniform(rng, (1, d))),
            "lift_b": ad.parameter(np.zeros(d)),
            "gate_text": ad.parameter(_fan_in_uniform(rng, (d, d))),
            "gate_eng": ad.parameter(_fan_in_uniform(rng, (d, d))),
            "gate_z": ad.parameter(_fan_in_uniform(rng, (2 * d, d))),
        }
        self.params.update(_head_params(rng, d, config.head_hidden))

    def forward(self, batch, train=False, rng=None):
        x = Tensor(self._require(batch, "x"))
        scalar = Tensor(np.asarray(self._require(batch, "avg_eng"), dtype=np.float64).reshape(-1, 1))
        eng = scalar @ self.params["lift_w"] + self.params["lift_b"]
        a = ad.tanh(x @ self.params["gate_text"])
        b = ad.tanh(eng @ self.params["gate_eng"])
        z = ad.sigmoid(ad.concat([x, eng], axis=-1) @ self.params["gate_z"])
        fused = ad.add(ad.mul(z, a), ad.mul(ad.sub(1.0, z), b))
        return self._head(fused, train, rng)


# ---------------------------------------------------------------------------
# series-side models


class SequenceModel(NeuralModel):
    """Shared view assembly: the numeric 5 -> 32 projection lives in the graph."""

    def __init__(self, config: ModelConfig):
        super().__init__(config)
        self.params = {}
        if config.view in ("all", "numeric_only"):
            self.params["proj_w"] = ad.parameter(
                _fan_in_uniform(self._init_rng, (config.numeric_dim, config.proj_dim))
            )
            self.params["proj_b"] = ad.parameter(np.zeros(config.proj_dim))

    @property
    def step_dim(self) -> int:
        cfg = self.config
        if cfg.view == "all":
            return cfg.input_dim + cfg.proj_dim
        if cfg.view == "text_only":
            return cfg.input_dim
        return cfg.proj_dim

    def _assemble(self, batch: dict[str, np.ndarray]) -> tuple[Tensor, np.ndarray]:
        mask = np.asarray(self._require(batch, "mask"), dtype=np.float64)
        parts: list[Tensor] = []
        if self.config.view in ("all", "text_only"):
            parts.append(Tensor(self._require(batch, "text")))
        if self.config.view in ("all", "numeric_only"):
            numeric = Tensor(self._require(batch, "numeric"))
            parts.append(numeric @ self.params["proj_w"] + self.params["proj_b"])
        x = parts[0] if len(parts) == 1 else ad.concat(parts, axis=-1)
        if not mask.any(axis=1).all():
            raise ValidationError("every series must have at least one unmasked tweet")
        return x, mask


def _gate_params(rng, in_dim: int, hidden: int, gates: Sequence[str], prefix: str) -> dict[str, Tensor]:
    out: dict[str, Tensor] = {}
    for gate in gates:
        out[f"{prefix}_w{gate}"] = ad.parameter(_fan_in_uniform(rng, (in_dim, hidden)))
        out[f"{prefix}_u{gate}"] = ad.parameter(_orthogonal(rng, hidden))
        out[f"{prefix}_b{gate}"] = ad.parameter(np.zeros(hidden))
    return out


class RecurrentModel(SequenceModel):
    """Bidirectional RNN/GRU/LSTM, 128 units per direction by default.

    The forward direction's final state is the state at the last real
    (unmasked) step; the backward direction's final state is the state at
    step 0. Masked steps carry state through unchanged, which makes logits
    invariant to padded content.
    """

    GATES = {"rnn": ("h",), "gru": ("r", "z", "n"), "lstm": ("i", "f", "g", "o")}

    def __init__(self, config: ModelConfig):
        super().__init__(config)
        rng = self._init_rng
        gates = self.GATES[config.family]
        for direction in ("fw", "bw"):
            self.params.update(_gate_params(rng, self.step_dim, config.rnn_hidden, gates, direction))
        self.params.update(_head_params(rng, 2 * config.rnn_hidden, config.head_hidden))

    def _preactivations(self, x: Tensor, prefix: str) -> dict[str, Tensor]:
        """Input-side gate projections for every timestep in one batched matmul."""
        return {
            gate: x @ self.params[f"{prefix}_w{gate}"] + self.params[f"{prefix}_b{gate}"]
            for gate in self.GATES[self.config.family]
        }

    def _step(self, prefix: str, pre_t: dict[str, Tensor], h: Tensor, c: Tensor | None):
        p = self.params
        kind = self.config.family
        if kind == "rnn":
            return ad.tanh(pre_t["h"] + h @ p[f"{prefix}_uh"]), None
        if kind == "gru":
            r = ad.sigmoid(pre_t["r"] + h @ p[f"{prefix}_ur"])
            z = ad.sigmoid(pre_t["z"] + h @ p[f"{prefix}_uz"])
            n = ad.tanh(pre_t["n"] + ad.mul(r, h @ p[f"{prefix}_un"]))
            h_new = ad.add(ad.mul(ad.sub(1.0, z), n), ad.mul(z, h))
            return h_new, None
        i = ad.sigmoid(pre_t["i"] + h @ p[f"{prefix}_ui"])
        f = ad.sigmoid(pre_t["f"] + h @ p[f"{prefix}_uf"])
        g = ad.tanh(pre_t["g"] + h @ p[f"{prefix}_ug"])
        o = ad.sigmoid(pre_t["o"] + h @ p[f"{prefix}_uo"])
        c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
        h_new = ad.mul(o, ad.tanh(c_new))
        return h_new, c_new

    def _run_direction(self, x: Tensor, mask: np.ndarray, prefix: str, reverse: bool) -> Tensor:
        n, length = mask.shape
        hidden = self.config.rnn_hidden
        pre = self._preactivations(x, prefix)
        h = Tensor(np.zeros((n, hidden)))
        c: Tensor | None = Tensor(np.zeros((n, hidden))) if self.config.family == "lstm" else None
        steps = range(length - 1, -1, -1) if reverse else range(length)
        for t in steps:
            pre_t = {gate: pre[gate][:, t, :] for gate in pre}
            h_new, c_new = self._step(prefix, pre_t, h, c)
            m = mask[:, t : t + 1]
            h = ad.add(ad.mul(h_new, m), ad.mul(h, 1.0 - m))
            if c is not None:
                c = ad.add(ad.mul(c_new, m), ad.mul(c, 1.0 - m))
        return h

    def forward(self, batch, train=False, rng=None):
        x, mask = self._assemble(batch)
        last_fw = self._run_direction(x, mask, "fw", reverse=False)
        last_bw = self._run_direction(x, mask, "bw", reverse=True)
        return self._head(ad.concat([last_fw, last_bw], axis=-1), train, rng)


class CnnModel(SequenceModel):
    """Two 1-D convolutions (kernel 3, padding 1) with GELU, masked max-pool, head.

    Masked rows are zeroed before each convolution so padded content never
    reaches the receptive field of a real position.
    """

    def __init__(self, config: ModelConfig):
        super().__init__(config)
        rng = self._init_rng
        channels = config.cnn_channels
        for layer, in_dim in (("conv1", self.step_dim), ("conv2", channels)):
            for offset in ("m1", "0", "p1"):
                self.params[f"{layer}_k{offset}"] = ad.parameter(
                    _fan_in_uniform(rng, (in_dim, channels)) / np.sqrt(3.0)
                )
            self.params[f"{layer}_b"] = ad.parameter(np.zeros(channels))
        self.params.update(_head_params(rng, channels, config.head_hidden))

    def _conv(self, x: Tensor, layer: str) -> Tensor:
        n, length, _ = x.value.shape
        channels = self.config.cnn_channels
        zero = Tensor(np.zeros((n, 1, channels)))
        from_prev = x @ self.params[f"{layer}_km1"]
        from_here = x @ self.params[f"{layer}_k0"]
        from_next = x @ self.params[f"{layer}_kp1"]
        if length > 1:
            shifted_prev = ad.concat([zero, from_prev[:, :-1, :]], axis=1)
            shifted_next = ad.concat([from_next[:, 1:, :], zero], axis=1)
        else:
            shifted_prev = zero
            shifted_next = zero
        return ad.add(ad.add(shifted_prev, from_here), shifted_next) + self.params[f"{layer}_b"]

    def forward(self, batch, train=False, rng=None):
        x, mask = self._assemble(batch)
        m3 = mask[:, :, None]
        h = ad.mul(x, m3)
        h = ad.gelu(self._conv(h, "conv1"))
        h = ad.mul(h, m3)
        h = ad.gelu(self._conv(h, "conv2"))
        h = ad.dropout(h, self.config.dropout, rng, train)
        pooled = ad.masked_max(h, m3.astype(bool), axis=1)
        return self._head(pooled, train, rng)


class TransformerModel(SequenceModel):
    """One post-norm encoder layer with learned positions and masked max-pool.

    Inputs are projected to d_model (256 by default, divisible by the 8
    heads); attention assigns exactly zero weight to padded keys.
    """

    def __init__(self, config: ModelConfig):
        super().__init__(config)
        rng = self._init_rng
        d = config.d_model
        self.params.update(
            {
                "in_w": ad.parameter(_fan_in_uniform(rng, (self.step_dim, d))),
                "in_b": ad.parameter(np.zeros(d)),
                "pos": ad.parameter(rng.normal(0.0, 0.02, size=(config.max_len, d))),
                "attn_wq": ad.parameter(_fan_in_uniform(rng, (d, d))),
                "attn_bq": ad.parameter(np.zeros(d)),
                "attn_wk": ad.parameter(_fan_in_uniform(rng, (d, d))),
                "attn_bk": ad.parameter(np.zeros(d)),
                "attn_wv": ad.parameter(_fan_in_uniform(rng, (d, d))),
                "attn_bv": ad.parameter(np.zeros(d)),
                "attn_wo": ad.parameter(_fan_in_uniform(rng, (d, d))),
                "attn_bo": ad.parameter(np.zeros(d)),
                "ln1_g": ad.parameter(np.ones(d)),
                "ln1_b": ad.parameter(np.zeros(d)),
                "ffn_w1": ad.parameter(_fan_in_uniform(rng, (d, config.ffn_dim))),
                "ffn_b1": ad.parameter(np.zeros(config.ffn_dim)),
                "ffn_w2": ad.parameter(_fan_in_uniform(rng, (config.ffn_dim, d))),
                "ffn_b2": ad.parameter(np.zeros(d)),
                "ln2_g": ad.parameter(np.ones(d)),
                "ln2_b": ad.parameter(np.zeros(d)),
            }
        )
        self.params.update(_head_params(rng, d, config.head_hidden))
        self.last_attention: np.ndarray | None = None

    @staticmethod
    def _layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
        mu = ad.tmean(x, axis=-1, keepdims=True)
        centered = ad.sub(x, mu)
        var = ad.tmean(ad.mul(centered, centered), axis=-1, keepdims=True)
        inv = ad.power(ad.add(var, eps), -0.5)
        return ad.add(ad.mul(ad.mul(centered, inv), gain), bias)

    def forward(self, batch, train=False, rng=None):
        x, mask = self._assemble(batch)
        cfg = self.config
        n, length = mask.shape
        if length > cfg.max_len:
            raise ConfigError(f"sequence length {length} exceeds configured max_len {cfg.max_len}")
        p = self.params
        d, heads = cfg.d_model, cfg.n_heads
        head_dim = d // heads

        h = x @ p["in_w"] + p["in_b"] + p["pos"][:length, :]

        def split_heads(t: Tensor) -> Tensor:
            return ad.transpose(ad.reshape(t, (n, length, heads, head_dim)), (0, 2, 1, 3))

        q = split_heads(h @ p["attn_wq"] + p["attn_bq"])
        k = split_heads(h @ p["attn_wk"] + p["attn_bk"])
        v = split_heads(h @ p["attn_wv"] + p["attn_bv"])
        scores = ad.mul(q @ ad.transpose(k, (0, 1, 3, 2)), 1.0 / np.sqrt(head_dim))
        key_mask = mask[:, None, None, :].astype(bool)
        attn = ad.masked_softmax(scores, key_mask, axis=-1)
        self.last_attention = attn.value
        attn = ad.dropout(attn, cfg.dropout, rng, train)
        ctx = ad.reshape(ad.transpose(attn @ v, (0, 2, 1, 3)), (n, length, d))
        ctx = ctx @ p["attn_wo"] + p["attn_bo"]
        ctx = ad.dropout(ctx, cfg.dropout, rng, train)
        h = self._layer_norm(ad.add(h, ctx), p["ln1_g"], p["ln1_b"])

        ffn = ad.gelu(h @ p["ffn_w1"] + p["ffn_b1"])
        ffn = ad.dropout(ffn, cfg.dropout, rng, train)
        ffn = ffn @ p["ffn_w2"] + p["ffn_b2"]
        ffn = ad.dropout(ffn, cfg.dropout, rng, train)
        h = self._layer_norm(ad.add(h, ffn), p["ln2_g"], p["ln2_b"])

        pooled = ad.masked_max(h, mask[:, :, None].astype(bool), axis=1)
        return self._head(pooled, train, rng)


_FAMILY_CLASSES = {
    "mlp": MlpModel,
    "mlp+source_emb": SourceEmbMlp,
    "mlp+avg_eng": AvgEngMlp,
    "mlp+gating": GatedMlp,
    "rnn": RecurrentModel,
    "gru": RecurrentModel,
    "lstm": RecurrentModel,
    "cnn": CnnModel,
    "transformer": TransformerModel,
}


def build_model(config: ModelConfig) -> NeuralModel:
    if config.family not in _FAMILY_CLASSES:
        raise ConfigError(f"{config.family!r} is not a trainable neural family")
    return _FAMILY_CLASSES[config.family](config)
