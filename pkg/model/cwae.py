"""
Context-conditioned Wasserstein autoencoder over integer-encoded categorical rows.

Context and content columns each get an embedding table. The encoder reads the
concatenation of every embedding and produces the latent code; the context
embeddings are appended to that code again before the decoder, which emits one
softmax block per content column. With no context columns the same code path
is a plain autoencoder over all columns.

The MMD regulariser compares codes only among rows with the same context value
by default, which keeps the code free of context information.
"""

from dataclasses import asdict, dataclass, field, replace
import math

import numpy as np
from scipy.special import log_softmax, logsumexp

from common.errors import ValidationError
from data.schema import DatasetSchema
from model.layers import (
    Parameter,
    affine,
    affine_backward,
    embedding_backward,
    embedding_forward,
    ensure_finite,
    per_row_cross_entropy,
    rbf_mmd,
    relu_backward,
    relu_forward,
    softmax_cross_entropy,
)

MMD_ON_ENCODER = "encoder"
MMD_ON_LATENT = "latent"


@dataclass(frozen=True)
class ModelConfig:
    """
    Architecture and loss settings.

    context_columns: tuple[str, ...]
        conditioning columns, empty for the unconditioned baseline
    content_columns: tuple[str, ...]
        reconstructed columns
    lambda_mmd: float
        weight of the MMD regulariser
    mmd_sigma: float | None
        RBF bandwidth, None means sqrt(dim / 2) of the regularised code
    mmd_target: str
        "encoder" regularises the encoder output, "latent" the code after
        the context embeddings are appended
    mmd_per_context: bool
        with context columns, only codes of rows sharing a context value are
        compared, so the code is pushed towards the prior within every
        context and the decoder has to take the context from its embedding
    """

    context_columns: tuple[str, ...] = ()
    content_columns: tuple[str, ...] = ()
    embed_dim: int = 16
    encoder_hidden: tuple[int, ...] = (64,)
    latent_dim: int = 4
    decoder_hidden: tuple[int, ...] = (64,)
    lambda_mmd: float = 10.0
    mmd_sigma: float | None = None
    mmd_target: str = MMD_ON_ENCODER
    mmd_per_context: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "context_columns", tuple(self.context_columns))
        object.__setattr__(self, "content_columns", tuple(self.content_columns))
        object.__setattr__(self, "encoder_hidden", tuple(int(w) for w in self.encoder_hidden))
        object.__setattr__(self, "decoder_hidden", tuple(int(w) for w in self.decoder_hidden))
        if set(self.context_columns) & set(self.content_columns):
            raise ValidationError("a column cannot be both context and content")
        if not self.content_columns:
            raise ValidationError("model needs at least one content column")
        if self.embed_dim < 1 or self.latent_dim < 1 or any(w < 1 for w in self.encoder_hidden + self.decoder_hidden):
            raise ValidationError("layer widths must be positive")
        if self.lambda_mmd < 0:
            raise ValidationError("lambda_mmd must be non-negative")
        if self.mmd_sigma is not None and self.mmd_sigma <= 0:
            raise ValidationError("mmd_sigma must be positive")
        if self.mmd_target not in (MMD_ON_ENCODER, MMD_ON_LATENT):
            raise ValidationError(f"mmd_target must be {MMD_ON_ENCODER!r} or {MMD_ON_LATENT!r}")

    @classmethod
    def for_context(cls, schema: DatasetSchema, context: str | None, **overrides) -> "ModelConfig":
        """Config conditioning on `context` (None for no context) with every other column as content."""
        if context is not None and context not in schema.names:
            raise ValidationError(f"unknown context column {context!r}")
        context_columns = () if context is None else (context,)
        content_columns = tuple(n for n in schema.names if n not in context_columns)
        return cls(context_columns=context_columns, content_columns=content_columns, **overrides)

    @property
    def is_unconditioned(self) -> bool:
        return not self.context_columns

    @property
    def final_latent_dim(self) -> int:
        return self.latent_dim + self.embed_dim * len(self.context_columns)

    @property
    def mmd_dim(self) -> int:
        return self.latent_dim if self.mmd_target == MMD_ON_ENCODER else self.final_latent_dim

    @property
    def sigma(self) -> float:
        return self.mmd_sigma if self.mmd_sigma is not None else math.sqrt(self.mmd_dim / 2.0)

    def with_seed(self, seed: int) -> "ModelConfig":
        return replace(self, seed=int(seed))

    def to_dict(self) -> dict:
        payload = asdict(self)
        for key in ("context_columns", "content_columns", "encoder_hidden", "decoder_hidden"):
            payload[key] = list(payload[key])
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "ModelConfig":
        return cls(**payload)


@dataclass(frozen=True)
class LatentCode:
    encoder_out: np.ndarray
    final_latent: np.ndarray


@dataclass
class CwaeParams:
    """
    Trainable tensors plus the column layout they were built for.

    context_embeddings / content_embeddings: dict[str, Parameter]
        one (cardinality + 1, embed_dim) table per column, row 0 is the unseen slot
    encoder / decoder: list[tuple[Parameter, Parameter]]
        (W, b) per fully connected layer
    """

    context_embeddings: dict[str, Parameter]
    content_embeddings: dict[str, Parameter]
    encoder: list[tuple[Parameter, Parameter]]
    decoder: list[tuple[Parameter, Parameter]]
    column_positions: dict[str, int]
    cardinalities: dict[str, int]
    logit_slices: dict[str, slice] = field(default_factory=dict)

    def parameters(self) -> list[Parameter]:
        params = list(self.context_embeddings.values()) + list(self.content_embeddings.values())
        for W, b in self.encoder + self.decoder:
            params += [W, b]
        return params

    def named(self) -> dict[str, Parameter]:
        return {p.name: p for p in self.parameters()}

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()


def _layer_stack(rng, prefix: str, widths: list[int]) -> list[tuple[Parameter, Parameter]]:
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        bound = 1.0 / math.sqrt(fan_in)
        W = Parameter(f"{prefix}.{i}.W", rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        b = Parameter(f"{prefix}.{i}.b", np.zeros(fan_out))
        layers.append((W, b))
    return layers


def init_params(
    config: ModelConfig,
    schema: DatasetSchema,
    marginals: dict[str, np.ndarray] | None = None,
) -> CwaeParams:
    """
    Seeded initialisation: embeddings uniform in (-0.05, 0.05), weights uniform
    in +-1/sqrt(fan_in), biases zero.

    config: ModelConfig
        architecture, its seed fixes every value
    schema: DatasetSchema
        schema the rows are encoded against
    marginals: dict[str, np.ndarray] | None
        per content column, probabilities over indices 0..cardinality. When
        given, the output biases start at their logs so an untrained model
        already predicts the column frequencies.
    """
    declared = list(config.context_columns) + list(config.content_columns)
    unknown = [c for c in declared if c not in schema.names]
    if unknown:
        raise ValidationError(f"unknown column(s) {unknown}")
    uncovered = [c for c in schema.names if c not in declared]
    if uncovered:
        raise ValidationError(f"columns neither context nor content: {uncovered}")

    rng = np.random.default_rng(config.seed)
    cardinalities = {c: schema.column(c).cardinality for c in declared}

    def table(prefix: str, column: str) -> Parameter:
        shape = (cardinalities[column] + 1, config.embed_dim)
        return Parameter(f"{prefix}.{column}", rng.uniform(-0.05, 0.05, size=shape))

    context_embeddings = {c: table("ctx_emb", c) for c in config.context_columns}
    content_embeddings = {c: table("cnt_emb", c) for c in config.content_columns}

    encoder_in = config.embed_dim * len(declared)
    encoder = _layer_stack(rng, "enc", [encoder_in, *config.encoder_hidden, config.latent_dim])
    logit_slices, start = {}, 0
    for c in config.content_columns:
        logit_slices[c] = slice(start, start + cardinalities[c] + 1)
        start += cardinalities[c] + 1
    decoder = _layer_stack(rng, "dec", [config.final_latent_dim, *config.decoder_hidden, start])
    if marginals is not None:
        output_bias = decoder[-1][1].value
        for c in config.content_columns:
            if c not in marginals:
                raise ValidationError(f"no marginal given for content column {c!r}")
            probabilities = np.asarray(marginals[c], dtype=np.float64)
            if probabilities.shape != (cardinalities[c] + 1,) or np.any(probabilities <= 0):
                raise ValidationError(f"marginal of {c!r} needs {cardinalities[c] + 1} positive probabilities")
            output_bias[logit_slices[c]] = np.log(probabilities)

    return CwaeParams(
        context_embeddings=context_embeddings,
        content_embeddings=content_embeddings,
        encoder=encoder,
        decoder=decoder,
        column_positions={c: schema.position(c) for c in declared},
        cardinalities=cardinalities,
        logit_slices=logit_slices,
    )


def _mlp_forward(layers, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray]]:
    """ReLU between layers, none after the last. Returns output, layer inputs and pre-activations."""
    inputs, pre = [], []
    h = x
    for i, (W, b) in enumerate(layers):
        inputs.append(h)
        a = affine(h, W, b)
        pre.append(a)
        h = relu_forward(a) if i < len(layers) - 1 else a
    return h, inputs, pre


def _mlp_backward(layers, inputs, pre, grad_out: np.ndarray) -> np.ndarray:
    grad = grad_out
    for i in reversed(range(len(layers))):
        W, b = layers[i]
        grad = affine_backward(inputs[i], W, b, grad)
        if i > 0:
            grad = relu_backward(pre[i - 1], grad)
    return grad


def _run(params: CwaeParams, config: ModelConfig, batch: np.ndarray) -> dict:
    batch = np.asarray(batch, dtype=np.int64)
    if batch.ndim != 2:
        raise ValidationError(f"batch must be a 2-d index matrix, got shape {batch.shape}")
    ctx = [embedding_forward(params.context_embeddings[c], batch[:, params.column_positions[c]]) for c in config.context_columns]
    cnt = [embedding_forward(params.content_embeddings[c], batch[:, params.column_positions[c]]) for c in config.content_columns]

    encoder_out, enc_inputs, enc_pre = _mlp_forward(params.encoder, np.concatenate(ctx + cnt, axis=1))
    final_latent = np.concatenate([encoder_out] + ctx, axis=1) if ctx else encoder_out
    logits, dec_inputs, dec_pre = _mlp_forward(params.decoder, final_latent)
    return {
        "batch": batch,
        "logits": logits,
        "latent": LatentCode(encoder_out=encoder_out, final_latent=final_latent),
        "enc": (enc_inputs, enc_pre),
        "dec": (dec_inputs, dec_pre),
    }


def forward(params: CwaeParams, config: ModelConfig, batch: np.ndarray) -> tuple[dict[str, np.ndarray], LatentCode]:
    """
    Per-content-column logits of width cardinality + 1, and the latent code.

    batch: np.ndarray
        (B, d) encoded rows in schema column order
    """
    cache = _run(params, config, batch)
    logits = {c: cache["logits"][:, params.logit_slices[c]] for c in config.content_columns}
    return logits, cache["latent"]


def _context_groups(params: CwaeParams, config: ModelConfig, rows: np.ndarray) -> np.ndarray | None:
    """One integer label per distinct combination of context values, None without context."""
    if not config.context_columns:
        return None
    positions = [params.column_positions[c] for c in config.context_columns]
    if len(positions) == 1:
        return rows[:, positions[0]]
    _, labels = np.unique(rows[:, positions], axis=0, return_inverse=True)
    return labels.reshape(-1)


def loss(
    params: CwaeParams,
    config: ModelConfig,
    batch: np.ndarray,
    prior_samples: np.ndarray,
    backward: bool = False,
) -> tuple[float, float, float]:
    """
    total = recon + lambda * mmd, recon being the sum over content columns of
    the batch-mean cross-entropy. With backward=True gradients are accumulated
    into params.

    prior_samples: np.ndarray
        (B, config.mmd_dim) draws from the standard normal prior
    """
    if len(batch) == 0:
        raise ValidationError("loss needs a non-empty batch")
    cache = _run(params, config, batch)
    rows, logits = cache["batch"], cache["logits"]
    latent: LatentCode = cache["latent"]

    recon = 0.0
    grad_logits = np.zeros_like(logits)
    for c in config.content_columns:
        cols = params.logit_slices[c]
        value, grad = softmax_cross_entropy(logits[:, cols], rows[:, params.column_positions[c]])
        recon += value
        grad_logits[:, cols] = grad

    regularised = latent.encoder_out if config.mmd_target == MMD_ON_ENCODER else latent.final_latent
    groups = _context_groups(params, config, rows) if config.mmd_per_context else None
    mmd, grad_mmd = rbf_mmd(regularised, prior_samples, config.sigma, groups=groups)
    total = recon + config.lambda_mmd * mmd
    ensure_finite("training loss", total)

    if backward:
        grad_final = _mlp_backward(params.decoder, *cache["dec"], grad_logits)
        if config.mmd_target == MMD_ON_ENCODER:
            grad_final[:, : config.latent_dim] += config.lambda_mmd * grad_mmd
        else:
            grad_final += config.lambda_mmd * grad_mmd
        grad_input = _mlp_backward(params.encoder, *cache["enc"], grad_final[:, : config.latent_dim])

        E, L = config.embed_dim, config.latent_dim
        for k, c in enumerate(config.context_columns):
            # the context embedding feeds both the encoder and the latent concatenation
            grad = grad_input[:, k * E : (k + 1) * E] + grad_final[:, L + k * E : L + (k + 1) * E]
            embedding_backward(params.context_embeddings[c], rows[:, params.column_positions[c]], grad)
        offset = len(config.context_columns) * E
        for k, c in enumerate(config.content_columns):
            grad = grad_input[:, offset + k * E : offset + (k + 1) * E]
            embedding_backward(params.content_embeddings[c], rows[:, params.column_positions[c]], grad)
    return float(total), float(recon), float(mmd)


def anomaly_score(params: CwaeParams, config: ModelConfig, rows: np.ndarray, chunk_size: int = 4096) -> np.ndarray:
    """
    Per-row reconstruction loss, the sum over content columns of
    -log softmax(logits)[target]. This is the model's -log P(content | context).
    """
    rows = np.asarray(rows, dtype=np.int64)
    scores = np.zeros(rows.shape[0], dtype=np.float64)
    for start in range(0, rows.shape[0], chunk_size):
        chunk = rows[start : start + chunk_size]
        logits, _ = forward(params, config, chunk)
        for c in config.content_columns:
            scores[start : start + chunk_size] += per_row_cross_entropy(logits[c], chunk[:, params.column_positions[c]])
    ensure_finite("anomaly score", scores)
    return scores


def predictive_score(
    params: CwaeParams,
    config: ModelConfig,
    rows: np.ndarray,
    prior_samples: np.ndarray,
    chunk_size: int = 4096,
) -> np.ndarray:
    """
    Per-row -sum_j log mean_s p_j(y_j | z_s, c): the decoder's prediction of
    each content column with the encoder output replaced by prior draws z_s,
    averaged over the draws column by column. The row's own content is never
    read, so unlike anomaly_score this is a predictive -log P(content | context).

    prior_samples: np.ndarray
        (S, latent_dim) draws shared by every row
    chunk_size: int
        decoder rows per pass, a chunk holds chunk_size // S table rows
    """
    rows = np.asarray(rows, dtype=np.int64)
    prior_samples = np.asarray(prior_samples, dtype=np.float64)
    if prior_samples.ndim != 2 or prior_samples.shape[0] == 0 or prior_samples.shape[1] != config.latent_dim:
        raise ValidationError(f"prior draws must have shape (S, {config.latent_dim}), got {prior_samples.shape}")
    n_samples = prior_samples.shape[0]
    step = max(1, chunk_size // n_samples)
    scores = np.zeros(rows.shape[0], dtype=np.float64)
    for start in range(0, rows.shape[0], step):
        chunk = rows[start : start + step]
        b = chunk.shape[0]
        # decoder row r * S + s pairs table row r with draw s
        ctx = [
            np.repeat(embedding_forward(params.context_embeddings[c], chunk[:, params.column_positions[c]]), n_samples, axis=0)
            for c in config.context_columns
        ]
        final_latent = np.concatenate([np.tile(prior_samples, (b, 1))] + ctx, axis=1)
        logits, _, _ = _mlp_forward(params.decoder, final_latent)
        for c in config.content_columns:
            log_probs = log_softmax(logits[:, params.logit_slices[c]], axis=1).reshape(b, n_samples, -1)
            mixed = logsumexp(log_probs, axis=1) - np.log(n_samples)
            scores[start : start + b] -= mixed[np.arange(b), chunk[:, params.column_positions[c]]]
    ensure_finite("predictive score", scores)
    return scores
