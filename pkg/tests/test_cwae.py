import math

import numpy as np
import pytest

from common.errors import ValidationError
from data.encode import Split
from model.cwae import MMD_ON_LATENT, ModelConfig, anomaly_score, forward, init_params, loss, predictive_score
from model.gradcheck import gradient_check

SMALL = dict(embed_dim=4, encoder_hidden=(6,), latent_dim=3, decoder_hidden=(6,))


def _config(table, context="a", **overrides):
    return ModelConfig.for_context(table.schema, context, **{**SMALL, **overrides})


def test_same_seed_same_parameters(small_table):
    config = _config(small_table)
    first, second = init_params(config, small_table.schema), init_params(config, small_table.schema)
    for p, q in zip(first.parameters(), second.parameters()):
        assert p.name == q.name
        np.testing.assert_array_equal(p.value, q.value)


def test_embedding_tables_reserve_unseen_row(small_table):
    params = init_params(_config(small_table), small_table.schema)
    card = small_table.schema.column("b").cardinality
    assert params.content_embeddings["b"].value.shape == (card + 1, 4)
    assert params.decoder[-1][0].value.shape[1] == sum(
        small_table.schema.column(c).cardinality + 1 for c in ("b", "c")
    )


def test_unconditioned_model_has_no_context_tables(small_table):
    config = _config(small_table, context=None)
    params = init_params(config, small_table.schema)
    assert params.context_embeddings == {}
    _, latent = forward(params, config, small_table.rows[:5])
    np.testing.assert_array_equal(latent.final_latent, latent.encoder_out)


def test_unknown_column_is_rejected(small_table):
    config = ModelConfig(context_columns=("zzz",), content_columns=("a", "b", "c"))
    with pytest.raises(ValidationError):
        init_params(config, small_table.schema)


def test_duplicate_rows_and_permutations(small_table):
    config = _config(small_table)
    params = init_params(config, small_table.schema)
    rows = small_table.rows[:6]
    batch = np.vstack([rows, rows[:1]])
    logits, latent = forward(params, config, batch)
    np.testing.assert_allclose(logits["b"][0], logits["b"][-1], rtol=0, atol=1e-12)
    assert latent.final_latent.shape == (7, 3 + 4)

    perm = np.random.default_rng(0).permutation(6)
    permuted, _ = forward(params, config, rows[perm])
    original, _ = forward(params, config, rows)
    np.testing.assert_allclose(permuted["c"], original["c"][perm], rtol=0, atol=1e-12)


def test_zero_lambda_total_equals_recon(small_table):
    config = _config(small_table, lambda_mmd=0.0)
    params = init_params(config, small_table.schema)
    batch = small_table.rows[:10]
    prior = np.random.default_rng(1).standard_normal((10, config.mmd_dim))
    total, recon, mmd = loss(params, config, batch, prior)
    assert total == recon
    assert mmd >= 0


def test_initial_cross_entropy_near_uniform(small_table):
    config = _config(small_table, context=None)
    params = init_params(config, small_table.schema)
    batch = small_table.rows
    prior = np.zeros((batch.shape[0], config.mmd_dim))
    _, recon, _ = loss(params, config, batch, prior)
    expected = sum(math.log(small_table.schema.column(c).cardinality + 1) for c in config.content_columns)
    assert recon == pytest.approx(expected, rel=0.1)


def test_score_mean_matches_recon(small_table):
    config = _config(small_table)
    params = init_params(config, small_table.schema)
    batch = small_table.rows[:12]
    prior = np.random.default_rng(2).standard_normal((12, config.mmd_dim))
    total, recon, mmd = loss(params, config, batch, prior)
    scores = anomaly_score(params, config, batch)
    assert np.mean(scores) == pytest.approx(recon, abs=1e-10)
    assert total >= recon
    assert np.all(scores >= 0)


def test_duplicate_rows_score_equal(small_table):
    config = _config(small_table)
    params = init_params(config, small_table.schema)
    rows = np.vstack([small_table.rows[:3], small_table.rows[:3]])
    scores = anomaly_score(params, config, rows)
    np.testing.assert_allclose(scores[:3], scores[3:], rtol=0, atol=1e-12)


@pytest.mark.parametrize("mmd_target", ["encoder", MMD_ON_LATENT])
@pytest.mark.parametrize("mmd_per_context", [True, False])
def test_full_loss_gradient(small_table, mmd_target, mmd_per_context):
    config = _config(small_table, mmd_target=mmd_target, lambda_mmd=0.7, mmd_per_context=mmd_per_context)
    params = init_params(config, small_table.schema)
    batch = small_table.rows[:20]
    prior = np.random.default_rng(3).standard_normal((20, config.mmd_dim))

    def f():
        total, _, _ = loss(params, config, batch, prior, backward=True)
        return total

    assert gradient_check(f, params.parameters()) < 1e-4


def test_unseen_rows_score_high_after_training(planted_table):
    from training.trainer import TrainConfig, train

    config = ModelConfig.for_context(planted_table.schema, "region", **SMALL)
    params = init_params(config, planted_table.schema)
    params, _ = train(params, config, TrainConfig(epochs=5, batch_size=32, learning_rate=1e-2), planted_table)

    rows = planted_table.rows_for(Split.VAL).copy()
    unseen = rows[:1].copy()
    for c in config.content_columns:
        unseen[0, planted_table.schema.position(c)] = 0
    scores = anomaly_score(params, config, rows)
    assert anomaly_score(params, config, unseen)[0] >= np.median(scores)


def _marginals(table, columns):
    rng = np.random.default_rng(4)
    return {c: rng.dirichlet(np.ones(table.schema.column(c).cardinality + 1)) for c in columns}


def test_marginals_set_output_biases(small_table):
    config = _config(small_table)
    marginals = _marginals(small_table, config.content_columns)
    params = init_params(config, small_table.schema, marginals=marginals)
    plain = init_params(config, small_table.schema)
    bias = params.decoder[-1][1].value
    for c in config.content_columns:
        np.testing.assert_allclose(bias[params.logit_slices[c]], np.log(marginals[c]), rtol=0, atol=1e-12)
    np.testing.assert_array_equal(params.decoder[-1][0].value, plain.decoder[-1][0].value)


def test_bad_marginals_are_rejected(small_table):
    config = _config(small_table)
    marginals = _marginals(small_table, config.content_columns)
    with pytest.raises(ValidationError):
        init_params(config, small_table.schema, marginals={"b": marginals["b"]})
    with pytest.raises(ValidationError):
        init_params(config, small_table.schema, marginals={**marginals, "c": np.array([1.0, 0.0, 0.0])})


def test_predictive_score_factorises_over_content(small_table):
    config = _config(small_table)
    params = init_params(config, small_table.schema)
    prior = np.random.default_rng(5).standard_normal((16, config.latent_dim))
    row = small_table.rows[0]
    pos_b, pos_c = small_table.schema.position("b"), small_table.schema.position("c")

    def variants(position, column):
        rows = np.tile(row, (small_table.schema.column(column).cardinality + 1, 1))
        rows[:, position] = np.arange(rows.shape[0])
        return predictive_score(params, config, rows, prior)

    # each column's term is a normalised distribution that ignores the other column's value
    term_c = -math.log(np.sum(np.exp(-variants(pos_b, "b"))))
    term_b = -math.log(np.sum(np.exp(-variants(pos_c, "c"))))
    assert predictive_score(params, config, row[None, :], prior)[0] == pytest.approx(term_b + term_c, abs=1e-10)


def test_predictive_score_chunking_and_prior_shape(small_table):
    config = _config(small_table)
    params = init_params(config, small_table.schema)
    prior = np.random.default_rng(6).standard_normal((8, config.latent_dim))
    rows = small_table.rows
    np.testing.assert_allclose(
        predictive_score(params, config, rows, prior, chunk_size=20),
        predictive_score(params, config, rows, prior),
        rtol=0,
        atol=1e-12,
    )
    with pytest.raises(ValidationError):
        predictive_score(params, config, rows, prior[:, :2])
    with pytest.raises(ValidationError):
        predictive_score(params, config, rows, prior[:0])
