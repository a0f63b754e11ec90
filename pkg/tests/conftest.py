import numpy as np
import pytest

from cascade import synthetic
from cascade.config import RunConfig


@pytest.fixture(scope="session")
def tiny_corpus():
    return synthetic.contextual_corpus(n_users=30, n_forums=5, n_comments=400,
                                       seed=11, n_essays=60)


@pytest.fixture(scope="session")
def tiny_config():
    return RunConfig(
        min_count=1, style_dim=12, window=2, style_epochs=5, style_lr=0.05,
        discourse_dim=8, discourse_epochs=5,
        embed_dim=16, heights=(1, 2), filter_maps=8, dense_dim=12, max_len=12,
        learning_rate=0.01, batch_size=32, patience=4, holdout_fraction=0.1,
        personality_epochs=8, cascade_epochs=8, fusion_dim=8, seed=5,
    )


@pytest.fixture(scope="session")
def tiny_bank(tiny_corpus, tiny_config):
    from cascade import pipeline
    return pipeline.build_context(tiny_corpus.train, tiny_corpus.essays, tiny_config)


def generic_cnn(config, vocab_size, seed, spread=0.4):
    """A CNN at a generic parameter point (no ReLU kinks / pooling ties)."""
    from cascade import textcnn
    model = textcnn.init_model(config, vocab_size=vocab_size, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed + 1000)
    for param in model.params().values():
        param += rng.uniform(-spread, spread, param.shape)
    model.embeddings[0] = 0.0
    return model
