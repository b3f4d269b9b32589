import numpy as np
import pytest

from protofuse.config import default_config
from protofuse.data import SyntheticSpec, generate_synthetic
from protofuse.fsl import Episode
from protofuse.model import FewShotModel

TINY_DIMS = {
    "model.d_v": 8,
    "model.d_h": 6,
    "model.d_text": 12,
    "model.vocab": 16,
    "model.prompt_len": 2,
}


@pytest.fixture
def tiny_cfg():
    return default_config().with_overrides(**TINY_DIMS)


def make_episode(rng, n_way=2, k_shot=1, q_query=2, d_in=5, first_token=4):
    """Random toy episode with non-overlapping synthetic sample ids."""
    n_sup = n_way * k_shot
    n_qry = n_way * q_query
    return Episode(
        n_way=n_way,
        k_shot=k_shot,
        q_query=q_query,
        class_ids=np.arange(n_way),
        token_ids=np.arange(first_token, first_token + n_way),
        support_x=rng.normal(size=(n_way, k_shot, d_in)),
        support_ids=np.arange(n_sup).reshape(n_way, k_shot),
        query_x=rng.normal(size=(n_qry, d_in)),
        query_y=np.repeat(np.arange(n_way), q_query),
        query_ids=np.arange(1000, 1000 + n_qry),
    )


@pytest.fixture
def episode_factory():
    return make_episode


def build_model(cfg, method="simplefsl_pp", d_in=5, attr_dim=4, **overrides):
    return FewShotModel(
        cfg.with_overrides(method=method, **overrides), d_in=d_in, attr_dim=attr_dim
    )


@pytest.fixture
def model_factory():
    return build_model


@pytest.fixture(scope="session")
def small_dataset():
    """30-class dataset shared by pipeline tests (19 base / 5 val / 6 novel)."""
    return generate_synthetic(SyntheticSpec(num_classes=30, samples_per_class=40, d_in=40))


@pytest.fixture
def small_cfg():
    return default_config().with_overrides(**{
        "data.num_classes": 30,
        "data.samples_per_class": 40,
        "pretrain.epochs": 3,
        "meta.episodes": 40,
        "meta.val_interval": 20,
        "meta.val_tasks": 10,
        "align.steps": 30,
        "eval.tasks": 30,
    })
