import numpy as np
import pytest

from fwm.envsim import ControllerConfig, default_params
from fwm.render import cartpole_palette, lander_palette

FIXED_SEED = 7


@pytest.fixture(scope="session")
def cp_params():
    return default_params("cartpole")


@pytest.fixture(scope="session")
def ld_params():
    return default_params("lander")


@pytest.fixture(scope="session")
def cp_palette():
    return cartpole_palette()


@pytest.fixture(scope="session")
def ld_palette():
    return lander_palette()


@pytest.fixture
def pd_controller():
    return ControllerConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(FIXED_SEED)


def _acceptance_corpus(env: str, tmp_root, episodes: int = 200):
    from fwm.cli import RunConfig, cmd_generate, load_corpus

    cfg = RunConfig(env=env, out=str(tmp_root / f"corpus_{env}"), episodes=episodes,
                    seed=FIXED_SEED, m=(1, 2), k=(10, 30), predictor="oracle").resolved()
    corpus_dir = cmd_generate(cfg)
    _, episodes_list = load_corpus(corpus_dir)
    return cfg, corpus_dir, episodes_list


@pytest.fixture(scope="session")
def cartpole_corpus(tmp_path_factory):
    return _acceptance_corpus("cartpole", tmp_path_factory.mktemp("acc"))


@pytest.fixture(scope="session")
def lander_corpus(tmp_path_factory):
    return _acceptance_corpus("lander", tmp_path_factory.mktemp("acc"))
