import os

import numpy as np
import pytest

from condor.conditioning import ConditioningSpec
from condor.dynamics import QuadParams
from condor.track import load_track_file

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def repo_path(*parts) -> str:
    return os.path.join(REPO_ROOT, *parts)


@pytest.fixture(scope="session")
def params() -> QuadParams:
    return QuadParams()


@pytest.fixture(scope="session")
def square_track():
    return load_track_file(repo_path("tracks", "square.json"))


@pytest.fixture(scope="session")
def figure8_track():
    return load_track_file(repo_path("tracks", "figure8.json"))


@pytest.fixture(scope="session")
def splits_track():
    return load_track_file(repo_path("tracks", "splits.json"))


@pytest.fixture(scope="session")
def twr_spec() -> ConditioningSpec:
    return ConditioningSpec()


def make_untrained_checkpoint(arch: str = "film_star_c", hidden: int = 16,
                              value_hidden: int = 32, seed: int = 0,
                              cond: ConditioningSpec | None = None):
    """Random-weight checkpoint wired like a real training product."""
    from dataclasses import asdict

    from condor import net
    from condor.env import CORE_OBS_DIM, EnvConfig

    cond = cond or ConditioningSpec()
    spec = net.PolicySpec(arch=arch, obs_dim=CORE_OBS_DIM, cond_dim=cond.dim,
                          hidden=hidden, cond_encoding=cond.encoding,
                          n_heads=cond.dim if arch == "multihead" else 0,
                          value_hidden=value_hidden)
    weights = net.init_weights(spec, np.random.default_rng(seed))
    meta = {"cond": asdict(cond), "env": asdict(EnvConfig()), "track": "square"}
    return spec, weights, meta


@pytest.fixture()
def untrained_checkpoint():
    return make_untrained_checkpoint()


@pytest.fixture(scope="session")
def trained_square_checkpoint(tmp_path_factory):
    """Desk-scale training product shared by the acceptance and live-loop tests.

    Trains the conditioning policy on the square track with the shipped
    acceptance configuration; budget is asserted by the acceptance test.
    """
    from condor import ppo
    from condor.cli import make_env_factory, parse_config

    cfg = parse_config(repo_path("configs", "square_film_star_c.json"))
    track = load_track_file(cfg.track_path)
    out = str(tmp_path_factory.mktemp("acceptance_training"))
    res = ppo.train(make_env_factory(cfg, track), cfg.policy, cfg.ppo, out,
                    meta=cfg.checkpoint_meta(), workers=2, checkpoint_every=50)
    return res.checkpoint_path
