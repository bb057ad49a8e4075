import numpy as np
import pytest

from manoma.baselines import fpa_noma, oma_fpa, oma_rates, upa
from manoma.channel import ChannelGeometry, channel_matrix, sample_geometry
from manoma.config import ScenarioConfig
from manoma.optimizer import run_best_order

SMALL = dict(T_max=40)


def test_oma_single_user_is_mrt():
    cfg = ScenarioConfig(K=1, M=4)
    geoms = sample_geometry(cfg, 0)
    h = channel_matrix(upa(cfg), geoms)[0]
    res = oma_fpa(cfg, geoms)
    assert res.sum_rate == pytest.approx(np.log2(1 + cfg.power_mw * np.linalg.norm(h) ** 2 / cfg.noise_mw))


def test_oma_identical_users_average():
    cfg = ScenarioConfig(K=2, M=4)
    g = sample_geometry(cfg, 0)[0]
    res = oma_fpa(cfg, [g, g])
    single = oma_fpa(cfg.replace(K=1), [g]).sum_rate
    assert res.sum_rate == pytest.approx(single)


def test_oma_formula_from_norms():
    cfg = ScenarioConfig(K=3, M=4)
    geoms = sample_geometry(cfg, 9)
    norms = np.linalg.norm(channel_matrix(upa(cfg), geoms), axis=1)
    want = np.mean(np.log2(1 + cfg.power_mw * norms**2 / cfg.noise_mw))
    assert oma_fpa(cfg, geoms).sum_rate == pytest.approx(want, rel=1e-12)
    np.testing.assert_allclose(oma_rates(np.ones((2, 2)), 1.0, 1.0), [np.log2(3) / 2] * 2)


def test_fpa_single_user_is_mrt():
    cfg = ScenarioConfig(K=1, M=4, **SMALL)
    geoms = sample_geometry(cfg, 1)
    h = channel_matrix(upa(cfg), geoms)[0]
    want = np.log2(1 + cfg.power_mw * np.linalg.norm(h) ** 2 / cfg.noise_mw)
    assert fpa_noma(cfg, geoms).sum_rate == pytest.approx(want, abs=1e-6)


@pytest.mark.parametrize("M,K", [(1, 2), (2, 1)])
def test_single_path_positions_do_not_matter(M, K):
    # One path per user: |h| is position independent when M = 1, and the
    # matched-filter gain M |f|^2 is position independent when K = 1.
    cfg = ScenarioConfig(M=M, K=K, L=1, **SMALL)
    geoms = sample_geometry(cfg, 2)
    ma = run_best_order(cfg, geoms)
    fpa = fpa_noma(cfg, geoms)
    assert ma.objective == pytest.approx(fpa.sum_rate, abs=1e-4)


@pytest.mark.parametrize("trial", [0, 1, 2])
def test_ma_not_worse_than_fpa(trial):
    cfg = ScenarioConfig(M=2, K=2, R_min=0.0, **SMALL)
    geoms = sample_geometry(cfg, trial)
    assert run_best_order(cfg, geoms).objective >= fpa_noma(cfg, geoms).sum_rate - 1e-6
