import numpy as np
import pytest

from momentbound.netspec import network_from_dict
from momentbound.ssa import (ParamSample, SamplingError, SimConfig, SimulationError,
                             condition_means, empirical_mean_interval, paired_samples,
                             rate_equation_mean, sample_correlated_params, simulate_cells,
                             ssa_path, truncated_chain_stationary)

from conftest import network_doc

K1, K2 = (2, 0.4), (4, 0.1)


@pytest.mark.parametrize("r,sign", [(0.0, "positive"), (0.2, "positive"), (0.2, "negative"),
                                    (0.6, "negative"), (1.0, "positive")])
def test_swap_sampler_hits_target(r, sign):
    pairs = sample_correlated_params(K1, K2, r, sign, n=20000, seed=3)
    corr = np.corrcoef(pairs.T)[0, 1]
    if sign == "positive":
        assert r - 0.01 <= corr <= r + 1e-12
    else:
        assert -r - 1e-12 <= corr <= -r + 0.01 or (r == 1.0 and corr < 0)


def test_swaps_preserve_marginals():
    a = sample_correlated_params(K1, K2, 0.3, n=5000, seed=1)
    b = sample_correlated_params(K1, K2, 0.9, n=5000, seed=1)
    assert np.array_equal(np.sort(a[:, 0]), np.sort(b[:, 0]))
    assert np.array_equal(np.sort(a[:, 1]), np.sort(b[:, 1]))
    assert a[:, 0].mean() == pytest.approx(0.8, rel=0.05)
    assert a[:, 1].var() == pytest.approx(0.04, rel=0.1)


def test_sampler_validation():
    with pytest.raises(ValueError):
        sample_correlated_params(K1, K2, 1.5)
    with pytest.raises(ValueError):
        sample_correlated_params(K1, K2, 0.5, sign="up")
    with pytest.raises(SamplingError):
        sample_correlated_params(K1, K2, 0.0, n=1000, max_swaps=1)


def test_sampler_is_reproducible():
    a = sample_correlated_params(K1, K2, 0.4, n=3000, seed=11)
    b = sample_correlated_params(K1, K2, 0.4, n=3000, seed=11)
    assert np.array_equal(a, b)


def test_param_sample_positive():
    with pytest.raises(ValueError):
        ParamSample([0.8, -0.1, 0.02])


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(t_end=0)
    with pytest.raises(ValueError):
        SimConfig(n_cells=0)


def test_birth_death_oracle(birth_death):
    mean, tail = truncated_chain_stationary(birth_death, birth_death.rates_vector(), 400)
    assert mean == pytest.approx(50, abs=1e-6)
    assert tail < 1e-10
    assert truncated_chain_stationary(birth_death, birth_death.rates_vector(), 0) == (0.0, 1.0)


def test_rate_equation_mean(birth_death):
    assert rate_equation_mean(birth_death)[0] == pytest.approx(50, rel=1e-6)


def test_birth_death_ssa_mean(birth_death):
    k = np.array(birth_death.rates_vector())
    cfg = SimConfig(t_end=60.0, n_cells=4000, seed=5)
    (cm,) = condition_means(birth_death, [np.tile(k, (4000, 1))], cfg)
    assert abs(cm.mean - 50) < 4 * cm.stderr
    # Poisson: variance equals the mean
    assert cm.stderr ** 2 * 4000 == pytest.approx(50, rel=0.1)


def test_cells_do_not_depend_on_batch_or_company():
    net = network_from_dict(network_doc("dimerization"))
    params = paired_samples(net, ["K1", "K2"], sample_correlated_params(K1, K2, 0.5, n=40))
    a = simulate_cells(net, params, SimConfig(t_end=50.0, n_cells=40, seed=2, batch=7))
    b = simulate_cells(net, params, SimConfig(t_end=50.0, n_cells=40, seed=2, batch=300))
    c = simulate_cells(net, params[:5], SimConfig(t_end=50.0, n_cells=5, seed=2))
    assert np.array_equal(a, b)
    assert np.array_equal(a[:5], c)
    assert np.array_equal(ssa_path(net, params[0], SimConfig(t_end=50.0, seed=2)), a[0])


def test_step_limit():
    net = network_from_dict(network_doc("birth_death"))
    with pytest.raises(SimulationError):
        simulate_cells(net, [net.rates_vector()], SimConfig(t_end=100.0, max_steps=10))


def test_dimer_oracle_matches_ssa():
    net = network_from_dict(network_doc("dimerization")).with_fixed({"K1": 0.8, "K2": 0.4})
    mean, tail = truncated_chain_stationary(net, net.rates_vector(), 200)
    assert tail < 1e-12
    k = np.array(net.rates_vector())
    lo, hi = empirical_mean_interval(net, [np.tile(k, (3000, 1))],
                                     SimConfig(t_end=200.0, n_cells=3000, seed=9))
    assert lo == hi
    assert abs(lo - mean) < 0.15


def test_paired_samples_needs_all_uncertain():
    net = network_from_dict(network_doc("dimerization"))
    with pytest.raises(ValueError):
        paired_samples(net, ["K1"], np.ones((3, 1)))
