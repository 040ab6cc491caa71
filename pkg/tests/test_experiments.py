import itertools
import math

import numpy as np
import pytest

from wegnerlab.covariance import CovarianceSpec, preset
from wegnerlab.exceptions import AcceptanceFloorError
from wegnerlab.experiments import (
    WegnerConfig,
    concentration_curve,
    delta_sweep,
    derive_seed,
    gamma_inverse_corner,
    regularity_closed_forms,
    regularity_mc,
    run_wegner_mc,
    sample_counts,
    wilson_interval,
    zero_background_expectation,
)
from wegnerlab.lattice import LatticeBox
from wegnerlab.normal import norm_cdf
from wegnerlab.sampler import prepare
from wegnerlab.spectral import build_background


def test_derived_seeds_are_distinct_and_stable():
    seeds = {derive_seed(5, tag) for tag in ("potential", "background", "regularity", "averaging")}
    assert len(seeds) == 4
    assert derive_seed(5, "potential") == derive_seed(5, "potential")
    assert derive_seed(5, "potential") != derive_seed(6, "potential")


@pytest.mark.parametrize("name,lam,interval", [
    ("iid", 1.0, (-0.5, 0.5)),
    ("exp_rate1", 0.7, (0.0, 1.2)),
    ("signchange", 1.5, (-1.0, 0.25)),
])
def test_zero_background_oracle(name, lam, interval):
    spec = preset(name, 1)
    rep = run_wegner_mc(WegnerConfig(spec, L=5, lam=lam, interval=interval, background="zero",
                                     n_samples=2000, seed=31))
    sigma = math.sqrt(spec.gamma0)
    exact = 11 * (norm_cdf(interval[1] / (lam * sigma)) - norm_cdf(interval[0] / (lam * sigma)))
    assert zero_background_expectation(spec, 5, lam, interval) == pytest.approx(exact, rel=1e-15)
    assert abs(rep.empirical_mean - exact) <= 4 * rep.std_error


def test_iid_laplacian_run_respects_bounds():
    rep = run_wegner_mc(WegnerConfig(preset("iid", 1), L=10, n_samples=500, seed=20240611))
    assert 0 <= rep.empirical_mean <= 21
    assert rep.std_error == pytest.approx(np.std(rep.counts, ddof=1) / math.sqrt(500), rel=1e-15)
    assert rep.empirical_mean <= rep.abstract_bound
    assert rep.passed
    assert rep.abstract_bound <= rep.main_bound


def test_zero_length_interval_counts_nothing():
    rep = run_wegner_mc(WegnerConfig(preset("exp_rate1", 1), L=4, interval=(0.3, 0.3), n_samples=50, seed=1))
    assert rep.empirical_mean == 0.0 and rep.std_error == 0.0


def test_invalid_run_configurations():
    with pytest.raises(ValueError):
        run_wegner_mc(WegnerConfig(preset("iid", 1), L=3, n_samples=1))
    with pytest.raises(ValueError):
        run_wegner_mc(WegnerConfig(preset("iid", 1), L=3, lam=0.0))
    with pytest.raises(ValueError):
        run_wegner_mc(WegnerConfig(preset("iid", 1), L=3, interval=(1.0, 0.0)))


def test_counts_do_not_depend_on_thread_count():
    box = LatticeBox(1, 6)
    state = prepare(preset("exp_rate0.5", 1), box, seed=99)
    A = build_background("laplacian", box)
    one = sample_counts(state, A, 1.0, (-0.5, 1.5), 300, threads=1)
    four = sample_counts(prepare(preset("exp_rate0.5", 1), box, seed=99), A, 1.0, (-0.5, 1.5), 300, threads=4)
    assert np.array_equal(one, four)


@pytest.mark.parametrize("l,inverse,variance", [(1, 0.5, 1.0), (3, 0.75, 0.5), (50, 50 / 51, 2 / 51)])
def test_regularity_closed_form_examples(l, inverse, variance):
    rep = regularity_closed_forms(l)
    assert abs(rep.inverse_entry - inverse) <= 1e-10
    assert abs(rep.gamma_l_numeric - variance) <= 1e-10


@pytest.mark.parametrize("l", list(range(1, 51)) + [500, 5000])
def test_regularity_residuals(l):
    rep = regularity_closed_forms(l)
    assert rep.variance_residual <= 1e-10
    assert rep.inverse_residual <= 1e-10


def test_gamma_inverse_corner_matches_dense_inverse():
    for l in (1, 2, 7, 20):
        G = 2 * np.eye(l) + np.eye(l, k=1) + np.eye(l, k=-1)
        assert gamma_inverse_corner(l) == pytest.approx(np.linalg.inv(G)[0, 0], rel=1e-12)


def test_concentration_curve_examples():
    rows = concentration_curve(0.1, [1, 2, 10, 100, 1000, 6000])
    assert rows[0][2] == pytest.approx(2 * norm_cdf(0.05) - 1, abs=1e-15)
    assert rows[-1][1] == pytest.approx(2 / 6001)
    assert rows[-1][2] == pytest.approx(0.99383438154253543, abs=1e-12)
    assert rows[-1][2] >= 0.99
    probs = [r[2] for r in concentration_curve(0.3, range(1, 400))]
    assert all(a <= b for a, b in zip(probs, probs[1:]))
    with pytest.raises(ValueError):
        concentration_curve(0.0, [1])


def _box_probability(cov, half_widths, nodes=10):
    """Gauss-Legendre product rule for P(|X_i| <= h_i for all i), X ~ N(0, cov)."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    prec = np.linalg.inv(cov)
    norm = 1.0 / math.sqrt((2 * math.pi) ** len(cov) * np.linalg.det(cov))
    axes = [h * x for h in half_widths]
    weights = [h * w for h in half_widths]
    grid = np.array(list(itertools.product(*axes)))
    wgt = np.prod(np.array(list(itertools.product(*weights))), axis=1)
    quad = np.einsum("ni,ij,nj->n", grid, prec, grid)
    return float(np.sum(wgt * norm * np.exp(-0.5 * quad)))


def test_rejection_estimate_matches_quadrature_oracle():
    # covariance of (V_-2, ..., V_2) for gamma(0)=2, gamma(+-1)=1, built by hand
    cov = 2 * np.eye(5) + np.eye(5, k=1) + np.eye(5, k=-1)
    delta, eps = 0.5, 1.0
    joint = _box_probability(cov, [delta, delta, eps / 2, delta, delta])
    window = np.delete(np.delete(cov, 2, axis=0), 2, axis=1)
    marginal = _box_probability(window, [delta] * 4)
    exact = joint / marginal
    assert _box_probability(cov, [delta, delta, eps / 2, delta, delta], nodes=14) == pytest.approx(joint, rel=1e-10)

    est = regularity_mc(eps, delta, 2, 2_000_000, seed=7)
    se = math.sqrt(exact * (1 - exact) / est.accepted)
    assert abs(est.estimate - exact) <= 4 * se
    assert est.ci_low <= est.estimate <= est.ci_high
    assert est.point_limit == pytest.approx(2 * norm_cdf(0.5 / math.sqrt(2 / 3)) - 1)


def test_wide_window_gives_unconditional_probability():
    eps = 1.0
    est = regularity_mc(eps, 10.0, 2, 200_000, seed=3)
    assert est.acceptance_rate > 0.999
    exact = 2 * norm_cdf(eps / (2 * math.sqrt(2))) - 1
    assert abs(est.estimate - exact) <= 4 * math.sqrt(exact * (1 - exact) / est.accepted)


def test_rejection_errors():
    with pytest.raises(ValueError):
        regularity_mc(0.1, 0.5, 2, 0)
    with pytest.raises(ValueError):
        regularity_mc(0.1, 0.0, 2, 10)
    with pytest.raises(AcceptanceFloorError) as info:
        regularity_mc(0.1, 0.125, 6, 400_000, seed=1)
    assert info.value.rate < 1e-5
    assert "larger delta" in str(info.value)


def test_delta_sweep_is_deterministic():
    a = delta_sweep(1.0, 1, 50_000, seed=4, deltas=(1.0, 0.5))
    b = delta_sweep(1.0, 1, 50_000, seed=4, deltas=(1.0, 0.5))
    assert [e.hits for e in a] == [e.hits for e in b]
    assert [e.delta for e in a] == [1.0, 0.5]


def test_wilson_interval():
    lo, hi = wilson_interval(50, 100)
    assert lo == pytest.approx(0.4038, abs=1e-4) and hi == pytest.approx(0.5962, abs=1e-4)
    assert wilson_interval(0, 0) == (0.0, 1.0)
    assert wilson_interval(0, 10)[0] == 0.0
