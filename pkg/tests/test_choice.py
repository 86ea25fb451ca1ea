import math

import numpy as np
import pytest

from transit_incident.behavior import OTHER, TRANSIT, ChoiceObservation
from transit_incident.choice import (
    ASC,
    DEFAULT_FEATURES,
    Feature,
    FitResult,
    LogitSpec,
    choice_probability,
    elasticity,
    fit,
    log_likelihood,
    save_fit,
    sensitivity_curve,
    significance_stars,
)
from transit_incident.errors import CollinearityError, SchemaError
from transit_incident.synth import generate_choice_observations

TRUTH = {"ASC": -1.0, "od_redundancy": 1.2, "total_added_value": 1.26, "pass_user": 1.13,
         "downtown_destination": -0.335}
SMALL = LogitSpec(features=tuple(f for f in DEFAULT_FEATURES if f.name in TRUTH))


def obs(choice=TRANSIT, **kw):
    base = dict(card_id="x", choice=choice, total_added_value=0.0, add_value_frequency=0, max_added_value=0.0,
                high_income=0, low_income=0, pass_user=0, reduced_fare=0, downtown_destination=0,
                od_redundancy=0.0, trip_ordinal=1)
    base.update(kw)
    return ChoiceObservation(**base)


def test_gradient_matches_finite_differences():
    data = generate_choice_observations(400, TRUTH, 1)
    spec = LogitSpec()
    rng = np.random.default_rng(0)
    for _ in range(5):
        beta = rng.normal(0, 0.5, len(spec.names))
        _, grad = log_likelihood(spec, beta, data)
        for j in range(len(beta)):
            h = 1e-6 * max(1.0, abs(beta[j]))
            up, dn = beta.copy(), beta.copy()
            up[j] += h
            dn[j] -= h
            fd = (log_likelihood(spec, up, data)[0] - log_likelihood(spec, dn, data)[0]) / (2 * h)
            assert fd == pytest.approx(grad[j], rel=1e-6, abs=1e-6)


def test_probability_values():
    spec = LogitSpec()
    zero = [0.0] * len(spec.names)
    p = choice_probability(spec, zero, obs(od_redundancy=0.7))
    assert p[TRANSIT] == 0.5 and p[OTHER] == 0.5
    beta = zero.copy()
    beta[0] = math.log(3)
    assert choice_probability(spec, beta, obs())[TRANSIT] == pytest.approx(0.75, abs=1e-12)
    beta = zero.copy()
    beta[spec.names.index("total_added_value")] = 2.0
    # scaled to $1000: 500 dollars adds 1.0 to the utility
    assert choice_probability(spec, beta, obs(total_added_value=500.0))[TRANSIT] == pytest.approx(1 / (1 + math.exp(-1)))


def test_rho2_by_hand_on_ten_observations():
    spec = LogitSpec(features=(Feature("od_redundancy", "OD-based redundancy"),))
    xs = [0.1, 0.9, 0.3, 0.8, 0.5, 0.2, 1.0, 0.6, 0.4, 0.7]
    ys = [0, 1, 1, 1, 0, 0, 1, 0, 1, 1]
    data = [obs(TRANSIT if y else OTHER, od_redundancy=x) for x, y in zip(xs, ys)]
    res = fit(spec, data, tolerance=1e-8, ll_rtol=0.0)
    b0, b1 = res.estimates
    ll = 0.0
    for x, y in zip(xs, ys):
        p = 1.0 / (1.0 + math.exp(-(b0 + b1 * x)))
        ll += math.log(p if y else 1.0 - p)
    assert res.ll == pytest.approx(ll, abs=1e-9)
    assert res.adjusted_rho2 == pytest.approx(1 - (ll - 2) / (10 * math.log(0.5)), abs=1e-9)
    # first-order conditions at the optimum
    r = [y - 1.0 / (1.0 + math.exp(-(b0 + b1 * x))) for x, y in zip(xs, ys)]
    assert abs(sum(r)) < 1e-5 and abs(sum(ri * x for ri, x in zip(r, xs))) < 1e-5


def test_recovers_coefficients_on_large_sample():
    res = fit(SMALL, generate_choice_observations(20000, TRUTH, 5))
    for name, value in TRUTH.items():
        j = res.names.index(name)
        assert abs(res.estimates[j] - value) < 4 * res.std_errors[j]


def test_collinear_features_named():
    data = [obs(TRANSIT if i % 2 else OTHER, od_redundancy=i / 10, pass_user=1) for i in range(10)]
    spec = LogitSpec(features=(Feature("od_redundancy", "r"), Feature("pass_user", "p")))
    with pytest.raises(CollinearityError) as exc:
        fit(spec, data)
    assert set(exc.value.features) == {ASC, "pass_user"}


def test_bad_specs():
    with pytest.raises(SchemaError):
        LogitSpec(features=(Feature("pass_user", "a"), Feature("pass_user", "b")))
    with pytest.raises(SchemaError):
        LogitSpec(chosen="Other")
    with pytest.raises(SchemaError):
        fit(LogitSpec(), [])


@pytest.mark.parametrize("p, stars", [(0.001, "***"), (0.01, "**"), (0.049, "**"), (0.05, "*"),
                                      (0.12, "."), (0.15, ""), (0.9, "")])
def test_significance_stars(p, stars):
    assert significance_stars(p) == stars


def test_sensitivity_and_elasticity():
    data = generate_choice_observations(3000, TRUTH, 2)
    res = fit(SMALL, data)
    curve = sensitivity_curve(res, data)
    assert len(curve) == 101 and curve[0][0] == 0.0 and curve[-1][0] == 1.0
    ps = [p for _, p in curve]
    assert all(b > a for a, b in zip(ps, ps[1:]))
    h = 1e-6
    (_, lo), (_, hi) = sensitivity_curve(res, data, grid=[0.5 - h, 0.5 + h])
    ((_, mid),) = sensitivity_curve(res, data, grid=[0.5])
    assert elasticity(res, data, at=0.5) == pytest.approx((hi - lo) / (2 * h) * 0.5 / mid, rel=1e-5)
    pinned = sensitivity_curve(res, data, grid=[0.5], conditions={"pass_user": 1})[0][1]
    assert pinned > mid
    with pytest.raises(SchemaError):
        sensitivity_curve(res, data, grid=[1.5])


def test_fit_result_round_trip():
    res = fit(SMALL, generate_choice_observations(1000, TRUTH, 3))
    back = FitResult.from_dict(res.to_dict())
    assert back.names == res.names and np.array_equal(back.estimates, res.estimates)
    assert back.adjusted_rho2 == res.adjusted_rho2
    assert save_fit(back) == save_fit(res)
    table = res.table()
    assert "Other: ASC" in table and "Adjusted rho^2" in table


def test_interval_coverage_is_calibrated_over_many_seeds():
    # Across many independent samples the 95% Wald interval should cover
    # each true coefficient about 95% of the time.
    hits = {name: 0 for name in TRUTH}
    seeds = range(100, 300)
    for seed in seeds:
        res = fit(SMALL, generate_choice_observations(2000, TRUTH, seed))
        for name, value in TRUTH.items():
            j = res.names.index(name)
            hits[name] += abs(res.estimates[j] - value) <= 1.96 * res.std_errors[j]
    for name, h in hits.items():
        assert 0.91 <= h / len(seeds) <= 0.99, (name, h)


def test_single_observation_at_zero_has_log_half():
    ll, _ = log_likelihood(LogitSpec(), [0.0] * 10, [obs(od_redundancy=0.3)])
    assert ll == math.log(0.5)


def test_optimum_beats_random_perturbations():
    data = generate_choice_observations(2000, TRUTH, 7)
    res = fit(SMALL, data)
    rng = np.random.default_rng(7)
    for _ in range(1000):
        d = rng.normal(size=len(res.estimates))
        d *= rng.uniform(0, 0.1) / np.linalg.norm(d)
        assert log_likelihood(SMALL, res.estimates + d, data)[0] <= res.ll + 1e-9


def test_log_likelihood_is_concave_along_segments():
    data = generate_choice_observations(500, TRUTH, 8)
    rng = np.random.default_rng(8)
    for _ in range(200):
        a, b = rng.normal(0, 2, (2, len(SMALL.names)))
        mid = log_likelihood(SMALL, (a + b) / 2, data)[0]
        ends = (log_likelihood(SMALL, a, data)[0] + log_likelihood(SMALL, b, data)[0]) / 2
        assert mid >= ends - 1e-9


def test_probability_saturates():
    spec = LogitSpec()
    beta = [0.0] * len(spec.names)
    beta[0] = 20.0
    assert choice_probability(spec, beta, obs())[TRANSIT] > 1 - 1e-8


def test_duplicated_data_doubles_log_likelihood():
    data = generate_choice_observations(300, TRUTH, 4)
    beta = np.linspace(-0.5, 0.5, len(SMALL.names))
    assert log_likelihood(SMALL, beta, data + data)[0] == pytest.approx(2 * log_likelihood(SMALL, beta, data)[0],
                                                                        rel=1e-14)


def test_balanced_data_gives_zero_asc():
    spec = LogitSpec(features=())
    res = fit(spec, [obs(TRANSIT), obs(OTHER)] * 50)
    assert abs(res.estimates[0]) < 1e-6


def test_zero_redundancy_coefficient_gives_flat_curve():
    data = generate_choice_observations(500, TRUTH, 6)
    res = fit(SMALL, data)
    res.estimates[res.names.index("od_redundancy")] = 0.0
    assert len({p for _, p in sensitivity_curve(res, data)}) == 1
