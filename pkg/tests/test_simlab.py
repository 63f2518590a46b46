import math

import numpy as np
import pytest
from scipy import stats

from confpoint.core import RandomStream
from confpoint.mcp import confidence_set, sweep
from confpoint.scores import identity_score
from confpoint.simlab import (STANDARD_SCENARIOS, BadTau, DistSpec, ExperimentSpec, MetricsRow, Scenario, SpecError,
                              cauchy, exponential, last_point_pvalue, normal, null_conf_cdf, rows_to_csv,
                              run_coverage, run_experiment, run_relative_length, sample_series, standard_error,
                              sup_distance_to_null, write_table)

NULL = Scenario(normal(), normal())


def test_quantile_functions():
    assert exponential(1).ppf(0.5) == pytest.approx(math.log(2), rel=1e-12)
    assert cauchy().ppf(0.5) == pytest.approx(0.0, abs=1e-15)
    assert normal(2, 9).ppf(stats.norm.cdf(1.0)) == pytest.approx(5.0, rel=1e-9)


@pytest.mark.parametrize("dist,ref", [
    (normal(0, 5), stats.norm(0, math.sqrt(5))),
    (cauchy(5, 1), stats.cauchy(5, 1)),
    (exponential(5), stats.expon(scale=0.2)),
])
def test_sampler_matches_reference_law(dist, ref):
    x = sample_series(dist, dist, 10**5, 10**5, RandomStream(11)).values
    y = ref.rvs(size=10**5, random_state=np.random.default_rng(12))
    assert stats.ks_2samp(x, y).statistic < 0.01


def test_sample_series_split_and_bad_tau():
    x = sample_series(normal(0, 1), normal(100, 1), 50, 20, RandomStream(0)).values
    assert np.all(x[:20] < 50) and np.all(x[20:] > 50)
    for tau in (0, 51):
        with pytest.raises(BadTau):
            sample_series(normal(), normal(), 50, tau, RandomStream(0))


def test_labels_and_scenarios():
    assert normal(0, 5).label == "N(0,5)"
    assert [s.label for s in STANDARD_SCENARIOS] == [
        "N(0,1)->N(0,5)", "Cauchy(0,1)->Cauchy(5,1)", "Exp(1)->Exp(5)", "N(0,1)->Cauchy(5,1)"]
    assert NULL.exchangeable and not STANDARD_SCENARIOS[0].exchangeable
    assert DistSpec.from_dict(normal(1, 2).to_dict()) == normal(1, 2)


def test_distspec_validation():
    with pytest.raises(SpecError):
        normal(0, -1)
    with pytest.raises(SpecError):
        DistSpec("gamma", (1.0,))
    with pytest.raises(SpecError):
        exponential(float("nan"))


def test_spec_lists_every_violation():
    cfg = {
        "scenarios": [{"pre": {"family": "normal", "params": [0, -1]}, "post": {"family": "normal"}},
                      {"pre": {"family": "normal"}}],
        "n_grid": [400, 200],
        "alpha": 1.5,
        "replications": 0,
        "bogus": 1,
    }
    with pytest.raises(SpecError) as err:
        ExperimentSpec.from_dict(cfg)
    text = "\n".join(err.value.violations)
    for needle in ("bogus: unknown key", "scenarios[0].pre: variance must be positive",
                   "scenarios[1].post: missing", "n_grid: must be strictly ascending", "alpha:", "replications:"):
        assert needle in text


def test_spec_round_trip():
    spec = ExperimentSpec(STANDARD_SCENARIOS, (200, 1000), replications=3, root_seed=9, score_mode="oracle")
    assert ExperimentSpec.from_dict(spec.to_dict()) == spec


def test_standard_error_rule():
    assert standard_error([0.3]) == 0.0
    v = [1.0, 2.0, 4.0, 7.0]
    assert standard_error(v) == pytest.approx(np.std(v, ddof=1) / 2.0)


def test_metrics_row_validation():
    with pytest.raises(ValueError):
        MetricsRow("null", "s", 10, "m", float("nan"), 0.0, 1, 0)
    with pytest.raises(ValueError):
        MetricsRow("null", "s", 10, "m", 0.5, -1.0, 1, 0)


def test_null_conf_cdf():
    assert null_conf_cdf(0.5) == pytest.approx(0.4375)
    assert null_conf_cdf(1.0) == 1.0
    assert null_conf_cdf(1.0 - 1e-12) == pytest.approx(0.75)
    # a sample that follows the law exactly has distance O(1/k)
    k = 4000
    u = (np.arange(k) + 0.5) / k
    sample = np.where(u < 0.75, 2 * (1 - np.sqrt(1 - np.minimum(u, 0.75))), 1.0)
    assert sup_distance_to_null(sample) < 2.0 / k
    assert sup_distance_to_null(np.ones(10)) == pytest.approx(0.75)


def test_replications_are_addressed_independently():
    # replication r of experiment e, scenario si, size index ni draws from (root, (e, r)).child(si, ni, .)
    spec = ExperimentSpec((NULL,), (30,), replications=4, root_seed=5)
    rows = {r.metric: r.value for r in run_relative_length(spec)}
    lengths = []
    for r in range(4):
        base = RandomStream(5, (1, r))
        x = sample_series(normal(), normal(), 30, 30, base.child(0, 0, 0))
        lengths.append(confidence_set(sweep(x, identity_score(), identity_score(), base.child(0, 0, 1)), 0.05).size)
    assert rows["mean_rel_length_n"] == pytest.approx(np.mean(lengths) / 30, abs=1e-15)
    fewer = {r.metric: r.value for r in run_relative_length(ExperimentSpec((NULL,), (30,), replications=2, root_seed=5))}
    assert fewer["mean_rel_length_n"] == pytest.approx(np.mean(lengths[:2]) / 30, abs=1e-15)


def test_single_replication_has_zero_se():
    rows = run_coverage(ExperimentSpec((STANDARD_SCENARIOS[0],), (40,), replications=1))
    assert all(r.se == 0.0 for r in rows)


def test_coverage_edge_cases():
    rows = run_coverage(ExperimentSpec((STANDARD_SCENARIOS[0],), (2,), replications=5))
    assert 0.0 <= rows[0].value <= 1.0
    spec = ExperimentSpec((STANDARD_SCENARIOS[1],), (60,), alpha=0.5, replications=20)
    assert 0.0 <= run_coverage(spec)[0].value <= 1.0


def test_last_point_pvalue():
    assert last_point_pvalue([3.0, 1.0, 2.0], identity_score(), 0.5) == pytest.approx(0.5)
    assert last_point_pvalue([1.0, 1.0], identity_score(), 0.4) == pytest.approx(0.4)


@pytest.mark.parametrize("name", ["null", "length", "consistency", "coverage", "power", "scoregap"])
def test_every_runner_emits_valid_rows(name):
    scen = NULL if name == "null" else STANDARD_SCENARIOS[0]
    spec = ExperimentSpec((scen,), (24, 40), replications=3, c=0.5)
    rows = run_experiment(name, spec)
    assert rows
    assert {r.n for r in rows} == {24, 40}
    assert all(math.isfinite(r.value) and r.se >= 0 for r in rows)


def test_null_runner_rejects_changing_scenario():
    with pytest.raises(SpecError):
        run_experiment("null", ExperimentSpec((STANDARD_SCENARIOS[0],), (20,), replications=1))


def test_csv_is_byte_identical_on_rerun(tmp_path):
    spec = ExperimentSpec((STANDARD_SCENARIOS[2],), (30, 60), replications=4, root_seed=3)
    a = write_table(run_experiment("length", spec), tmp_path / "a.csv", "length", spec)
    b = write_table(run_experiment("length", spec), tmp_path / "b.csv", "length", spec)
    assert open(a[0], "rb").read() == open(b[0], "rb").read()
    assert open(a[1], "rb").read() == open(b[1], "rb").read()
    header = open(a[0]).readline().strip()
    assert header == "experiment,scenario,n,metric,value,se,replications,seed"
    assert rows_to_csv([]) == header + "\n"
