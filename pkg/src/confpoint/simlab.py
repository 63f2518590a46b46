"""Samplers and Monte Carlo experiment runners that emit plot-ready tables."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .conformal import FORWARD
from .core import RandomStream, validate_series, write_atomic
from .hypo import test_changepoint, test_exchangeability
from .mcp import conf_pvalue_at, confidence_set, estimate, sweep
from .scores import (Cauchy, Density, Exponential, KdeSpec, Normal, ScoreFamily, identity_score,
                     nearly_optimal_score, ratio_score)

EXPERIMENTS = ("null", "length", "consistency", "coverage", "power", "scoregap")
EXPERIMENT_IDS = {name: i for i, name in enumerate(EXPERIMENTS)}
SCORE_MODES = ("identity", "oracle", "kde")
TESTS = ("changepoint", "exchangeability")
CSV_HEADER = ("experiment", "scenario", "n", "metric", "value", "se", "replications", "seed")


class BadTau(ValueError):
    pass


class SpecError(ValueError):
    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


# ---------------------------------------------------------------------------
# distributions

_FAMILIES = {
    "normal": (Normal, ("mean", "variance"), (0.0, 1.0)),
    "cauchy": (Cauchy, ("location", "scale"), (0.0, 1.0)),
    "exponential": (Exponential, ("rate",), (1.0,)),
}


@dataclass(frozen=True)
class DistSpec:
    """``normal(mean, variance)``, ``cauchy(location, scale)`` or ``exponential(rate)``."""

    family: str
    params: tuple[float, ...] = ()

    def __post_init__(self):
        errs = self.problems()
        if errs:
            raise SpecError(errs)
        _, names, defaults = _FAMILIES[self.family]
        params = tuple(float(p) for p in self.params) + defaults[len(self.params):]
        object.__setattr__(self, "params", params)

    def problems(self, where: str = "dist") -> list[str]:
        if self.family not in _FAMILIES:
            return [f"{where}: unknown family {self.family!r}"]
        cls, names, _ = _FAMILIES[self.family]
        if len(self.params) > len(names):
            return [f"{where}: {self.family} takes at most {len(names)} parameters"]
        out = []
        for name, value in zip(names, self.params):
            if not math.isfinite(float(value)):
                out.append(f"{where}: {name} must be finite")
            elif name in ("variance", "scale", "rate") and not float(value) > 0:
                out.append(f"{where}: {name} must be positive")
        return out

    @property
    def density(self) -> Density:
        cls, _, _ = _FAMILIES[self.family]
        return cls(*self.params)

    def ppf(self, u):
        return self.density.ppf(u)

    def cdf(self, x):
        return self.density.cdf(x)

    def pdf(self, x):
        return self.density.pdf(x)

    def logpdf(self, x):
        return self.density.logpdf(x)

    @property
    def label(self) -> str:
        short = {"normal": "N", "cauchy": "Cauchy", "exponential": "Exp"}[self.family]
        return f"{short}({','.join(f'{p:g}' for p in self.params)})"

    def to_dict(self) -> dict:
        return {"family": self.family, "params": list(self.params)}

    @classmethod
    def from_dict(cls, d) -> "DistSpec":
        return cls(d["family"], tuple(d.get("params", ())))


def normal(mean: float = 0.0, variance: float = 1.0) -> DistSpec:
    return DistSpec("normal", (mean, variance))


def cauchy(location: float = 0.0, scale: float = 1.0) -> DistSpec:
    return DistSpec("cauchy", (location, scale))


def exponential(rate: float = 1.0) -> DistSpec:
    return DistSpec("exponential", (rate,))


@dataclass(frozen=True)
class Scenario:
    pre: DistSpec
    post: DistSpec

    @property
    def label(self) -> str:
        return f"{self.pre.label}->{self.post.label}"

    @property
    def exchangeable(self) -> bool:
        return self.pre == self.post

    def to_dict(self) -> dict:
        return {"pre": self.pre.to_dict(), "post": self.post.to_dict()}


STANDARD_SCENARIOS = (
    Scenario(normal(0, 1), normal(0, 5)),
    Scenario(cauchy(0, 1), cauchy(5, 1)),
    Scenario(exponential(1), exponential(5)),
    Scenario(normal(0, 1), cauchy(5, 1)),
)


def sample_series(pre: DistSpec, post: DistSpec, n: int, tau: int, rng: RandomStream):
    """First ``tau`` draws from ``pre``, the rest from ``post``, by inverse CDF."""
    if not 1 <= tau <= n:
        raise BadTau(f"tau={tau} must lie in [1, {n}]")
    u = rng.uniforms(n)
    x = np.empty(n)
    x[:tau] = pre.ppf(u[:tau])
    x[tau:] = post.ppf(u[tau:])
    return validate_series(x)


# ---------------------------------------------------------------------------
# experiment specification


@dataclass(frozen=True)
class ExperimentSpec:
    scenarios: tuple[Scenario, ...]
    n_grid: tuple[int, ...]
    c: float = 0.5
    alpha: float = 0.05
    replications: int = 100
    root_seed: int = 0
    score_mode: str = "identity"
    t_fraction: float = 0.5  # fixed split for the null experiment, and t0 for the changepoint test
    test: str = "changepoint"
    lengths: bool = True  # score-gap runner: also sweep for set lengths
    kde: KdeSpec = field(default_factory=KdeSpec)

    def __post_init__(self):
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        object.__setattr__(self, "n_grid", tuple(self.n_grid))
        errs = self.violations()
        if errs:
            raise SpecError(errs)

    def violations(self) -> list[str]:
        out = []
        if not self.scenarios:
            out.append("scenarios: at least one scenario is required")
        if not self.n_grid:
            out.append("n_grid: must not be empty")
        if any(not isinstance(n, (int, np.integer)) or n < 2 for n in self.n_grid):
            out.append("n_grid: entries must be integers >= 2")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            out.append("n_grid: must be strictly ascending")
        if not 0.0 < self.c < 1.0:
            out.append("c: must lie in (0, 1)")
        if not 0.0 < self.alpha < 1.0:
            out.append("alpha: must lie in (0, 1)")
        if not 0.0 < self.t_fraction < 1.0:
            out.append("t_fraction: must lie in (0, 1)")
        if not isinstance(self.replications, (int, np.integer)) or self.replications < 1:
            out.append("replications: must be an integer >= 1")
        if self.score_mode not in SCORE_MODES:
            out.append(f"score_mode: must be one of {SCORE_MODES}")
        if self.test not in TESTS:
            out.append(f"test: must be one of {TESTS}")
        return out

    def to_dict(self) -> dict:
        return {
            "scenarios": [s.to_dict() for s in self.scenarios],
            "n_grid": [int(n) for n in self.n_grid],
            "c": self.c,
            "alpha": self.alpha,
            "replications": int(self.replications),
            "root_seed": int(self.root_seed),
            "score_mode": self.score_mode,
            "t_fraction": self.t_fraction,
            "test": self.test,
            "lengths": self.lengths,
            "kde": {"kernel": self.kde.kernel, "alpha_exponent": self.kde.alpha_exponent,
                    "floor_epsilon": self.kde.floor_epsilon},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        """Parse a config mapping, collecting every problem before raising."""
        errs: list[str] = []
        if not isinstance(d, dict):
            raise SpecError(["config: must be a JSON object"])
        known = {"scenario", "scenarios", "n_grid", "c", "alpha", "replications", "root_seed", "seed",
                 "score_mode", "t_fraction", "test", "lengths", "kde"}
        errs += [f"{k}: unknown key" for k in sorted(set(d) - known)]

        raw = d.get("scenarios")
        if raw is None and "scenario" in d:
            raw = [d["scenario"]]
        scenarios = []
        if raw is None:
            errs.append("scenarios: missing")
        else:
            for i, s in enumerate(raw if isinstance(raw, list) else [raw]):
                sides = {}
                for side in ("pre", "post"):
                    where = f"scenarios[{i}].{side}"
                    try:
                        d_side = s[side]
                        sides[side] = DistSpec(d_side["family"], tuple(d_side.get("params", ())))
                    except SpecError as e:
                        errs += [v.replace("dist:", where + ":") for v in e.violations]
                    except (KeyError, TypeError, AttributeError) as e:
                        errs.append(f"{where}: missing or malformed ({e})")
                if len(sides) == 2:
                    scenarios.append(Scenario(sides["pre"], sides["post"]))

        kwargs = {}
        for key, conv in (("c", float), ("alpha", float), ("t_fraction", float), ("replications", int),
                          ("root_seed", int), ("score_mode", str), ("test", str), ("lengths", bool)):
            src = "seed" if key == "root_seed" and "seed" in d and "root_seed" not in d else key
            if src in d:
                v = d[src]
                if conv is int and not (isinstance(v, int) and not isinstance(v, bool)):
                    errs.append(f"{key}: must be an integer")
                    continue
                if conv is float and not isinstance(v, (int, float)):
                    errs.append(f"{key}: must be a number")
                    continue
                kwargs[key] = conv(v)
        grid = d.get("n_grid")
        if grid is None:
            errs.append("n_grid: missing")
            grid = ()
        elif not isinstance(grid, list) or not all(isinstance(n, int) and not isinstance(n, bool) for n in grid):
            errs.append("n_grid: must be a list of integers")
            grid = ()
        if "kde" in d:
            try:
                kwargs["kde"] = KdeSpec(**d["kde"])
            except (TypeError, ValueError) as e:
                errs.append(f"kde: {e}")
        try:
            spec = cls(tuple(scenarios) or (STANDARD_SCENARIOS[0],), tuple(grid) or (2,), **kwargs)
            partial = []
        except SpecError as e:
            spec, partial = None, e.violations
        # invariants checked on placeholder values are only reported if the input was present
        if not scenarios:
            partial = [v for v in partial if not v.startswith("scenarios")]
        if not grid:
            partial = [v for v in partial if not v.startswith("n_grid")]
        errs += partial
        if errs:
            raise SpecError(errs)
        return spec


@dataclass(frozen=True)
class MetricsRow:
    experiment: str
    scenario: str
    n: int
    metric: str
    value: float
    se: float
    replications: int
    seed: int

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"{self.metric}: value must be finite")
        if not self.se >= 0:
            raise ValueError(f"{self.metric}: se must be >= 0")

    def as_tuple(self) -> tuple:
        return (self.experiment, self.scenario, self.n, self.metric, self.value, self.se,
                self.replications, self.seed)


def standard_error(values) -> float:
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return 0.0
    return float(np.std(v, ddof=1) / math.sqrt(v.size))


def null_conf_cdf(y):
    """CDF of p_conf at a fixed split under exchangeability (atom 1/4 at 1)."""
    y = np.asarray(y, dtype=np.float64)
    return np.where(y >= 1.0, 1.0, 1.0 - (1.0 - np.clip(y, 0.0, 1.0) / 2.0) ** 2)


def sup_distance_to_null(samples) -> float:
    """sup_y |F_hat(y) - F(y)|, checking both one-sided limits at every jump."""
    s = np.sort(np.asarray(samples, dtype=np.float64))
    k = s.size
    y, first = np.unique(s, return_index=True)
    last = np.r_[first[1:], k]
    below = first / k  # F_hat(y-)
    at = last / k      # F_hat(y)
    f_left = 1.0 - (1.0 - np.clip(y, 0, 1) / 2.0) ** 2
    f_at = null_conf_cdf(y)
    # F_hat is flat between jumps, so the left limits at the next jump cover the gaps
    gaps = np.r_[np.abs(at - f_at), np.abs(below - f_left)]
    return float(gaps.max())


# ---------------------------------------------------------------------------
# runners


def _rep_stream(spec: ExperimentSpec, experiment: str, r: int) -> RandomStream:
    return RandomStream(spec.root_seed, (EXPERIMENT_IDS[experiment], r))


def _tau(spec: ExperimentSpec, n: int) -> int:
    return min(max(int(math.floor(spec.c * n)), 1), n - 1)


def _scores(spec: ExperimentSpec, scenario: Scenario, x, rng: RandomStream) -> ScoreFamily:
    if spec.score_mode == "identity":
        return identity_score()
    if spec.score_mode == "oracle":
        return ratio_score(scenario.post.density, scenario.pre.density)
    return nearly_optimal_score(x, spec.kde, rng)


def _draw(spec, scenario, n, tau, stream, si, ni):
    # data and theta come from disjoint children of the replication stream
    data = stream.child(si, ni, 0)
    theta = stream.child(si, ni, 1)
    return sample_series(scenario.pre, scenario.post, n, tau, data), theta


def _row(spec, experiment, scenario, n, metric, value, se):
    return MetricsRow(experiment, scenario.label, int(n), metric, float(value), float(se),
                      int(spec.replications), int(spec.root_seed))


def _summaries(spec, experiment, scenario, n, name, values, stats=("mean",)):
    v = np.asarray(values, dtype=np.float64)
    se = standard_error(v)
    rows = []
    for stat in stats:
        val = {"mean": lambda a: math.fsum(a) / a.size, "median": np.median}[stat](v)
        rows.append(_row(spec, experiment, scenario, n, f"{stat}_{name}", val, se))
    return rows


def run_null_behavior(spec: ExperimentSpec) -> list[MetricsRow]:
    """Law of p_conf at a fixed split and set length under exchangeable data."""
    rows = []
    for si, scenario in enumerate(spec.scenarios):
        if not scenario.exchangeable:
            raise SpecError([f"scenarios[{si}]: null experiment needs pre == post"])
        for ni, n in enumerate(spec.n_grid):
            t = min(max(int(math.floor(spec.t_fraction * n)), 1), n - 1)
            pc, length = [], []
            for r in range(spec.replications):
                x, theta = _draw(spec, scenario, n, n, _rep_stream(spec, "null", r), si, ni)
                s = _scores(spec, scenario, x, theta)
                curve = sweep(x, s, s, theta)
                pc.append(curve.p_conf[t - 1])
                length.append(confidence_set(curve, spec.alpha).size)
            pc = np.asarray(pc)
            length = np.asarray(length, dtype=np.float64)
            rows.append(_row(spec, "null", scenario, n, "sup_cdf_distance", sup_distance_to_null(pc), 0.0))
            rows.append(_row(spec, "null", scenario, n, "p_conf_atom_one", np.mean(pc == 1.0),
                             standard_error(pc == 1.0)))
            rows.append(_row(spec, "null", scenario, n, "p_conf_mean", np.mean(pc), standard_error(pc)))
            rows += _summaries(spec, "null", scenario, n, "length", length)
            rows += _summaries(spec, "null", scenario, n, "rel_length", length / (n - 1))
            rows += _summaries(spec, "null", scenario, n, "rel_length_n", length / n)
            rows.append(_row(spec, "null", scenario, n, "expected_length", (1 - spec.alpha / 2) ** 2 * (n - 1), 0.0))
    return rows


def run_relative_length(spec: ExperimentSpec) -> list[MetricsRow]:
    rows = []
    for si, scenario in enumerate(spec.scenarios):
        for ni, n in enumerate(spec.n_grid):
            tau = n if scenario.exchangeable else _tau(spec, n)
            length = []
            for r in range(spec.replications):
                x, theta = _draw(spec, scenario, n, tau, _rep_stream(spec, "length", r), si, ni)
                s = _scores(spec, scenario, x, theta)
                length.append(confidence_set(sweep(x, s, s, theta), spec.alpha).size)
            length = np.asarray(length, dtype=np.float64)
            rows += _summaries(spec, "length", scenario, n, "rel_length_n", length / n, ("median", "mean"))
            rows += _summaries(spec, "length", scenario, n, "rel_length", length / (n - 1), ("median", "mean"))
    return rows


def run_consistency(spec: ExperimentSpec) -> list[MetricsRow]:
    rows = []
    for si, scenario in enumerate(spec.scenarios):
        for ni, n in enumerate(spec.n_grid):
            tau = _tau(spec, n)
            est = []
            for r in range(spec.replications):
                x, theta = _draw(spec, scenario, n, tau, _rep_stream(spec, "consistency", r), si, ni)
                s = _scores(spec, scenario, x, theta)
                est.append(estimate(sweep(x, s, s, theta)))
            est = np.asarray(est, dtype=np.float64)
            dev = np.abs(est / tau - 1.0)
            captured = np.abs(est - tau) <= n ** 0.25
            rows += _summaries(spec, "consistency", scenario, n, "abs_ratio_dev", dev, ("median", "mean"))
            rows += _summaries(spec, "consistency", scenario, n, "ratio", est / tau, ("median",))
            rows.append(_row(spec, "consistency", scenario, n, "window_capture", np.mean(captured),
                             standard_error(captured)))
    return rows


def run_coverage(spec: ExperimentSpec) -> list[MetricsRow]:
    """Fraction of replications whose confidence set holds the true split.

    Membership of tau only needs p_conf(tau), which is computed directly.
    """
    rows = []
    for si, scenario in enumerate(spec.scenarios):
        for ni, n in enumerate(spec.n_grid):
            tau = _tau(spec, n)
            hit = []
            for r in range(spec.replications):
                x, theta = _draw(spec, scenario, n, tau, _rep_stream(spec, "coverage", r), si, ni)
                s = _scores(spec, scenario, x, theta)
                hit.append(conf_pvalue_at(x, tau, s, s, theta)[2] > spec.alpha)
            rows.append(_row(spec, "coverage", scenario, n, "coverage", np.mean(hit), standard_error(hit)))
    return rows


def run_power(spec: ExperimentSpec, test: str | None = None) -> list[MetricsRow]:
    """Rejection rates under the null ("level") and the alternative ("power").

    changepoint: the change sits at c*n and the test probes t0 = t_fraction*n;
    the null places the change at t0 itself.  exchangeability: the null has
    no change, the alternative changes at c*n, and the test uses the same c.
    """
    test = test or spec.test
    if test not in TESTS:
        raise ValueError(f"test must be one of {TESTS}")
    rows = []
    for si, scenario in enumerate(spec.scenarios):
        for ni, n in enumerate(spec.n_grid):
            t0 = min(max(int(math.floor(spec.t_fraction * n)), 1), n - 1)
            taus = {"level": t0, "power": _tau(spec, n)} if test == "changepoint" else {"level": n, "power": _tau(spec, n)}
            for k, (metric, tau) in enumerate(taus.items()):
                rej = []
                for r in range(spec.replications):
                    stream = _rep_stream(spec, "power", r).child(k)
                    x, theta = _draw(spec, scenario, n, tau, stream, si, ni)
                    if test == "changepoint":
                        s = _scores(spec, scenario, x, theta)
                        out = test_changepoint(x, t0, spec.alpha, (s, s), theta)
                    else:
                        out = test_exchangeability(x, spec.c, spec.alpha, theta)
                    rej.append(out.reject)
                rows.append(_row(spec, f"power[{test}]", scenario, n, metric, np.mean(rej), standard_error(rej)))
    return rows


def last_point_pvalue(x, scores: ScoreFamily, theta: float) -> float:
    """Conformal p-value of X_n among X_1..X_n."""
    k = np.asarray(scores(x), dtype=np.float64)
    ref = k[-1]
    return float((np.count_nonzero(k > ref) + theta * np.count_nonzero(k == ref)) / k.size)


def run_score_gap(spec: ExperimentSpec) -> list[MetricsRow]:
    """Mean last-point p-value (and set length) under oracle, KDE and identity scores.

    All three scores share the data and the theta draws of a replication.
    """
    rows = []
    for si, scenario in enumerate(spec.scenarios):
        oracle = ratio_score(scenario.post.density, scenario.pre.density)
        ident = identity_score()
        for ni, n in enumerate(spec.n_grid):
            tau = n if scenario.exchangeable else _tau(spec, n)
            p = {"oracle": [], "kde": [], "identity": []}
            length = {"oracle": [], "kde": [], "identity": []}
            for r in range(spec.replications):
                x, theta = _draw(spec, scenario, n, tau, _rep_stream(spec, "scoregap", r), si, ni)
                th_last = theta.child(FORWARD).uniforms(n)[-1]
                ident_curve = sweep(x, ident, ident, theta)
                kde_s = nearly_optimal_score(x, spec.kde, tau_hat=estimate(ident_curve))
                fams = {"oracle": oracle, "kde": kde_s, "identity": ident}
                for name, fam in fams.items():
                    p[name].append(last_point_pvalue(x, fam, th_last))
                    if spec.lengths:
                        curve = ident_curve if name == "identity" else sweep(x, fam, fam, theta)
                        length[name].append(confidence_set(curve, spec.alpha).size)
            for name in ("oracle", "kde", "identity"):
                rows += _summaries(spec, "scoregap", scenario, n, f"p_last_{name}", p[name])
            diff = np.asarray(p["oracle"]) - np.asarray(p["kde"])
            rows.append(_row(spec, "scoregap", scenario, n, "gap_oracle_kde", abs(math.fsum(diff) / diff.size),
                             standard_error(diff)))
            if spec.lengths:
                for name in ("oracle", "kde", "identity"):
                    rows += _summaries(spec, "scoregap", scenario, n, f"length_{name}", length[name])
    return rows


RUNNERS: dict[str, Callable[[ExperimentSpec], list[MetricsRow]]] = {
    "null": run_null_behavior,
    "length": run_relative_length,
    "consistency": run_consistency,
    "coverage": run_coverage,
    "power": run_power,
    "scoregap": run_score_gap,
}


def run_experiment(name: str, spec: ExperimentSpec) -> list[MetricsRow]:
    if name not in RUNNERS:
        raise ValueError(f"experiment must be one of {EXPERIMENTS}")
    return RUNNERS[name](spec)


# ---------------------------------------------------------------------------
# output


def rows_to_csv(rows: Sequence[MetricsRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in rows:
        e, s, n, m, v, se, reps, seed = row.as_tuple()
        w.writerow((e, s, n, m, repr(v), repr(se), reps, seed))
    return buf.getvalue()


def manifest(name: str, spec: ExperimentSpec) -> str:
    return json.dumps({"experiment": name, "spec": spec.to_dict(), "columns": list(CSV_HEADER)},
                      indent=2, sort_keys=True) + "\n"


def write_table(rows: Sequence[MetricsRow], path, name: str, spec: ExperimentSpec) -> tuple[str, str]:
    """Write ``path`` (CSV) and ``path`` with a ``.manifest.json`` suffix."""
    path = str(path)
    stem = path[:-4] if path.endswith(".csv") else path
    man = stem + ".manifest.json"
    write_atomic(path, rows_to_csv(rows))
    write_atomic(man, manifest(name, spec))
    return path, man
