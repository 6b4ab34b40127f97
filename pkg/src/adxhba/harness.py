"""Experiment orchestration: parameter sweeps, competitive ratios, NN protocols, reports."""

from __future__ import annotations

import copy
import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .advertisers import AdvertiserSpec, NeuralNetAdvertiser, random_spec
from .baselines import OfflineOptimal, OnlineOptimal, QLearnPublisher, UCBPublisher, online_opt_revenue
from .game import GameConfig, OracleAccess, run_episode
from .hba import HBAPublisher

PUBLISHERS = ("offline-opt", "hba-km", "qlearn-pub", "ucb-pub", "online-opt")
ADVERTISERS = ("greedy", "uniform", "normal", "lognormal", "exponential", "ltb", "ucb", "qlearn")
CLASSES = {
    "adaptive": ("greedy", "ltb", "ucb", "qlearn"),
    "randomized": ("uniform", "normal", "lognormal", "exponential"),
}
CSV_HEADER = ["publisher", "advertiser", "param_id", "seed", "revenue", "online_opt_revenue", "competitive_ratio"]

# endpoints of each swept parameter; integer axes are rounded
PARAM_RANGES = {
    "greedy": {"v_max": (0.5, 1.0)},
    "uniform": {"high": (0.5, 1.0)},
    "normal": {"mu": (0.25, 0.65), "var": (2e-6, 6e-6)},
    "lognormal": {"mu": (-7.0, -5.4), "sigma": (0.5, 1.0)},
    "exponential": {"beta": (1 / 900, 1 / 500)},
    "ltb": {"m": (20, 200), "f": (0.3, 0.7)},
    "ucb": {"k": (20, 200), "epsilon": (0.01, 0.30)},
    "qlearn": {"alpha": (0.1, 0.3), "gamma": (0.80, 0.99), "tau": (100.0, 1000.0)},
}
INTEGER_PARAMS = {"m", "k"}


def axis(lo, hi, points: int, integer: bool = False) -> list:
    vals = np.linspace(lo, hi, points) if points > 1 else np.array([(lo + hi) / 2])
    if integer:
        return [int(round(v)) for v in vals]
    return [float(round(v, 12)) for v in vals]


def param_grid(kind: str, points: int) -> list[dict]:
    """Cartesian product of evenly spaced points on every axis of ``kind``."""
    grid = [{}]
    for name, (lo, hi) in PARAM_RANGES[kind].items():
        grid = [{**g, name: v} for g in grid for v in axis(lo, hi, points, name in INTEGER_PARAMS)]
    return grid


def advertiser_specs(kind: str, points: int) -> list[AdvertiserSpec]:
    if kind in ("uniform", "normal", "lognormal", "exponential", "logistic"):
        return [random_spec(kind, **p) for p in param_grid(kind, points)]
    return [AdvertiserSpec(kind, p) for p in param_grid(kind, points)]


def default_type_space(points: int = 3) -> list[AdvertiserSpec]:
    """Hypothesised types for the belief publisher.

    Greedy, stochastic and Learn-Then-Bid types cover the full sweep grid.
    Each learning type gets one model per exploration setting (epsilon for
    UCB, temperature for Q-learning) with its other parameters at the middle
    of their range: those dominate how the learner spreads its bids.
    """
    types: list[AdvertiserSpec] = []
    for kind in ("greedy", "uniform", "normal", "lognormal", "exponential", "ltb"):
        types += advertiser_specs(kind, points)
    mid = lambda name, kind: axis(*PARAM_RANGES[kind][name], 1, name in INTEGER_PARAMS)[0]
    for eps in axis(*PARAM_RANGES["ucb"]["epsilon"], points):
        types.append(AdvertiserSpec("ucb", {"k": mid("k", "ucb"), "epsilon": eps}))
    for tau in axis(*PARAM_RANGES["qlearn"]["tau"], points):
        types.append(AdvertiserSpec("qlearn", {"alpha": mid("alpha", "qlearn"),
                                               "gamma": mid("gamma", "qlearn"), "tau": tau}))
    return types


def strategy_class(advertiser: str) -> str | None:
    for name, members in CLASSES.items():
        if advertiser in members:
            return name
    return None


@dataclass
class ExperimentConfig:
    """Everything a sweep needs; ``full()`` and ``desk()`` are the two presets."""

    days: int = 60
    impressions_per_day: int = 1000
    daily_budget: float | None = None  # None: half a unit per impression
    campaign_reach: float = 0.5
    grid: int = 1000
    points: int = 5
    seeds: list[int] = field(default_factory=lambda: list(range(100)))
    publishers: list[str] = field(default_factory=lambda: ["offline-opt", "hba-km", "qlearn-pub", "ucb-pub", "online-opt"])
    advertisers: list[str] = field(default_factory=lambda: list(ADVERTISERS))
    km: dict = field(default_factory=lambda: {"k": 1000, "l": 10, "k_c": 500})
    hba: dict = field(default_factory=lambda: {"mode": "product", "alpha": 0.1, "gamma": 0.95})
    qlearn_pub: dict = field(default_factory=dict)
    ucb_pub: dict = field(default_factory=dict)
    type_points: int | None = None  # grid density of HBA's type space; defaults to ``points``
    nn: dict = field(default_factory=lambda: {"hidden_layers": [1, 2, 3, 4]})
    workers: int = 1
    out: str = "results"

    def __post_init__(self):
        unknown = set(self.publishers) - set(PUBLISHERS)
        if unknown:
            raise ValueError(f"unknown publishers {sorted(unknown)}; expected a subset of {PUBLISHERS}")
        unknown = set(self.advertisers) - set(ADVERTISERS)
        if unknown:
            raise ValueError(f"unknown advertisers {sorted(unknown)}; expected a subset of {ADVERTISERS}")
        if self.points < 1:
            raise ValueError("points per axis must be >= 1")
        if not self.seeds:
            raise ValueError("need at least one seed")
        self.game  # validate the game parameters eagerly

    @classmethod
    def full(cls, **overrides) -> "ExperimentConfig":
        return cls(**overrides)

    @classmethod
    def desk(cls, **overrides) -> "ExperimentConfig":
        base = dict(days=10, impressions_per_day=200, points=3, seeds=list(range(10)),
                    km={"k": 200, "l": 5, "k_c": 30},
                    # short horizons: keep the censored Q-table's low-price bias small
                    hba={"mode": "product", "alpha": 0.1, "gamma": 0.05})
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_dict(cls, data: dict, desk: bool = False) -> "ExperimentConfig":
        data = dict(data)
        if isinstance(data.get("seeds"), int):
            base = int(data.pop("seed", 0))
            data["seeds"] = list(range(base, base + data["seeds"]))
        data.pop("seed", None)
        known = cls.__dataclass_fields__
        bad = set(data) - set(known)
        if bad:
            raise ValueError(f"unknown config keys {sorted(bad)}")
        return cls.desk(**data) if desk else cls(**data)

    @classmethod
    def from_file(cls, path, desk: bool = False) -> "ExperimentConfig":
        text = Path(path).read_text()
        if str(path).endswith(".json"):
            data = json.loads(text)
        else:
            import yaml

            data = yaml.safe_load(text) or {}
        if not isinstance(data, dict):
            raise ValueError(f"{path}: expected a mapping at the top level")
        return cls.from_dict(data, desk)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def game(self) -> GameConfig:
        budget = 0.5 * self.impressions_per_day if self.daily_budget is None else self.daily_budget
        return GameConfig(self.days, self.impressions_per_day, budget, self.grid, self.campaign_reach)

    def type_space(self) -> list[AdvertiserSpec]:
        return default_type_space(self.type_points or self.points)

    def make_publisher(self, name: str, oracle: OracleAccess | None = None):
        if name == "hba-km":
            km = (self.km["k"], self.km["l"], self.km["k_c"])
            return HBAPublisher(self.type_space(), km=km, **self.hba)
        if name == "qlearn-pub":
            return QLearnPublisher(**self.qlearn_pub)
        if name == "ucb-pub":
            return UCBPublisher(**self.ucb_pub)
        if name == "offline-opt":
            return OfflineOptimal(oracle)
        if name == "online-opt":
            return OnlineOptimal(oracle)
        raise ValueError(f"unknown publisher {name!r}")

    def cells(self) -> list[AdvertiserSpec]:
        return [s for kind in self.advertisers for s in advertiser_specs(kind, self.points)]


def competitive_ratio(alg_revenue: float, online_opt_revenue: float) -> float:
    """``alg / online-opt``; ``0/0`` counts as 1, any other zero denominator is NaN."""
    if alg_revenue < 0 or online_opt_revenue < 0:
        raise ValueError(f"revenues must be non-negative, got {alg_revenue} and {online_opt_revenue}")
    if online_opt_revenue == 0:
        return 1.0 if alg_revenue == 0 else math.nan
    return alg_revenue / online_opt_revenue


@dataclass(frozen=True)
class ResultRow:
    publisher: str
    advertiser: str
    param_id: str
    seed: int
    revenue: float
    online_opt_revenue: float
    competitive_ratio: float

    def csv_fields(self) -> list[str]:
        return [self.publisher, self.advertiser, self.param_id, str(self.seed), f"{self.revenue:.6f}",
                f"{self.online_opt_revenue:.6f}", f"{self.competitive_ratio:.6f}"]


def _stats(values) -> dict:
    v = np.asarray([x for x in values if not math.isnan(x)], dtype=float)
    if len(v) == 0:
        return {"mean": math.nan, "std": math.nan, "n": 0}
    return {"mean": float(v.mean()), "std": float(v.std()), "n": int(len(v))}


@dataclass
class MetricsReport:
    """Per-episode rows plus anything that went wrong along the way.

    Aggregates skip NaN ratios (zero online-optimal revenue with positive
    algorithm revenue); ``invalid`` counts them.
    """

    rows: list[ResultRow] = field(default_factory=list)
    errors: list[dict] = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def extend(self, other: "MetricsReport"):
        self.rows += other.rows
        self.errors += other.errors
        for k, v in other.extras.items():
            self.extras.setdefault(k, []).extend(v)

    def select(self, publisher=None, advertisers=None) -> list[ResultRow]:
        return [r for r in self.rows
                if (publisher is None or r.publisher == publisher)
                and (advertisers is None or r.advertiser in advertisers)]

    def aggregate(self, publisher: str, advertisers=None) -> dict:
        rows = self.select(publisher, advertisers)
        cr = _stats(r.competitive_ratio for r in rows)
        rev = _stats(r.revenue for r in rows)
        return {"mean_cr": cr["mean"], "std_cr": cr["std"], "mean_revenue": rev["mean"],
                "std_revenue": rev["std"], "n": len(rows),
                "invalid": sum(math.isnan(r.competitive_ratio) for r in rows)}

    def publishers(self) -> list[str]:
        return list(dict.fromkeys(r.publisher for r in self.rows))

    def cells(self) -> list[dict]:
        """One line per (publisher, advertiser, parameter point)."""
        keys = list(dict.fromkeys((r.publisher, r.advertiser, r.param_id) for r in self.rows))
        out = []
        for pub, adv, pid in keys:
            rows = [r for r in self.rows if (r.publisher, r.advertiser, r.param_id) == (pub, adv, pid)]
            cr = _stats(r.competitive_ratio for r in rows)
            rev = _stats(r.revenue for r in rows)
            out.append({"publisher": pub, "advertiser": adv, "param_id": pid, "mean_revenue": rev["mean"],
                        "std_revenue": rev["std"], "mean_cr": cr["mean"], "std_cr": cr["std"], "n": len(rows)})
        return out

    def summary(self) -> dict:
        pubs = self.publishers()
        out = {"publishers": {p: self.aggregate(p) for p in pubs}, "classes": {}, "errors": self.errors}
        present = {r.advertiser for r in self.rows}
        for cls, members in CLASSES.items():
            if present & set(members):
                out["classes"][cls] = {p: self.aggregate(p, members) for p in pubs}
        out["advertisers"] = {a: {p: self.aggregate(p, (a,)) for p in pubs}
                              for a in dict.fromkeys(r.advertiser for r in self.rows)}
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow(r.csv_fields())
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MetricsReport":
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        rows = [ResultRow(d["publisher"], d["advertiser"], d["param_id"], int(d["seed"]), float(d["revenue"]),
                          float(d["online_opt_revenue"]), float(d["competitive_ratio"])) for d in reader]
        return cls(rows)

    def table(self) -> str:
        """Plain-text competitive-ratio table, one column per strategy class."""
        s = self.summary()
        groups = list(s["classes"]) or ["all"]
        lines = [f"{'publisher':<12}" + "".join(f"{g:>22}" for g in groups)]
        for p in self.publishers():
            cells = []
            for g in groups:
                a = s["classes"][g][p] if g in s["classes"] else s["publishers"][p]
                cells.append(f"{a['mean_cr']:>12.4f} ± {a['std_cr']:<7.4f}")
            lines.append(f"{p:<12}" + "".join(cells))
        return "\n".join(lines) + "\n"


def emit_results(report: MetricsReport, csv_path, json_path=None) -> tuple[Path, Path | None]:
    """Write the per-episode CSV and (optionally) the JSON aggregate summary."""
    paths = []
    for path, text in ((csv_path, report.to_csv()),
                       (json_path, None if json_path is None else
                        json.dumps(_jsonable(report.summary()), indent=2, sort_keys=True) + "\n")):
        if path is None:
            paths.append(None)
            continue
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write results to {path}: {exc.strerror or exc}") from exc
        paths.append(path)
    return paths[0], paths[1]


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


# --- running ------------------------------------------------------------------


def run_matchup(config: ExperimentConfig, spec: AdvertiserSpec, publisher: str, seed: int,
                game: GameConfig | None = None):
    """One episode; returns the log and its result row."""
    game = game or config.game
    adv = spec.build()
    oracle = OracleAccess(adv)
    pub = config.make_publisher(publisher, oracle)
    log = run_episode(adv, pub, game, seed, oracle if publisher in ("offline-opt", "online-opt") else None)
    opt = online_opt_revenue(log)
    rev = log.publisher_revenue
    row = ResultRow(publisher, spec.label, spec.param_id, seed, rev, opt, competitive_ratio(rev, opt))
    return log, row, pub


def run_cell(config: ExperimentConfig, spec: AdvertiserSpec) -> MetricsReport:
    """All seeds and publishers for one advertiser parameter point.

    The competitive-ratio denominator replays each episode's realised bid
    sequence through the clairvoyant rule, so it always shares the seed and
    schedule of the numerator.
    """
    report = MetricsReport()
    for seed in config.seeds:
        for name in config.publishers:
            try:
                _, row, _ = run_matchup(config, spec, name, seed)
                report.rows.append(row)
            except Exception as exc:  # recorded, never fatal to the sweep
                report.errors.append({"publisher": name, "advertiser": spec.label, "param_id": spec.param_id,
                                      "seed": seed, "error": f"{type(exc).__name__}: {exc}"})
    return report


def _run_cell_args(args):
    return run_cell(*args)


def run_sweep(config: ExperimentConfig, progress=None) -> MetricsReport:
    """Every advertiser cell against every publisher over all seeds.

    Cells run on ``config.workers`` processes; results are merged in cell
    order so the output does not depend on scheduling.
    """
    cells = config.cells()
    report = MetricsReport()
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            parts = pool.map(_run_cell_args, [(config, c) for c in cells])
            for i, part in enumerate(parts):
                report.extend(part)
                if progress:
                    progress(i + 1, len(cells), cells[i])
    else:
        for i, cell in enumerate(cells):
            report.extend(run_cell(config, cell))
            if progress:
                progress(i + 1, len(cells), cell)
    return report


class RotatingPublisher:
    """Hands each ``chunk`` of consecutive rounds to the next publisher in turn."""

    name = "rotation"

    def __init__(self, publishers, chunk: int = 100):
        self.publishers = list(publishers)
        self.chunk = chunk

    def reset(self, config, rng):
        for p, r in zip(self.publishers, rng.spawn(len(self.publishers))):
            p.reset(config, r)

    def act(self, t: int) -> int:
        self.current = self.publishers[(t // self.chunk) % len(self.publishers)]
        return self.current.act(t)

    def observe(self, obs):
        self.current.observe(obs)


def nn_mse_reduction(adv: NeuralNetAdvertiser) -> tuple[float, float]:
    """Buffer MSE of the initial weights versus the current weights."""
    x, y = adv._xy()
    return adv.net.mse(x, y, adv.init_theta), adv.net.mse(x, y)


def run_nn_protocol(mode: str, config: ExperimentConfig, hidden_layers=None,
                    publishers=("hba-km", "qlearn-pub", "ucb-pub"), nn_params: dict | None = None,
                    chunk: int = 100) -> MetricsReport:
    """Competitive ratios against the neural-net adversary.

    ``single``: a fresh net learns online against each publisher.
    ``mixture``: the net spends day one facing the publishers in rotating
    ``chunk``-round blocks, is then frozen, and each publisher is scored on
    the remaining days.

    ``extras["nn_mse"]`` holds ``(depth, seed, publisher, initial, final)``
    buffer MSEs for every trained net.
    """
    if mode not in ("single", "mixture"):
        raise ValueError(f"mode must be 'single' or 'mixture', got {mode!r}")
    depths = hidden_layers or config.nn.get("hidden_layers", [1])
    nn_params = dict(nn_params or {k: v for k, v in config.nn.items() if k != "hidden_layers"})
    game = config.game
    report = MetricsReport(extras={"nn_mse": []})
    for depth in depths:
        spec = AdvertiserSpec("nn", {"hidden_layers": int(depth), **nn_params})
        pid = f"hidden_layers={int(depth)}"
        for seed in config.seeds:
            if mode == "single":
                for name in publishers:
                    adv = spec.build()
                    log = run_episode(adv, config.make_publisher(name), game, seed)
                    _record_nn(report, name, pid, seed, log, adv, depth)
                continue
            trainer = spec.build()
            day1 = replace(game, days=1)
            rot = RotatingPublisher([config.make_publisher(n) for n in ("hba-km", "ucb-pub", "qlearn-pub")], chunk)
            run_episode(trainer, rot, day1, seed)
            report.extras["nn_mse"].append((int(depth), seed, "mixture", *nn_mse_reduction(trainer)))
            rest = replace(game, days=game.days - 1)
            for name in publishers:
                adv = copy.deepcopy(trainer)
                adv.frozen = True
                log = run_episode(adv, config.make_publisher(name), rest, seed)
                _record_nn(report, name, pid, seed, log, None, depth)
    return report


def _record_nn(report, name, pid, seed, log, adv, depth):
    opt = online_opt_revenue(log)
    rev = log.publisher_revenue
    report.rows.append(ResultRow(name, "nn", pid, seed, rev, opt, competitive_ratio(rev, opt)))
    if adv is not None:
        report.extras["nn_mse"].append((int(depth), seed, name, *nn_mse_reduction(adv)))
