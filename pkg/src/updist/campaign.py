"""Campaigns: multi-seed batches of sequential runs driven by a JSON config.

One config file describes one campaign: an objective, a budget, the
algorithms to compare, and the seed list.  Each (algorithm, seed) pair is an
independent deterministic run persisted under ``out/<algorithm>/seed_<s>/``
as ``trace.csv`` + ``run.json``; per-algorithm ``summary.csv`` aggregates the
kind-appropriate progress series (best value, Q2, or band accuracy) across
seeds with median and quartiles.  Every default is echoed into ``run.json``
so no run is ambiguous.
"""

from __future__ import annotations

import csv
import json
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .benchfns import benchmark_names, get_benchmark
from .core import Bounds
from .criteria import INVERSION_KINDS, CriterionSpec
from .distribution import UpParams
from .doe import DoeConfig, full_grid, lhs
from .engine import (
    ExperimentRecord,
    InnerOptConfig,
    ObjectiveEvaluationError,
    RunConfig,
    run_sequential,
)
from .metrics import METRIC_KEYS, TestSet
from .surrogate import SurrogateSpec

CONFIG_SCHEMA_VERSION = 1

CAMPAIGN_KINDS = ("refine", "optimize", "invert")

# algorithm label -> acquisition criterion, per campaign kind
ALGORITHMS = {
    "refine": {"up_smart": "up_smart", "kriging_variance": "kriging_variance"},
    "optimize": {"up_ego": "up_ei", "ego": "gaussian_ei"},
    "invert": {k: k for k in INVERSION_KINDS},
}
_DEFAULT_ALGORITHMS = {
    "refine": ["up_smart"],
    "optimize": ["up_ego"],
    "invert": ["tmse_reg"],
}
# which trace column the per-kind summary aggregates
SUMMARY_COLUMN = {"refine": "q2", "optimize": "best_y", "invert": "band_accuracy"}

_TOP_LEVEL_KEYS = {
    "schema_version",
    "name",
    "kind",
    "objective",
    "external",
    "bounds",
    "n0",
    "iterations",
    "seeds",
    "algorithms",
    "surrogate",
    "criterion",
    "rho",
    "inner_opt",
    "test_set",
    "doe_maximin_iters",
    "stagnation",
}


class ConfigError(ValueError):
    """Malformed campaign config; maps to exit code 2 in the CLI."""


@dataclass(frozen=True)
class ExternalObjective:
    """Objective evaluated by spawning a command per point.

    Protocol: the point is written to the command's standard input as one
    whitespace-separated line of reals; the command prints the response as
    one real on standard output and exits 0.
    """

    argv: tuple[str, ...]
    timeout_s: float = 60.0
    retries: int = 0

    def __call__(self, x: np.ndarray) -> float:
        line = " ".join(repr(float(v)) for v in np.atleast_1d(x)) + "\n"
        last_exc = None
        for _ in range(self.retries + 1):
            try:
                proc = subprocess.run(
                    list(self.argv),
                    input=line,
                    capture_output=True,
                    text=True,
                    timeout=self.timeout_s,
                )
            except subprocess.TimeoutExpired as exc:
                last_exc = exc
                continue
            if proc.returncode != 0:
                last_exc = RuntimeError(
                    f"external command exited {proc.returncode}: {proc.stderr.strip()[:200]}"
                )
                continue
            out = proc.stdout.strip()
            try:
                return float(out)
            except ValueError:
                raise ValueError(f"external command printed non-numeric output {out!r}") from None
        raise RuntimeError(f"external objective failed after {self.retries + 1} attempt(s): {last_exc}")


@dataclass(frozen=True)
class CampaignConfig:
    """Parsed and validated campaign description (see :func:`load_config`)."""

    name: str
    kind: str
    objective_name: str | None
    external: ExternalObjective | None
    bounds: Bounds
    n0: int
    iterations: int
    seeds: tuple[int, ...]
    algorithms: tuple[str, ...]
    surrogate: SurrogateSpec
    criterion_opts: dict
    up: UpParams
    inner: InnerOptConfig
    test_set_spec: dict | None
    doe_maximin_iters: int = 200
    stagnation_tol: float | None = None
    stagnation_patience: int = 5

    def objective(self):
        if self.external is not None:
            return self.external
        return get_benchmark(self.objective_name)

    def criterion_for(self, algorithm: str) -> CriterionSpec:
        kind = ALGORITHMS[self.kind][algorithm]
        return CriterionSpec(kind=kind, **self.criterion_opts)

    def build_test_set(self) -> TestSet | None:
        spec = self.test_set_spec
        if spec is None:
            return None
        objective = self.objective()
        if spec["kind"] == "grid":
            X = full_grid(spec["n_per_axis"], self.bounds)
        else:
            cfg = DoeConfig(spec["n"], self.bounds.dim, seed=spec.get("seed", 10_000_019))
            X = lhs(cfg, self.bounds)
        y = np.array([float(objective(x)) for x in X])
        return TestSet(X, y)

    def run_config(self, algorithm: str, seed: int) -> RunConfig:
        return RunConfig(
            objective=self.objective(),
            bounds=self.bounds,
            criterion=self.criterion_for(algorithm),
            n0=self.n0,
            iterations=self.iterations,
            seed=seed,
            surrogate=self.surrogate,
            up=self.up,
            inner=self.inner,
            test_set=self.build_test_set(),
            doe_maximin_iters=self.doe_maximin_iters,
            stagnation_tol=self.stagnation_tol,
            stagnation_patience=self.stagnation_patience,
            name=f"{self.name}/{algorithm}",
        )


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def _get(d: dict, key: str, kind, default=None, required: bool = False):
    if key not in d or d[key] is None:
        _require(not required, f"missing required config key {key!r}")
        return default
    v = d[key]
    if kind is float and isinstance(v, int):
        v = float(v)
    _require(isinstance(v, kind), f"config key {key!r} has wrong type (expected {kind})")
    return v


def parse_config(doc: dict, base_dir: Path | None = None) -> CampaignConfig:
    """Validate a config document; unknown keys are named in the error."""
    _require(isinstance(doc, dict), "config root must be an object")
    unknown = set(doc) - _TOP_LEVEL_KEYS
    _require(not unknown, f"unknown config key(s): {', '.join(sorted(unknown))}")
    version = _get(doc, "schema_version", int, required=True)
    _require(version == CONFIG_SCHEMA_VERSION, f"unsupported schema_version {version}")

    kind = _get(doc, "kind", str, required=True)
    _require(kind in CAMPAIGN_KINDS, f"config key 'kind' must be one of {CAMPAIGN_KINDS}")

    objective_name = _get(doc, "objective", str)
    external_doc = _get(doc, "external", dict)
    _require(
        (objective_name is None) != (external_doc is None),
        "exactly one of 'objective' (benchmark name) or 'external' must be given",
    )

    external = None
    if external_doc is not None:
        argv = external_doc.get("argv")
        _require(
            isinstance(argv, list) and argv and all(isinstance(a, str) for a in argv),
            "config key 'external.argv' must be a nonempty list of strings",
        )
        external = ExternalObjective(
            argv=tuple(argv),
            timeout_s=float(external_doc.get("timeout_s", 60.0)),
            retries=int(external_doc.get("retries", 0)),
        )
        _require("bounds" in doc, "external objectives require explicit 'bounds'")
    else:
        _require(
            objective_name in benchmark_names(),
            f"unknown benchmark {objective_name!r}; available: {', '.join(benchmark_names())}",
        )

    if "bounds" in doc and doc["bounds"] is not None:
        b = _get(doc, "bounds", dict)
        _require("lower" in b and "upper" in b, "config key 'bounds' needs 'lower' and 'upper'")
        try:
            bounds = Bounds.from_dict(b)
        except ValueError as exc:
            raise ConfigError(f"config key 'bounds': {exc}") from None
    else:
        bounds = get_benchmark(objective_name).bounds

    n0 = _get(doc, "n0", int, required=True)
    iterations = _get(doc, "iterations", int, required=True)
    _require(n0 >= 2 and iterations >= 1, "'n0' must be >= 2 and 'iterations' >= 1")

    seeds_doc = doc.get("seeds", [0])
    if isinstance(seeds_doc, dict):
        count = _get(seeds_doc, "count", int, required=True)
        base = _get(seeds_doc, "base", int, default=0)
        _require(count >= 1, "'seeds.count' must be positive")
        seeds = tuple(range(base, base + count))
    else:
        _require(
            isinstance(seeds_doc, list) and seeds_doc and all(isinstance(s, int) for s in seeds_doc),
            "config key 'seeds' must be a list of integers or {count, base}",
        )
        _require(len(set(seeds_doc)) == len(seeds_doc), "config key 'seeds' has duplicates")
        seeds = tuple(seeds_doc)

    algorithms = doc.get("algorithms", _DEFAULT_ALGORITHMS[kind])
    _require(
        isinstance(algorithms, list) and algorithms,
        "config key 'algorithms' must be a nonempty list",
    )
    for a in algorithms:
        _require(
            a in ALGORITHMS[kind],
            f"algorithm {a!r} is not valid for kind {kind!r}; "
            f"choose from {sorted(ALGORITHMS[kind])}",
        )
    _require(len(set(algorithms)) == len(algorithms), "config key 'algorithms' has duplicates")

    try:
        surrogate = SurrogateSpec.from_dict(doc.get("surrogate") or {"family": "kriging"})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key 'surrogate': {exc}") from None

    criterion_opts = dict(doc.get("criterion") or {})
    allowed_crit = {"delta_pct", "threshold", "epsilon_pct", "sigma_eps_pct", "alpha", "use_variance_eps"}
    unknown = set(criterion_opts) - allowed_crit
    _require(not unknown, f"unknown criterion key(s): {', '.join(sorted(unknown))}")
    if kind == "invert":
        _require("threshold" in criterion_opts, "inversion campaigns require 'criterion.threshold'")
    try:
        for a in algorithms:
            CriterionSpec(kind=ALGORITHMS[kind][a], **criterion_opts)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key 'criterion': {exc}") from None

    rho_doc = doc.get("rho") or {}
    try:
        up = UpParams(rho=rho_doc.get("value"), rho_policy=rho_doc.get("policy", "dbar"))
    except ValueError as exc:
        raise ConfigError(f"config key 'rho': {exc}") from None

    inner_doc = doc.get("inner_opt") or {}
    try:
        inner = InnerOptConfig(**inner_doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key 'inner_opt': {exc}") from None

    test_doc = doc.get("test_set")
    if test_doc is not None:
        _require(isinstance(test_doc, dict), "config key 'test_set' must be an object")
        ts_kind = test_doc.get("kind")
        _require(ts_kind in ("grid", "lhs"), "config key 'test_set.kind' must be 'grid' or 'lhs'")
        if ts_kind == "grid":
            _require(
                isinstance(test_doc.get("n_per_axis"), int) and test_doc["n_per_axis"] >= 2,
                "config key 'test_set.n_per_axis' must be an int >= 2",
            )
        else:
            _require(
                isinstance(test_doc.get("n"), int) and test_doc["n"] >= 2,
                "config key 'test_set.n' must be an int >= 2",
            )

    stag = doc.get("stagnation") or {}
    stagnation_tol = stag.get("tol")
    if stagnation_tol is not None:
        stagnation_tol = float(stagnation_tol)

    name = _get(doc, "name", str, default="campaign")
    return CampaignConfig(
        name=name,
        kind=kind,
        objective_name=objective_name,
        external=external,
        bounds=bounds,
        n0=n0,
        iterations=iterations,
        seeds=seeds,
        algorithms=tuple(algorithms),
        surrogate=surrogate,
        criterion_opts=criterion_opts,
        up=up,
        inner=inner,
        test_set_spec=test_doc,
        doe_maximin_iters=int(doc.get("doe_maximin_iters", 200)),
        stagnation_tol=stagnation_tol,
        stagnation_patience=int(stag.get("patience", 5)),
    )


def load_config(path: str | Path) -> CampaignConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return parse_config(doc, base_dir=path.parent)


# ---------------------------------------------------------------------------
# Campaign execution
# ---------------------------------------------------------------------------


@dataclass
class RunOutcome:
    algorithm: str
    seed: int
    status: str  # completed | failed
    run_dir: str
    series: list  # per-iteration value of the summary column (None where missing)
    error: str | None = None


def _series_from_record(record: ExperimentRecord, column: str) -> list:
    out = []
    for it in record.iterations:
        if column == "best_y":
            out.append(it["best_y"])
        else:
            metrics = it.get("metrics") or {}
            v = metrics.get(column)
            out.append(None if v is None or (isinstance(v, float) and np.isnan(v)) else float(v))
    return out


def _run_one(campaign: CampaignConfig, algorithm: str, seed: int, out_root: str) -> RunOutcome:
    run_dir = Path(out_root) / algorithm / f"seed_{seed}"
    column = SUMMARY_COLUMN[campaign.kind]
    try:
        record = run_sequential(campaign.run_config(algorithm, seed))
    except ObjectiveEvaluationError as exc:
        if exc.record is not None:
            exc.record.status = "failed"
            exc.record.failure = str(exc)
            exc.record.write(run_dir)
        return RunOutcome(algorithm, seed, "failed", str(run_dir), [], error=str(exc))
    except Exception as exc:  # config/surrogate failures: no partial record to persist
        return RunOutcome(algorithm, seed, "failed", str(run_dir), [], error=str(exc))
    record.write(run_dir)
    return RunOutcome(algorithm, seed, "completed", str(run_dir), _series_from_record(record, column))


def write_summary_csv(path: str | Path, outcomes: list[RunOutcome], iterations: int) -> None:
    """Median and quartiles of the summary series across seeds, one row per iteration."""
    ok = sorted((o for o in outcomes if o.status == "completed"), key=lambda o: o.seed)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "median", "q25", "q75", "n_seeds"])
        for it in range(1, iterations + 1):
            vals = [
                o.series[it - 1]
                for o in ok
                if len(o.series) >= it and o.series[it - 1] is not None
            ]
            if vals:
                q25, med, q75 = np.percentile(vals, [25, 50, 75])
                writer.writerow([it, repr(float(med)), repr(float(q25)), repr(float(q75)), len(vals)])
            else:
                writer.writerow([it, "", "", "", 0])


def run_campaign(
    campaign: CampaignConfig, out_dir: str | Path, jobs: int = 1, seed_offset: int = 0
) -> list[RunOutcome]:
    """Execute every (algorithm, seed) pair; returns outcomes sorted by (algorithm, seed)."""
    out_root = Path(out_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    seeds = [s + seed_offset for s in campaign.seeds]
    tasks = [(alg, seed) for alg in campaign.algorithms for seed in seeds]

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_one, campaign, alg, seed, str(out_root)) for alg, seed in tasks]
            outcomes = [f.result() for f in futures]
    else:
        outcomes = [_run_one(campaign, alg, seed, str(out_root)) for alg, seed in tasks]

    outcomes.sort(key=lambda o: (o.algorithm, o.seed))
    for alg in campaign.algorithms:
        alg_outcomes = [o for o in outcomes if o.algorithm == alg]
        write_summary_csv(out_root / alg / "summary.csv", alg_outcomes, campaign.iterations)

    manifest = {
        "schema_version": CONFIG_SCHEMA_VERSION,
        "name": campaign.name,
        "kind": campaign.kind,
        "seed_offset": seed_offset,
        "runs": [
            {"algorithm": o.algorithm, "seed": o.seed, "status": o.status, "error": o.error}
            for o in outcomes
        ],
    }
    with open(out_root / "campaign.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return outcomes


# ---------------------------------------------------------------------------
# Validation of emitted files
# ---------------------------------------------------------------------------


def validate_trace_csv(path: Path, dim: int | None = None) -> list[str]:
    """Schema check of one trace file; returns a list of problems (empty if valid)."""
    problems = []
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        return [f"{path}: unreadable ({exc})"]
    if not rows:
        return [f"{path}: empty file"]
    header = rows[0]
    x_cols = [h for h in header if h.startswith("x") and h[1:].isdigit()]
    expected = (
        ["iter"] + x_cols + ["y", "best_y", "criterion_value"] + list(METRIC_KEYS) + ["band_accuracy"]
    )
    if header != expected:
        problems.append(f"{path}: unexpected header {header}")
        return problems
    if dim is not None and len(x_cols) != dim:
        problems.append(f"{path}: {len(x_cols)} coordinate columns, expected {dim}")
    prev_iter, prev_best = 0, np.inf
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            problems.append(f"{path}:{i}: {len(row)} fields, expected {len(header)}")
            continue
        try:
            it = int(row[0])
            floats = [float(v) for v in row[1 : 4 + len(x_cols)]]
            for v in row[4 + len(x_cols) :]:
                if v != "":
                    float(v)
        except ValueError as exc:
            problems.append(f"{path}:{i}: non-numeric field ({exc})")
            continue
        if it != prev_iter + 1:
            problems.append(f"{path}:{i}: iter {it} does not follow {prev_iter}")
        best = floats[len(x_cols) + 1]
        if best > prev_best + 1e-15:
            problems.append(f"{path}:{i}: best_y increased ({best} > {prev_best})")
        prev_iter, prev_best = it, best
    return problems


def validate_run_json(path: Path) -> tuple[list[str], int | None]:
    problems = []
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        return [f"{path}: unreadable or invalid JSON ({exc})"], None
    for key in ("schema_version", "name", "seed", "kind", "status", "config", "n_iterations"):
        if key not in doc:
            problems.append(f"{path}: missing key {key!r}")
    dim = None
    try:
        dim = len(doc["config"]["bounds"]["lower"])
    except (KeyError, TypeError):
        problems.append(f"{path}: config.bounds.lower missing")
    return problems, dim


def validate_summary_csv(path: Path) -> list[str]:
    problems = []
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        return [f"{path}: unreadable ({exc})"]
    if not rows or rows[0] != ["iter", "median", "q25", "q75", "n_seeds"]:
        return [f"{path}: unexpected header"]
    for i, row in enumerate(rows[1:], start=2):
        try:
            int(row[0])
            int(row[4])
            for v in row[1:4]:
                if v != "":
                    float(v)
        except (ValueError, IndexError):
            problems.append(f"{path}:{i}: malformed row")
    return problems


def validate_tree(root: str | Path) -> list[str]:
    """Validate every artifact under a campaign output directory."""
    root = Path(root)
    if not root.exists():
        return [f"{root}: does not exist"]
    problems = []
    found = False
    for run_json in sorted(root.rglob("run.json")):
        found = True
        probs, dim = validate_run_json(run_json)
        problems += probs
        trace = run_json.parent / "trace.csv"
        if trace.exists():
            problems += validate_trace_csv(trace, dim)
        else:
            problems.append(f"{trace}: missing")
    for summary in sorted(root.rglob("summary.csv")):
        found = True
        problems += validate_summary_csv(summary)
    if not found:
        problems.append(f"{root}: no run.json or summary.csv found")
    return problems
