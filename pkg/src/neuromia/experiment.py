"""Config-driven experiment runner and report aggregation.

A config is a strict JSON object (unknown keys are rejected). ``parse_config``
fills every default and the resolved config is echoed next to the results;
each summary row carries the SHA-256 of that resolved config (output location
excluded) so a row can be traced back to the exact settings that produced it.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .ann import TrainConfig, train_ann
from .checkpoint import save_checkpoint
from .data import Dataset, SplitPlan, concat, load_iris, load_idx, load_wdbc, make_split_plan, normalize, split_plan_from_partition
from .dp import DpConfig, train_dpsgd
from .evo import BinEncoderConfig, EvoConfig, run_evo_mia, to_text
from .mia import AttackConfig, run_mia
from .prepare import default_data_dir
from .snn import EncoderConfig, LifConfig, SurrogateConfig, train_snn

SUMMARY_FIELDS = (
    "experiment", "dataset", "model", "seed", "train_acc", "test_acc",
    "attack_auc", "epsilon", "config_fingerprint",
)


HISTORY_EPOCHS = 5  # DPSGD trace resolution, in epochs


class ConfigError(ValueError):
    pass


class RunError(RuntimeError):
    pass


# -- schema -------------------------------------------------------------------


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True, frozen=True)


class TrainSection(_Strict):
    epochs: Optional[int] = Field(default=None, ge=1)
    batch_size: int = Field(default=32, ge=1)
    lr: float = Field(default=1e-3, gt=0)
    hidden: int = Field(default=1000, ge=1)


class LifSection(_Strict):
    beta: float = Field(default=0.95, gt=0, lt=1)
    threshold: float = Field(default=1.0, gt=0)
    steps: Optional[int] = Field(default=None, ge=1)


class EncoderSection(_Strict):
    kind: Literal["rate", "latency", "delta"] = "rate"
    tau: float = Field(default=5.0, gt=0)
    threshold: float = Field(default=0.1, gt=0)


class SurrogateSection(_Strict):
    alpha: float = Field(default=2.0, gt=0)


class AttackSection(_Strict):
    lam: float = Field(default=1e-3, gt=0)
    epochs: int = Field(default=200, ge=1)
    resample_queries: bool = False


class SplitSection(_Strict):
    test_fraction: float = Field(default=0.2, gt=0, lt=1)


class MnistSection(_Strict):
    train_limit: Optional[int] = Field(default=None, ge=1)
    test_limit: Optional[int] = Field(default=None, ge=1)


class DpSection(_Strict):
    epsilons: list[float] = Field(default_factory=lambda: [0.22, 0.5, 1.0, 2.0])
    delta: float = Field(default=1e-5, gt=0, lt=1)
    clip: float = Field(default=5.0, gt=0)
    lot_size: int = Field(default=64, ge=1)
    lr: float = Field(default=0.05, gt=0)
    epochs: float = Field(default=15.0, gt=0)

    @field_validator("epsilons")
    @classmethod
    def _positive(cls, v):
        if not v or any(e <= 0 for e in v):
            raise ValueError("epsilons must be a nonempty list of positive values")
        return v


class EvoSection(_Strict):
    population_sizes: list[int] = Field(default_factory=lambda: [100])
    mutation_rates: list[float] = Field(default_factory=lambda: [0.5])
    crossover_rates: list[float] = Field(default_factory=lambda: [0.5])
    tournament_size: int = Field(default=4, ge=1)
    generations: int = Field(default=50, ge=0)
    elitism: int = Field(default=1, ge=0)
    sim_steps: int = Field(default=24, ge=1)
    target_fitness: Optional[float] = None


class BinEncoderSection(_Strict):
    kind: Literal["flipflop", "triangle"] = "flipflop"
    bins: int = Field(default=8, ge=2)
    window: int = Field(default=16, ge=1)
    scale: float = Field(default=1.0, gt=0)


class ExperimentConfig(_Strict):
    kind: Literal["mia-compare", "snn-encoders", "evo-grid", "dpsgd-sweep"]
    dataset: Literal["iris", "breast-cancer", "mnist"]
    seeds: list[int]
    models: list[Literal["ann", "snn"]] = Field(default_factory=lambda: ["ann", "snn"])
    encoders: list[Literal["rate", "latency", "delta"]] = Field(default_factory=lambda: ["rate", "latency", "delta"])
    out: Optional[str] = None
    data_dir: Optional[str] = None
    ann: TrainSection = TrainSection()
    snn: TrainSection = TrainSection()
    lif: LifSection = LifSection()
    encoder: EncoderSection = EncoderSection()
    surrogate: SurrogateSection = SurrogateSection()
    attack: AttackSection = AttackSection()
    split: SplitSection = SplitSection()
    mnist: MnistSection = MnistSection()
    dp: DpSection = DpSection()
    evo: EvoSection = EvoSection()
    bin_encoder: BinEncoderSection = BinEncoderSection()

    @field_validator("seeds")
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("at least one seed is required")
        if len(set(v)) != len(v):
            raise ValueError("seeds must be distinct")
        return v


def _default_epochs(dataset: str) -> int:
    return 10 if dataset == "mnist" else 50


def resolve(cfg: ExperimentConfig) -> ExperimentConfig:
    """Fill dataset- and kind-dependent defaults (epochs, simulation steps)."""
    epochs = _default_epochs(cfg.dataset)
    steps = 10 if cfg.kind == "snn-encoders" else 25
    upd = {}
    if cfg.ann.epochs is None:
        upd["ann"] = cfg.ann.model_copy(update={"epochs": epochs})
    if cfg.snn.epochs is None:
        upd["snn"] = cfg.snn.model_copy(update={"epochs": epochs})
    if cfg.lif.steps is None:
        upd["lif"] = cfg.lif.model_copy(update={"steps": steps})
    return cfg.model_copy(update=upd) if upd else cfg


def _format_errors(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


DATA_FILES = {
    "iris": ("iris.data",),
    "breast-cancer": ("wdbc.data",),
    "mnist": (
        "mnist/train-images-idx3-ubyte", "mnist/train-labels-idx1-ubyte",
        "mnist/t10k-images-idx3-ubyte", "mnist/t10k-labels-idx1-ubyte",
    ),
}


def data_root(cfg: ExperimentConfig) -> Path:
    return Path(cfg.data_dir) if cfg.data_dir else default_data_dir()


def config_from_dict(raw: dict, check_files: bool = True) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    try:
        cfg = resolve(ExperimentConfig.model_validate(raw))
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None
    if check_files:
        root = data_root(cfg)
        missing = [str(root / f) for f in DATA_FILES[cfg.dataset] if not (root / f).is_file()]
        if missing:
            raise ConfigError(f"dataset: missing files {', '.join(missing)}")
    return cfg


def parse_config(path, check_files: bool = True) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(raw, check_files)


def echo(cfg: ExperimentConfig) -> dict:
    return cfg.model_dump(mode="json")


def fingerprint(cfg: ExperimentConfig | dict) -> str:
    """SHA-256 of the canonical resolved config without output/data locations."""
    d = echo(cfg) if isinstance(cfg, ExperimentConfig) else dict(cfg)
    d.pop("out", None)
    d.pop("data_dir", None)
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# -- rows ---------------------------------------------------------------------


@dataclass
class SummaryRow:
    experiment: str
    dataset: str
    model: str
    seed: int
    train_acc: float
    test_acc: float
    attack_auc: float | None
    epsilon: float | None
    config_fingerprint: str

    def as_csv(self) -> list[str]:
        def num(v):
            return "" if v is None else repr(float(v))

        return [
            self.experiment, self.dataset, self.model, str(self.seed),
            num(self.train_acc), num(self.test_acc), num(self.attack_auc), num(self.epsilon),
            self.config_fingerprint,
        ]


def write_summary(rows, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for r in rows:
            w.writerow(r.as_csv())
    return path


def read_summary(path) -> list[SummaryRow]:
    def opt(v):
        return None if v == "" else float(v)

    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SUMMARY_FIELDS:
            raise ConfigError(f"{path}: unexpected columns {reader.fieldnames}")
        return [
            SummaryRow(
                r["experiment"], r["dataset"], r["model"], int(r["seed"]),
                float(r["train_acc"]), float(r["test_acc"]), opt(r["attack_auc"]), opt(r["epsilon"]),
                r["config_fingerprint"],
            )
            for r in reader
        ]


# -- datasets -----------------------------------------------------------------


def load_dataset(cfg: ExperimentConfig) -> tuple[Dataset, int | None]:
    """The normalized dataset, plus the train-file size for MNIST (else None)."""
    root = data_root(cfg)
    if cfg.dataset == "iris":
        return normalize(load_iris(root / "iris.data")), None
    if cfg.dataset == "breast-cancer":
        return normalize(load_wdbc(root / "wdbc.data")), None
    m = root / "mnist"
    train = load_idx(m / "train-images-idx3-ubyte", m / "train-labels-idx1-ubyte", cfg.mnist.train_limit)
    test = load_idx(m / "t10k-images-idx3-ubyte", m / "t10k-labels-idx1-ubyte", cfg.mnist.test_limit)
    return concat(train, test), train.n_samples


def split_for(cfg: ExperimentConfig, ds: Dataset, seed: int, n_train: int | None = None) -> SplitPlan:
    """Seeded shuffle split for tabular data; MNIST keeps its train/test files."""
    if n_train is None:
        return make_split_plan(ds, cfg.split.test_fraction, seed)
    return split_plan_from_partition(np.arange(n_train), np.arange(n_train, ds.n_samples), seed)


# -- tasks --------------------------------------------------------------------


def _train_cfg(section: TrainSection, seed: int) -> TrainConfig:
    return TrainConfig(epochs=section.epochs, batch_size=section.batch_size, seed=seed, lr=section.lr, hidden=section.hidden)


def _lif(cfg: ExperimentConfig) -> LifConfig:
    return LifConfig(cfg.lif.beta, cfg.lif.threshold, cfg.lif.steps)


def _encoder(cfg: ExperimentConfig, kind: str | None = None) -> EncoderConfig:
    return EncoderConfig(kind or cfg.encoder.kind, cfg.lif.steps, cfg.encoder.tau, cfg.encoder.threshold)


def _attack(cfg: ExperimentConfig, seed: int) -> AttackConfig:
    return AttackConfig(cfg.attack.lam, cfg.attack.epochs, seed, cfg.attack.resample_queries)


def _bin_encoder(cfg: ExperimentConfig) -> BinEncoderConfig:
    b = cfg.bin_encoder
    return BinEncoderConfig(b.kind, b.bins, b.window, b.scale)


def _fmt(v: float) -> str:
    return f"{v:g}"


@dataclass(frozen=True)
class Task:
    kind: str  # mia | dp | dp-baseline | evo
    model: str
    seed: int
    label: str
    options: tuple = ()


def plan_tasks(cfg: ExperimentConfig) -> list[Task]:
    tasks = []
    for seed in cfg.seeds:
        if cfg.kind == "mia-compare":
            tasks += [Task("mia", m, seed, m) for m in cfg.models]
        elif cfg.kind == "snn-encoders":
            tasks += [Task("mia", "snn", seed, f"snn-{e}", (("encoder", e),)) for e in cfg.encoders]
        elif cfg.kind == "evo-grid":
            e = cfg.evo
            for p in e.population_sizes:
                for mu in e.mutation_rates:
                    for cx in e.crossover_rates:
                        label = f"evo-{cfg.bin_encoder.kind}-p{p}-m{_fmt(mu)}-c{_fmt(cx)}"
                        tasks.append(Task("evo", "evo", seed, label, (("population", p), ("mutation", mu), ("crossover", cx))))
        else:
            for m in cfg.models:
                tasks.append(Task("dp-baseline", m, seed, m))
                tasks += [Task("dp", m, seed, m, (("epsilon", eps),)) for eps in cfg.dp.epsilons]
    return tasks


def _run_name(cfg: ExperimentConfig, task: Task) -> str:
    parts = [cfg.dataset, task.label]
    opts = dict(task.options)
    if task.kind == "dp":
        parts.append(f"eps{_fmt(opts['epsilon'])}")
    elif task.kind == "dp-baseline":
        parts.append("baseline")
    parts.append(f"s{task.seed}")
    return "_".join(parts)


def _meta(cfg: ExperimentConfig, task: Task, model: str) -> dict:
    meta = {"model": model, "dataset": cfg.dataset, "seed": task.seed, "run": _run_name(cfg, task)}
    if model == "snn":
        meta["lif"] = cfg.lif.model_dump()
        meta["encoder"] = {**cfg.encoder.model_dump(), "kind": dict(task.options).get("encoder", cfg.encoder.kind)}
    return meta


def execute_task(cfg_json: dict, task: Task, out_dir: str) -> SummaryRow:
    """Run one (config, seed, variant) unit and write its artifacts."""
    cfg = config_from_dict(cfg_json, check_files=False)
    out = Path(out_dir)
    fp = fingerprint(cfg)
    ds, n_train = load_dataset(cfg)
    plan = split_for(cfg, ds, task.seed, n_train)
    name = _run_name(cfg, task)
    opts = dict(task.options)

    if task.kind == "mia":
        section = cfg.ann if task.model == "ann" else cfg.snn
        res = run_mia(
            task.model, ds, plan, _train_cfg(section, task.seed), _attack(cfg, task.seed),
            _encoder(cfg, opts.get("encoder")), _lif(cfg), SurrogateConfig(cfg.surrogate.alpha),
        )
        res.roc.write_csv(out / f"roc_{name}.csv")
        params = res.target if task.model == "ann" else res.target.params
        save_checkpoint(out / f"ckpt_{name}.npz", params, _meta(cfg, task, task.model))
        return SummaryRow(cfg.kind, cfg.dataset, task.label, task.seed, res.train_acc, res.test_acc, res.auc, None, fp)

    if task.kind == "evo":
        e = cfg.evo
        evo = EvoConfig(
            population_size=opts["population"], mutation_rate=opts["mutation"], crossover_rate=opts["crossover"],
            tournament_size=e.tournament_size, generations=e.generations, elitism=e.elitism,
            sim_steps=e.sim_steps, seed=task.seed, target_fitness=e.target_fitness,
        )
        res = run_evo_mia(ds, plan, evo, _bin_encoder(cfg), _attack(cfg, task.seed))
        res.roc.write_csv(out / f"roc_{name}.csv")
        (out / f"genome_{name}.txt").write_text(to_text(res.target.genome))
        return SummaryRow(cfg.kind, cfg.dataset, task.label, task.seed, res.train_acc, res.test_acc, res.auc, None, fp)

    section = cfg.ann if task.model == "ann" else cfg.snn
    tcfg = _train_cfg(section, task.seed)
    x, y = ds.features, ds.labels
    if task.kind == "dp-baseline":
        if task.model == "ann":
            r = train_ann(ds, plan.target_train, plan.target_test, tcfg)
            params = r.params
        else:
            _, r = train_snn(ds, plan.target_train, plan.target_test, tcfg, _encoder(cfg), _lif(cfg), SurrogateConfig(cfg.surrogate.alpha))
            params = r.params
        save_checkpoint(out / f"ckpt_{name}.npz", params, _meta(cfg, task, task.model))
        return SummaryRow(cfg.kind, cfg.dataset, task.model, task.seed, r.train_acc, r.test_acc, None, None, fp)

    d = cfg.dp
    dp = DpConfig(clip=d.clip, lot_size=d.lot_size, lr=d.lr, epochs=d.epochs, target_epsilon=opts["epsilon"], delta=d.delta)
    n = len(plan.target_train)
    res = train_dpsgd(
        task.model, ds, plan.target_train, plan.target_test, dp, tcfg,
        _encoder(cfg), _lif(cfg), cfg.surrogate.alpha,
        record_every=max(1, round(HISTORY_EPOCHS / dp.sampling_rate(n))),
    )
    res.write_history(out / f"dp_{name}.csv")
    save_checkpoint(out / f"ckpt_{name}.npz", res.params, {**_meta(cfg, task, task.model), "sigma": res.sigma})
    return SummaryRow(cfg.kind, cfg.dataset, task.model, task.seed, res.train_acc, res.test_acc, None, res.budget.epsilon, fp)


def _execute_safe(cfg_json, task, out_dir):
    try:
        return execute_task(cfg_json, task, out_dir)
    except Exception as exc:  # noqa: BLE001 - reported with run identification
        raise RunError(f"run {task.label} seed {task.seed} failed: {type(exc).__name__}: {exc}") from exc


@dataclass
class ExperimentOutput:
    rows: list[SummaryRow]
    baseline_rows: list[SummaryRow]
    out_dir: Path
    summary_path: Path


def run_experiment(cfg: ExperimentConfig, out: str | os.PathLike | None = None, jobs: int = 1) -> ExperimentOutput:
    """Execute every task, then write summary.csv (and baseline.csv for DP sweeps).

    Rows are ordered by task plan, not completion, so output is independent of
    ``jobs``.
    """
    out_dir = Path(out or cfg.out or "runs")
    out_dir.mkdir(parents=True, exist_ok=True)
    resolved = echo(cfg)
    (out_dir / "config.resolved.json").write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")
    tasks = plan_tasks(cfg)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_execute_safe, resolved, t, str(out_dir)) for t in tasks]
            rows = [f.result() for f in futures]
    else:
        rows = [_execute_safe(resolved, t, str(out_dir)) for t in tasks]
    main = [r for r, t in zip(rows, tasks) if t.kind != "dp-baseline"]
    base = [r for r, t in zip(rows, tasks) if t.kind == "dp-baseline"]
    summary = write_summary(main, out_dir / "summary.csv")
    if base:
        write_summary(base, out_dir / "baseline.csv")
    return ExperimentOutput(main, base, out_dir, summary)


# -- reporting ------------------------------------------------------------------


def _median(values):
    vals = [v for v in values if v is not None and not math.isnan(v)]
    return statistics.median(vals) if vals else None


@dataclass
class ReportRow:
    experiment: str
    dataset: str
    model: str
    epsilon: float | None
    n_seeds: int
    train_acc: float
    test_acc: float
    attack_auc: float | None


@dataclass
class Report:
    rows: list[ReportRow]
    drops: dict[tuple[str, str], float]  # (dataset, model) -> avg accuracy drop

    def table(self) -> str:
        head = ["experiment", "dataset", "model", "epsilon", "seeds", "train_acc", "test_acc", "attack_auc"]

        def cell(v):
            if v is None:
                return "-"
            return f"{v:.4f}" if isinstance(v, float) else str(v)

        body = [[r.experiment, r.dataset, r.model, cell(r.epsilon), str(r.n_seeds), cell(r.train_acc), cell(r.test_acc), cell(r.attack_auc)] for r in self.rows]
        lines = _render([head] + body)
        if self.drops:
            lines.append("")
            drop_rows = [["dataset", "model", "avg_accuracy_drop"]]
            drop_rows += [[d, m, f"{v * 100:.2f}%"] for (d, m), v in sorted(self.drops.items())]
            lines += _render(drop_rows)
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["experiment", "dataset", "model", "epsilon", "n_seeds", "train_acc", "test_acc", "attack_auc", "avg_accuracy_drop"])
            for r in self.rows:
                drop = self.drops.get((r.dataset, r.model)) if r.epsilon is not None else None
                w.writerow([
                    r.experiment, r.dataset, r.model, "" if r.epsilon is None else repr(r.epsilon), r.n_seeds,
                    repr(r.train_acc), repr(r.test_acc), "" if r.attack_auc is None else repr(r.attack_auc),
                    "" if drop is None else repr(drop),
                ])


def _render(rows: list[list[str]]) -> list[str]:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    out = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    out.insert(1, "  ".join("-" * w for w in widths))
    return out


def accuracy_drop(baseline_acc: float, dp_accs) -> float:
    """Mean over the privacy grid of (baseline accuracy - private accuracy)."""
    dp_accs = list(dp_accs)
    if not dp_accs:
        raise ValueError("no private accuracies")
    return float(np.mean([baseline_acc - a for a in dp_accs]))


def emit_report(rows, baseline_rows=(), out_dir=None) -> Report:
    """Median-over-seeds aggregation plus the average private accuracy drop."""
    rows = list(rows)
    if not rows:
        raise ValueError("cannot report on zero rows")
    groups: dict[tuple, list[SummaryRow]] = {}
    for r in rows:
        groups.setdefault((r.experiment, r.dataset, r.model, r.epsilon), []).append(r)
    agg = []
    for key in sorted(groups, key=lambda k: (k[0], k[1], k[2], -1.0 if k[3] is None else k[3])):
        g = groups[key]
        agg.append(ReportRow(*key, len(g), _median([r.train_acc for r in g]), _median([r.test_acc for r in g]), _median([r.attack_auc for r in g])))

    drops = {}
    base = {}
    for b in baseline_rows:
        base.setdefault((b.dataset, b.model), []).append(b.test_acc)
    for (dataset, model), accs in base.items():
        dp_medians = [r.test_acc for r in agg if r.dataset == dataset and r.model == model and r.epsilon is not None]
        if dp_medians:
            drops[(dataset, model)] = accuracy_drop(_median(accs), dp_medians)
    report = Report(agg, drops)
    if out_dir is not None:
        out_dir = Path(out_dir)
        report.write_csv(out_dir / "report.csv")
        (out_dir / "report.txt").write_text(report.table())
    return report


def per_seed_drops(rows, baseline_rows) -> dict[tuple[str, str, int], float]:
    """Average accuracy drop for every (dataset, model, seed)."""
    base = {(b.dataset, b.model, b.seed): b.test_acc for b in baseline_rows}
    acc: dict[tuple, list[float]] = {}
    for r in rows:
        if r.epsilon is not None:
            acc.setdefault((r.dataset, r.model, r.seed), []).append(r.test_acc)
    return {k: accuracy_drop(base[k], v) for k, v in acc.items() if k in base}
