"""Monte Carlo benchmark harness.

Each run draws its own random stream from ``(master_seed, run_index)``,
splits the rows into train/validation/test, fits every requested method at
every k on the train+validation rows and scores it on the held-out test
rows.  Runs are independent, so they may execute on worker threads; results
are always reduced in run-index order, which keeps the report identical
whatever the thread count.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .csvio import format_float, load_csv
from .matrix import center_columns, variance_explained
from .neuralnet import TrainConfig
from .pca import fit_pca, pca_reconstruct, pca_scores
from .rlc import SDE_TRAIN_CONFIG, fit_fsca_rlc, fit_fsca_sde, fit_pca_rlc, rlc_reconstruct, sde_reconstruct
from .selection import select, selection_frequency
from .synth import SynthConfig, generate_xsynthetic

METHODS = ("fsca", "spbr", "mpbr", "fsca-rlc", "pca-rlc", "fsca-sde", "pca")
SELECTING = ("fsca", "spbr", "mpbr", "fsca-rlc", "fsca-sde")

RAW_COLUMNS = ["dataset", "method", "k", "run", "vex_train", "vex_test", "fit_ms"]
CURVE_COLUMNS = ["method", "k", "n_runs", "vex_mean", "vex_std", "vex_train_mean", "vex_train_std"]
FREQ_COLUMNS = ["method", "k", "variable", "frequency"]


@dataclass(frozen=True)
class ExperimentConfig:
    """One benchmark sweep.

    ``data_source`` is a CSV path or a :class:`SynthConfig`.  Synthetic
    data is redrawn for every run unless ``resample_data`` is false.
    Percentages follow the tables: ``train_fraction`` is the share of rows
    used for fitting (train + validation) and ``val_fraction_of_train`` the
    share of those held back for early stopping.
    """

    data_source: str | SynthConfig
    methods: tuple[str, ...] = ("fsca",)
    k_values: tuple[int, ...] = (1,)
    mc_runs: int = 100
    train_fraction: float = 70.0
    val_fraction_of_train: float = 20.0
    tau: float = 99.0
    rlc_hidden: int = 6
    sde_hidden_sizes: tuple[int, ...] = (11, 21)
    train_cfg: TrainConfig = field(default_factory=TrainConfig)
    sde_train_cfg: TrainConfig = SDE_TRAIN_CONFIG
    master_seed: int = 0
    max_passes: int = 100
    resample_data: bool = True
    record_timing: bool = True
    dataset_name: str | None = None

    def __post_init__(self):
        if not self.methods:
            raise ValueError("methods must not be empty")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {list(METHODS)}")
        if len(set(self.methods)) != len(self.methods):
            raise ValueError("methods must not repeat")
        ks = list(self.k_values)
        if not ks or any(k < 1 for k in ks) or ks != sorted(set(ks)):
            raise ValueError(f"k_values must be a non-empty strictly ascending list of positive ints, got {ks}")
        if self.mc_runs < 1:
            raise ValueError("mc_runs must be >= 1")
        if not 0.0 < self.train_fraction < 100.0:
            raise ValueError("train_fraction must lie strictly between 0 and 100")
        if not 0.0 <= self.val_fraction_of_train < 100.0:
            raise ValueError("val_fraction_of_train must lie in [0, 100)")
        if not 0.0 < self.tau <= 100.0:
            raise ValueError("tau must lie in (0, 100]")

    @property
    def name(self) -> str:
        if self.dataset_name:
            return self.dataset_name
        if isinstance(self.data_source, SynthConfig):
            return "xsynthetic"
        return Path(self.data_source).stem

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        src = doc.pop("data_source")
        if isinstance(src, str):
            source = src
        elif "csv" in src:
            source = str(src["csv"])
        elif "synthetic" in src:
            source = SynthConfig(**src["synthetic"])
        else:
            raise ValueError("data_source must be a path, {'csv': path} or {'synthetic': {...}}")
        for key in ("train_cfg", "sde_train_cfg"):
            if key in doc:
                base = TrainConfig() if key == "train_cfg" else SDE_TRAIN_CONFIG
                doc[key] = dataclasses.replace(base, **doc[key])
        for key in ("methods", "k_values", "sde_hidden_sizes"):
            if key in doc:
                doc[key] = tuple(doc[key])
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown config fields: {sorted(extra)}")
        return cls(data_source=source, **doc)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        src = self.data_source
        out["data_source"] = {"synthetic": dataclasses.asdict(src)} if isinstance(src, SynthConfig) else {"csv": src}
        for key in ("methods", "k_values", "sde_hidden_sizes"):
            out[key] = list(out[key])
        return out


def load_config(path) -> ExperimentConfig:
    with Path(path).open() as fh:
        return ExperimentConfig.from_dict(json.load(fh))


def split_rows(m: int, train_fraction: float, val_fraction_of_train: float, seed) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Seeded train/validation/test partition of ``range(m)``.

    ``floor(train_fraction% * m)`` rows go to fitting, of which
    ``floor(val_fraction_of_train% * n_fit)`` become validation rows; the
    rest of the rows are the test set.  Index arrays come back sorted.
    """
    if not 0.0 < train_fraction <= 100.0 or not 0.0 <= val_fraction_of_train < 100.0:
        raise ValueError("fractions must be percentages")
    n_fit = int(math.floor(train_fraction / 100.0 * m + 1e-9))
    n_val = int(math.floor(val_fraction_of_train / 100.0 * n_fit + 1e-9))
    n_train, n_test = n_fit - n_val, m - n_fit
    if n_train < 1 or n_test < 1 or (val_fraction_of_train > 0 and n_val < 1):
        raise ValueError(f"split of {m} rows leaves an empty partition (train={n_train}, val={n_val}, test={n_test})")
    order = np.random.default_rng(seed).permutation(m)
    return np.sort(order[:n_train]), np.sort(order[n_train:n_fit]), np.sort(order[n_fit:])


@dataclass
class RunRow:
    method: str
    k: int
    run: int
    vex_train: float
    vex_test: float
    fit_ms: float
    indices: tuple[int, ...] | None = None


@dataclass
class RunFailure:
    method: str
    k: int
    run: int
    error: str


@dataclass
class RunReport:
    dataset: str
    methods: tuple[str, ...]
    k_values: tuple[int, ...]
    n_variables: int
    mc_runs: int
    rows: list[RunRow] = field(default_factory=list)
    failures: list[RunFailure] = field(default_factory=list)
    record_timing: bool = True

    def select_rows(self, method: str, k: int) -> list[RunRow]:
        return [r for r in self.rows if r.method == method and r.k == k]

    def aggregate(self) -> dict:
        """Per method and k: mean/std of V_EX and fit time, FSCA-relative time."""
        out: dict = {}
        for method in self.methods:
            out[method] = {}
            for k in self.k_values:
                rows = self.select_rows(method, k)
                fsca = {r.run: r for r in self.select_rows("fsca", k)}
                entry = {
                    "n_runs": len(rows),
                    "n_failed": sum(1 for f in self.failures if f.method == method and f.k == k),
                    "vex_mean": _mean([r.vex_test for r in rows]),
                    "vex_std": _std([r.vex_test for r in rows]),
                    "vex_train_mean": _mean([r.vex_train for r in rows]),
                    "vex_train_std": _std([r.vex_train for r in rows]),
                    "train_time_mean": _mean([r.fit_ms for r in rows]) if self.record_timing else None,
                    "train_time_std": _std([r.fit_ms for r in rows]) if self.record_timing else None,
                    "time_ratio_vs_fsca": None,
                    "time_ratio_per_run_mean": None,
                    "time_ratio_per_run_std": None,
                }
                if method == "fsca":
                    entry["time_ratio_vs_fsca"] = 1.0
                    entry["time_ratio_per_run_mean"] = 1.0
                    entry["time_ratio_per_run_std"] = 0.0
                elif self.record_timing and fsca:
                    base = _mean([r.fit_ms for r in fsca.values()])
                    if base and rows:
                        entry["time_ratio_vs_fsca"] = entry["train_time_mean"] / base
                    per_run = [r.fit_ms / fsca[r.run].fit_ms for r in rows if r.run in fsca and fsca[r.run].fit_ms > 0]
                    if per_run:
                        entry["time_ratio_per_run_mean"] = _mean(per_run)
                        entry["time_ratio_per_run_std"] = _std(per_run)
                out[method][str(k)] = entry
        return out

    def frequencies(self) -> dict:
        """Selection frequency per variable for every selecting method and k."""
        out = {}
        for method in self.methods:
            if method not in SELECTING:
                continue
            for k in self.k_values:
                rows = [r for r in self.select_rows(method, k) if r.indices is not None]
                if rows:
                    out[(method, k)] = selection_frequency([r.indices for r in rows], self.n_variables)
        return out


def _mean(xs) -> float | None:
    return float(np.mean(xs)) if len(xs) else None


def _std(xs) -> float | None:
    if not len(xs):
        return None
    return float(np.std(xs, ddof=1)) if len(xs) > 1 else 0.0


def _run_seeds(master_seed: int, run: int) -> tuple[int, int, int]:
    children = np.random.SeedSequence([master_seed, run]).spawn(3)
    return tuple(int(c.generate_state(1)[0]) for c in children)


def _fit_and_score(method, k, cfg, X_fit, X_test, val_pos, model_seed):
    """Fit one method; returns (train V_EX, test V_EX, fit ms, indices)."""
    t0 = time.perf_counter()
    indices = None
    if method in ("fsca", "spbr", "mpbr", "pca"):
        Xc, mu = center_columns(X_fit)
        if method == "pca":
            model = fit_pca(Xc)
            recon = lambda Z: pca_reconstruct(model, pca_scores(model, Z - mu, k)) + mu
        else:
            model = select(Xc, k, method, cfg.max_passes)
            indices = model.indices
            recon = lambda Z: model.reconstruct(Z - mu) + mu
    elif method in ("fsca-rlc", "pca-rlc"):
        fit = fit_fsca_rlc if method == "fsca-rlc" else fit_pca_rlc
        tcfg = dataclasses.replace(cfg.train_cfg, seed=model_seed)
        model = fit(X_fit, k, cfg.tau, cfg.rlc_hidden, tcfg, val_index=val_pos)
        indices = model.selection.indices if model.selection is not None else None
        recon = lambda Z: rlc_reconstruct(model, Z)
    else:
        tcfg = dataclasses.replace(cfg.sde_train_cfg, seed=model_seed)
        model = fit_fsca_sde(X_fit, k, cfg.sde_hidden_sizes, tcfg, val_index=val_pos)
        indices = model.selection.indices
        recon = lambda Z: sde_reconstruct(model, Z)
    fit_ms = 1000.0 * (time.perf_counter() - t0)

    mu = X_fit.mean(axis=0)
    vex_train = variance_explained(X_fit - mu, recon(X_fit) - mu)
    vex_test = variance_explained(X_test - mu, recon(X_test) - mu)
    return vex_train, vex_test, fit_ms, indices


def _one_run(cfg: ExperimentConfig, base_data: np.ndarray | None, run: int):
    data_seed, split_seed, model_seed = _run_seeds(cfg.master_seed, run)
    if base_data is None:
        X = generate_xsynthetic(dataclasses.replace(cfg.data_source, seed=data_seed))
    else:
        X = base_data
    tr, va, te = split_rows(X.shape[0], cfg.train_fraction, cfg.val_fraction_of_train, split_seed)
    fit_idx = np.concatenate([tr, va])
    # audit: nothing fitted may ever see a test row
    assert not np.intersect1d(fit_idx, te).size
    X_fit, X_test = X[fit_idx], X[te]
    val_pos = np.arange(tr.size, fit_idx.size)

    rows, failures = [], []
    for method in cfg.methods:
        for k in cfg.k_values:
            try:
                vtr, vte, ms, idx = _fit_and_score(method, k, cfg, X_fit, X_test, val_pos, model_seed)
            except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
                failures.append(RunFailure(method, k, run, f"{type(exc).__name__}: {exc}"))
                continue
            rows.append(RunRow(method, k, run, vtr, vte, ms if cfg.record_timing else 0.0, idx))
    return rows, failures


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> RunReport:
    """Execute every Monte Carlo run of `cfg` and collect the raw results.

    Failed fits (divergence, impossible k, ...) are recorded in
    ``report.failures`` and left out of the aggregates.
    """
    if isinstance(cfg.data_source, SynthConfig):
        base = None if cfg.resample_data else generate_xsynthetic(cfg.data_source)
        v = cfg.data_source.v
    else:
        base = load_csv(cfg.data_source)
        v = base.shape[1]
    too_big = [k for k in cfg.k_values if k > v]
    if too_big:
        raise ValueError(f"k values {too_big} exceed the {v} available variables")

    report = RunReport(cfg.name, tuple(cfg.methods), tuple(cfg.k_values), v, cfg.mc_runs,
                       record_timing=cfg.record_timing)
    runs = range(cfg.mc_runs)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda r: _one_run(cfg, base, r), runs))
    else:
        results = [_one_run(cfg, base, r) for r in runs]
    for rows, failures in results:
        report.rows.extend(rows)
        report.failures.extend(failures)
    return report


def _fmt(x) -> str:
    return "" if x is None else format_float(x)


def _round_floats(obj):
    if isinstance(obj, float):
        return None if not math.isfinite(obj) else float(format_float(obj))
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def _write_rows(path: Path, header, rows) -> None:
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def emit_report(report: RunReport, out_dir, formats=("csv", "json")) -> list[Path]:
    """Write the report files into `out_dir` and return their paths.

    csv:  raw_runs.csv (one row per run), curves.csv (mean/std per method
          and k), selection_frequency.csv
    json: aggregate.json (aggregates keyed by method then k, failures)

    Floats carry 9 significant digits; nothing time- or host-dependent is
    written besides the measured fit times.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc.strerror or exc}") from exc
    unknown = set(formats) - {"csv", "json"}
    if unknown:
        raise ValueError(f"unknown report formats {sorted(unknown)}")
    written = []
    agg = report.aggregate()

    if "csv" in formats:
        raw = [
            [report.dataset, r.method, r.k, r.run, _fmt(r.vex_train), _fmt(r.vex_test), _fmt(r.fit_ms)]
            for r in sorted(report.rows, key=lambda r: (r.run, report.methods.index(r.method), r.k))
        ]
        _write_rows(out / "raw_runs.csv", RAW_COLUMNS, raw)
        curves = []
        for method in report.methods:
            for k in report.k_values:
                e = agg[method][str(k)]
                if e["n_runs"]:
                    curves.append([method, k, e["n_runs"], _fmt(e["vex_mean"]), _fmt(e["vex_std"]),
                                   _fmt(e["vex_train_mean"]), _fmt(e["vex_train_std"])])
        _write_rows(out / "curves.csv", CURVE_COLUMNS, curves)
        freq = [
            [method, k, j, _fmt(float(f))]
            for (method, k), vec in report.frequencies().items()
            for j, f in enumerate(vec)
        ]
        _write_rows(out / "selection_frequency.csv", FREQ_COLUMNS, freq)
        written += [out / "raw_runs.csv", out / "curves.csv", out / "selection_frequency.csv"]

    if "json" in formats:
        doc = {
            "dataset": report.dataset,
            "n_variables": report.n_variables,
            "mc_runs": report.mc_runs,
            "methods": list(report.methods),
            "k_values": list(report.k_values),
            "results": agg,
            "failures": [dataclasses.asdict(f) for f in report.failures],
        }
        path = out / "aggregate.json"
        try:
            path.write_text(json.dumps(_round_floats(doc), indent=2) + "\n")
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
        written.append(path)
    return written
