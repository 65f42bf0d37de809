"""Benchmark harness: seeded synthetic ensembles, method runs, CSV/JSON
records and plot-ready series."""

from __future__ import annotations

import csv
import json
import os
import warnings
import zlib
from dataclasses import asdict, dataclass

import numpy as np

from . import baselines
from .mps import apply_exact, random_mpo, random_mps, relative_error
from .policy import Adaptive, FixedBond, Oversampled, Tolerance
from .src import src_multiply

CSV_COLUMNS = ["method", "param", "rel_error", "wall_time_s", "flops", "max_bond", "trial", "seed"]
SERIES_COLUMNS = ["param", "trial", "wall_time_s", "rel_error", "max_bond", "flops"]
METHOD_NAMES = ("src", "src-plain", "zipup", "ctc", "rctc", "density", "fitting")
REFERENCE_TOL = 1e-14


class UsageError(ValueError):
    """Invalid benchmark configuration."""


@dataclass
class BenchConfig:
    n: int = 40
    d: int = 2
    chi: int = 20
    bond_D: int = 20
    alpha: float = -0.5
    methods: tuple = ("src", "zipup", "ctc")
    chi_bars: tuple = ()
    tols: tuple = ()
    trials: int = 5
    seed: int = 0
    output_path: str | None = None
    format: str = "csv"
    reference: str = "ctc"  # or "exact"
    max_sweeps: int = 10
    normalize: bool = True
    ref_mem_cap: int = 2**31  # bytes allowed for the exact product
    input_pair: str | None = None

    def __post_init__(self):
        self.methods = tuple(self.methods)
        self.chi_bars = tuple(int(c) for c in self.chi_bars)
        self.tols = tuple(float(t) for t in self.tols)
        if self.trials < 1:
            raise UsageError("trials must be >= 1")
        if not self.methods:
            raise UsageError("need at least one method")
        bad = [m for m in self.methods if m not in METHOD_NAMES]
        if bad:
            raise UsageError(f"unknown method(s) {bad}; choose from {list(METHOD_NAMES)}")
        if not self.chi_bars and not self.tols:
            raise UsageError("give chi_bars or tols")
        if any(c < 1 for c in self.chi_bars):
            raise UsageError("chi_bar values must be positive")
        if any(t <= 0 for t in self.tols):
            raise UsageError("tolerances must be positive")
        if self.tols and "rctc" in self.methods:
            raise UsageError("rctc supports fixed chi_bar only")
        if self.format not in ("csv", "json"):
            raise UsageError("format must be csv or json")
        if self.reference not in ("ctc", "exact"):
            raise UsageError("reference must be ctc or exact")
        if not -1.0 <= self.alpha <= 1.0:
            raise UsageError("alpha must lie in [-1, 1]")

    def points(self):
        """Sweep points as ``(kind, value)`` with kind ``"chi"`` or ``"tol"``."""
        return [("chi", c) for c in self.chi_bars] + [("tol", t) for t in self.tols]


@dataclass
class BenchRecord:
    method: str
    param: float
    rel_error: float
    wall_time_s: float
    flops: int
    max_bond: int
    trial: int
    seed: int


def parse_range(text):
    """``"5:30:5"`` (inclusive) or ``"5,10,20"`` -> list of ints."""
    if ":" in text:
        parts = [int(x) for x in text.split(":")]
        if len(parts) == 2:
            parts.append(1)
        if len(parts) != 3 or parts[2] < 1:
            raise UsageError(f"bad range {text!r}")
        lo, hi, step = parts
        return list(range(lo, hi + 1, step))
    return [int(x) for x in text.split(",") if x]


def derive_seed(*keys):
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def method_key(name):
    return zlib.crc32(name.encode())


def _normalized(obj):
    # unit Frobenius norm per site keeps long chains inside the double range
    sites = tuple(s / np.linalg.norm(s) for s in obj.sites)
    return type(obj)(sites)


def make_instance(config, trial):
    """Seeded ``(H, psi)`` pair of the synthetic ensemble for one trial."""
    if config.input_pair:
        from .io import load_pair

        return load_pair(config.input_pair)
    base = derive_seed(config.seed, trial)
    h = random_mpo(config.n, config.d, config.bond_D, config.alpha, seed=[base, 0])
    psi = random_mps(config.n, config.d, config.chi, config.alpha, seed=[base, 1])
    if config.normalize:
        h, psi = _normalized(h), _normalized(psi)
    return h, psi


def _product_bytes(h, psi):
    return sum(
        16 * d * (a * b) * (c * e)
        for (a, d, c), (b, e) in zip(
            [s.shape for s in psi.sites], [(w.shape[0], w.shape[3]) for w in h.sites]
        )
    )


def reference_state(h, psi, config, fallback_bond=None):
    """Accuracy reference: the exact product, or C-T-C at machine tolerance.

    When the exact product would exceed ``ref_mem_cap`` bytes the reference
    falls back to an oversampled SRC run at a large bond, with a warning.
    """
    if 3 * _product_bytes(h, psi) > config.ref_mem_cap:
        bond = fallback_bond or 4 * max(config.chi_bars or (config.chi,))
        warnings.warn(
            f"exact product exceeds the memory cap; reference is a randomized compression at bond {bond}",
            RuntimeWarning,
            stacklevel=2,
        )
        return src_multiply(h, psi, Oversampled(bond), seed=derive_seed(config.seed, 2**31 - 1))
    if config.reference == "exact":
        return apply_exact(h, psi)
    return baselines.ctc_basic(h, psi, Tolerance(REFERENCE_TOL)).output


def method_policy(method, kind, value):
    """Policy handed to ``method`` at one sweep point."""
    if kind == "chi":
        if method == "src":
            return Oversampled(value)
        return FixedBond(value)
    if method == "src":
        return Adaptive(tau_rel=value)
    if method == "src-plain":
        return Adaptive(tau_rel=value, final_round=False)
    return Tolerance(value)


def run_method(method, h, psi, kind, value, seed, max_sweeps=10):
    policy = method_policy(method, kind, value)
    if method in ("src", "src-plain"):
        return baselines.src_report(h, psi, policy, seed)
    if method == "rctc":
        return baselines.ctc_randomized(h, psi, policy, seed)
    if method == "fitting":
        return baselines.fitting(h, psi, policy, max_sweeps=max_sweeps, seed=seed)
    return baselines.METHODS[method](h, psi, policy)


def run_bench(config, progress=None):
    """Run every (method, point, trial); write files when ``output_path`` is
    set; return the records."""
    records = []
    points = config.points()
    for trial in range(config.trials):
        h, psi = make_instance(config, trial)
        ref = reference_state(h, psi, config)
        for method in config.methods:
            for ip, (kind, value) in enumerate(points):
                seed = derive_seed(config.seed, method_key(method), ip, trial)
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", UserWarning)
                    rep = run_method(method, h, psi, kind, value, seed, config.max_sweeps)
                rec = BenchRecord(
                    method,
                    value,
                    relative_error(ref, rep.output),
                    rep.wall_time,
                    int(rep.flops),
                    rep.max_bond,
                    trial,
                    seed,
                )
                records.append(rec)
                if progress:
                    progress(rec)
    if config.output_path:
        write_records(records, config.output_path, config.format)
    return records


# ---------------------------------------------------------------------------
# output


def _fmt(x):
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def summarize(records):
    """Mean and sample standard deviation per (method, param)."""
    groups = {}
    for r in records:
        groups.setdefault((r.method, r.param), []).append(r)
    rows = []
    for (method, param), rs in groups.items():
        row = {"method": method, "param": param, "trials": len(rs)}
        for col in ("rel_error", "wall_time_s", "flops", "max_bond"):
            vals = np.array([getattr(r, col) for r in rs], dtype=float)
            row[col + "_mean"] = float(vals.mean())
            row[col + "_std"] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        rows.append(row)
    return rows


def write_records(records, path, fmt="csv"):
    """Write the per-trial records and a ``.summary`` companion file."""
    path = os.fspath(path)
    root, _ = os.path.splitext(path)
    summary = summarize(records)
    if fmt == "json":
        with open(path, "w") as fh:
            json.dump([asdict(r) for r in records], fh, indent=1)
        with open(root + ".summary.json", "w") as fh:
            json.dump(summary, fh, indent=1)
        return
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    cols = ["method", "param", "trials"] + [
        f"{c}_{s}" for c in ("rel_error", "wall_time_s", "flops", "max_bond") for s in ("mean", "std")
    ]
    with open(root + ".summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in summary:
            w.writerow([_fmt(row[c]) for c in cols])


def _parse_param(text):
    try:
        return int(text)
    except ValueError:
        return float(text)


def read_records(path):
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                BenchRecord(
                    row["method"],
                    _parse_param(row["param"]),
                    float(row["rel_error"]),
                    float(row["wall_time_s"]),
                    int(row["flops"]),
                    int(row["max_bond"]),
                    int(row["trial"]),
                    int(row["seed"]),
                )
            )
    return out


def emit_plotdata(records, directory):
    """One CSV per method with rows ``param, trial, wall_time_s, rel_error,
    max_bond, flops`` (error against time and against the sweep parameter).
    An empty record list yields a header-only ``series.csv``.  Returns the
    written paths."""
    os.makedirs(directory, exist_ok=True)
    by_method = {}
    for r in records:
        by_method.setdefault(r.method, []).append(r)
    if not by_method:
        by_method = {None: []}
    paths = []
    for method, rs in by_method.items():
        name = "series.csv" if method is None else f"series_{method}.csv"
        path = os.path.join(directory, name)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SERIES_COLUMNS)
            for r in rs:
                w.writerow([_fmt(getattr(r, c)) for c in SERIES_COLUMNS])
        paths.append(path)
    return paths


def mean_by(records, method, field_name="rel_error"):
    """``{param: mean}`` of one field for one method."""
    acc = {}
    for r in records:
        if r.method == method:
            acc.setdefault(r.param, []).append(getattr(r, field_name))
    return {k: float(np.mean(v)) for k, v in acc.items()}
