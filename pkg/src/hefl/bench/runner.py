"""Experiment rows, ablation sweeps and the host calibration cache."""

from __future__ import annotations

import json
import os
import statistics
from dataclasses import dataclass
from pathlib import Path

from ..ckks import CkksParams, chunk_count
from ..errors import ParameterError
from ..fl import ExperimentConfig, ExperimentResult, run_experiment
from ..fl.protocol import build_federation, calibrate_host

PHASES = ("local_train", "encrypt", "distance", "kgc_select", "aggregate", "decrypt")
TOGGLES = ("lazy-relin", "hoisting", "ring-degree")
MIN_RING_DEGREE, MAX_RING_DEGREE = 1 << 13, 1 << 17


def check_ring_degree(n: int) -> int:
    if n & (n - 1) or not MIN_RING_DEGREE <= n <= MAX_RING_DEGREE:
        raise ParameterError(f"ring degree must be a power of two in [2^13, 2^17], got {n}")
    return n


# -- calibration cache ---------------------------------------------------------------------


def cache_file() -> Path:
    root = os.environ.get("HEFL_CACHE_DIR") or Path.home() / ".cache" / "hefl"
    return Path(root) / "calibration.json"


def calibration_key(params: CkksParams) -> str:
    return (f"N{params.ring_degree}-d{params.depth}-s{params.scale_bits}"
            f"-q{params.first_mod_bits}-p{params.special_mod_bits}-a{params.alpha}")


def _load(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        return {}


def run_calibration(params: CkksParams, seed: int = 0, runs: int = 11, path: Path | None = None) -> dict:
    """Measure T_H, T_D and M_c and store them in the cache under the parameter key."""
    path = path or cache_file()
    cal = calibrate_host(params, seed, runs)
    entry = {"t_hoist": cal.t_hoist, "t_decompose": cal.t_decompose, "m_cipher": cal.m_cipher, "runs": runs}
    cache = _load(path)
    cache[calibration_key(params)] = entry
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(cache, indent=2, sort_keys=True) + "\n")
    return entry


def cached_calibration(params: CkksParams, path: Path | None = None) -> dict | None:
    return _load(path or cache_file()).get(calibration_key(params))


def apply_calibration(cfg: ExperimentConfig, path: Path | None = None) -> ExperimentConfig:
    """Fill in missing T_H / T_D from the cache, if an entry exists for these parameters."""
    c = cfg.crypto
    if c.t_hoist is not None and c.t_decompose is not None:
        return cfg
    entry = cached_calibration(c.params(), path)
    if entry is None:
        return cfg
    return cfg.with_(crypto={"t_hoist": c.t_hoist if c.t_hoist is not None else entry["t_hoist"],
                             "t_decompose": c.t_decompose if c.t_decompose is not None else entry["t_decompose"]})


# -- rows ----------------------------------------------------------------------------------


def _sum_dicts(dicts) -> dict[str, int]:
    total: dict[str, int] = {}
    for d in dicts:
        for k, v in d.items():
            total[k] = total.get(k, 0) + v
    return dict(sorted(total.items()))


def _median_times(results: list[ExperimentResult]) -> dict[str, float]:
    """Per-phase median over every round of every repetition, plus the median round total."""
    rounds = [t.times for r in results for t in r.transcripts]
    out = {p: statistics.median(t.get(p, 0.0) for t in rounds) for p in PHASES}
    out["total"] = statistics.median(sum(t.values()) for t in rounds)
    return out


def experiment_row(results: list[ExperimentResult], label: str = "experiment") -> dict:
    """Summarize repetitions of one configuration. Counters come from the first run."""
    first = results[0]
    cfg = first.config
    row = {
        "label": label,
        "fingerprint": cfg.fingerprint(),
        "rule": cfg.rule.rule,
        "clients": cfg.clients,
        "mode": cfg.mode,
        "ring_degree": cfg.crypto.ring_degree,
        "lazy_relin": cfg.crypto.lazy_relin,
        "hoisting": "kgc" if cfg.crypto.slot_sum_at_kgc else cfg.crypto.hoisting,
        "repetitions": len(results),
        "rounds": len(first.transcripts),
        "accuracy": first.accuracy,
        "divergence": first.divergence,
    }
    if first.plan is not None:
        p = first.plan
        row.update(plan_k=p.k, plan_width=p.n, t_hoist=p.t_hoist, t_decompose=p.t_decompose,
                   m_cipher=p.m_cipher, m_budget=p.m_budget)
    row["time"] = _median_times(results)
    row["counter"] = _sum_dicts(t.counters for t in first.transcripts)
    row["distance"] = _sum_dicts(t.distance_counters for t in first.transcripts)
    return row


def run_config(cfg: ExperimentConfig, repetitions: int = 1, label: str = "experiment") -> dict:
    if repetitions < 1:
        raise ParameterError("repetitions must be at least 1")
    return experiment_row([run_experiment(cfg) for _ in range(repetitions)], label)


# -- ablation ------------------------------------------------------------------------------


@dataclass(frozen=True)
class AblationSpec:
    toggle: str
    values: tuple
    repetitions: int = 1

    def __post_init__(self):
        if self.toggle not in TOGGLES:
            raise ParameterError(f"unknown toggle {self.toggle!r}; expected one of {TOGGLES}")
        if len(self.values) < 2:
            raise ParameterError("an ablation needs a baseline and at least one variant")
        if self.toggle == "ring-degree":
            for n in self.values:
                check_ring_degree(n)
        if self.repetitions < 1:
            raise ParameterError("repetitions must be at least 1")

    @classmethod
    def default(cls, toggle: str, repetitions: int = 1, ring_degrees=None) -> "AblationSpec":
        """Baseline first: eager relinearization, no hoisting, or the smallest ring."""
        values = {
            "lazy-relin": (False, True),
            "hoisting": ("off", "full", "dynamic"),
            "ring-degree": tuple(ring_degrees or (1 << 13, 1 << 14, 1 << 15)),
        }.get(toggle, ())
        return cls(toggle, values, repetitions)

    def field(self) -> str:
        return {"lazy-relin": "lazy_relin", "hoisting": "hoisting", "ring-degree": "ring_degree"}[self.toggle]

    def configs(self, base: ExperimentConfig) -> list[ExperimentConfig]:
        if self.toggle == "hoisting" and base.crypto.slot_sum_at_kgc:
            raise ParameterError("the hoisting ablation needs server-side slot reduction")
        return [base.with_(crypto={self.field(): v}) for v in self.values]


def ablate(base: ExperimentConfig, spec: AblationSpec) -> list[dict]:
    """One row per toggle value; the first row is the baseline for the speedup columns."""
    rows = []
    for value, cfg in zip(spec.values, spec.configs(base)):
        row = run_config(cfg, spec.repetitions, label=f"{spec.toggle}={_label(value)}")
        row["toggle"] = spec.toggle
        row["chunks"] = chunk_count(_model_size(cfg), cfg.crypto.ring_degree)
        rows.append(row)
    base_time = rows[0]["time"]
    for row in rows:
        row["speedup"] = _ratio(base_time["total"], row["time"]["total"])
        row["speedup_distance"] = _ratio(base_time["distance"], row["time"]["distance"])
    return rows


def _ratio(baseline: float, variant: float) -> float | None:
    return baseline / variant if variant > 0 else None


def _label(value) -> str:
    if isinstance(value, bool):
        return "on" if value else "off"
    return str(value)


def _model_size(cfg: ExperimentConfig) -> int:
    return build_federation(cfg).model.num_params
