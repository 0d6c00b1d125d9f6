"""Seeded Monte-Carlo runner, reports, and the resource calculators."""
from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from typing import Optional

import numpy as np

from .adversary import (
    Collusion,
    CollusionStrategy,
    FakeBell,
    GuessRule,
    TpSwap,
    analytic_escape_probability,
    collusion_attack,
    fake_bell_trial,
    fake_pass_probability,
    tp_swap_attack,
)
from .protocol import (
    Backend,
    ConfigError,
    ProtocolConfig,
    SecretInputs,
    chain_memories,
    run_protocol,
    run_to_dict,
)

SCENARIOS = ("honest", "tp-swap", "fake-bell", "collude")
FORMATS = ("json", "csv")

# CLI flag name -> ScenarioSpec attribute, shared by the JSON config loader
_CONFIG_KEYS = {
    "parties": "n",
    "bits": "L",
    "decoys": "R",
    "backend": "backend",
    "threshold": "detection_threshold",
    "seed": "seed",
    "scenario": "scenario",
    "trials": "trials",
    "format": "fmt",
    "reveal_secrets": "reveal_secrets",
    "target": "target",
    "fake_link": "fake_link",
    "fake_count": "fake_count",
    "honest_pair": "honest_pair",
    "strategy": "strategy",
    "guess_rule": "guess_rule",
    "check_remaining": "check_remaining",
    "workers": "workers",
}


@dataclass
class ScenarioSpec:
    n: int = 4
    L: int = 8
    R: int = 8
    backend: str = "dense"
    detection_threshold: float = 0.0
    seed: int = 0
    scenario: str = "honest"
    trials: int = 10_000
    fmt: str = "json"
    reveal_secrets: bool = False
    target: Optional[int] = None
    fake_link: int = 1
    fake_count: int = 1
    honest_pair: tuple[int, int] = (1, 3)
    strategy: str = "withhold"
    guess_rule: str = "random"
    check_remaining: bool = False
    workers: int = 1

    def __post_init__(self):
        self.honest_pair = tuple(int(v) for v in self.honest_pair)
        self.validate()

    @property
    def config(self) -> ProtocolConfig:
        return ProtocolConfig(self.n, self.L, self.R, Backend(self.backend),
                              self.detection_threshold, self.seed)

    def attack(self):
        if self.scenario == "tp-swap":
            target = self.target if self.target is not None else min(2, self.n)
            return TpSwap(target)
        if self.scenario == "fake-bell":
            return FakeBell(self.fake_link, self.fake_count)
        if self.scenario == "collude":
            return Collusion(self.honest_pair, CollusionStrategy(self.strategy), GuessRule(self.guess_rule))
        return None

    def validate(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.fmt not in FORMATS:
            raise ConfigError(f"unknown format {self.fmt!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        try:
            Backend(self.backend)
            attack = self.attack()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        cfg = self.config
        if attack is not None:
            if cfg.backend is not Backend.DENSE:
                raise ConfigError(f"scenario {self.scenario} needs the dense backend")
            attack.validate(cfg)

    def to_dict(self) -> dict:
        out = {}
        for key, attr in _CONFIG_KEYS.items():
            value = getattr(self, attr)
            out[key] = list(value) if isinstance(value, tuple) else value
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioSpec":
        unknown = set(doc) - set(_CONFIG_KEYS)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**{_CONFIG_KEYS[k]: v for k, v in doc.items()})


@dataclass
class TrialStats:
    trials: int = 0
    aborts: int = 0
    completed: int = 0
    sum_correct: int = 0
    guesses: int = 0
    guess_correct: int = 0
    escape_events: int = 0
    aligned_events: int = 0
    fake_checks: int = 0
    fake_mismatches: int = 0
    link_checks: list[int] = field(default_factory=list)
    link_mismatches: list[int] = field(default_factory=list)
    wall_clock: float = field(default=0.0, compare=False)

    def merge(self, other: "TrialStats") -> "TrialStats":
        out = TrialStats()
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if isinstance(a, list):
                size = max(len(a), len(b))
                a = a + [0] * (size - len(a))
                b = b + [0] * (size - len(b))
                setattr(out, f.name, [x + y for x, y in zip(a, b)])
            else:
                setattr(out, f.name, a + b)
        return out

    def _rate(self, num: int, den: int) -> Optional[float]:
        return num / den if den else None

    def rates(self) -> dict:
        return {
            "abort_rate": self._rate(self.aborts, self.trials),
            "sum_correct_rate": self._rate(self.sum_correct, self.completed),
            "guess_accuracy": self._rate(self.guess_correct, self.guesses),
            "escape_rate": self._rate(self.escape_events, self.trials),
            "fake_mismatch_rate": self._rate(self.fake_mismatches, self.fake_checks),
        }

    def to_dict(self, include_timing: bool = False) -> dict:
        doc = asdict(self)
        if not include_timing:
            doc.pop("wall_clock")
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "TrialStats":
        return cls(**doc)


def trial_rng(seed: int, k: int) -> np.random.Generator:
    """Generator for trial ``k``: the master seed with spawn key ``(k,)``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))


def _links(checks) -> tuple[list[int], list[int]]:
    return [c.checks for c in checks], [c.mismatches for c in checks]


def run_trial(spec: ScenarioSpec, k: int) -> TrialStats:
    """One independent execution, reproducible from ``(spec, k)`` alone."""
    cfg = spec.config
    rng = trial_rng(spec.seed, k)
    input_rng, run_rng = rng.spawn(2)
    inputs = SecretInputs.random(cfg, input_rng)
    st = TrialStats(trials=1)
    attack = spec.attack()

    if spec.scenario == "honest":
        run = run_protocol(cfg, inputs, run_rng)
        st.link_checks, st.link_mismatches = _links(run.report.links)
        if run.aborted:
            st.aborts = 1
        else:
            st.completed = 1
            st.sum_correct = int(run.result.sum_bits == inputs.pointwise_sum())
    elif spec.scenario == "fake-bell":
        t = fake_bell_trial(cfg, attack, run_rng)
        st.link_checks, st.link_mismatches = _links(t.link_checks)
        st.aborts = int(t.aborted)
        st.completed = 1 - st.aborts
        st.fake_checks = t.fake_checks
        st.fake_mismatches = t.fake_mismatches
    else:
        if spec.scenario == "tp-swap":
            out = tp_swap_attack(cfg, attack, inputs, run_rng, check_remaining=spec.check_remaining)
        else:
            out = collusion_attack(cfg, attack, inputs, run_rng, check_remaining=spec.check_remaining)
        st.aborts = int(out.detected)
        st.completed = 1 - st.aborts
        st.escape_events = int(out.escaped)
        st.aligned_events = int(bool(out.aligned))
        if out.adversary_guess is not None:
            st.guesses = 1
            st.guess_correct = int(out.guess_correct)
        if out.remaining_correct is not None:
            st.sum_correct = int(out.remaining_correct)
    return st


def _run_range(spec: ScenarioSpec, start: int, stop: int) -> TrialStats:
    total = TrialStats()
    for k in range(start, stop):
        total = total.merge(run_trial(spec, k))
    return total


def run_scenario(spec: ScenarioSpec) -> TrialStats:
    """Run ``spec.trials`` seeded trials and sum their counters.

    Aggregation is a commutative sum, so the result does not depend on how the
    trials are split across workers.
    """
    spec.validate()
    spec.config.check_capacity()
    t0 = time.perf_counter()
    if spec.workers == 1:
        total = _run_range(spec, 0, spec.trials)
    else:
        bounds = np.linspace(0, spec.trials, spec.workers + 1).astype(int)
        total = TrialStats()
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            parts = [pool.submit(_run_range, spec, int(a), int(b)) for a, b in zip(bounds, bounds[1:]) if b > a]
            for part in parts:
                total = total.merge(part.result())
    total.wall_clock = time.perf_counter() - t0
    return total


def analytic_reference(spec: ScenarioSpec) -> dict:
    """Closed-form expectations, computed without running the simulator."""
    if spec.scenario == "honest":
        return {"sum_correct_rate": 1.0, "abort_rate": 0.0}
    if spec.scenario == "tp-swap":
        pos = spec.attack().position(spec.config)
        return {"escape_probability": analytic_escape_probability(spec.L, spec.R, pos)}
    if spec.scenario == "fake-bell":
        return {
            "fake_mismatch_rate": 0.5,
            "pass_probability": fake_pass_probability(spec.L, spec.R, spec.fake_count),
        }
    return {"guess_accuracy": 0.5}


# headline (empirical, analytic) column per scenario, used by the CSV report
_HEADLINE = {
    "honest": ("sum_correct_rate", "sum_correct_rate"),
    "tp-swap": ("escape_rate", "escape_probability"),
    "fake-bell": ("fake_mismatch_rate", "fake_mismatch_rate"),
    "collude": ("guess_accuracy", "guess_accuracy"),
}

CSV_HEADER = (
    "scenario", "parties", "bits", "decoys", "backend", "seed", "trials",
    "aborts", "completed", "sum_correct", "guesses", "guess_correct",
    "escape_events", "aligned_events", "fake_checks", "fake_mismatches",
    "empirical", "analytic",
)


def emit_report(stats: TrialStats, spec: ScenarioSpec, fmt: Optional[str] = None, *,
                sample_run: Optional[dict] = None, include_timing: bool = False) -> str:
    """Serialise a scenario report. Byte-identical for identical ``(spec, seed)``
    unless ``include_timing`` adds the wall-clock time."""
    fmt = fmt or spec.fmt
    analytic = analytic_reference(spec)
    if fmt == "json":
        doc = {
            "spec": spec.to_dict(),
            "seed": spec.seed,
            "stats": stats.to_dict(include_timing),
            "empirical": stats.rates(),
            "analytic": analytic,
        }
        if sample_run is not None:
            doc["sample_run"] = sample_run
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        emp_key, ana_key = _HEADLINE[spec.scenario]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        writer.writerow([
            spec.scenario, spec.n, spec.L, spec.R, spec.backend, spec.seed, stats.trials,
            stats.aborts, stats.completed, stats.sum_correct, stats.guesses, stats.guess_correct,
            stats.escape_events, stats.aligned_events, stats.fake_checks, stats.fake_mismatches,
            stats.rates()[emp_key], analytic[ana_key],
        ])
        return buf.getvalue()
    raise ConfigError(f"unknown format {fmt!r}")


def load_report(text: str) -> tuple[ScenarioSpec, TrialStats]:
    doc = json.loads(text)
    return ScenarioSpec.from_dict(doc["spec"]), TrialStats.from_dict(doc["stats"])


def sample_run(spec: ScenarioSpec) -> dict:
    """Transcript of an honest run seeded like trial 0, for inspection."""
    cfg = spec.config
    input_rng, run_rng = trial_rng(spec.seed, 0).spawn(2)
    inputs = SecretInputs.random(cfg, input_rng)
    return run_to_dict(run_protocol(cfg, inputs, run_rng), spec.reveal_secrets)


# --- resource calculators ---------------------------------------------------

@dataclass(frozen=True)
class EfficiencyEntry:
    protocol: str
    formula: str
    qubits: int
    efficiency: Fraction


_TABLE = (
    ("Shi et al.", "3n-2", lambda n: 3 * n - 2),
    ("Zhang et al.", "3n-2", lambda n: 3 * n - 2),
    ("Liu et al. (n-partite)", "3n-2", lambda n: 3 * n - 2),
    ("Liu et al. ((n+1)-partite)", "3n+1", lambda n: 3 * n + 1),
    ("Yang et al.", "3n-2", lambda n: 3 * n - 2),
    ("Teleportation chain", "2n+3", lambda n: 2 * n + 3),
)


def simulator_memory_count(n: int) -> int:
    """Memories the simulator allocates per chain (``T`` plus ``2(n+1)``)."""
    return len(chain_memories(n))


def efficiency_table(n: int) -> list[EfficiencyEntry]:
    """Efficiency (one over qubits per summed bit) of the compared protocols."""
    if n < 2:
        raise ConfigError("efficiency table needs n >= 2")
    rows = [EfficiencyEntry(name, formula, f(n), Fraction(1, f(n))) for name, formula, f in _TABLE]
    ours = rows[-1]
    if ours.qubits != simulator_memory_count(n):
        raise RuntimeError(
            f"2n+3 = {ours.qubits} disagrees with the simulator's {simulator_memory_count(n)} memories"
        )
    return rows


@dataclass(frozen=True)
class RateParams:
    distance_km: float
    loss_db_per_km: float = 0.2
    system_efficiency: float = 0.1
    repetition_rate_hz: float = 1e6

    def __post_init__(self):
        if self.distance_km < 0:
            raise ConfigError("distance must be non-negative")
        if self.loss_db_per_km <= 0 or self.repetition_rate_hz <= 0:
            raise ConfigError("loss and repetition rate must be positive")
        if not 0 < self.system_efficiency <= 1:
            raise ConfigError("system efficiency must lie in (0, 1]")


def transmissivity(distance_km: float, loss_db_per_km: float) -> float:
    return 10 ** (-loss_db_per_km * distance_km / 10)


def estimate_link_rate(p: RateParams) -> float:
    """Entangled links per second: attempts/s x system efficiency x channel transmissivity."""
    return p.repetition_rate_hz * p.system_efficiency * transmissivity(p.distance_km, p.loss_db_per_km)


def success_probability(p: RateParams) -> float:
    return p.system_efficiency * transmissivity(p.distance_km, p.loss_db_per_km)
