"""Shot loop, comparison against the oracle, and the run's output files."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import scenarios
from .config import ScenarioConfig
from .errors import DomainError, OutputError
from .rng import shot_uniforms
from .stats import P_VALUE_THRESHOLD, chi_square
from .wavefield import dump_field_csv

CHUNK = 65_536
NO_ORACLE = "no-oracle"
DUMP_THRESHOLD = 1e-6
_PACKAGE = Path(__file__).parent


@dataclass
class RunSummary:
    config: dict
    fingerprint: str
    outcomes: list
    counts: list
    probabilities: list
    oracle: list
    chi_square: dict
    audits: dict
    extra: dict
    checks: dict
    wall_time_s: float = 0.0
    sites: list = field(default_factory=list, repr=False)
    ticks: list = field(default_factory=list, repr=False)

    @property
    def shots(self) -> int:
        return int(sum(self.counts))

    @property
    def frequencies(self) -> list:
        return [c / self.shots for c in self.counts]

    @property
    def passed(self) -> bool:
        chi_ok = self.chi_square.get("p_value", 1.0) > P_VALUE_THRESHOLD
        return chi_ok and all(self.checks.values())

    def as_dict(self) -> dict:
        rows = [{"outcome": o, "count": c, "frequency": f, "probability": p, "oracle_prob": NO_ORACLE if q is None else q}
                for o, c, f, p, q in zip(self.outcomes, self.counts, self.frequencies, self.probabilities, self.oracle)]
        return {
            "fingerprint": self.fingerprint,
            "config": self.config,
            "result": {"shots": self.shots, "outcomes": rows, "chi_square": self.chi_square, "audits": self.audits,
                       "extra": self.extra, "checks": self.checks, "passed": self.passed},
            "wall_time_s": self.wall_time_s,
        }

    def to_json(self) -> str:
        return json.dumps(_clean(self.as_dict()), indent=2, allow_nan=False) + "\n"


def _clean(obj):
    """Plain JSON types; non-finite floats become strings so output stays strict JSON."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def fingerprint(config: ScenarioConfig) -> str:
    digest = hashlib.sha256()
    for path in sorted(_PACKAGE.glob("*.py")):
        digest.update(path.name.encode())
        digest.update(path.read_bytes())
    digest.update(json.dumps(_clean(config.to_dict()), sort_keys=True).encode())
    return digest.hexdigest()


def prepare_output(out_dir) -> Path:
    """Create ``out_dir`` and prove it is writable before any work starts."""
    path = Path(out_dir)
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".gridlight-write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OutputError(f"output directory {path} is not writable: {exc.strerror or exc}") from exc
    return path


def sample_counts(solution: scenarios.Solution, seed: int, shots: int, workers: int = 1,
                  keep_indices: bool = False) -> tuple[np.ndarray, np.ndarray | None]:
    """Outcome counts over shots 0..shots-1; the result does not depend on ``workers``."""
    bounds = [(a, min(a + CHUNK, shots)) for a in range(0, shots, CHUNK)]

    def chunk(span):
        return solution.sample(shot_uniforms(seed, *span))

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(chunk, bounds))
    else:
        parts = [chunk(b) for b in bounds]
    n = len(solution.outcomes)
    counts = sum((np.bincount(p, minlength=n) for p in parts), np.zeros(n, np.int64))
    return counts, (np.concatenate(parts) if keep_indices else None)


def _chi_square(counts, oracle) -> dict:
    if any(q is None for q in oracle):
        return {"skipped": NO_ORACLE}
    try:
        return chi_square(counts, np.asarray(oracle, float)).as_dict()
    except DomainError as exc:
        return {"skipped": str(exc)}


def run_scenario(config: ScenarioConfig, *, workers: int = 1, out_dir=None) -> RunSummary:
    """Solve the field, sample the shots, compare with the oracle and (with ``out_dir``) write the outputs."""
    start = time.perf_counter()
    out_dir = out_dir if out_dir is not None else config.output_dir
    path = prepare_output(out_dir) if out_dir is not None else None
    dump_handle = None
    dump = None
    if config.dump_every and path is not None:
        dump_handle = _open(path / "field.csv")
        dump_handle.write("tick,x,y,re,im,channel\n")

        def dump(fld):
            if fld.tick % config.dump_every == 0:
                dump_field_csv(fld, dump_handle, DUMP_THRESHOLD)
    try:
        solution = scenarios.solve(config, dump)
    finally:
        if dump_handle is not None:
            dump_handle.close()
    counts, indices = sample_counts(solution, config.seed, config.shots, workers,
                                    keep_indices=path is not None and config.events)
    extra, post_checks = solution.post(counts) if solution.post else ({}, {})
    summary = RunSummary(
        config=config.to_dict(), fingerprint=fingerprint(config), outcomes=list(solution.outcomes),
        counts=[int(c) for c in counts], probabilities=[float(p) for p in solution.probabilities],
        oracle=[None if q is None else float(q) for q in solution.oracle],
        chi_square=_chi_square(counts, solution.oracle), audits=solution.audits, extra=extra,
        checks={**solution.checks, **post_checks},
        sites=list(solution.sites or solution.outcomes),
        ticks=list(solution.ticks or [None] * len(solution.outcomes)),
    )
    if path is not None:
        write_histogram(summary, path / "histogram.csv")
        if indices is not None:
            write_events(summary, indices, path / "events.jsonl")
    summary.wall_time_s = time.perf_counter() - start
    if path is not None:
        _write_text(path / "summary.json", summary.to_json())
    return summary


def _open(path: Path):
    try:
        return open(path, "w", newline="")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _write_text(path: Path, text: str) -> None:
    with _open(path) as fh:
        try:
            fh.write(text)
        except OSError as exc:
            raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_histogram(summary: RunSummary, path: Path) -> None:
    with _open(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bin", "count", "frequency", "oracle_prob"])
        for o, c, f, q in zip(summary.outcomes, summary.counts, summary.frequencies, summary.oracle):
            writer.writerow([o, c, repr(f), NO_ORACLE if q is None else repr(q)])


def write_events(summary: RunSummary, indices: np.ndarray, path: Path, block: int = 100_000) -> None:
    """One collapse record per shot: shot, tick, site, outcome."""
    tails = [f', "tick": {json.dumps(t)}, "site": {json.dumps(s)}, "outcome": {json.dumps(o)}}}\n'
             for o, s, t in zip(summary.outcomes, summary.sites, summary.ticks)]
    with _open(path) as fh:
        for a in range(0, len(indices), block):
            part = indices[a:a + block]
            fh.write("".join(f'{{"shot": {a + i}{tails[k]}' for i, k in enumerate(part.tolist())))


def oracle_table(config: ScenarioConfig) -> dict:
    table = scenarios.oracle_table(config)
    rows = [{"outcome": o, "oracle_prob": NO_ORACLE if q is None else q}
            for o, q in zip(table["outcomes"], table["oracle"])]
    return _clean({"scenario": config.scenario, "config": config.to_dict(), "outcomes": rows,
                   "notes": table.get("notes", {})})


__all__ = ["RunSummary", "run_scenario", "sample_counts", "fingerprint", "oracle_table", "prepare_output",
           "write_events", "write_histogram", "NO_ORACLE"]
