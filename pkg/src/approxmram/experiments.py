"""Deterministic sweeps over programming schemes.

A sweep is an ordered list of schemes.  Each scheme is trained from seeds
``seed_base + i`` for ``i < n_seeds``; individual (scheme, seed) runs are
the unit of work handed to the worker pool and of ``--resume`` bookkeeping.
Rows come out in grid order whatever the completion order.
"""

from __future__ import annotations

import csv
import multiprocessing
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

from .energy import CalibratedModels
from .memory import TwoTier, Uniform, make_profile
from .mnist import Dataset
from .network import RunResult, TrainConfig, TrainReport, aggregate, parameter_count, report_csv, train_run

RUN_LOG_HEADER = ["scheme", "n_lsb", "ber_hsb", "ber_lsb", "seed", "epochs", "recognition_rate", "energy_pj", "writes"]


def uniform_grid(bers: Sequence[float]) -> list[Uniform]:
    return [Uniform(b) for b in bers]


def tier_grid(n_lsb_list: Sequence[int], lsb_bers: Sequence[float], hsb_ber: float) -> list[TwoTier]:
    """Every (n_lsb, ber_lsb) pair; the ber_lsb = 1.0 reference rows are always included."""
    lsb = list(lsb_bers)
    if 1.0 not in lsb:
        lsb.append(1.0)
    return [TwoTier(n, hsb_ber, b) for n in n_lsb_list for b in lsb]


def _key(scheme, seed: int) -> tuple:
    kind, n_lsb, hsb, lsb = scheme.descriptor
    return (kind, int(n_lsb), float(hsb), float(lsb), int(seed))


class RunLog:
    """Append-only CSV of finished (scheme, seed) runs, used by ``--resume``."""

    def __init__(self, path, epochs: int):
        self.path = Path(path)
        self.epochs = epochs
        self.done: dict[tuple, RunResult] = {}
        if self.path.exists():
            with self.path.open(newline="") as fh:
                for row in csv.DictReader(fh):
                    if int(row["epochs"]) != epochs:
                        continue
                    key = (row["scheme"], int(row["n_lsb"]), float(row["ber_hsb"]), float(row["ber_lsb"]),
                           int(row["seed"]))
                    self.done[key] = RunResult(int(row["seed"]), float(row["recognition_rate"]),
                                               float(row["energy_pj"]), int(row["writes"]))

    def get(self, scheme, seed: int) -> RunResult | None:
        return self.done.get(_key(scheme, seed))

    def record(self, scheme, result: RunResult):
        fresh = not self.path.exists() or self.path.stat().st_size == 0
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            if fresh:
                writer.writerow(RUN_LOG_HEADER)
            kind, n_lsb, hsb, lsb = scheme.descriptor
            writer.writerow([kind, n_lsb, repr(float(hsb)), repr(float(lsb)), result.seed, self.epochs,
                             repr(result.recognition_rate), repr(result.energy_pj), result.writes])
        self.done[_key(scheme, result.seed)] = result


# Worker state is inherited through fork instead of pickled per task.
_WORKER: dict = {}


def _run_task(task):
    scheme, seed = task
    w = _WORKER
    profile = make_profile(scheme, w["models"])
    return scheme, train_run(w["config"], profile, w["train"], w["test"], seed)


@dataclass
class Sweep:
    config: TrainConfig
    models: CalibratedModels
    train: Dataset
    test: Dataset
    jobs: int = 1
    run_log: RunLog | None = None
    progress: Callable[[str], None] | None = None

    def seeds(self) -> list[int]:
        return [self.config.seed + i for i in range(self.config.n_seeds)]

    def run(self, schemes: Sequence) -> list[TrainReport]:
        seeds = self.seeds()
        results: dict[tuple, RunResult] = {}
        pending = []
        for scheme in schemes:
            for seed in seeds:
                cached = self.run_log.get(scheme, seed) if self.run_log else None
                if cached is not None:
                    results[_key(scheme, seed)] = cached
                else:
                    pending.append((scheme, seed))
        for scheme, result in self._execute(pending):
            results[_key(scheme, result.seed)] = result
            if self.run_log is not None:
                self.run_log.record(scheme, result)
            if self.progress:
                self.progress(f"{scheme.descriptor} seed {result.seed}: {result.recognition_rate:.4f}")
        baseline = make_profile(Uniform(1e-10), self.models).word_energy_pj
        n_params = parameter_count(self.config.layer_sizes)
        return [
            aggregate([results[_key(s, seed)] for seed in seeds], make_profile(s, self.models), n_params, baseline)
            for s in schemes
        ]

    def _execute(self, tasks):
        if not tasks:
            return
        _WORKER.update(config=self.config, models=self.models, train=self.train, test=self.test)
        try:
            if self.jobs <= 1 or len(tasks) == 1:
                for task in tasks:
                    yield _run_task(task)
                return
            ctx = multiprocessing.get_context("fork")
            with ctx.Pool(min(self.jobs, len(tasks))) as pool:
                yield from pool.imap_unordered(_run_task, tasks)
        finally:
            _WORKER.clear()


def write_reports(reports: Sequence[TrainReport], path=None, stamp: bool = True) -> str:
    """CSV text of ``reports``, led by a ``#`` timestamp line; written to ``path`` if given."""
    text = report_csv(reports)
    if stamp:
        text = f"# generated {datetime.now(timezone.utc).isoformat(timespec='seconds')}\n" + text
    if path is not None:
        Path(path).write_text(text)
    return text
