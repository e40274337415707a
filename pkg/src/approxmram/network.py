"""Two-layer tanh MLP whose parameters live in an ApproxWeightStore.

All parameters (weights then biases, layer by layer) share one flat store.
Each training step reads the stored words exactly, computes the
mean-squared-error gradient in full precision, and blind-writes every
parameter's quantized update back through the faulty programming path.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .memory import ApproxWeightStore, FixedPointFormat, ProgrammingProfile, quantize
from .mnist import Dataset

LAYER_SIZES = (784, 300, 10)
# best of the coarse grid {0.01, 0.02, 0.05, 0.1, 0.2} on the fault-free
# 5-epoch baseline (loss averaged over the minibatch)
DEFAULT_LEARNING_RATE = 0.05


@dataclass(frozen=True)
class TrainConfig:
    minibatch: int = 10
    epochs: int = 5
    learning_rate: float = DEFAULT_LEARNING_RATE
    seed: int = 0
    n_seeds: int = 5
    layer_sizes: tuple[int, ...] = LAYER_SIZES
    fractional_bits: int = 12
    encoding: str = "sign_magnitude"

    def __post_init__(self):
        if self.minibatch < 1:
            raise ValueError("minibatch must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.n_seeds < 1:
            raise ValueError("n_seeds must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")

    @property
    def fmt(self) -> FixedPointFormat:
        return FixedPointFormat(fractional_bits=self.fractional_bits, encoding=self.encoding)


def parameter_count(sizes: Sequence[int] = LAYER_SIZES) -> int:
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


def split_params(flat: np.ndarray, sizes: Sequence[int] = LAYER_SIZES) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views (W, b) per layer into a flat parameter vector; W is (fan_in, fan_out)."""
    layers = []
    offset = 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = flat[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = flat[offset:offset + fan_out]
        offset += fan_out
        layers.append((w, b))
    if offset != flat.size:
        raise ValueError(f"parameter vector has {flat.size} entries, topology needs {offset}")
    return layers


def init_params(rng: np.random.Generator, sizes: Sequence[int] = LAYER_SIZES) -> np.ndarray:
    """Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases."""
    flat = np.zeros(parameter_count(sizes))
    for w, _ in split_params(flat, sizes):
        limit = np.sqrt(6.0 / (w.shape[0] + w.shape[1]))
        w[...] = rng.uniform(-limit, limit, size=w.shape)
    return flat


def one_hot_pm1(labels, n_classes: int = 10) -> np.ndarray:
    targets = -np.ones((len(labels), n_classes))
    targets[np.arange(len(labels)), labels] = 1.0
    return targets


def forward(params: np.ndarray, x: np.ndarray, sizes: Sequence[int] = LAYER_SIZES) -> np.ndarray:
    """Class scores tanh(W2 . tanh(W1 . x + b1) + b2) for a batch of inputs."""
    a = np.atleast_2d(x)
    for w, b in split_params(params, sizes):
        a = np.tanh(a @ w + b)
    return a if np.ndim(x) > 1 else a[0]


def predict(params: np.ndarray, x: np.ndarray, sizes: Sequence[int] = LAYER_SIZES) -> np.ndarray:
    # argmax breaks ties toward the lowest class index
    return np.argmax(np.atleast_2d(forward(params, x, sizes)), axis=1)


def loss(params: np.ndarray, x: np.ndarray, targets: np.ndarray, sizes: Sequence[int] = LAYER_SIZES) -> float:
    err = forward(params, x, sizes) - targets
    return 0.5 * float(np.sum(err * err)) / len(x)


def gradients(params: np.ndarray, x: np.ndarray, targets: np.ndarray,
              sizes: Sequence[int] = LAYER_SIZES, out: np.ndarray | None = None) -> np.ndarray:
    """Gradient of ``loss`` with respect to the flat parameter vector."""
    layers = split_params(params, sizes)
    grad = np.empty_like(params) if out is None else out
    grad_layers = split_params(grad, sizes)
    acts = [x]
    for w, b in layers:
        acts.append(np.tanh(acts[-1] @ w + b))
    out_act = acts[-1]
    delta = (out_act - targets) * (1.0 - out_act * out_act) / len(x)
    for i in range(len(layers) - 1, -1, -1):
        gw, gb = grad_layers[i]
        np.dot(acts[i].T, delta, out=gw)
        delta.sum(axis=0, out=gb)
        if i:
            h = acts[i]
            delta = (delta @ layers[i][0].T) * (1.0 - h * h)
    return grad


def train_step(store: ApproxWeightStore, x: np.ndarray, targets: np.ndarray, learning_rate: float,
               sizes: Sequence[int] = LAYER_SIZES, grad_buffer: np.ndarray | None = None):
    """One backprop step: read, update in full precision, quantize, program all words."""
    weights = store.read()
    grad = gradients(weights, x, targets, sizes, out=grad_buffer)
    weights -= learning_rate * grad
    store.program(quantize(weights, store.fmt))


def accuracy(params: np.ndarray, data: Dataset, sizes: Sequence[int] = LAYER_SIZES) -> float:
    return float(np.mean(predict(params, data.images, sizes) == data.labels))


@dataclass(frozen=True)
class RunResult:
    seed: int
    recognition_rate: float
    energy_pj: float
    writes: int


def seed_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """Independent (init, shuffle, memory) generators derived from one seed."""
    init_ss, shuffle_ss, memory_ss = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(init_ss), np.random.default_rng(shuffle_ss), np.random.default_rng(memory_ss))


def build_store(config: TrainConfig, profile: ProgrammingProfile, seed: int) -> tuple[ApproxWeightStore, np.random.Generator]:
    init_rng, shuffle_rng, memory_rng = seed_streams(seed)
    params = init_params(init_rng, config.layer_sizes)
    store = ApproxWeightStore.from_values(params, profile, config.fmt, seed=memory_rng)
    return store, shuffle_rng


def train_run(config: TrainConfig, profile: ProgrammingProfile, train: Dataset, test: Dataset,
              seed: int) -> RunResult:
    """Train one network from ``seed`` and score it on ``test``."""
    sizes = config.layer_sizes
    store, shuffle_rng = build_store(config, profile, seed)
    targets = one_hot_pm1(train.labels, sizes[-1])
    grad_buffer = np.empty(len(store))
    n = len(train)
    for _ in range(config.epochs):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, config.minibatch):
            idx = order[start:start + config.minibatch]
            train_step(store, train.images[idx], targets[idx], config.learning_rate, sizes, grad_buffer)
    rate = accuracy(store.read(), test, sizes)
    return RunResult(seed, rate, store.energy_pj, store.writes)


@dataclass(frozen=True)
class TrainReport:
    recognition_rate: float
    per_seed_rates: tuple[float, ...]
    total_programming_energy_pj: float
    energy_per_weight_pj: float
    profile_descriptor: tuple[str, int, float, float]
    energy_saving_vs_baseline: float = float("nan")
    seeds: tuple[int, ...] = field(default=())

    @property
    def rr_min(self) -> float:
        return min(self.per_seed_rates)

    @property
    def rr_max(self) -> float:
        return max(self.per_seed_rates)

    @property
    def spread(self) -> float:
        return self.rr_max - self.rr_min

    def csv_row(self) -> list:
        scheme, n_lsb, ber_hsb, ber_lsb = self.profile_descriptor
        return [scheme, n_lsb, repr(ber_hsb), repr(ber_lsb), len(self.per_seed_rates),
                f"{self.recognition_rate:.6f}", f"{self.rr_min:.6f}", f"{self.rr_max:.6f}",
                f"{self.energy_per_weight_pj:.9g}", f"{self.energy_saving_vs_baseline:.6f}"]


REPORT_HEADER = ["scheme", "n_lsb", "ber_hsb", "ber_lsb", "seed_count", "rr_mean", "rr_min", "rr_max",
                 "energy_per_weight_pj", "energy_saving_vs_baseline"]


def report_csv(reports: Sequence[TrainReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for r in reports:
        writer.writerow(r.csv_row())
    return buf.getvalue()


def aggregate(results: Sequence[RunResult], profile: ProgrammingProfile, n_params: int,
              baseline_word_energy: float | None = None) -> TrainReport:
    results = sorted(results, key=lambda r: r.seed)
    rates = tuple(r.recognition_rate for r in results)
    total = float(np.mean([r.energy_pj for r in results]))
    saving = float("nan")
    if baseline_word_energy:
        saving = 1.0 - profile.word_energy_pj / baseline_word_energy
    return TrainReport(
        recognition_rate=float(np.mean(rates)),
        per_seed_rates=rates,
        total_programming_energy_pj=total,
        energy_per_weight_pj=total / n_params,
        profile_descriptor=profile.descriptor,
        energy_saving_vs_baseline=saving,
        seeds=tuple(r.seed for r in results),
    )


def train_and_evaluate(config: TrainConfig, profile: ProgrammingProfile, train: Dataset, test: Dataset,
                       baseline_word_energy: float | None = None) -> TrainReport:
    """Run ``n_seeds`` trainings (seeds ``config.seed + i``) and aggregate them."""
    results = [train_run(config, profile, train, test, config.seed + i) for i in range(config.n_seeds)]
    return aggregate(results, profile, parameter_count(config.layer_sizes), baseline_word_energy)
