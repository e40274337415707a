"""16-bit fixed-point words stored in approximate ST-MRAM.

A write pulses every bit of the word (blind write).  Each pulse fails with
the BER of its bit position; a failed pulse leaves the junction in its
previous state, so errors only appear on bits whose target differs from
the stored value.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .energy import CalibratedModels

WORD_BITS = 16
GEOMETRIC_MAX_BER = 1e-3
SNAPSHOT_MAGIC = b"AMEM"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIII")
# high byte flag in the format field of the snapshot header
_SIGN_MAGNITUDE_FLAG = 1 << 8


ENCODINGS = ("twos_complement", "sign_magnitude")


@dataclass(frozen=True)
class FixedPointFormat:
    """16-bit fixed point with ``fractional_bits`` fractional bits.

    ``sign_magnitude`` keeps bit 15 as the sign and bits 0-14 as the
    magnitude, so the range is symmetric; ``twos_complement`` spans
    [-2^(15-F), 2^(15-F) - 2^-F].
    """

    total_bits: int = WORD_BITS
    fractional_bits: int = 12
    encoding: str = "sign_magnitude"

    def __post_init__(self):
        if self.total_bits != WORD_BITS:
            raise ValueError("only 16-bit words are supported")
        if not 1 <= self.fractional_bits < self.total_bits:
            raise ValueError(f"fractional_bits must be in [1, {self.total_bits - 1}]")
        if self.encoding not in ENCODINGS:
            raise ValueError(f"encoding must be one of {ENCODINGS}, got {self.encoding!r}")

    @property
    def step(self) -> float:
        return 2.0 ** -self.fractional_bits

    @property
    def min_code(self) -> int:
        if self.encoding == "twos_complement":
            return -(2 ** (self.total_bits - 1))
        return -(2 ** (self.total_bits - 1) - 1)

    @property
    def max_code(self) -> int:
        return 2 ** (self.total_bits - 1) - 1

    @property
    def min_value(self) -> float:
        return self.min_code * self.step

    @property
    def max_value(self) -> float:
        return self.max_code * self.step


@lru_cache(maxsize=None)
def _codec_tables(fmt: FixedPointFormat) -> tuple[np.ndarray, np.ndarray]:
    """(code + 2^15 -> pattern, pattern -> value) lookup tables for ``fmt``."""
    codes = np.arange(-(1 << 15), 1 << 15, dtype=np.int64)
    if fmt.encoding == "sign_magnitude":
        encode = (np.abs(codes) | ((codes < 0) << 15)).astype(np.uint16)
        encode[0] = encode[1]  # -2^15 saturates to the most negative magnitude
        patterns = np.arange(1 << 16, dtype=np.int64)
        magnitude = (patterns & 0x7FFF).astype(np.float64)
        decode = np.where(patterns & 0x8000, -magnitude, magnitude) * fmt.step
    else:
        encode = codes.astype(np.int16).view(np.uint16)
        decode = np.arange(1 << 16, dtype=np.uint16).view(np.int16) * fmt.step
    encode.flags.writeable = False
    decode.flags.writeable = False
    return encode, decode


def quantize(x, fmt: FixedPointFormat = FixedPointFormat()):
    """Round to nearest (ties to even) on the fixed-point grid and saturate.

    Returns the bit pattern as ``np.uint16`` (scalar or array). NaN maps to 0;
    zero is always encoded with a clear sign bit.
    """
    x = np.asarray(x, dtype=float)
    codes = np.rint(x.reshape(-1) * 2.0**fmt.fractional_bits)
    nan = np.isnan(codes)
    if nan.any():
        codes[nan] = 0.0
    np.clip(codes, fmt.min_code, fmt.max_code, out=codes)
    encode, _ = _codec_tables(fmt)
    codes += 1 << 15
    patterns = encode[codes.astype(np.intp)].reshape(x.shape)
    return patterns[()] if patterns.ndim == 0 else patterns


def dequantize(pattern, fmt: FixedPointFormat = FixedPointFormat()):
    _, decode = _codec_tables(fmt)
    out = decode[np.asarray(pattern, dtype=np.uint16)]
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- profiles


@dataclass(frozen=True)
class Uniform:
    ber: float

    @property
    def descriptor(self) -> tuple[str, int, float, float]:
        return ("uniform", 0, self.ber, self.ber)


@dataclass(frozen=True)
class TwoTier:
    n_lsb: int
    ber_hsb: float
    ber_lsb: float

    @property
    def descriptor(self) -> tuple[str, int, float, float]:
        return ("two_tier", self.n_lsb, self.ber_hsb, self.ber_lsb)


@dataclass(frozen=True)
class ProgrammingProfile:
    """Per-bit-position pulse duration, BER and energy; index 0 is the LSB."""

    t_pulse: tuple[float, ...]
    ber: tuple[float, ...]
    energy_pj: tuple[float, ...]
    scheme: Uniform | TwoTier | None = None

    def __post_init__(self):
        if not len(self.t_pulse) == len(self.ber) == len(self.energy_pj) == WORD_BITS:
            raise ValueError(f"profile needs {WORD_BITS} entries per field")
        if any(not 0.0 <= b <= 1.0 for b in self.ber):
            raise ValueError("per-bit BER must lie in [0, 1]")

    @property
    def bers(self) -> np.ndarray:
        return np.array(self.ber)

    @property
    def word_energy_pj(self) -> float:
        return float(sum(self.energy_pj))

    @property
    def descriptor(self) -> tuple[str, int, float, float]:
        if self.scheme is None:
            return ("custom", 0, max(self.ber), min(self.ber))
        return self.scheme.descriptor

    @classmethod
    def ideal(cls, ber) -> ProgrammingProfile:
        """Profile with the given BER(s) and no pulse or energy bookkeeping."""
        bers = np.broadcast_to(np.asarray(ber, dtype=float), (WORD_BITS,))
        zeros = (0.0,) * WORD_BITS
        return cls(zeros, tuple(float(b) for b in bers), zeros)


def _bit_entry(models: CalibratedModels, ber: float) -> tuple[float, float, float]:
    if not 0.0 < ber <= 1.0:
        raise ValueError(f"programming BER must lie in (0, 1], got {ber}")
    if ber == 1.0:
        return 0.0, 1.0, 0.0
    t = models.t_pulse(ber)
    return t, ber, models.pulse_energy(t)


def make_profile(scheme: Uniform | TwoTier, models: CalibratedModels) -> ProgrammingProfile:
    if isinstance(scheme, Uniform):
        bers = [scheme.ber] * WORD_BITS
    elif isinstance(scheme, TwoTier):
        if not 0 <= scheme.n_lsb <= WORD_BITS:
            raise ValueError(f"n_lsb must be in [0, {WORD_BITS}]")
        bers = [scheme.ber_lsb] * scheme.n_lsb + [scheme.ber_hsb] * (WORD_BITS - scheme.n_lsb)
    else:
        raise TypeError(f"unknown scheme {scheme!r}")
    cache = {b: _bit_entry(models, b) for b in set(bers)}
    entries = [cache[b] for b in bers]
    return ProgrammingProfile(
        t_pulse=tuple(e[0] for e in entries),
        ber=tuple(e[1] for e in entries),
        energy_pj=tuple(e[2] for e in entries),
        scheme=scheme,
    )


# ---------------------------------------------------------------- samplers


def _bit_groups(bers) -> list[tuple[float, np.ndarray]]:
    bers = np.asarray(bers, dtype=float)
    return [(float(p), np.flatnonzero(bers == p)) for p in np.unique(bers)]


def _geometric_stream(rng: np.random.Generator, p: float, n_words: int, bits: np.ndarray) -> np.ndarray:
    """Failures over the stream of n_words x len(bits) pulses via geometric gaps."""
    length = n_words * len(bits)
    out = np.zeros(n_words, dtype=np.uint16)
    expected = length * p
    chunk = int(expected + 6.0 * np.sqrt(expected) + 16)
    positions = []
    last = -1
    while True:
        gaps = rng.geometric(p, size=chunk)
        pos = last + np.cumsum(gaps)
        positions.append(pos)
        last = int(pos[-1])
        if last >= length:
            break
    pos = np.concatenate(positions)
    pos = pos[pos < length]
    if pos.size:
        words = pos // len(bits)
        bit_values = (np.uint16(1) << bits[pos % len(bits)].astype(np.uint16)).astype(np.uint16)
        np.bitwise_or.at(out, words, bit_values)
    return out


_POPCOUNT = None
_KTH_BIT = None


def _bit_tables() -> tuple[np.ndarray, np.ndarray]:
    """Popcount and k-th-set-bit lookup tables over all 16-bit patterns."""
    global _POPCOUNT, _KTH_BIT
    if _POPCOUNT is None:
        values = np.arange(1 << WORD_BITS, dtype=np.uint32)
        bits = ((values[:, None] >> np.arange(WORD_BITS, dtype=np.uint32)) & 1).astype(np.uint8)
        _POPCOUNT = bits.sum(axis=1).astype(np.int64)
        # stable sort puts set-bit positions first, in ascending order
        _KTH_BIT = np.argsort(1 - bits, axis=1, kind="stable").astype(np.uint8)
    return _POPCOUNT, _KTH_BIT


def _binomial_placement(rng: np.random.Generator, p: float, relevant: np.ndarray) -> np.ndarray:
    """Draw the failure count over the relevant pulses, then place it uniformly."""
    popcount, kth_bit = _bit_tables()
    counts = popcount[relevant]
    ends = np.cumsum(counts)
    n = int(ends[-1]) if ends.size else 0
    if n == 0:
        return np.zeros(relevant.shape, dtype=np.uint16)
    k = int(rng.binomial(n, p))
    complement = 2 * k > n
    chosen = rng.choice(n, size=n - k if complement else k, replace=False)
    if 8 * chosen.size < n:
        chosen.sort()
        owner = np.searchsorted(ends, chosen, side="right")
        rank = chosen - (ends[owner] - counts[owner])
    else:
        owner = np.repeat(np.arange(relevant.size), counts)[chosen]
        rank = (np.arange(n) - np.repeat(ends - counts, counts))[chosen]
    bits = kth_bit[relevant[owner], rank]
    picked = np.bincount(owner, weights=np.left_shift(1, bits.astype(np.int64)),
                         minlength=relevant.size).astype(np.uint16)
    return relevant & ~picked if complement else picked


def sample_failure_mask(rng: np.random.Generator, bers, relevant) -> np.ndarray:
    """Failed bit positions for one blind write of each word.

    ``relevant`` holds, per word, the bits whose target differs from the
    stored value.  The result has the law of independent Bernoulli(ber[b])
    draws per relevant bit.  Per group of equal-BER bit positions:

    - ber <= 1e-3: geometric skips over the flattened stream of the group's
      pulses; hits on bits that are not relevant are no-ops and get masked
      off.
    - higher ber: only words with at least one relevant bit are visited;
      Binomial(N, ber) failure count over the N relevant
      pulses, placed uniformly without replacement (the complement is
      placed when the count exceeds N/2).
    """
    relevant = np.asarray(relevant, dtype=np.uint16)
    scalar = relevant.ndim == 0
    relevant = np.atleast_1d(relevant)
    mask = np.zeros(relevant.shape, dtype=np.uint16)
    groups = _bit_groups(bers)
    if all(p <= GEOMETRIC_MAX_BER or p >= 1.0 for p, _ in groups):
        # no placement needed: skip sampling can run over every word directly
        nz, sub, sub_mask = None, relevant, mask
    else:
        nz = np.flatnonzero(relevant != 0)
        if nz.size == 0:
            return mask[0] if scalar else mask
        sub = relevant[nz]
        sub_mask = np.zeros(sub.shape, dtype=np.uint16)
    for p, bits in groups:
        group = np.uint16(sum(1 << int(b) for b in bits))
        if p <= 0.0:
            continue
        if p >= 1.0:
            sub_mask |= sub & group
        elif p <= GEOMETRIC_MAX_BER:
            sub_mask |= _geometric_stream(rng, p, sub.size, bits) & sub
        else:
            sub_mask |= _binomial_placement(rng, p, sub & group)
    if nz is not None:
        mask[nz] = sub_mask
    return mask[0] if scalar else mask


def naive_failure_mask(rng: np.random.Generator, bers, relevant) -> np.ndarray:
    """Reference sampler: one uniform draw per bit per word."""
    relevant = np.atleast_1d(np.asarray(relevant, dtype=np.uint16))
    draws = rng.random((relevant.size, WORD_BITS)) < np.asarray(bers, dtype=float)
    packed = np.packbits(draws.astype(np.uint8), axis=1, bitorder="little")
    return packed.copy().view("<u2").reshape(relevant.shape).astype(np.uint16) & relevant


# ---------------------------------------------------------------- store


class ApproxWeightStore:
    """Array of 16-bit words with stochastic programming and an energy ledger.

    Reads are exact and free.  Every ``program`` call bills the full word
    energy of the profile for each word written, whatever the outcome.
    """

    def __init__(self, words, profile: ProgrammingProfile, fmt: FixedPointFormat = FixedPointFormat(),
                 seed=None, sampler=sample_failure_mask):
        self._words = np.array(words, dtype=np.uint16).ravel()
        self.fmt = fmt
        self.profile = profile
        self.rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self.sampler = sampler
        self.writes = 0
        self._energy = 0.0
        self._energy_comp = 0.0

    @classmethod
    def from_values(cls, values, profile, fmt: FixedPointFormat = FixedPointFormat(), seed=None, **kw):
        return cls(quantize(np.ravel(values), fmt), profile, fmt, seed, **kw)

    def __len__(self):
        return self._words.size

    @property
    def words(self) -> np.ndarray:
        view = self._words.view()
        view.flags.writeable = False
        return view

    @property
    def energy_pj(self) -> float:
        return self._energy

    def read(self) -> np.ndarray:
        return dequantize(self._words, self.fmt)

    def _bill(self, n_words: int):
        # Kahan summation keeps the ledger exact over ~1e4-1e5 calls
        y = n_words * self.profile.word_energy_pj - self._energy_comp
        t = self._energy + y
        self._energy_comp = (t - self._energy) - y
        self._energy = t
        self.writes += n_words

    def program(self, targets, index=None):
        """Blind-write ``targets`` (bit patterns) to all words, or to ``index``."""
        targets = np.asarray(targets, dtype=np.uint16)
        if index is None:
            if targets.shape != self._words.shape:
                raise ValueError(f"expected {self._words.size} target words, got {targets.shape}")
            stored = self._words
        else:
            index = np.asarray(index)
            if index.size and (index.min() < -self._words.size or index.max() >= self._words.size):
                raise IndexError("word index out of range")
            stored = self._words[index]
        relevant = stored ^ targets
        failed = self.sampler(self.rng, self.profile.ber, relevant)
        new = (targets & ~failed) | (stored & failed)
        if index is None:
            self._words[:] = new
        else:
            self._words[index] = new
        self._bill(targets.size)

    def program_word(self, index: int, target):
        if not -len(self) <= index < len(self):
            raise IndexError(f"word index {index} out of range for {len(self)} words")
        self.program(np.asarray([target], dtype=np.uint16), index=np.asarray([index]))

    def program_values(self, values):
        self.program(quantize(values, self.fmt))

    def dump(self, path):
        """Write a snapshot: 16-byte header then little-endian words."""
        fmt_field = self.fmt.fractional_bits
        if self.fmt.encoding == "sign_magnitude":
            fmt_field |= _SIGN_MAGNITUDE_FLAG
        header = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, self._words.size, fmt_field)
        Path(path).write_bytes(header + self._words.astype("<u2").tobytes())

    @classmethod
    def restore(cls, path, profile: ProgrammingProfile, seed=None) -> ApproxWeightStore:
        data = Path(path).read_bytes()
        if len(data) < _HEADER.size:
            raise ValueError("snapshot truncated")
        magic, version, count, fmt_field = _HEADER.unpack_from(data)
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"bad snapshot magic {magic!r}")
        if version != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        payload = data[_HEADER.size:]
        if len(payload) != 2 * count:
            raise ValueError(f"snapshot holds {len(payload)} bytes, header says {count} words")
        words = np.frombuffer(payload, dtype="<u2").astype(np.uint16)
        encoding = "sign_magnitude" if fmt_field & _SIGN_MAGNITUDE_FLAG else "twos_complement"
        fmt = FixedPointFormat(fractional_bits=fmt_field & 0xFF, encoding=encoding)
        return cls(words, profile, fmt, seed)
