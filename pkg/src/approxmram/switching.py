"""Stochastic switching of a single magnetic tunnel junction.

At fixed programming voltage the switching time is gamma distributed, so a
pulse of duration T fails to switch the junction with probability

    BER(T) = Q(k, (T - delay) / theta)

where Q is the regularized upper incomplete gamma function.  ``delay`` is 0
unless the optional three-parameter fit is requested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

from scipy.optimize import brentq, least_squares, minimize_scalar

from .gammainc import upper_reg_gamma

# BERs below this are clamped in reports; the gamma tail is not meaningful there
BER_REPORT_FLOOR = 1e-14

# (t_pulse [ns], BER) operating points at Vpulse = 2.0 Vc
DEFAULT_ANCHORS: tuple[tuple[float, float], ...] = (
    (15.0, 1e-10),
    (9.45, 1e-4),
    (8.25, 1e-3),
    (7.05, 1e-2),
)
DEFAULT_V_RATIO = 2.0
ANCHOR_T_TOLERANCE = 0.05


class CalibrationError(RuntimeError):
    """A fit could not reproduce its anchors within the configured bound."""


@dataclass(frozen=True)
class DeviceParams:
    """MTJ geometry and electrical constants (32 nm PMA node)."""

    diameter: float = 32.0  # nm
    storage_thickness: float = 1.3  # nm
    saturation_magnetization: float = 1.58  # T / mu0
    resistance_area_product: float = 4.0  # Ohm um^2
    tmr: float = 1.5
    v_critical: float = 190.0  # mV
    delta_e: float = 70.0  # kB T

    def __post_init__(self):
        for name in ("diameter", "storage_thickness", "saturation_magnetization",
                     "resistance_area_product", "tmr", "v_critical"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"DeviceParams.{name} must be positive and finite, got {value}")
        if not self.delta_e >= 1:
            raise ValueError(f"DeviceParams.delta_e must be >= 1, got {self.delta_e}")

    @property
    def area_um2(self) -> float:
        radius_um = self.diameter * 1e-3 / 2.0
        return math.pi * radius_um**2

    @property
    def r_parallel(self) -> float:
        """Parallel-state resistance in Ohm."""
        return self.resistance_area_product / self.area_um2

    @property
    def r_antiparallel(self) -> float:
        return self.r_parallel * (1.0 + self.tmr)


@dataclass(frozen=True)
class PulseSpec:
    v_pulse: float  # mV
    t_pulse: float  # ns

    def __post_init__(self):
        if not self.v_pulse > 0:
            raise ValueError(f"v_pulse must be > 0, got {self.v_pulse}")
        if not self.t_pulse >= 0:
            raise ValueError(f"t_pulse must be >= 0, got {self.t_pulse}")


@dataclass(frozen=True)
class SwitchingModel:
    shape_k: float
    scale_theta: float  # ns
    v_ratio: float = DEFAULT_V_RATIO
    fit_residuals: tuple[tuple[float, float], ...] = field(default=())
    delay: float = 0.0  # ns, incubation shift of the optional 3-parameter fit

    def __post_init__(self):
        if not (self.shape_k > 0 and math.isfinite(self.shape_k)):
            raise ValueError(f"shape_k must be positive, got {self.shape_k}")
        if not (self.scale_theta > 0 and math.isfinite(self.scale_theta)):
            raise ValueError(f"scale_theta must be positive, got {self.scale_theta}")
        if self.delay < 0:
            raise ValueError("delay must be >= 0")

    @property
    def mean(self) -> float:
        """Mean switching time in ns."""
        return self.delay + self.shape_k * self.scale_theta

    @property
    def skewness(self) -> float:
        return 2.0 / math.sqrt(self.shape_k)

    def at_voltage(self, v_ratio: float, mean_fn: Callable[[float], float] | None = None) -> SwitchingModel:
        """Rescale to another Vpulse/Vc ratio.

        Approximation, uncalibrated: the mean switching time follows
        ``mean_fn`` (default 1 / (v - 1)) and the skewness is held constant.
        """
        mean_fn = mean_fn or inverse_overdrive
        if v_ratio <= 1.0 and mean_fn is inverse_overdrive:
            raise ValueError("inverse-overdrive mean needs Vpulse/Vc > 1")
        factor = mean_fn(v_ratio) / mean_fn(self.v_ratio)
        return replace(self, scale_theta=self.scale_theta * factor, delay=self.delay * factor,
                       v_ratio=v_ratio, fit_residuals=())


def inverse_overdrive(v_ratio: float) -> float:
    return 1.0 / (v_ratio - 1.0)


def ber_at(model: SwitchingModel, t_pulse: float) -> float:
    """Probability that a pulse of ``t_pulse`` ns fails to switch the junction."""
    if t_pulse < 0:
        raise ValueError(f"t_pulse must be >= 0, got {t_pulse}")
    x = max(t_pulse - model.delay, 0.0) / model.scale_theta
    return upper_reg_gamma(model.shape_k, x)


def _invert_q(k: float, target: float) -> float:
    """Smallest x with Q(k, x) = target, by bracketed root finding in log space."""
    log_target = math.log(target)

    def f(x):
        return math.log(max(upper_reg_gamma(k, x), 1e-320)) - log_target

    hi = max(k, 1.0)
    while f(hi) > 0:
        hi *= 2.0
        if hi > 1e6:
            raise ValueError(f"BER {target} unreachable")
    return brentq(f, 0.0, hi, xtol=1e-13, rtol=1e-15, maxiter=200)


def tpulse_for_ber(model: SwitchingModel, target_ber: float) -> float:
    """Pulse duration in ns at which ``ber_at`` equals ``target_ber``."""
    if not 0.0 < target_ber < 1.0:
        raise ValueError(f"target_ber must lie in (0, 1), got {target_ber}")
    return model.delay + model.scale_theta * _invert_q(model.shape_k, target_ber)


def _log10_residuals(k: float, theta: float, delay: float, anchors) -> list[float]:
    out = []
    for t, ber in anchors:
        q = upper_reg_gamma(k, max(t - delay, 0.0) / theta)
        out.append(math.log10(max(q, 1e-300)) - math.log10(ber))
    return out


def _fit_theta(k: float, anchors) -> tuple[float, float]:
    """Best theta for fixed k; returns (theta, sum of squared log10 residuals)."""
    t_ref = max(t for t, _ in anchors)

    def cost(log_theta):
        return sum(r * r for r in _log10_residuals(k, math.exp(log_theta), 0.0, anchors))

    lo, hi = math.log(t_ref * 1e-4), math.log(t_ref * 10.0)
    res = minimize_scalar(cost, bounds=(lo, hi), method="bounded", options={"xatol": 1e-11})
    return math.exp(res.x), res.fun


def _check_anchors(anchors: Sequence[tuple[float, float]]) -> list[tuple[float, float]]:
    anchors = sorted((float(t), float(b)) for t, b in anchors)
    if len(anchors) < 2:
        raise ValueError("calibration needs at least 2 anchors")
    for t, b in anchors:
        if not (t > 0 and 0.0 < b < 1.0):
            raise ValueError(f"invalid anchor ({t}, {b})")
    for (t1, b1), (t2, b2) in zip(anchors, anchors[1:]):
        if not (t2 > t1 and b2 < b1):
            raise ValueError("anchors must have strictly decreasing BER with increasing T")
    return anchors


def calibrate(
    anchors: Iterable[tuple[float, float]] = DEFAULT_ANCHORS,
    v_ratio: float = DEFAULT_V_RATIO,
    tolerance: float = ANCHOR_T_TOLERANCE,
    fit_delay: bool = False,
) -> SwitchingModel:
    """Least-squares gamma fit to (t_pulse, BER) anchors in log10-BER space.

    The shape k is found by a bounded Brent search on log k with theta
    solved for each k; ``fit_delay`` adds a location shift refined jointly.
    Raises CalibrationError if any anchor's fitted duration is off by more
    than ``tolerance`` (relative).
    """
    anchors = _check_anchors(list(anchors))
    res = minimize_scalar(
        lambda log_k: _fit_theta(math.exp(log_k), anchors)[1],
        bounds=(math.log(0.2), math.log(2000.0)),
        method="bounded",
        options={"xatol": 1e-11},
    )
    k = math.exp(res.x)
    theta = _fit_theta(k, anchors)[0]
    delay = 0.0

    if fit_delay:
        t_min = min(t for t, _ in anchors)

        def resid(p):
            return _log10_residuals(math.exp(p[0]), math.exp(p[1]), t_min * (1 - math.exp(-p[2] ** 2)), anchors)

        sol = least_squares(resid, [math.log(k), math.log(theta), 0.1], method="lm", xtol=1e-14, ftol=1e-14)
        k, theta = math.exp(sol.x[0]), math.exp(sol.x[1])
        delay = t_min * (1 - math.exp(-sol.x[2] ** 2))

    model = SwitchingModel(shape_k=k, scale_theta=theta, v_ratio=v_ratio, delay=delay)
    residuals = []
    for t, ber in anchors:
        t_fit = tpulse_for_ber(model, ber)
        residuals.append((ber, (t_fit - t) / t))
    model = replace(model, fit_residuals=tuple(sorted(residuals)))
    worst = max(abs(r) for _, r in residuals)
    if worst > tolerance:
        raise CalibrationError(
            f"switching fit misses an anchor by {worst:.1%} in pulse duration (bound {tolerance:.0%})"
        )
    return model


def parse_anchors(text: str) -> list[tuple[float, float]]:
    """Parse ``t_pulse_ns<TAB>ber`` lines; ``#`` starts a comment."""
    anchors = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"anchor line {lineno}: expected 't_pulse_ns<TAB>ber', got {line!r}")
        anchors.append((float(parts[0]), float(parts[1])))
    return anchors


def load_anchors(path) -> list[tuple[float, float]]:
    return parse_anchors(Path(path).read_text())


def format_anchors(anchors: Iterable[tuple[float, float]]) -> str:
    return "".join(f"{t!r}\t{b!r}\n" for t, b in anchors)


def dump_model(model: SwitchingModel) -> str:
    """Key=value text block of a fitted model."""
    residuals = ",".join(f"{b!r}:{r!r}" for b, r in model.fit_residuals)
    lines = [
        f"shape_k = {model.shape_k!r}",
        f"scale_theta = {model.scale_theta!r}",
        f"v_ratio = {model.v_ratio!r}",
        f"delay = {model.delay!r}",
        f"mean_ns = {model.mean!r}",
        f"skewness = {model.skewness!r}",
        f"residuals = {residuals}",
    ]
    return "\n".join(lines) + "\n"


def _parse_kv(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def load_model(text: str) -> SwitchingModel:
    kv = _parse_kv(text)
    residuals = []
    if kv.get("residuals"):
        for item in kv["residuals"].split(","):
            b, r = item.split(":")
            residuals.append((float(b), float(r)))
    return SwitchingModel(
        shape_k=float(kv["shape_k"]),
        scale_theta=float(kv["scale_theta"]),
        v_ratio=float(kv.get("v_ratio", DEFAULT_V_RATIO)),
        delay=float(kv.get("delay", 0.0)),
        fit_residuals=tuple(residuals),
    )
