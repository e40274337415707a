"""Programming energy and device-to-device variability.

Energy of one programming pulse is ``cf * V^2 * T / R`` with the driver and
resistance-change overheads folded into the calibration factor ``cf``.

Variability is one log-normal multiplicative factor on the gamma scale of
each junction.  The array-level BER at a given pulse duration is the
population mean of the device BERs, evaluated by Gauss-Hermite quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from .gammainc import upper_reg_gamma
from .switching import (
    BER_REPORT_FLOOR,
    DEFAULT_ANCHORS,
    CalibrationError,
    DeviceParams,
    PulseSpec,
    SwitchingModel,
    _parse_kv,
    ber_at,
    calibrate,
    tpulse_for_ber,
)

OPERATING_V_PULSE = 381.0  # mV, 2.0 Vc
ENERGY_ANCHOR = (PulseSpec(OPERATING_V_PULSE, 15.0), 0.48)  # pJ
VARIABILITY_ANCHOR = (1e-10, 20.5)  # (BER, ns)
MAX_PULSE_NS = 200.0


@dataclass(frozen=True)
class EnergyModel:
    r_effective: float  # Ohm
    calibration_factor: float = 1.0

    def __post_init__(self):
        if not self.r_effective > 0:
            raise ValueError("r_effective must be > 0")
        if not self.calibration_factor > 0:
            raise ValueError("calibration_factor must be > 0")


@dataclass(frozen=True)
class VariabilityModel:
    """Log-normal spread of the switching-time scale across devices.

    ``mode="mean"`` averages device BERs over the population; ``mode="percentile"``
    instead reports the BER of the device at the given slowness quantile.
    """

    sigma_scale: float = 0.0
    quadrature_order: int = 64
    mode: str = "mean"
    percentile: float = 0.999

    def __post_init__(self):
        if not self.sigma_scale >= 0:
            raise ValueError("sigma_scale must be >= 0")
        if self.quadrature_order < 1:
            raise ValueError("quadrature_order must be >= 1")
        if self.mode not in ("mean", "percentile"):
            raise ValueError(f"unknown variability mode {self.mode!r}")
        if not 0.0 < self.percentile < 1.0:
            raise ValueError("percentile must lie in (0, 1)")


NO_VARIABILITY = VariabilityModel(0.0)


def pulse_energy(device: DeviceParams, energy: EnergyModel, pulse: PulseSpec) -> float:
    """Energy of one programming pulse in pJ."""
    v = pulse.v_pulse * 1e-3
    t = pulse.t_pulse * 1e-9
    return energy.calibration_factor * v * v * t / energy.r_effective * 1e12


def calibrate_energy(
    device: DeviceParams,
    anchor: tuple[PulseSpec, float] = ENERGY_ANCHOR,
    r_effective: float | None = None,
) -> EnergyModel:
    pulse, target_pj = anchor
    if not target_pj > 0:
        raise ValueError("anchor energy must be > 0")
    bare = EnergyModel(r_effective=r_effective or device.r_parallel)
    predicted = pulse_energy(device, bare, pulse)
    return EnergyModel(bare.r_effective, target_pj / predicted)


@lru_cache(maxsize=16)
def _hermite_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.hermite_e.hermegauss(order)
    return nodes, weights / weights.sum()


def array_ber(switch: SwitchingModel, var: VariabilityModel, t_pulse: float) -> float:
    """Population-level BER at pulse duration ``t_pulse`` (ns)."""
    if t_pulse < 0:
        raise ValueError(f"t_pulse must be >= 0, got {t_pulse}")
    if var.sigma_scale == 0.0:
        return ber_at(switch, t_pulse)
    t_eff = max(t_pulse - switch.delay, 0.0)
    if var.mode == "percentile":
        theta = switch.scale_theta * math.exp(var.sigma_scale * norm.ppf(var.percentile))
        return upper_reg_gamma(switch.shape_k, t_eff / theta)
    nodes, weights = _hermite_rule(var.quadrature_order)
    thetas = switch.scale_theta * np.exp(var.sigma_scale * nodes)
    q = upper_reg_gamma(np.full_like(thetas, switch.shape_k), t_eff / thetas)
    return float(min(np.dot(weights, q), 1.0))


def tpulse_for_array_ber(
    switch: SwitchingModel,
    var: VariabilityModel,
    target_ber: float,
    max_duration: float = MAX_PULSE_NS,
) -> float:
    """Inverse of ``array_ber``: pulse duration (ns) reaching ``target_ber``."""
    if not 0.0 < target_ber < 1.0:
        raise ValueError(f"target_ber must lie in (0, 1), got {target_ber}")
    if var.sigma_scale == 0.0:
        return tpulse_for_ber(switch, target_ber)
    log_target = math.log(target_ber)

    def f(t):
        return math.log(max(array_ber(switch, var, t), 1e-320)) - log_target

    if f(max_duration) > 0:
        raise ValueError(f"BER {target_ber:g} unreachable below {max_duration} ns")
    return brentq(f, 0.0, max_duration, xtol=1e-12, rtol=1e-15, maxiter=200)


def calibrate_variability(
    switch: SwitchingModel,
    anchor: tuple[float, float] = VARIABILITY_ANCHOR,
    tolerance: float = 1e-3,
    sigma_max: float = 2.0,
    quadrature_order: int = 64,
) -> VariabilityModel:
    """Bisect sigma_scale so the variability-aware duration at the anchor BER matches."""
    target_ber, t_anchor = anchor
    t_det = tpulse_for_ber(switch, target_ber)
    if abs(t_anchor - t_det) <= tolerance * t_anchor:
        return VariabilityModel(0.0, quadrature_order)
    if t_anchor < t_det:
        raise CalibrationError(
            f"variability anchor {t_anchor} ns is below the deterministic duration {t_det:.4g} ns"
        )

    def t_for(sigma):
        try:
            return tpulse_for_array_ber(switch, VariabilityModel(sigma, quadrature_order), target_ber)
        except ValueError:
            return math.inf

    if t_for(sigma_max) < t_anchor:
        raise CalibrationError(f"no sigma_scale in (0, {sigma_max}] reaches {t_anchor} ns")
    lo, hi = 0.0, sigma_max
    while hi - lo > 1e-9 * sigma_max:
        mid = 0.5 * (lo + hi)
        if t_for(mid) < t_anchor:
            lo = mid
        else:
            hi = mid
    sigma = 0.5 * (lo + hi)
    if abs(t_for(sigma) - t_anchor) > tolerance * t_anchor:
        raise CalibrationError("variability bisection did not meet the anchor tolerance")
    return VariabilityModel(sigma, quadrature_order)


def tpulse_for(switch: SwitchingModel, var: VariabilityModel, target_ber: float, use_variability: bool = True) -> float:
    if use_variability:
        return tpulse_for_array_ber(switch, var, target_ber)
    return tpulse_for_ber(switch, target_ber)


def energy_for_ber(
    device: DeviceParams,
    energy: EnergyModel,
    switch: SwitchingModel,
    var: VariabilityModel,
    target_ber: float,
    use_variability: bool = True,
    v_pulse: float = OPERATING_V_PULSE,
) -> float:
    """Single-bit programming energy (pJ) needed for ``target_ber``."""
    t = tpulse_for(switch, var, target_ber, use_variability)
    return pulse_energy(device, energy, PulseSpec(v_pulse, t))


@dataclass(frozen=True)
class CalibratedModels:
    """Everything needed to turn a target BER into a pulse and its energy."""

    device: DeviceParams
    switching: SwitchingModel
    energy: EnergyModel
    variability: VariabilityModel
    v_pulse: float = OPERATING_V_PULSE
    use_variability: bool = True

    def t_pulse(self, target_ber: float) -> float:
        return tpulse_for(self.switching, self.variability, target_ber, self.use_variability)

    def ber(self, t_pulse: float) -> float:
        if self.use_variability:
            return array_ber(self.switching, self.variability, t_pulse)
        return ber_at(self.switching, t_pulse)

    def pulse_energy(self, t_pulse: float) -> float:
        return pulse_energy(self.device, self.energy, PulseSpec(self.v_pulse, t_pulse))

    def energy_for_ber(self, target_ber: float) -> float:
        return self.pulse_energy(self.t_pulse(target_ber))


def calibrate_all(
    device: DeviceParams | None = None,
    anchors=DEFAULT_ANCHORS,
    energy_anchor: tuple[PulseSpec, float] = ENERGY_ANCHOR,
    variability_anchor: tuple[float, float] | None = VARIABILITY_ANCHOR,
    use_variability: bool = True,
    v_pulse: float = OPERATING_V_PULSE,
) -> CalibratedModels:
    """Fit switching, energy and variability models from their anchors."""
    device = device or DeviceParams()
    switch = calibrate(anchors)
    energy = calibrate_energy(device, energy_anchor)
    if variability_anchor is None:
        var = NO_VARIABILITY
    else:
        var = calibrate_variability(switch, variability_anchor)
    return CalibratedModels(device, switch, energy, var, v_pulse, use_variability)


@lru_cache(maxsize=8)
def default_models(use_variability: bool = True) -> CalibratedModels:
    return calibrate_all(use_variability=use_variability)


def dump_energy_model(energy: EnergyModel) -> str:
    return f"r_effective = {energy.r_effective!r}\ncalibration_factor = {energy.calibration_factor!r}\n"


def load_energy_model(text: str) -> EnergyModel:
    kv = _parse_kv(text)
    return EnergyModel(float(kv["r_effective"]), float(kv["calibration_factor"]))


def dump_variability_model(var: VariabilityModel) -> str:
    return (
        f"sigma_scale = {var.sigma_scale!r}\n"
        f"quadrature_order = {var.quadrature_order}\n"
        f"mode = {var.mode}\n"
        f"percentile = {var.percentile!r}\n"
    )


def load_variability_model(text: str) -> VariabilityModel:
    kv = _parse_kv(text)
    return VariabilityModel(
        float(kv["sigma_scale"]),
        int(kv.get("quadrature_order", 64)),
        kv.get("mode", "mean"),
        float(kv.get("percentile", 0.999)),
    )


ENERGY_CURVE_BERS = tuple(10.0**-e for e in range(10, 0, -1))
ENERGY_CURVE_HEADER = (
    "target_ber", "t_pulse_ns", "energy_pj", "variability_flag",
    "saving_vs_1e-10", "relative_increase",
)


def energy_curve_rows(models: CalibratedModels, bers=ENERGY_CURVE_BERS) -> list[tuple]:
    """Rows of the BER/energy trade-off, without and with variability.

    ``saving_vs_1e-10`` is relative to the 1e-10 point of the same flag;
    ``relative_increase`` is the variability penalty at that BER (0 for the
    no-variability rows).
    """
    per_flag = {}
    for flag in (False, True):
        t = [tpulse_for(models.switching, models.variability, b, flag) for b in bers]
        per_flag[flag] = (t, [models.pulse_energy(x) for x in t])
    e_ref = {
        flag: models.pulse_energy(tpulse_for(models.switching, models.variability, 1e-10, flag))
        for flag in (False, True)
    }
    rows = []
    for flag in (False, True):
        t_list, e_list = per_flag[flag]
        for i, b in enumerate(bers):
            increase = e_list[i] / per_flag[False][1][i] - 1.0 if flag else 0.0
            rows.append((max(b, BER_REPORT_FLOOR), t_list[i], e_list[i], int(flag),
                         1.0 - e_list[i] / e_ref[flag], increase))
    return rows
