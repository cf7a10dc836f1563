"""
谱密度 - 定义、求值和热化玻色环境的谱密度

这个模块负责:
1. 由 log-normal 背景和 Lorentz 峰组合成带硬截断的谱密度 J(ω)
2. 构造温度相关谱密度 J_β(ω)，把有限温度环境换成真空初态的扩展环境
3. 通过自适应积分计算环境双时关联函数 S(t)
4. 谱密度的 JSON 读写与 WSCP 预设参数

所有频率、能量单位为 cm^-1，温度单位为 K，时间单位为 ps。
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np

from errors import DomainError
from quadrature import adaptive_integrate, clean_breakpoints, oscillation_breakpoints
from units import K_B_CM, ps_to_phase, temperature_to_beta

logger = logging.getLogger(__name__)

ArrayLike = Union[float, Sequence[float], np.ndarray]

WSCP_CUTOFF = 350.0


@dataclass(frozen=True)
class LogNormalTerm:
    """log-normal 背景项"""
    S: float  # 无量纲权重
    sigma: float  # 无量纲宽度
    omega: float  # 中心频率 (cm^-1)


@dataclass(frozen=True)
class LorentzianTerm:
    """Lorentz 峰"""
    g: float  # 无量纲权重
    gamma: float  # 宽度 (cm^-1)
    Omega: float  # 中心频率 (cm^-1)


def _as_array(omega: ArrayLike) -> np.ndarray:
    w = np.asarray(omega, dtype=float)
    if not np.all(np.isfinite(w)):
        raise DomainError("frequency must be finite")
    return w


def _restore_shape(values: np.ndarray, omega: ArrayLike):
    if np.ndim(omega) == 0:
        return float(values)
    return values


@dataclass(frozen=True)
class SpectralDensity:
    """
    组合谱密度 J(ω) = Σ J_LN,k(ω) + Σ J_L,m(ω)，ω ∈ (0, ω_c]，其余为 0
    """
    lognormal_terms: Tuple[LogNormalTerm, ...] = ()
    lorentzian_terms: Tuple[LorentzianTerm, ...] = ()
    cutoff: float = WSCP_CUTOFF
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "lognormal_terms", tuple(self.lognormal_terms))
        object.__setattr__(self, "lorentzian_terms", tuple(self.lorentzian_terms))
        if not (math.isfinite(self.cutoff) and self.cutoff > 0):
            raise DomainError(f"cutoff must be a positive finite frequency, got {self.cutoff}")
        for term in self.lognormal_terms:
            if term.S < 0 or term.sigma <= 0 or term.omega <= 0:
                raise DomainError(f"invalid log-normal term: {term}")
        for term in self.lorentzian_terms:
            if term.g < 0 or term.gamma <= 0 or term.Omega < 0:
                raise DomainError(f"invalid Lorentzian term: {term}")

    def density_over_omega(self, omega: ArrayLike):
        """J(ω)/ω，在 ω → 0 处取连续极限，不做截断"""
        w = _as_array(omega)
        out = np.zeros_like(w, dtype=float)
        pos = w > 0
        wp = w[pos]
        for t in self.lognormal_terms:
            out[pos] += t.S / (t.sigma * math.sqrt(2 * math.pi)) * np.exp(
                -np.log(wp / t.omega) ** 2 / (2 * t.sigma ** 2)
            )
        for t in self.lorentzian_terms:
            num = 4 * t.gamma * t.Omega * t.g * (t.Omega ** 2 + t.gamma ** 2)
            den = math.pi * (t.gamma ** 2 + (w + t.Omega) ** 2) * (t.gamma ** 2 + (w - t.Omega) ** 2)
            out += num / den * (w >= 0)
        return _restore_shape(out, omega)

    def raw_density(self, omega: ArrayLike):
        """不截断的 J(ω)，ω ≤ 0 时为 0"""
        w = _as_array(omega)
        out = np.where(w > 0, w * np.asarray(self.density_over_omega(w)), 0.0)
        return _restore_shape(out, omega)

    def __call__(self, omega: ArrayLike):
        w = _as_array(omega)
        out = np.where((w > 0) & (w <= self.cutoff), np.asarray(self.raw_density(w)), 0.0)
        return _restore_shape(out, omega)

    @property
    def low_frequency_slope(self) -> float:
        """η = lim_{ω→0+} J(ω)/ω"""
        return float(self.density_over_omega(0.0))

    def breakpoints(self) -> np.ndarray:
        """积分断点：0、ω_c，以及每个 Lorentz 峰的 Ω ± γ、Ω ± 5γ"""
        pts: List[float] = []
        for t in self.lorentzian_terms:
            pts.extend([t.Omega - 5 * t.gamma, t.Omega - t.gamma, t.Omega, t.Omega + t.gamma, t.Omega + 5 * t.gamma])
        for t in self.lognormal_terms:
            pts.append(t.omega)
        return clean_breakpoints(pts, 0.0, self.cutoff)

    def support(self) -> Tuple[float, float]:
        return 0.0, self.cutoff

    def total_mass(self) -> float:
        value, _ = adaptive_integrate(lambda w: self(w), self.breakpoints())
        return float(value)

    def background(self) -> "SpectralDensity":
        """只保留 log-normal 背景的谱密度"""
        return SpectralDensity(self.lognormal_terms, (), self.cutoff, name=f"{self.name}-background")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lognormal": [{"S": t.S, "sigma": t.sigma, "omega": t.omega} for t in self.lognormal_terms],
            "lorentzian": [{"g": t.g, "gamma": t.gamma, "Omega": t.Omega} for t in self.lorentzian_terms],
            "cutoff": self.cutoff,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], name: str = "custom") -> "SpectralDensity":
        try:
            lognormal = [LogNormalTerm(float(t["S"]), float(t["sigma"]), float(t["omega"])) for t in data.get("lognormal", [])]
            lorentzian = [LorentzianTerm(float(t["g"]), float(t["gamma"]), float(t["Omega"])) for t in data.get("lorentzian", [])]
            cutoff = float(data["cutoff"])
        except (KeyError, TypeError, ValueError) as e:
            raise DomainError(f"malformed spectral density document: {e}") from e
        return cls(tuple(lognormal), tuple(lorentzian), cutoff, name=name)


def evaluate(sd: SpectralDensity, omega: ArrayLike):
    """J(ω)；非有限频率抛出 DomainError"""
    return sd(omega)


def save_spectral_density(sd: SpectralDensity, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(sd.to_dict(), f, indent=2, ensure_ascii=False)
    logger.info(f"谱密度已保存到: {path}")


def load_spectral_density(path: Union[str, Path]) -> SpectralDensity:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    return SpectralDensity.from_dict(data, name=path.stem)


def wscp_density(cutoff: float = WSCP_CUTOFF) -> SpectralDensity:
    """WSCP 色素蛋白的结构化谱密度 J_W：三个 log-normal 背景加三个 Lorentz 峰"""
    lognormal = (
        LogNormalTerm(0.39, 0.4, 26.0),
        LogNormalTerm(0.23, 0.25, 51.0),
        LogNormalTerm(0.23, 0.2, 85.0),
    )
    lorentzian = (
        LorentzianTerm(0.0173, 5.0, 181.0),
        LorentzianTerm(0.0246, 5.0, 221.0),
        LorentzianTerm(0.0182, 5.0, 240.0),
    )
    return SpectralDensity(lognormal, lorentzian, cutoff, name="wscp")


def wscp_background_density(cutoff: float = WSCP_CUTOFF) -> SpectralDensity:
    """J'_W：只含背景的 WSCP 谱密度"""
    return SpectralDensity(wscp_density(cutoff).lognormal_terms, (), cutoff, name="wscp-background")


def reorganization_energy(sd: SpectralDensity) -> float:
    """∫_0^{ω_c} J(ω)/ω dω"""
    value, _ = adaptive_integrate(lambda w: sd.density_over_omega(w), sd.breakpoints())
    return float(value)


def tail_reorganization(sd: SpectralDensity, upper_factor: float = 200.0) -> float:
    """截断频率以上被丢掉的 ∫ J(ω)/ω dω（积分到 upper_factor·ω_c）"""
    upper = upper_factor * sd.cutoff
    pts = [sd.cutoff * k for k in (1.0, 1.5, 2.0, 4.0, 10.0, 40.0)] + [upper]
    value, _ = adaptive_integrate(lambda w: sd.density_over_omega(w), clean_breakpoints(pts, sd.cutoff, upper))
    return float(value)


def bose_einstein(omega: ArrayLike, beta: float):
    """平均热占据数 n_ω(β) = 1/(e^{βω} − 1)，β = inf 时为 0"""
    w = np.asarray(omega, dtype=float)
    if math.isinf(beta):
        out = np.zeros_like(w)
    else:
        with np.errstate(over="ignore", divide="ignore"):
            out = 1.0 / np.expm1(beta * w)
    return _restore_shape(out, omega)


@dataclass(frozen=True)
class ThermalizedSD:
    """
    温度相关谱密度 J_β(ω) = sign(ω) J(|ω|) (1 + coth(βω/2)) / 2，支撑 [−ω_c, ω_c]

    ω > 0 时等于 J(ω)(1 + n_ω)，ω < 0 时等于 J(|ω|) n_|ω|，
    ω = 0 处取连续极限 η k_B T。
    """
    base: SpectralDensity
    temperature: float

    def __post_init__(self):
        if not math.isfinite(self.temperature) or self.temperature < 0:
            raise DomainError(f"temperature must be >= 0 K, got {self.temperature}")

    @property
    def beta(self) -> float:
        return temperature_to_beta(self.temperature)

    def __call__(self, omega: ArrayLike):
        w = _as_array(omega)
        out = np.zeros_like(w, dtype=float)
        inside = np.abs(w) <= self.base.cutoff
        pos = inside & (w > 0)
        out[pos] = np.asarray(self.base(w[pos])) * (1.0 + np.asarray(bose_einstein(w[pos], self.beta)))
        if self.temperature > 0:
            neg = inside & (w < 0)
            absw = -w[neg]
            out[neg] = np.asarray(self.base(absw)) * np.asarray(bose_einstein(absw, self.beta))
            out[w == 0] = self.base.low_frequency_slope * K_B_CM * self.temperature
        return _restore_shape(out, omega)

    def support(self) -> Tuple[float, float]:
        if self.temperature == 0:
            return 0.0, self.base.cutoff
        return -self.base.cutoff, self.base.cutoff

    def breakpoints(self) -> np.ndarray:
        base_pts = self.base.breakpoints()
        if self.temperature == 0:
            return base_pts
        return clean_breakpoints(np.concatenate((-base_pts, base_pts)), -self.base.cutoff, self.base.cutoff)

    def total_mass(self) -> float:
        value, _ = adaptive_integrate(lambda w: self(w), self.breakpoints())
        return float(value)

    def correlation_function(self, times: ArrayLike, abs_tol: float = 1e-11) -> np.ndarray:
        """S(t) = ∫_{−ω_c}^{ω_c} J_β(ω) e^{−iωt} dω"""
        phases = np.atleast_1d(ps_to_phase(np.asarray(times, dtype=float)))
        lo, hi = self.support()
        pts = list(self.breakpoints())
        if phases.size:
            pts += oscillation_breakpoints(lo, hi, float(np.max(phases)))
        value, _ = adaptive_integrate(
            lambda w: np.asarray(self(w))[:, None] * np.exp(-1j * np.outer(w, phases)),
            clean_breakpoints(pts, lo, hi),
            abs_tol=abs_tol,
        )
        return np.asarray(value)


def thermalize(sd: SpectralDensity, temperature: float) -> ThermalizedSD:
    """构造温度 T (K) 下的 J_β；T < 0 抛出 DomainError"""
    tsd = ThermalizedSD(sd, float(temperature))
    logger.debug(f"热化谱密度: T={temperature} K, 支撑 {tsd.support()}")
    return tsd


def correlation_function(sd: SpectralDensity, temperature: float, times: ArrayLike, abs_tol: float = 1e-11) -> np.ndarray:
    """
    环境双时关联函数

    S(t) = ∫_0^{ω_c} J(ω) [e^{−iωt}(1 + n_ω) + e^{iωt} n_ω] dω
         = ∫ J(ω) [coth(βω/2) cos(ωt) − i sin(ωt)] dω

    Args:
        sd: 谱密度
        temperature: 温度 (K)
        times: 时间网格 (ps)，要求非负
        abs_tol: 绝对容差

    Returns:
        复数数组 S(t)
    """
    if temperature < 0:
        raise DomainError(f"temperature must be >= 0 K, got {temperature}")
    t = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(t < 0):
        raise DomainError("correlation times must be non-negative")
    phases = ps_to_phase(t)
    beta = temperature_to_beta(temperature)

    def integrand(w: np.ndarray) -> np.ndarray:
        j = np.asarray(sd(w))
        thermal = j * (1.0 + 2.0 * np.asarray(bose_einstein(w, beta)))
        arg = np.outer(w, phases)
        return thermal[:, None] * np.cos(arg) - 1j * j[:, None] * np.sin(arg)

    pts = list(sd.breakpoints())
    if phases.size:
        pts += oscillation_breakpoints(0.0, sd.cutoff, float(np.max(phases)))
    value, error = adaptive_integrate(integrand, clean_breakpoints(pts, 0.0, sd.cutoff), abs_tol=abs_tol)
    logger.debug(f"关联函数积分误差估计: {error:.3e}")
    return np.asarray(value)
