"""
链诊断 - 模拟前的估计工具

这个模块负责:
1. 标准链映射下链振子的热占据数 ⟨c_n†c_n⟩_β（与 T-TEDOPA 的真空初态对比）
2. 单激发量子行走，估计在 t_max 内不受链端反射影响的最短链长
3. 沿链递减的局域维数方案 d'(n)
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import eigh_tridiagonal

from chain_mapping import ChainCoefficients, asymptotic_limits
from errors import ChainLengthError, DomainError, LinearAlgebraError
from spectral_density import bose_einstein
from units import ps_to_phase, temperature_to_beta

logger = logging.getLogger(__name__)

DEFAULT_RETURN_THRESHOLD = 1e-6
DEFAULT_LENGTH_CAP = 2000
DEFAULT_LENGTH_FLOOR = 2
DEFAULT_WALK_STEP = 1e-3  # ps
MODE_FLOOR = 1e-12
DEFAULT_SAFETY_FACTOR = 4.0


@dataclass
class OccupationProfile:
    """链上每个振子的平均热占据数"""
    occupations: np.ndarray
    temperature: float
    normal_modes: np.ndarray

    def __len__(self) -> int:
        return int(self.occupations.size)

    @property
    def max_occupation(self) -> float:
        return float(np.max(self.occupations)) if self.occupations.size else 0.0


@dataclass
class WalkProfile:
    """单激发量子行走的振幅 α_n(t)"""
    times: np.ndarray
    amplitudes: np.ndarray  # (时间, 格点)

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norms(self) -> np.ndarray:
        return np.sum(self.probabilities, axis=1)

    def arrival_time(self, site: int, threshold: float = 1e-3) -> Optional[float]:
        """|α_site(t)|² 首次超过 threshold 的时间 (ps)；在网格内未到达则返回 None"""
        above = np.nonzero(self.probabilities[:, site] > threshold)[0]
        if above.size == 0:
            return None
        return float(self.times[above[0]])


def _padded(coeffs: ChainCoefficients, m: int) -> Tuple[np.ndarray, np.ndarray]:
    """取前 m 个系数，不足部分用支撑决定的渐近值补齐"""
    if m <= len(coeffs):
        return coeffs.omegas[:m], coeffs.kappas[:m]
    omega_inf, kappa_inf = asymptotic_limits(coeffs)
    extra = m - len(coeffs)
    omegas = np.concatenate((coeffs.omegas, np.full(extra, omega_inf)))
    kappas = np.concatenate((coeffs.kappas, np.full(extra, kappa_inf)))
    return omegas, kappas


def _tridiagonal_modes(diagonal: np.ndarray, off_diagonal: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    try:
        return eigh_tridiagonal(diagonal, off_diagonal)
    except np.linalg.LinAlgError as e:
        raise LinearAlgebraError(f"tridiagonal eigenproblem of size {diagonal.size} failed: {e}") from e


def _walk_modes(coeffs: ChainCoefficients, m: int) -> Tuple[np.ndarray, np.ndarray]:
    omegas, kappas = _padded(coeffs, m)
    if m == 1:
        return omegas[:1].copy(), np.ones((1, 1))
    return _tridiagonal_modes(omegas, kappas[1:m])


def quantum_walk(coeffs: ChainCoefficients, m: int, times: np.ndarray) -> WalkProfile:
    """
    H_qw 下从 |n=0⟩ 出发的单激发演化

    Args:
        coeffs: 链系数
        m: 行走所用的格点数 M
        times: 时间网格 (ps)

    Returns:
        WalkProfile
    """
    if m < 1:
        raise DomainError(f"walk length must be >= 1, got {m}")
    times = np.asarray(times, dtype=float)
    energies, vecs = _walk_modes(coeffs, m)
    phases = np.exp(-1j * np.outer(ps_to_phase(times), energies))
    amplitudes = (phases * vecs[0][None, :]) @ vecs.T
    return WalkProfile(times=times, amplitudes=amplitudes)


def return_probability(coeffs: ChainCoefficients, m: int, times: np.ndarray) -> np.ndarray:
    """|α_0(t)|²，只用第一分量，避免构造全部振幅"""
    energies, vecs = _walk_modes(coeffs, m)
    weights = vecs[0] ** 2
    alpha0 = np.exp(-1j * np.outer(ps_to_phase(np.asarray(times, float)), energies)) @ weights
    return np.abs(alpha0) ** 2


def walk_time_grid(t_max: float, step: float = DEFAULT_WALK_STEP) -> np.ndarray:
    """[0, t_max] 上步长为 step 的网格；较小 t_max 的网格是较大 t_max 网格的子集"""
    return np.arange(int(math.ceil(t_max / step)) + 1) * step


def _next_length(m: int) -> int:
    return m + max(1, int(math.ceil(m / 8)))


def estimate_chain_length(
    coeffs: ChainCoefficients,
    t_max: float,
    return_threshold: float = DEFAULT_RETURN_THRESHOLD,
    floor: int = DEFAULT_LENGTH_FLOOR,
    cap: int = DEFAULT_LENGTH_CAP,
    step: float = DEFAULT_WALK_STEP,
) -> int:
    """
    量子行走链长估计

    依次增大 M，比较长度 M 与 2M 的链在 [0, t_max] 内第一个格点的返回概率；
    二者之差始终低于 return_threshold 时，说明长度 M 的链端反射尚未回到系统。

    Args:
        coeffs: 链系数（不足的部分用渐近值补齐）
        t_max: 模拟时长 (ps)
        return_threshold: 允许的返回概率偏差
        floor: 最小链长
        cap: 链长上限
        step: 时间采样间隔 (ps)

    Returns:
        估计的链长 N

    Raises:
        ChainLengthError: 到 cap 仍不满足
    """
    if t_max < 0:
        raise DomainError(f"t_max must be >= 0, got {t_max}")
    if not 0 < return_threshold < 1:
        raise DomainError(f"return_threshold must lie in (0, 1), got {return_threshold}")
    if t_max == 0:
        return floor

    times = walk_time_grid(t_max, step)
    m = floor
    last = m
    while m <= cap:
        last = m
        deviation = np.max(np.abs(return_probability(coeffs, m, times) - return_probability(coeffs, 2 * m, times)))
        logger.debug(f"链长 M={m}: 返回概率偏差 {deviation:.3e}")
        if deviation < return_threshold:
            logger.info(f"估计链长 N={m} (t_max={t_max} ps, 阈值 {return_threshold:g})")
            return m
        m = _next_length(m)
    raise ChainLengthError(last, cap)


def thermal_occupation(coeffs: ChainCoefficients, temperature: float, n_sites: Optional[int] = None) -> OccupationProfile:
    """
    标准链映射下 N 个振子的热占据数

    对三对角矩阵 A 做对角化得到简正模 ω'_k，按 Bose-Einstein 分布占据后映射回链格点：
    ⟨c_n†c_n⟩_β = Σ_k (U_{k,n})² ⟨b_k†b_k⟩_β

    Raises:
        DomainError: T > 0 时存在 ω' ≤ 0 的简正模
    """
    if temperature < 0:
        raise DomainError(f"temperature must be >= 0 K, got {temperature}")
    n = len(coeffs) if n_sites is None else n_sites
    if n < 1 or n > len(coeffs):
        raise DomainError(f"need 1 <= N <= {len(coeffs)}, got {n}")
    if n == 1:
        modes, vecs = coeffs.omegas[:1].copy(), np.ones((1, 1))
    else:
        modes, vecs = _tridiagonal_modes(coeffs.omegas[:n], coeffs.kappas[1:n])

    if temperature == 0:
        return OccupationProfile(np.zeros(n), 0.0, modes)
    if np.min(modes) <= MODE_FLOOR:
        raise DomainError(f"normal mode {np.min(modes):.3e} cm^-1 <= 0: thermal state undefined")
    occ_modes = np.asarray(bose_einstein(modes, temperature_to_beta(temperature)))
    occupations = (vecs ** 2) @ occ_modes
    return OccupationProfile(occupations, float(temperature), modes)


def minimum_local_dimension(profile: OccupationProfile, safety_factor: float = DEFAULT_SAFETY_FACTOR) -> List[int]:
    """由平均占据数给出的局域维数下限 max(2, ⌈s·⟨n⟩⌉ + 1)"""
    return [max(2, int(math.ceil(safety_factor * occ)) + 1) for occ in profile.occupations]


def local_dimension(d_max: int, n_sites: int, n: int) -> int:
    """d'(n) = round(d_max − n (d_max − 2)/N)，不小于 2"""
    if d_max < 2:
        raise DomainError(f"d_max must be >= 2, got {d_max}")
    if n_sites < 1:
        raise DomainError(f"N must be >= 1, got {n_sites}")
    value = d_max - n * (d_max - 2) / n_sites
    return max(2, int(math.floor(value + 0.5)))


def local_dimension_schedule(d_max: int, n_sites: int) -> List[int]:
    """n = 0..N−1 的局域维数，单调不增"""
    return [local_dimension(d_max, n_sites, n) for n in range(n_sites)]
