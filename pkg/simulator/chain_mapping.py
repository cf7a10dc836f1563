"""
链映射 - 正交多项式递推系数与链哈密顿量

这个模块负责:
1. 对测度 dμ = J(ω)dω 或 dμ_β = J_β(ω)dω 做复合 Gauss-Legendre 离散化
2. 在离散测度上做完全重正交化的 Lanczos (Stieltjes) 过程，得到 ω_n, κ_n
3. 组装系统 + 振子链的最近邻哈密顿量项

正交多项式 p_n 和幺正变换 U_n(ω) 只隐式出现，从不显式构造。
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import ChainInstabilityError, DomainError
from models import (
    COUPLING_A,
    DEPHASING,
    ModelSpec,
    annihilation,
    displacement_x,
    number,
)
from observables import SiteLayout
from quadrature import DEFAULT_ORDER, adaptive_integrate, clean_breakpoints, composite_rule

logger = logging.getLogger(__name__)

NODES_PER_SITE = 20
MIN_NODES = 4000
MAX_REFINEMENTS = 3
# β_n 相对于支撑宽度平方的下限，低于此值视为失去正定性
POSITIVITY_FLOOR = 1e-12


@dataclass(frozen=True)
class WeightMeasure:
    """任意权函数定义的测度，用于测试权（例如 [−1, 1] 上的常数权）"""
    density: Callable[[np.ndarray], np.ndarray]
    lower: float
    upper: float
    points: Tuple[float, ...] = ()
    name: str = "weight"

    def __call__(self, omega):
        return self.density(np.asarray(omega, dtype=float))

    def support(self) -> Tuple[float, float]:
        return self.lower, self.upper

    def breakpoints(self) -> np.ndarray:
        return clean_breakpoints(self.points, self.lower, self.upper)


def _describe_measure(measure: Any) -> Dict[str, Any]:
    lo, hi = measure.support()
    info: Dict[str, Any] = {"support": [float(lo), float(hi)]}
    base = getattr(measure, "base", None)
    if base is not None:
        info["measure"] = getattr(base, "name", "custom")
        info["temperature"] = float(measure.temperature)
        info["thermalized"] = True
    else:
        info["measure"] = getattr(measure, "name", "custom")
        info["temperature"] = None
        info["thermalized"] = False
    return info


@dataclass(eq=False)
class ChainCoefficients:
    """
    链系数：格点能量 ω_n 与耦合 κ_n (cm^-1)

    kappas[0] 是系统-链耦合 κ_0 = sqrt(∫dμ)，kappas[n] (n ≥ 1) 是 n−1 与 n 之间的最近邻耦合。
    """
    omegas: np.ndarray
    kappas: np.ndarray
    descriptor: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.omegas = np.asarray(self.omegas, dtype=float)
        self.kappas = np.asarray(self.kappas, dtype=float)
        if self.omegas.shape != self.kappas.shape or self.omegas.ndim != 1:
            raise DomainError("omegas and kappas must be 1-D arrays of equal length")

    def __len__(self) -> int:
        return int(self.omegas.size)

    @property
    def system_coupling(self) -> float:
        return float(self.kappas[0])

    def support(self) -> Tuple[float, float]:
        lo, hi = self.descriptor.get("support", (None, None))
        if lo is None or hi is None:
            raise DomainError("coefficients carry no support information")
        return float(lo), float(hi)

    def truncated(self, n: int) -> "ChainCoefficients":
        if n > len(self):
            raise DomainError(f"requested {n} sites but only {len(self)} coefficients are available")
        return ChainCoefficients(self.omegas[:n].copy(), self.kappas[:n].copy(), dict(self.descriptor))

    def with_system_coupling(self, kappa0: float) -> "ChainCoefficients":
        kappas = self.kappas.copy()
        kappas[0] = kappa0
        return ChainCoefficients(self.omegas.copy(), kappas, dict(self.descriptor))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "omegas": [float(x) for x in self.omegas],
            "kappas": [float(x) for x in self.kappas],
            "descriptor": self.descriptor,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ChainCoefficients":
        try:
            return cls(np.asarray(data["omegas"], float), np.asarray(data["kappas"], float), dict(data.get("descriptor", {})))
        except (KeyError, TypeError, ValueError) as e:
            raise DomainError(f"malformed chain coefficient document: {e}") from e

    def checksum(self) -> str:
        text = ",".join(f"{x:.17g}" for x in np.concatenate((self.omegas, self.kappas)))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


def save_coefficients(coeffs: ChainCoefficients, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(coeffs.to_dict(), f, indent=2, ensure_ascii=False)


def load_coefficients(path: Union[str, Path]) -> ChainCoefficients:
    with open(path, "r", encoding="utf-8") as f:
        return ChainCoefficients.from_dict(json.load(f))


def discretize_measure(measure: Any, n_nodes: int, order: int = DEFAULT_ORDER) -> Tuple[np.ndarray, np.ndarray]:
    """
    测度的复合 Gauss-Legendre 离散化

    Returns:
        (节点, 质量)，质量 = 求积权重 × 密度
    """
    nodes, weights = composite_rule(measure.breakpoints(), n_nodes, order)
    density = np.asarray(measure(nodes), dtype=float)
    if np.any(density < 0):
        raise DomainError("measure density is negative on its support")
    return nodes, weights * density


def lanczos_coefficients(nodes: np.ndarray, masses: np.ndarray, n_sites: int, scale: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    离散测度上乘法算子 f(x) → x f(x) 的 Lanczos 三对角化（完全重正交化）

    Args:
        nodes: 离散节点
        masses: 节点质量（非负）
        n_sites: 需要的系数个数 N
        scale: 支撑宽度的平方，用于 β_n 的正定性判据

    Returns:
        (alphas, kappas)，kappas[0] 为测度总质量的平方根

    Raises:
        DomainError: 测度质量为零
        ChainInstabilityError: 递推中 β_n ≤ 0
    """
    total = float(np.sum(masses))
    if not total > 0:
        raise DomainError("measure has zero mass")
    q = np.sqrt(masses)
    kappa0 = math.sqrt(total)
    q = q / np.linalg.norm(q)

    m = nodes.size
    basis = np.zeros((m, n_sites))
    alphas = np.zeros(n_sites)
    kappas = np.zeros(n_sites)
    kappas[0] = kappa0
    q_prev = np.zeros(m)
    beta_prev = 0.0
    floor = POSITIVITY_FLOOR * scale

    for n in range(n_sites):
        basis[:, n] = q
        w = nodes * q
        alpha = float(q @ w)
        alphas[n] = alpha
        if n == n_sites - 1:
            break
        w = w - alpha * q - beta_prev * q_prev
        # 两遍 Gram-Schmidt 完全重正交化
        for _ in range(2):
            w -= basis[:, : n + 1] @ (basis[:, : n + 1].T @ w)
        beta = float(np.linalg.norm(w))
        if not beta ** 2 > floor:
            raise ChainInstabilityError(n + 1, beta ** 2)
        kappas[n + 1] = beta
        q_prev, q = q, w / beta
        beta_prev = beta
    return alphas, kappas


def recurrence_coefficients(
    measure: Any,
    n_sites: int,
    nodes_per_site: int = NODES_PER_SITE,
    min_nodes: int = MIN_NODES,
    order: int = DEFAULT_ORDER,
) -> ChainCoefficients:
    """
    测度的递推系数 {ω_n}, {κ_n}

    离散化节点数至少为 nodes_per_site·N；若递推失去正定性，
    先把离散化加密（最多 MAX_REFINEMENTS 次），仍失败才报错。

    Args:
        measure: ThermalizedSD、SpectralDensity 或 WeightMeasure
        n_sites: 链长 N (≥ 1)
        nodes_per_site: 每个格点的离散节点数
        min_nodes: 最少节点数
        order: 每个面板的 Gauss-Legendre 阶数

    Returns:
        ChainCoefficients
    """
    if n_sites < 1:
        raise DomainError(f"chain length must be >= 1, got {n_sites}")
    lo, hi = measure.support()
    if not (math.isfinite(lo) and math.isfinite(hi) and hi > lo):
        raise DomainError(f"measure must have finite support, got [{lo}, {hi}]")
    scale = (hi - lo) ** 2

    n_nodes = max(nodes_per_site * n_sites, min_nodes)
    last_error: Optional[ChainInstabilityError] = None
    for attempt in range(MAX_REFINEMENTS + 1):
        nodes, masses = discretize_measure(measure, n_nodes, order)
        try:
            alphas, kappas = lanczos_coefficients(nodes, masses, n_sites, scale)
        except ChainInstabilityError as e:
            last_error = e
            logger.warning(f"递推在第 {e.index} 个系数失去正定性，加密离散化到 {2 * n_nodes} 个节点")
            n_nodes *= 2
            continue
        descriptor = _describe_measure(measure)
        descriptor["nodes"] = int(nodes.size)
        logger.info(f"链系数计算完成: N={n_sites}, 节点数={nodes.size}, κ_0={kappas[0]:.6f} cm^-1")
        return ChainCoefficients(alphas, kappas, descriptor)
    raise last_error


def jacobi_matrix(coeffs: ChainCoefficients, n: Optional[int] = None) -> np.ndarray:
    """三对角 Jacobi 矩阵，对角为 ω_0..ω_{n−1}，次对角为 κ_1..κ_{n−1}"""
    n = len(coeffs) if n is None else n
    mat = np.diag(coeffs.omegas[:n])
    off = coeffs.kappas[1:n]
    mat += np.diag(off, 1) + np.diag(off, -1)
    return mat


def asymptotic_limits(coeffs: ChainCoefficients) -> Tuple[float, float]:
    """大 n 极限 (ω_∞, κ_∞) = ((a+b)/2, (b−a)/4)"""
    lo, hi = coeffs.support()
    return 0.5 * (lo + hi), 0.25 * (hi - lo)


def moments_from_jacobi(coeffs: ChainCoefficients, k_max: int) -> np.ndarray:
    """κ_0² ⟨e_0|T^k|e_0⟩，k = 0..k_max"""
    t = jacobi_matrix(coeffs)
    v = np.zeros(len(coeffs))
    v[0] = 1.0
    out = np.zeros(k_max + 1)
    vec = v.copy()
    for k in range(k_max + 1):
        out[k] = coeffs.kappas[0] ** 2 * float(v @ vec)
        vec = t @ vec
    return out


def measure_moments(measure: Any, k_max: int) -> np.ndarray:
    """∫ ω^k dμ(ω)，k = 0..k_max，自适应积分"""
    powers = np.arange(k_max + 1)
    lo, hi = measure.support()
    s = max(abs(lo), abs(hi))
    # 以 ω/s 的幂积分，各分量量级相近，便于统一的误差判据
    value, _ = adaptive_integrate(
        lambda w: np.asarray(measure(w))[:, None] * (w[:, None] / s) ** powers[None, :],
        measure.breakpoints(),
        abs_tol=0.0,
        rel_tol=1e-13,
    )
    return np.real(np.asarray(value)) * s ** powers.astype(float)


@dataclass
class ChainHamiltonianSpec:
    """
    系统 + 链的最近邻哈密顿量

    sites 按 MPS 顺序排列；bond_terms[i] 作用在格点 (i, i+1) 上，
    单格点项（H_S、ω_n c_n†c_n）已分摊到相邻的键上。
    """
    coefficients: List[ChainCoefficients]
    system_coupling_operator: str
    local_dims: List[int]
    site_labels: List[str]
    system_sites: List[int]
    chain_sites: Dict[str, List[int]]
    bond_terms: List[np.ndarray]
    model: ModelSpec

    @property
    def n_sites(self) -> int:
        return len(self.local_dims)

    @property
    def layout(self) -> SiteLayout:
        return SiteLayout(
            kind=self.model.kind,
            local_dims=tuple(self.local_dims),
            system_sites=tuple(self.system_sites),
            chain_sites={k: tuple(v) for k, v in self.chain_sites.items()},
        )

    def chain_site(self, chain: str, n: int) -> int:
        try:
            return self.chain_sites[chain][n]
        except (KeyError, IndexError):
            raise DomainError(f"no chain site {chain}{n}")


def _site_operators(model: ModelSpec, coeffs: Sequence[ChainCoefficients], dims: Sequence[int]):
    """按 MPS 顺序生成格点标签、单格点项和键项"""
    n_chain = len(dims)
    if model.kind == DEPHASING:
        labels = ["S"] + [f"c{n}" for n in range(n_chain)]
        phys = [2] + list(dims)
        onsite = [model.system_hamiltonian()] + [coeffs[0].omegas[n] * number(dims[n]) for n in range(n_chain)]
        bonds = [coeffs[0].kappas[0] * np.kron(COUPLING_A, displacement_x(dims[0]))]
        for n in range(1, n_chain):
            a_prev, a_next = annihilation(dims[n - 1]), annihilation(dims[n])
            hop = np.kron(a_prev, a_next.conj().T)
            bonds.append(coeffs[0].kappas[n] * (hop + hop.conj().T))
        system_sites = [0]
        chains = {"main": list(range(1, n_chain + 1))}
        return labels, phys, onsite, bonds, system_sites, chains

    left, right = coeffs
    labels = [f"cL{n}" for n in reversed(range(n_chain))] + ["SL", "SR"] + [f"cR{n}" for n in range(n_chain)]
    phys = list(reversed(dims)) + [2, 2] + list(dims)
    onsite = (
        [left.omegas[n] * number(dims[n]) for n in reversed(range(n_chain))]
        + [np.zeros((2, 2), dtype=complex), np.zeros((2, 2), dtype=complex)]
        + [right.omegas[n] * number(dims[n]) for n in range(n_chain)]
    )
    bonds = []
    for n in reversed(range(1, n_chain)):
        a_outer, a_inner = annihilation(dims[n]), annihilation(dims[n - 1])
        hop = np.kron(a_outer.conj().T, a_inner)
        bonds.append(left.kappas[n] * (hop + hop.conj().T))
    bonds.append(left.kappas[0] * np.kron(displacement_x(dims[0]), COUPLING_A))
    bonds.append(model.system_hamiltonian())
    bonds.append(right.kappas[0] * np.kron(COUPLING_A, displacement_x(dims[0])))
    for n in range(1, n_chain):
        a_prev, a_next = annihilation(dims[n - 1]), annihilation(dims[n])
        hop = np.kron(a_prev, a_next.conj().T)
        bonds.append(right.kappas[n] * (hop + hop.conj().T))
    system_sites = [n_chain, n_chain + 1]
    chains = {
        "L": [n_chain - 1 - n for n in range(n_chain)],
        "R": [n_chain + 2 + n for n in range(n_chain)],
    }
    return labels, phys, onsite, bonds, system_sites, chains


def assemble_chain(
    coeffs: Union[ChainCoefficients, Sequence[ChainCoefficients]],
    model: ModelSpec,
    local_dims: Sequence[int],
) -> ChainHamiltonianSpec:
    """
    组装链哈密顿量：H_S、κ_0 A_S (c_0 + c_0†)、ω_n c_n†c_n、κ_n (c_n†c_{n−1} + H.c.)

    Args:
        coeffs: 一组链系数（退相干）或 (左, 右) 两组（二聚体）
        model: 模型
        local_dims: 每条链第 n 个振子的截断维数 d(n)，长度即链长 N

    Returns:
        ChainHamiltonianSpec
    """
    coeff_list = [coeffs] if isinstance(coeffs, ChainCoefficients) else list(coeffs)
    expected = 1 if model.kind == DEPHASING else 2
    if len(coeff_list) != expected:
        raise DomainError(f"{model.kind} model needs {expected} coefficient set(s), got {len(coeff_list)}")
    dims = [int(d) for d in local_dims]
    if not dims:
        raise DomainError("chain must have at least one site")
    for n, d in enumerate(dims):
        if d < 2:
            raise DomainError(f"local dimension at site {n} must be >= 2, got {d}")
    for c in coeff_list:
        if len(c) < len(dims):
            raise DomainError(f"need {len(dims)} chain coefficients, got {len(c)}")

    labels, phys, onsite, bonds, system_sites, chains = _site_operators(model, coeff_list, dims)

    # 单格点项分摊到键上：端点格点整项，内部格点各一半
    n_sites = len(phys)
    terms = [np.array(b, dtype=complex) for b in bonds]
    for j, h in enumerate(onsite):
        if j == 0:
            shares = [(0, 1.0)]
        elif j == n_sites - 1:
            shares = [(j - 1, 1.0)]
        else:
            shares = [(j - 1, 0.5), (j, 0.5)]
        for bond, weight in shares:
            left_dim, right_dim = phys[bond], phys[bond + 1]
            if bond == j:
                terms[bond] += weight * np.kron(h, np.eye(right_dim))
            else:
                terms[bond] += weight * np.kron(np.eye(left_dim), h)

    tag = "A_S=(1+sigma_z)/2" if model.kind == DEPHASING else "A_S^L, A_S^R=(1+sigma_z)/2 per site"
    logger.debug(f"链哈密顿量组装完成: {n_sites} 个格点, 维数 {phys}")
    return ChainHamiltonianSpec(
        coefficients=coeff_list,
        system_coupling_operator=tag,
        local_dims=phys,
        site_labels=labels,
        system_sites=system_sites,
        chain_sites=chains,
        bond_terms=terms,
        model=model,
    )
