"""
TEBD 引擎 - 矩阵乘积态表示与二阶 Trotter 时间演化

这个模块负责:
1. 用右正则张量 B_n 加 Schmidt 值 Λ_n 表示系统 + 链的纯态 (MPSState)
2. 构造真空链初态
3. 偶键/奇键交替的二阶 Trotter 扫描，每个两格点门之后 SVD 截断
4. 采样观测量、累计截断权重

张量指标顺序为 (左键, 物理, 右键)。singular_values[k] 是格点 k−1 与 k 之间的 Schmidt 值，
两端固定为 [1.0]。两格点更新采用不需要除以 Λ 的形式，同一层中互不相交的键可以并行更新。
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from chain_mapping import ChainHamiltonianSpec
from errors import DomainError, LinearAlgebraError, NumericalError
from models import ModelSpec
from observables import TimeSeries, evaluate_local, parse_observable, resolve_sites
from units import ps_to_phase

logger = logging.getLogger(__name__)

DEFAULT_DT = 2.5e-4  # ps
DEFAULT_CHI_MONOMER = 50
DEFAULT_CHI_DIMER = 180
DEFAULT_SVD_CUTOFF = 1e-12
UNITARITY_TOLERANCE = 1e-12


@dataclass
class EvolutionConfig:
    """时间演化参数：dt 与 t_max 单位为 ps，svd_cutoff 为相对截断权重"""
    dt: float = DEFAULT_DT
    t_max: float = 0.3
    chi_max: int = DEFAULT_CHI_MONOMER
    svd_cutoff: float = DEFAULT_SVD_CUTOFF
    observables: Tuple[str, ...] = ("coherence",)
    stride: int = 1
    discarded_budget: float = 1e-6
    threads: int = 1

    def __post_init__(self):
        self.observables = tuple(self.observables)
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise DomainError(f"dt must be > 0, got {self.dt}")
        if not self.t_max >= 0:
            raise DomainError(f"t_max must be >= 0, got {self.t_max}")
        if self.chi_max < 1:
            raise DomainError(f"chi_max must be >= 1, got {self.chi_max}")
        if not 0 <= self.svd_cutoff < 1:
            raise DomainError(f"svd_cutoff must lie in [0, 1), got {self.svd_cutoff}")
        if self.stride < 1:
            raise DomainError(f"stride must be >= 1, got {self.stride}")
        if self.threads < 1:
            raise DomainError(f"threads must be >= 1, got {self.threads}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["observables"] = list(self.observables)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EvolutionConfig":
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data}
        return cls(**known)


def truncation_rank(s: np.ndarray, chi_max: int, cutoff: float) -> int:
    """保留 min(chi_max, 使丢弃权重不超过 cutoff 的最小秩) 个奇异值，至少保留一个"""
    weights = s ** 2
    total = float(np.sum(weights))
    if total == 0:
        return 1
    # tail[k] = Σ_{j ≥ k} s_j² / Σ s²
    tail = np.concatenate((np.cumsum(weights[::-1])[::-1], [0.0])) / total
    keep = int(np.argmax(tail <= cutoff))
    return max(1, min(chi_max, keep))


def _svd(matrix: np.ndarray):
    try:
        return scipy.linalg.svd(matrix, full_matrices=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        logger.debug("gesdd 未收敛，改用 gesvd")
    try:
        return scipy.linalg.svd(matrix, full_matrices=False, lapack_driver="gesvd")
    except np.linalg.LinAlgError as e:
        raise LinearAlgebraError(f"SVD of a {matrix.shape[0]}x{matrix.shape[1]} bond matrix failed with gesdd and gesvd: {e}") from e


class MPSState:
    """
    右正则 MPS

    tensors[n] 形状为 (χ_n, d_n, χ_{n+1})，singular_values 长度为 L+1。
    """

    canonical_form = "right"

    def __init__(self, tensors: Sequence[np.ndarray], singular_values: Sequence[np.ndarray]):
        self.tensors: List[np.ndarray] = [np.asarray(t, dtype=complex) for t in tensors]
        self.singular_values: List[np.ndarray] = [np.asarray(s, dtype=float) for s in singular_values]
        if len(self.singular_values) != len(self.tensors) + 1:
            raise DomainError("need one Schmidt vector per bond plus the two boundaries")
        if self.tensors[0].shape[0] != 1 or self.tensors[-1].shape[2] != 1:
            raise DomainError("boundary bonds must have dimension 1")
        self.truncation_log: List[float] = []
        self.discarded_weight = 0.0

    @classmethod
    def product_state(cls, vectors: Sequence[np.ndarray]) -> "MPSState":
        tensors = []
        for v in vectors:
            v = np.asarray(v, dtype=complex)
            tensors.append((v / np.linalg.norm(v)).reshape(1, -1, 1))
        return cls(tensors, [np.ones(1) for _ in range(len(tensors) + 1)])

    def __len__(self) -> int:
        return len(self.tensors)

    @property
    def physical_dims(self) -> List[int]:
        return [t.shape[1] for t in self.tensors]

    @property
    def bond_dims(self) -> List[int]:
        return [t.shape[2] for t in self.tensors[:-1]]

    @property
    def max_bond_dim(self) -> int:
        return max(self.bond_dims, default=1)

    def copy(self) -> "MPSState":
        other = MPSState([t.copy() for t in self.tensors], [s.copy() for s in self.singular_values])
        other.truncation_log = list(self.truncation_log)
        other.discarded_weight = self.discarded_weight
        return other

    def site_rdm(self, i: int) -> np.ndarray:
        b = self.tensors[i]
        lam = self.singular_values[i]
        theta = lam[:, None, None] * b
        return np.tensordot(theta, theta.conj(), axes=([0, 2], [0, 2]))

    def two_site_theta(self, i: int) -> np.ndarray:
        theta = np.tensordot(self.tensors[i], self.tensors[i + 1], axes=(2, 0))
        return self.singular_values[i][:, None, None, None] * theta

    def pair_rdm(self, i: int) -> np.ndarray:
        theta = self.two_site_theta(i)
        d1, d2 = theta.shape[1], theta.shape[2]
        rho = np.tensordot(theta, theta.conj(), axes=([0, 3], [0, 3]))
        return rho.reshape(d1 * d2, d1 * d2)

    def reduced_density_matrix(self, sites: Sequence[int]) -> np.ndarray:
        sites = tuple(sites)
        if len(sites) == 1:
            return self.site_rdm(sites[0])
        if len(sites) == 2 and sites[1] == sites[0] + 1:
            return self.pair_rdm(sites[0])
        raise DomainError(f"reduced density matrix only for one site or two adjacent sites, got {sites}")

    def norm_squared(self) -> float:
        """完整收缩得到的 ⟨ψ|ψ⟩"""
        env = np.ones((1, 1), dtype=complex)
        for b in self.tensors:
            env = np.einsum("ab,asc,bsd->cd", env, b, b.conj())
        return float(np.real(env[0, 0]))

    def entanglement_entropy(self, bond: int) -> float:
        """格点 bond−1 与 bond 之间的 von Neumann 纠缠熵"""
        p = self.singular_values[bond] ** 2
        p = p[p > 1e-300]
        return float(-np.sum(p * np.log(p)))

    def to_dense(self) -> np.ndarray:
        psi = self.tensors[0]
        for b in self.tensors[1:]:
            psi = np.tensordot(psi, b, axes=(psi.ndim - 1, 0))
        return psi.reshape(-1)

    def apply_two_site_gate(self, i: int, gate: np.ndarray, chi_max: int, cutoff: float) -> float:
        """
        在格点 (i, i+1) 上作用两格点门并截断

        Returns:
            本次丢弃的相对权重
        """
        b1, b2 = self.tensors[i], self.tensors[i + 1]
        chi_l, d1 = b1.shape[0], b1.shape[1]
        d2, chi_r = b2.shape[1], b2.shape[2]
        bare = np.tensordot(b1, b2, axes=(2, 0))
        bare = np.tensordot(gate.reshape(d1, d2, d1, d2), bare, axes=([2, 3], [1, 2])).transpose(2, 0, 1, 3)
        theta = self.singular_values[i][:, None, None, None] * bare
        if not np.all(np.isfinite(theta)):
            raise NumericalError(f"non-finite tensor entries at bond ({i}, {i + 1})")

        x, s, y = _svd(theta.reshape(chi_l * d1, d2 * chi_r))
        keep = truncation_rank(s, chi_max, cutoff)
        total = float(np.sum(s ** 2))
        discarded = float(np.sum(s[keep:] ** 2)) / total if total > 0 else 0.0
        s = s[:keep]
        norm = float(np.linalg.norm(s))
        y = y[:keep].reshape(keep, d2, chi_r)

        self.tensors[i + 1] = y
        self.tensors[i] = np.tensordot(bare, y.conj(), axes=([2, 3], [1, 2])) / norm
        self.singular_values[i + 1] = s / norm
        return discarded


def init_vacuum(model: ModelSpec, ham: ChainHamiltonianSpec) -> MPSState:
    """
    真空初态：系统处于配置的纯态，每个振子处于 Fock |0⟩

    二聚体的 |+_D⟩ 在两个系统格点之间带有 Schmidt 秩 2，其余键维数均为 1。

    Raises:
        DomainError: 系统初态为混合态，或与哈密顿量布局不符
    """
    if model.kind != ham.model.kind:
        raise DomainError("model and chain Hamiltonian describe different systems")
    system_vec = model.initial_system_vector()
    dims = ham.local_dims
    vectors = []
    for d in dims:
        v = np.zeros(d, dtype=complex)
        v[0] = 1.0
        vectors.append(v)

    sys_sites = ham.system_sites
    if len(sys_sites) == 1:
        vectors[sys_sites[0]] = system_vec
        return MPSState.product_state(vectors)

    state = MPSState.product_state(vectors)
    left, right = sys_sites
    u, s, vh = np.linalg.svd(system_vec.reshape(2, 2))
    rank = max(1, int(np.sum(s > 1e-14 * s[0])))
    u, s, vh = u[:, :rank], s[:rank], vh[:rank]
    state.tensors[left] = (u * s[None, :]).reshape(1, 2, rank)
    state.tensors[right] = vh.reshape(rank, 2, 1)
    state.singular_values[right] = s / np.linalg.norm(s)
    return state


def bond_gate(h: np.ndarray, tau: float) -> np.ndarray:
    """exp(−i h τ)，h 为厄米的键哈密顿量，τ 为相位时间"""
    h = 0.5 * (h + h.conj().T)
    try:
        energies, vecs = np.linalg.eigh(h)
    except np.linalg.LinAlgError as e:
        raise LinearAlgebraError(f"bond Hamiltonian diagonalization failed: {e}") from e
    gate = (vecs * np.exp(-1j * energies * tau)[None, :]) @ vecs.conj().T
    deviation = float(np.linalg.norm(gate.conj().T @ gate - np.eye(gate.shape[0]), ord=2))
    if deviation > UNITARITY_TOLERANCE:
        raise NumericalError(f"gate unitarity violated: {deviation:.3e}")
    return gate


class GateSet:
    """一个 dt 对应的全部 Trotter 门：偶键半步与奇键整步"""

    def __init__(self, ham: ChainHamiltonianSpec, dt: float):
        self.dt = dt
        tau = ps_to_phase(dt)
        n_bonds = len(ham.bond_terms)
        self.even = list(range(0, n_bonds, 2))
        self.odd = list(range(1, n_bonds, 2))
        self.half = {i: bond_gate(ham.bond_terms[i], 0.5 * tau) for i in self.even}
        self.full = {i: bond_gate(ham.bond_terms[i], tau) for i in self.odd}


class TEBDEngine:
    """
    TEBD 时间演化

    一次演化独占自己的 MPSState；同一层内的键更新可用线程池并行，
    丢弃权重按键的顺序求和，结果与线程数无关。
    """

    def __init__(self, ham: ChainHamiltonianSpec, cfg: EvolutionConfig):
        self.ham = ham
        self.cfg = cfg
        self.logger = logging.getLogger(__name__)
        self._gates: Optional[GateSet] = None
        self.observables = [parse_observable(o) if isinstance(o, str) else o for o in cfg.observables]

    @property
    def gates(self) -> GateSet:
        if self._gates is None or self._gates.dt != self.cfg.dt:
            self._gates = GateSet(self.ham, self.cfg.dt)
        return self._gates

    def _apply_layer(self, state: MPSState, bonds: List[int], gates: Dict[int, np.ndarray], pool: Optional[ThreadPoolExecutor]) -> float:
        def update(i: int) -> float:
            return state.apply_two_site_gate(i, gates[i], self.cfg.chi_max, self.cfg.svd_cutoff)

        if pool is None:
            weights = [update(i) for i in bonds]
        else:
            weights = list(pool.map(update, bonds))
        return float(sum(weights))

    def step(self, state: MPSState, pool: Optional[ThreadPoolExecutor] = None) -> float:
        """一个二阶 Trotter 步：偶键 dt/2、奇键 dt、偶键 dt/2"""
        g = self.gates
        weight = self._apply_layer(state, g.even, g.half, pool)
        weight += self._apply_layer(state, g.odd, g.full, pool)
        weight += self._apply_layer(state, g.even, g.half, pool)
        return weight

    def sample(self, state: MPSState) -> Dict[str, float]:
        return {o.name: measure(state, o, self.ham) for o in self.observables}

    def evolve(self, state: MPSState) -> TimeSeries:
        """演化到 t_max，每 stride 步采样一次"""
        cfg = self.cfg
        n_steps = cfg.n_steps
        names = [o.name for o in self.observables]
        times, rows, weights, bond_dims = [], [], [], []
        warnings: List[str] = []

        def record(step: int):
            values = self.sample(state)
            times.append(step * cfg.dt)
            rows.append([values[n] for n in names])
            weights.append(state.discarded_weight)
            bond_dims.append(state.max_bond_dim)

        self.logger.info(f"开始 TEBD 演化: {len(state)} 个格点, {n_steps} 步, dt={cfg.dt} ps, χ_max={cfg.chi_max}, 线程数={cfg.threads}")
        pool = ThreadPoolExecutor(max_workers=cfg.threads) if cfg.threads > 1 else None
        try:
            record(0)
            for step in range(1, n_steps + 1):
                state.discarded_weight += self.step(state, pool)
                state.truncation_log.append(state.discarded_weight)
                if state.discarded_weight > cfg.discarded_budget and not warnings:
                    message = f"cumulative discarded weight {state.discarded_weight:.3e} exceeds budget {cfg.discarded_budget:.1e} at t={step * cfg.dt:.6g} ps"
                    warnings.append(message)
                    self.logger.warning(f"截断权重超出预算: {message}")
                if step % cfg.stride == 0:
                    record(step)
                    self.logger.debug(f"t={step * cfg.dt:.6g} ps, 最大键维数 {state.max_bond_dim}")
        finally:
            if pool is not None:
                pool.shutdown()

        data = np.asarray(rows, dtype=float).reshape(len(rows), len(names))
        return TimeSeries(
            times=np.asarray(times),
            columns={n: data[:, k] for k, n in enumerate(names)},
            discarded_weight=np.asarray(weights),
            max_bond_dim=np.asarray(bond_dims, dtype=int),
            warnings=warnings,
        )


def measure(state: MPSState, observable: Any, ham: ChainHamiltonianSpec) -> float:
    """
    当前 MPS 上观测量的精确收缩

    支持 σ_x/σ_y/σ_z、相干幅 |ρ_01|、P_+、链占据数、能量 ⟨H⟩、键纠缠熵，
    以及作用在单格点或相邻两格点上的自定义算符。
    """
    spec = parse_observable(observable) if isinstance(observable, str) else observable
    if spec.kind == "energy":
        return energy(state, ham)
    if spec.kind == "entropy":
        return state.entanglement_entropy(int(spec.target))
    sites = resolve_sites(spec, ham.layout)
    return evaluate_local(spec, state.reduced_density_matrix(sites))


def energy(state: MPSState, ham: ChainHamiltonianSpec) -> float:
    """⟨H⟩ = Σ_i tr(ρ_{i,i+1} h_i)"""
    return float(sum(np.real(np.trace(state.pair_rdm(i) @ h)) for i, h in enumerate(ham.bond_terms)))


def tebd_evolve(state: MPSState, ham: ChainHamiltonianSpec, cfg: EvolutionConfig) -> TimeSeries:
    """对 state 做 TEBD 演化并返回采样的时间序列（state 被原地更新）"""
    if state.physical_dims != list(ham.local_dims):
        raise DomainError(f"state dimensions {state.physical_dims} do not match Hamiltonian {ham.local_dims}")
    return TEBDEngine(ham, cfg).evolve(state)
