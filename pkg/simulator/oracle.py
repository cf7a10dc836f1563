"""
独立校验 - 纯退相干解析解与小体系精确对角化

这个模块负责:
1. 纯退相干二能级系统的退相干函数 γ(t) 与相干幅 θ(t) = e^{−γ(t)}/2
2. 截断的系统 + 短链体系的精确对角化演化，输出与 TEBD 相同的观测量列

精确对角化不经过 assemble_chain 的键项分摊，直接由模型和链系数构造完整哈密顿量。
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from chain_mapping import ChainCoefficients
from errors import DomainError, LinearAlgebraError
from models import COUPLING_A, DEPHASING, ModelSpec, annihilation, number
from observables import SiteLayout, TimeSeries, evaluate_local, parse_observable, resolve_sites
from quadrature import adaptive_integrate, clean_breakpoints, oscillation_breakpoints
from spectral_density import SpectralDensity, bose_einstein
from tebd_engine import EvolutionConfig
from units import ps_to_phase, temperature_to_beta

logger = logging.getLogger(__name__)

ED_DIMENSION_CAP = 4096
DEFAULT_GAMMA_TOLERANCE = 1e-10


@dataclass
class DecoherenceCurve:
    """纯退相干的解析结果：γ(t)、θ(t) = e^{−γ}/2 以及每个时刻的积分误差估计"""
    times: np.ndarray
    gamma: np.ndarray
    theta: np.ndarray
    error_estimates: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.error_estimates is None:
            self.error_estimates = np.zeros_like(self.gamma)

    def __len__(self) -> int:
        return int(self.times.size)


def _decoherence_integrand(sd: SpectralDensity, beta: float, phase: float):
    """(J(ω)/ω) coth(βω/2) · 2 sin²(ωt/2)/ω，即 J coth (1 − cos ωt)/ω²"""

    def integrand(w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        ratio = np.asarray(sd.density_over_omega(w))
        safe = np.where(w > 0, w, 1.0)
        if math.isinf(beta):
            thermal = np.ones_like(w)
        else:
            thermal = 1.0 + 2.0 * np.asarray(bose_einstein(safe, beta))
        oscill = 2.0 * np.sin(0.5 * safe * phase) ** 2 / safe
        out = ratio * thermal * oscill
        # ω → 0: coth(βω/2) ≈ 2/(βω)，2 sin²(ωt/2)/ω ≈ ω t²/2
        if not math.isinf(beta):
            out = np.where(w > 0, out, ratio * phase ** 2 / beta)
        else:
            out = np.where(w > 0, out, 0.0)
        return out

    return integrand


def dephasing_coherence(
    sd: SpectralDensity,
    temperature: float,
    times: Sequence[float],
    abs_tol: float = DEFAULT_GAMMA_TOLERANCE,
) -> DecoherenceCurve:
    """
    纯退相干的退相干函数

    γ(t) = ∫_0^{ω_c} J(ω) coth(ω/2k_BT) (1 − cos ωt)/ω² dω，θ(t) = e^{−γ(t)}/2。
    每个时刻单独积分，在 Lorentz 峰和 ωt = kπ 处分段。

    Args:
        sd: 谱密度（零温下即 coth = 1）
        temperature: 温度 (K)
        times: 时间网格 (ps)，要求非负
        abs_tol: 每个时刻的绝对容差

    Returns:
        DecoherenceCurve

    Raises:
        DomainError: 负温度或负时间
        QuadratureError: 积分未收敛
    """
    if not math.isfinite(temperature) or temperature < 0:
        raise DomainError(f"temperature must be >= 0 K, got {temperature}")
    t = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(~np.isfinite(t)) or np.any(t < 0):
        raise DomainError("decoherence times must be finite and non-negative")
    beta = temperature_to_beta(temperature)

    gamma = np.zeros_like(t)
    errors = np.zeros_like(t)
    base_pts = list(sd.breakpoints())
    for k, tk in enumerate(t):
        if tk == 0:
            continue
        phase = float(ps_to_phase(tk))
        pts = base_pts + oscillation_breakpoints(0.0, sd.cutoff, phase)
        value, error = adaptive_integrate(
            _decoherence_integrand(sd, beta, phase),
            clean_breakpoints(pts, 0.0, sd.cutoff),
            abs_tol=abs_tol,
            rel_tol=0.0,
        )
        gamma[k] = max(float(value), 0.0)
        errors[k] = error
    logger.info(f"退相干函数计算完成: T={temperature} K, {t.size} 个时刻, 最大误差估计 {np.max(errors, initial=0.0):.3e}")
    return DecoherenceCurve(times=t, gamma=gamma, theta=0.5 * np.exp(-gamma), error_estimates=errors)


# ---------------------------------------------------------------------------
# 精确对角化
# ---------------------------------------------------------------------------

def _ed_sites(model: ModelSpec, n_chain: int) -> Tuple[List[str], Dict[str, List[int]], List[int]]:
    """MPS 顺序下的格点标签、链格点位置、系统格点位置"""
    if model.kind == DEPHASING:
        labels = ["S"] + [f"c{n}" for n in range(n_chain)]
        return labels, {"main": list(range(1, n_chain + 1))}, [0]
    labels = [f"cL{n}" for n in reversed(range(n_chain))] + ["SL", "SR"] + [f"cR{n}" for n in range(n_chain)]
    chains = {
        "L": [n_chain - 1 - n for n in range(n_chain)],
        "R": [n_chain + 2 + n for n in range(n_chain)],
    }
    return labels, chains, [n_chain, n_chain + 1]


class ExactEvolution:
    """
    截断乘积空间上的精确演化

    哈密顿量只在构造时对角化一次，任意时刻的态由本征分解直接给出。
    """

    def __init__(
        self,
        model: ModelSpec,
        coeffs: Union[None, ChainCoefficients, Sequence[ChainCoefficients]],
        local_dims: Sequence[int],
        dimension_cap: int = ED_DIMENSION_CAP,
    ):
        self.logger = logging.getLogger(__name__)
        self.model = model
        self.chain_dims = [int(d) for d in local_dims]
        n_chain = len(self.chain_dims)
        if any(d < 2 for d in self.chain_dims):
            raise DomainError(f"local dimensions must be >= 2, got {self.chain_dims}")

        if coeffs is None:
            coeff_list: List[ChainCoefficients] = []
        elif isinstance(coeffs, ChainCoefficients):
            coeff_list = [coeffs]
        else:
            coeff_list = list(coeffs)
        n_baths = len(model.baths)
        if n_chain > 0:
            if len(coeff_list) != n_baths:
                raise DomainError(f"{model.kind} model needs {n_baths} coefficient set(s), got {len(coeff_list)}")
            for c in coeff_list:
                if len(c) < n_chain:
                    raise DomainError(f"need {n_chain} chain coefficients, got {len(c)}")
        self.coefficients = coeff_list

        self.labels, chains, system_sites = _ed_sites(model, n_chain)
        if model.kind == DEPHASING:
            self.dims = [2] + self.chain_dims
        else:
            self.dims = list(reversed(self.chain_dims)) + [2, 2] + self.chain_dims
        self.dimension = int(np.prod(self.dims))
        if self.dimension > dimension_cap:
            raise DomainError(f"Hilbert space dimension {self.dimension} exceeds the exact-diagonalization cap {dimension_cap}")
        self.layout = SiteLayout(
            kind=model.kind,
            local_dims=tuple(self.dims),
            system_sites=tuple(system_sites),
            chain_sites={k: tuple(v) for k, v in chains.items()},
        )

        self.hamiltonian = self._build_hamiltonian()
        try:
            self.energies, self.eigenvectors = np.linalg.eigh(self.hamiltonian)
        except np.linalg.LinAlgError as e:
            raise LinearAlgebraError(f"exact diagonalization failed at dimension {self.dimension}: {e}") from e
        self.initial_state = self._initial_state()
        self._initial_amplitudes = self.eigenvectors.conj().T @ self.initial_state
        self.logger.debug(f"精确对角化: 维数 {self.dimension}, 格点 {self.labels}")

    def _embed(self, ops: Dict[int, np.ndarray]) -> sp.csr_matrix:
        """把若干单格点算符的张量积嵌入整个空间"""
        out = sp.identity(1, dtype=complex, format="csr")
        for site, d in enumerate(self.dims):
            op = ops.get(site)
            factor = sp.identity(d, dtype=complex, format="csr") if op is None else sp.csr_matrix(op)
            out = sp.kron(out, factor, format="csr")
        return out

    def _chain_terms(self, coeffs: ChainCoefficients, system_site: int, sites: List[int]) -> sp.csr_matrix:
        h = sp.csr_matrix((self.dimension, self.dimension), dtype=complex)
        if not sites:
            return h
        a0 = annihilation(self.chain_dims[0])
        h = h + coeffs.kappas[0] * self._embed({system_site: COUPLING_A, sites[0]: a0 + a0.conj().T})
        for n, site in enumerate(sites):
            h = h + coeffs.omegas[n] * self._embed({site: number(self.chain_dims[n])})
        for n in range(1, len(sites)):
            a_prev = annihilation(self.chain_dims[n - 1])
            a_next = annihilation(self.chain_dims[n])
            hop = self._embed({sites[n]: a_next.conj().T, sites[n - 1]: a_prev})
            h = h + coeffs.kappas[n] * (hop + hop.conj().T)
        return h

    def _build_hamiltonian(self) -> np.ndarray:
        sys_sites = self.layout.system_sites
        if self.model.kind == DEPHASING:
            h = self._embed({sys_sites[0]: self.model.system_hamiltonian()})
            if self.coefficients and self.chain_dims:
                h = h + self._chain_terms(self.coefficients[0], sys_sites[0], list(self.layout.chain_sites["main"]))
        else:
            # H_D 作用在相邻的两个系统格点上，直接在两格点子空间构造后嵌入
            left = int(np.prod(self.dims[:sys_sites[0]]))
            right = int(np.prod(self.dims[sys_sites[1] + 1:]))
            h = sp.kron(sp.kron(sp.identity(left), sp.csr_matrix(self.model.system_hamiltonian())), sp.identity(right), format="csr")
            if self.coefficients and self.chain_dims:
                h = h + self._chain_terms(self.coefficients[0], sys_sites[0], list(self.layout.chain_sites["L"]))
                h = h + self._chain_terms(self.coefficients[1], sys_sites[1], list(self.layout.chain_sites["R"]))
        dense = h.toarray()
        return 0.5 * (dense + dense.conj().T)

    def _initial_state(self) -> np.ndarray:
        vacuum = [np.eye(d, dtype=complex)[0] for d in self.chain_dims]
        system = self.model.initial_system_vector()
        if self.model.kind == DEPHASING:
            factors = [system] + vacuum
        else:
            factors = list(reversed(vacuum)) + [system] + vacuum
        psi = np.ones(1, dtype=complex)
        for f in factors:
            psi = np.kron(psi, f)
        return psi

    def state_at(self, t_ps: float) -> np.ndarray:
        phase = float(ps_to_phase(t_ps))
        return self.eigenvectors @ (np.exp(-1j * self.energies * phase) * self._initial_amplitudes)

    def reduced_density_matrix(self, psi: np.ndarray, sites: Sequence[int]) -> np.ndarray:
        sites = list(sites)
        tensor = psi.reshape(self.dims)
        others = [k for k in range(len(self.dims)) if k not in sites]
        rho = np.tensordot(tensor, tensor.conj(), axes=(others, others))
        d = int(np.prod([self.dims[s] for s in sites]))
        return rho.reshape(d, d)

    def schmidt_values(self, psi: np.ndarray, bond: int) -> np.ndarray:
        """格点 bond−1 与 bond 之间的 Schmidt 值"""
        left = int(np.prod(self.dims[:bond]))
        return np.linalg.svd(psi.reshape(left, -1), compute_uv=False)

    def entanglement_entropy(self, psi: np.ndarray, bond: int) -> float:
        p = self.schmidt_values(psi, bond) ** 2
        p = p[p > 1e-300]
        return float(-np.sum(p * np.log(p)))

    def schmidt_rank(self, psi: np.ndarray, tol: float = 1e-12) -> int:
        ranks = [int(np.sum(self.schmidt_values(psi, b) > tol)) for b in range(1, len(self.dims))]
        return max(ranks, default=1)

    def measure(self, psi: np.ndarray, observable) -> float:
        spec = parse_observable(observable) if isinstance(observable, str) else observable
        if spec.kind == "energy":
            return float(np.real(np.vdot(psi, self.hamiltonian @ psi)))
        if spec.kind == "entropy":
            return self.entanglement_entropy(psi, int(spec.target))
        sites = resolve_sites(spec, self.layout)
        return evaluate_local(spec, self.reduced_density_matrix(psi, sites))


def ed_evolve(
    model: ModelSpec,
    coeffs: Union[None, ChainCoefficients, Sequence[ChainCoefficients]],
    local_dims: Sequence[int],
    cfg: EvolutionConfig,
    include_invariants: bool = False,
    dimension_cap: int = ED_DIMENSION_CAP,
) -> TimeSeries:
    """
    精确对角化演化

    时间网格与 tebd_evolve 相同（每 stride 个 dt 采样一次）。max_bond_dim 列记录
    各键 Schmidt 秩的最大值，discarded_weight 恒为 0。

    Args:
        model: 模型
        coeffs: 链系数（链长为 0 时可为 None）
        local_dims: 链上各振子的维数，长度即链长 N
        cfg: 演化参数
        include_invariants: 是否额外输出 norm 与 energy 列

    Raises:
        DomainError: 维数超过上限或输入不一致
    """
    ed = ExactEvolution(model, coeffs, local_dims, dimension_cap)
    specs = [parse_observable(o) if isinstance(o, str) else o for o in cfg.observables]
    names = [s.name for s in specs]
    extra = [c for c in ("norm", "energy") if include_invariants and c not in names]

    steps = list(range(0, cfg.n_steps + 1, cfg.stride))
    times = np.asarray([s * cfg.dt for s in steps])
    data = np.zeros((len(steps), len(names) + len(extra)))
    ranks = np.zeros(len(steps), dtype=int)
    logger.info(f"精确对角化演化: 维数 {ed.dimension}, {len(steps)} 个采样时刻")
    for row, t in enumerate(times):
        psi = ed.state_at(t)
        for k, spec in enumerate(specs):
            data[row, k] = ed.measure(psi, spec)
        for k, n in enumerate(extra):
            if n == "norm":
                data[row, len(names) + k] = float(np.real(np.vdot(psi, psi)))
            else:
                data[row, len(names) + k] = ed.measure(psi, "energy")
        ranks[row] = ed.schmidt_rank(psi)

    columns = {n: data[:, k] for k, n in enumerate(names + extra)}
    return TimeSeries(
        times=times,
        columns=columns,
        discarded_weight=np.zeros(len(steps)),
        max_bond_dim=ranks,
    )
