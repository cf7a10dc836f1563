"""
物理模型 - 系统、环境和局域算符

这个模块负责:
1. 描述两类系统：纯退相干二能级系统 (dephasing) 与 WSCP 二聚体 (dimer)
2. 提供二能级系统和截断玻色模式的局域算符
3. 给出系统初态（必须是纯态）

二能级系统的基矢顺序为 [|↑⟩, |↓⟩]，σ_z = diag(1, −1)，耦合算符 A_S = (1 + σ_z)/2。
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Sequence, Tuple, Union

import numpy as np

from errors import DomainError
from spectral_density import SpectralDensity

logger = logging.getLogger(__name__)

DEPHASING = "dephasing"
DIMER = "dimer"
SUPPORTED_KINDS = (DEPHASING, DIMER)

# WSCP 二聚体的交叉耦合 (cm^-1)
WSCP_CROSS_COUPLING = 69.0

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_MINUS = SIGMA_PLUS.conj().T
COUPLING_A = 0.5 * (np.eye(2) + SIGMA_Z)


def annihilation(d: int) -> np.ndarray:
    """截断到 d 个 Fock 能级的湮灭算符"""
    if d < 2:
        raise DomainError(f"local dimension must be >= 2, got {d}")
    return np.diag(np.sqrt(np.arange(1, d, dtype=float)), k=1).astype(complex)


def number(d: int) -> np.ndarray:
    return np.diag(np.arange(d, dtype=float)).astype(complex)


def displacement_x(d: int) -> np.ndarray:
    """c + c†"""
    a = annihilation(d)
    return a + a.conj().T


def dimer_hamiltonian(cross_coupling: float) -> np.ndarray:
    """H_D = λ (σ+^L σ−^R + H.c.)，作用在 (L, R) 两个格点上"""
    hop = np.kron(SIGMA_PLUS, SIGMA_MINUS)
    return cross_coupling * (hop + hop.conj().T)


def dimer_plus_state() -> np.ndarray:
    """|+_D⟩ = (|↑↓⟩ + |↓↑⟩)/√2，H_D 本征值 +λ 的单激发本征态"""
    up, down = np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex)
    return (np.kron(up, down) + np.kron(down, up)) / np.sqrt(2)


def dimer_plus_projector() -> np.ndarray:
    v = dimer_plus_state()
    return np.outer(v, v.conj())


@dataclass(frozen=True)
class BathSpec:
    """一个独立玻色环境"""
    spectral_density: SpectralDensity
    temperature: float

    def __post_init__(self):
        if not np.isfinite(self.temperature) or self.temperature < 0:
            raise DomainError(f"bath temperature must be >= 0 K, got {self.temperature}")


InitialState = Union[str, Sequence[complex], np.ndarray]


@dataclass(frozen=True)
class ModelSpec:
    """
    系统 + 环境模型

    kind: "dephasing" 或 "dimer"
    baths: 退相干模型一个环境，二聚体两个环境 (L, R)
    cross_coupling: 二聚体交叉耦合 λ (cm^-1)
    epsilon: 退相干模型的能级劈裂 ε，H_S = ε σ_z / 2
    initial_state: "plus" / "plus_D"，或显式的态矢量 / 密度矩阵
    """
    kind: str
    baths: Tuple[BathSpec, ...]
    cross_coupling: float = WSCP_CROSS_COUPLING
    epsilon: float = 0.0
    initial_state: Any = None

    def __post_init__(self):
        object.__setattr__(self, "baths", tuple(self.baths))
        if self.kind not in SUPPORTED_KINDS:
            raise DomainError(f"unsupported model kind: {self.kind}")
        expected = 1 if self.kind == DEPHASING else 2
        if len(self.baths) != expected:
            raise DomainError(f"{self.kind} model needs exactly {expected} environment(s), got {len(self.baths)}")
        if self.initial_state is None:
            object.__setattr__(self, "initial_state", "plus" if self.kind == DEPHASING else "plus_D")

    @property
    def n_system_sites(self) -> int:
        return 1 if self.kind == DEPHASING else 2

    def system_hamiltonian(self) -> np.ndarray:
        """单格点 (退相干) 或两格点 (二聚体) 的系统哈密顿量"""
        if self.kind == DEPHASING:
            return 0.5 * self.epsilon * SIGMA_Z
        return dimer_hamiltonian(self.cross_coupling)

    def initial_system_vector(self) -> np.ndarray:
        """
        系统初态矢量

        Raises:
            DomainError: 混合态或维数不符
        """
        dim = 2 ** self.n_system_sites
        state = self.initial_state
        if isinstance(state, str):
            if state == "plus" and self.kind == DEPHASING:
                return np.array([1, 1], dtype=complex) / np.sqrt(2)
            if state == "plus_D" and self.kind == DIMER:
                return dimer_plus_state()
            if state in ("up", "down") and self.kind == DEPHASING:
                return np.array([1, 0] if state == "up" else [0, 1], dtype=complex)
            raise DomainError(f"unknown initial state '{state}' for {self.kind} model")

        arr = np.asarray(state, dtype=complex)
        if arr.ndim == 2:
            if arr.shape != (dim, dim):
                raise DomainError(f"initial density matrix must be {dim}x{dim}")
            arr = 0.5 * (arr + arr.conj().T)
            evals, evecs = np.linalg.eigh(arr)
            purity = float(np.real(np.trace(arr @ arr))) / float(np.real(np.trace(arr))) ** 2
            if abs(purity - 1.0) > 1e-10:
                raise DomainError(f"mixed initial system state (purity {purity:.6f}) is not supported")
            arr = evecs[:, -1]
        if arr.shape != (dim,):
            raise DomainError(f"initial state vector must have dimension {dim}")
        norm = np.linalg.norm(arr)
        if norm == 0:
            raise DomainError("initial state vector is zero")
        return arr / norm

    def describe(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "cross_coupling": self.cross_coupling,
            "epsilon": self.epsilon,
            "initial_state": self.initial_state if isinstance(self.initial_state, str) else {
                "real": np.real(np.asarray(self.initial_state)).tolist(),
                "imag": np.imag(np.asarray(self.initial_state)).tolist(),
            },
            "baths": [
                {"spectral_density": b.spectral_density.to_dict(), "name": b.spectral_density.name, "temperature": b.temperature}
                for b in self.baths
            ],
        }
