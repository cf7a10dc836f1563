"""
观测量 - 解析、定位和求值

这个模块负责:
1. 把文本标签（例如 "coherence"、"sigma_z:L"、"occupation:R5"）解析为 ObservableSpec
2. 根据格点布局确定观测量作用的格点（单格点或相邻两格点）
3. 由约化密度矩阵计算观测量
4. 定义 TEBD 与精确对角化共用的 TimeSeries 结果类型
"""

import logging
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import DomainError
from models import DEPHASING, DIMER, SIGMA_X, SIGMA_Y, SIGMA_Z, dimer_plus_projector, number

logger = logging.getLogger(__name__)

LOCAL_KINDS = ("coherence", "sigma_x", "sigma_y", "sigma_z", "p_plus", "occupation", "custom")
GLOBAL_KINDS = ("energy", "entropy")

_OCCUPATION_RE = re.compile(r"^(?P<chain>[LR]?)(?P<site>\d+)$")


@dataclass(frozen=True)
class SiteLayout:
    """MPS 顺序下系统格点与各条链格点的位置"""
    kind: str
    local_dims: Tuple[int, ...]
    system_sites: Tuple[int, ...]
    chain_sites: Dict[str, Tuple[int, ...]]


@dataclass(frozen=True)
class ObservableSpec:
    """
    观测量描述

    kind: coherence / sigma_x / sigma_y / sigma_z / p_plus / occupation / energy / entropy / custom
    target: 二聚体的 "L"/"R"，占据数的 "R5" 之类，熵的键编号
    """
    kind: str
    target: str = ""
    label: str = ""
    sites: Tuple[int, ...] = ()
    operator: Optional[np.ndarray] = field(default=None, compare=False)

    @property
    def name(self) -> str:
        return self.label or (f"{self.kind}:{self.target}" if self.target else self.kind)


def parse_observable(text: str) -> ObservableSpec:
    """
    解析观测量标签

    Args:
        text: 形如 "kind" 或 "kind:target"

    Returns:
        ObservableSpec
    """
    kind, _, target = text.strip().partition(":")
    kind = kind.strip()
    target = target.strip()
    if kind not in LOCAL_KINDS + GLOBAL_KINDS or kind == "custom":
        raise DomainError(f"unsupported observable: {text}")
    if kind == "occupation" and not _OCCUPATION_RE.match(target):
        raise DomainError(f"occupation needs a chain site, e.g. 'occupation:5' or 'occupation:L3', got '{text}'")
    if kind == "entropy" and not target.isdigit():
        raise DomainError(f"entropy needs a bond index, got '{text}'")
    if kind in ("coherence", "sigma_x", "sigma_y", "sigma_z") and target not in ("", "L", "R"):
        raise DomainError(f"invalid target '{target}' for {kind}")
    return ObservableSpec(kind=kind, target=target, label=text.strip())


def custom_observable(label: str, sites: Sequence[int], operator: np.ndarray) -> ObservableSpec:
    """任意单格点或相邻两格点算符"""
    sites = tuple(int(s) for s in sites)
    if not 1 <= len(sites) <= 2:
        raise DomainError("custom observables act on one or two sites")
    return ObservableSpec(kind="custom", label=label, sites=sites, operator=np.asarray(operator, dtype=complex))


def resolve_sites(spec: ObservableSpec, layout: SiteLayout) -> Tuple[int, ...]:
    """
    观测量作用的格点

    Raises:
        DomainError: 格点不存在或两格点不相邻
    """
    if spec.kind == "custom":
        sites = spec.sites
    elif spec.kind == "p_plus":
        if layout.kind != DIMER:
            raise DomainError("p_plus is only defined for the dimer model")
        sites = tuple(layout.system_sites)
    elif spec.kind == "occupation":
        m = _OCCUPATION_RE.match(spec.target)
        chain = m.group("chain") or ("main" if layout.kind == DEPHASING else "R")
        if layout.kind == DEPHASING and chain != "main":
            raise DomainError(f"the dephasing model has a single chain, got '{spec.name}'")
        n = int(m.group("site"))
        chain_sites = layout.chain_sites.get(chain, ())
        if n >= len(chain_sites):
            raise DomainError(f"chain site {n} does not exist (chain length {len(chain_sites)})")
        sites = (chain_sites[n],)
    elif spec.kind in ("coherence", "sigma_x", "sigma_y", "sigma_z"):
        if layout.kind == DEPHASING:
            sites = (layout.system_sites[0],)
        else:
            sites = (layout.system_sites[0 if spec.target in ("", "L") else 1],)
    else:
        raise DomainError(f"{spec.kind} is not a local observable")

    for s in sites:
        if not 0 <= s < len(layout.local_dims):
            raise DomainError(f"site {s} is outside the chain")
    if len(sites) == 2 and sites[1] != sites[0] + 1:
        raise DomainError(f"observable {spec.name} spans non-adjacent sites {sites}")
    return sites


def evaluate_local(spec: ObservableSpec, rdm: np.ndarray) -> float:
    """由作用格点上的约化密度矩阵计算观测量"""
    if spec.kind == "coherence":
        return float(abs(rdm[0, 1]))
    if spec.kind == "sigma_x":
        op = SIGMA_X
    elif spec.kind == "sigma_y":
        op = SIGMA_Y
    elif spec.kind == "sigma_z":
        op = SIGMA_Z
    elif spec.kind == "p_plus":
        op = dimer_plus_projector()
    elif spec.kind == "occupation":
        op = number(rdm.shape[0])
    else:
        op = spec.operator
    return float(np.real(np.trace(rdm @ op)))


@dataclass
class TimeSeries:
    """
    采样的观测量随物理时间的变化

    columns 按配置顺序保存观测量列；discarded_weight 是累计截断权重，
    max_bond_dim 是采样时刻的最大键维数。
    """
    times: np.ndarray
    columns: Dict[str, np.ndarray]
    discarded_weight: np.ndarray
    max_bond_dim: np.ndarray
    warnings: List[str] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise DomainError(f"time series has no column '{name}'")
        return self.columns[name]

    @property
    def column_names(self) -> List[str]:
        return list(self.columns.keys())

    def __len__(self) -> int:
        return int(self.times.size)
