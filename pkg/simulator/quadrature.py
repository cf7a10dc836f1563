"""
数值积分 - 复合 Gauss-Legendre 求积

这个模块负责:
1. 生成按断点分段的复合 Gauss-Legendre 节点和权重（用于测度离散化）
2. 提供自适应分段积分（用于相关函数和退相干函数）
3. 在 Lorentz 峰附近和振荡零点处插入断点
"""

import logging
from functools import lru_cache
from typing import Callable, Iterable, List, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from errors import QuadratureError

logger = logging.getLogger(__name__)

DEFAULT_ORDER = 20
DEFAULT_MAX_DEPTH = 40


@lru_cache(maxsize=32)
def _reference_rule(order: int) -> Tuple[np.ndarray, np.ndarray]:
    nodes, weights = leggauss(order)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def panel_rule(a: float, b: float, order: int = DEFAULT_ORDER) -> Tuple[np.ndarray, np.ndarray]:
    """区间 [a, b] 上的 Gauss-Legendre 节点与权重"""
    x, w = _reference_rule(order)
    half = 0.5 * (b - a)
    return half * x + 0.5 * (a + b), half * w


def clean_breakpoints(points: Iterable[float], lower: float, upper: float) -> np.ndarray:
    """裁剪到 [lower, upper]，排序去重，并保证包含两个端点"""
    pts = np.asarray([p for p in points if np.isfinite(p)], dtype=float)
    pts = pts[(pts > lower) & (pts < upper)]
    pts = np.concatenate(([lower], pts, [upper]))
    pts = np.unique(pts)
    # 合并过近的断点，避免退化区间
    scale = max(upper - lower, 1.0)
    keep = np.concatenate(([True], np.diff(pts) > 1e-12 * scale))
    pts = pts[keep]
    pts[-1] = upper
    return pts


def composite_rule(
    breakpoints: np.ndarray,
    min_nodes: int,
    order: int = DEFAULT_ORDER,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    复合 Gauss-Legendre 规则

    每个断点区间至少一个面板；总节点数不足 min_nodes 时，
    按区间宽度比例继续细分。

    Args:
        breakpoints: 升序断点
        min_nodes: 最少节点数
        order: 每个面板的节点数

    Returns:
        (nodes, weights)
    """
    bps = np.asarray(breakpoints, dtype=float)
    widths = np.diff(bps)
    total = float(np.sum(widths))
    n_panels_total = max(int(np.ceil(min_nodes / order)), len(widths))

    nodes: List[np.ndarray] = []
    weights: List[np.ndarray] = []
    for a, width in zip(bps[:-1], widths):
        n_sub = max(1, int(np.ceil(n_panels_total * width / total)))
        edges = np.linspace(a, a + width, n_sub + 1)
        for lo, hi in zip(edges[:-1], edges[1:]):
            x, w = panel_rule(lo, hi, order)
            nodes.append(x)
            weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


def oscillation_breakpoints(lower: float, upper: float, phase: float, max_points: int = 2000) -> List[float]:
    """被积函数含 cos(ω t) 时，在 ω t = kπ 处加断点"""
    if phase <= 0:
        return []
    step = np.pi / phase
    count = int((upper - lower) / step)
    if count < 2:
        return []
    if count > max_points:
        step = (upper - lower) / max_points
    start = np.ceil(lower / step) * step
    return list(np.arange(start, upper, step))


def _apply_rule(f: Callable, a: float, b: float, order: int) -> np.ndarray:
    x, w = panel_rule(a, b, order)
    return np.tensordot(w, f(x), axes=(0, 0))


def adaptive_integrate(
    f: Callable[[np.ndarray], np.ndarray],
    breakpoints: Iterable[float],
    abs_tol: float = 1e-12,
    rel_tol: float = 1e-13,
    order: int = DEFAULT_ORDER,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> Tuple[np.ndarray, float]:
    """
    自适应复合 Gauss-Legendre 积分

    被积函数 f 接受节点数组 (n,)，返回 (n,) 或 (n, k) 数组（可为复数），
    向量值时按所有分量的最大误差判断收敛。

    Args:
        f: 向量化的被积函数
        breakpoints: 升序断点
        abs_tol: 绝对容差（整个区间）
        rel_tol: 相对容差
        order: 每个面板的节点数
        max_depth: 最大二分深度

    Returns:
        (积分值, 误差估计)

    Raises:
        QuadratureError: 达到最大深度仍未收敛
    """
    bps = np.asarray(list(breakpoints), dtype=float)
    span = float(bps[-1] - bps[0])
    if span <= 0:
        raise QuadratureError("empty integration interval", 0.0)

    # 先估计积分量级，用于相对容差
    coarse = sum(_apply_rule(f, a, b, order) for a, b in zip(bps[:-1], bps[1:]))
    scale = float(np.max(np.abs(coarse))) if np.size(coarse) else 0.0
    budget = max(abs_tol, rel_tol * scale)

    total = np.zeros_like(coarse)
    error = 0.0
    failed = 0.0
    stack = [(a, b, _apply_rule(f, a, b, order), 0) for a, b in zip(bps[:-1], bps[1:])]
    while stack:
        a, b, whole, depth = stack.pop()
        mid = 0.5 * (a + b)
        left = _apply_rule(f, a, mid, order)
        right = _apply_rule(f, mid, b, order)
        refined = left + right
        diff = float(np.max(np.abs(refined - whole)))
        local_budget = budget * (b - a) / span
        if diff <= local_budget:
            total = total + refined
            error += diff
        elif depth >= max_depth:
            total = total + refined
            error += diff
            failed += diff
        else:
            stack.append((a, mid, left, depth + 1))
            stack.append((mid, b, right, depth + 1))

    if failed > budget:
        raise QuadratureError("adaptive quadrature did not converge", error)
    if error > 0.5 * budget:
        logger.warning(f"积分误差接近容差: {error:.3e} / {budget:.3e}")
    return total, error
