"""
输出格式化器 - 将模拟结果写成 CSV 与 JSON 文件

这个模块负责:
1. 时间序列 CSV（t_ps, 观测量列..., discarded_weight, max_bond_dim），17 位有效数字
2. 链系数、热占据数、退相干函数的 CSV
3. 带 schema_version 的运行清单与错误记录 JSON
4. 读回 CSV 供 compare 使用，以及终端摘要
"""

import csv
import io
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from chain_mapping import ChainCoefficients
from chain_diagnostics import OccupationProfile, WalkProfile, minimum_local_dimension
from errors import DomainError, NumericalError
from observables import TimeSeries

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
FLOAT_FORMAT = "%.17g"

PathLike = Union[str, Path]


def _fmt(value: float) -> str:
    return FLOAT_FORMAT % value


def exit_code_for(error: BaseException) -> int:
    """DomainError -> 2，NumericalError -> 3"""
    if isinstance(error, DomainError):
        return 2
    if isinstance(error, NumericalError):
        return 3
    return 1


class OutputFormatter:
    """输出格式化器"""

    def __init__(self):
        self.logger = logging.getLogger(__name__)

    # ------------------------------------------------------------------
    # CSV
    # ------------------------------------------------------------------

    def _write_rows(self, header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return buffer.getvalue()

    def format_time_series(self, series: TimeSeries) -> str:
        """
        格式化时间序列

        Args:
            series: TEBD 或精确对角化的结果

        Returns:
            CSV 字符串
        """
        names = series.column_names
        header = ["t_ps"] + names + ["discarded_weight", "max_bond_dim"]
        rows = []
        for k in range(len(series)):
            row = [_fmt(series.times[k])]
            row += [_fmt(series.columns[n][k]) for n in names]
            row += [_fmt(series.discarded_weight[k]), str(int(series.max_bond_dim[k]))]
            rows.append(row)
        return self._write_rows(header, rows)

    def format_coefficients(self, coeffs: ChainCoefficients) -> str:
        rows = [[str(n), _fmt(w), _fmt(k)] for n, (w, k) in enumerate(zip(coeffs.omegas, coeffs.kappas))]
        return self._write_rows(["n", "omega_n", "kappa_n"], rows)

    def format_occupation(self, profile: OccupationProfile) -> str:
        bounds = minimum_local_dimension(profile)
        rows = [[str(n), _fmt(occ), str(d)] for n, (occ, d) in enumerate(zip(profile.occupations, bounds))]
        return self._write_rows(["n", "occupation", "min_local_dim"], rows)

    def format_decoherence(self, curve) -> str:
        """退相干函数 CSV，theta 列与 simulate 的 coherence 列可直接比较"""
        rows = [
            [_fmt(t), _fmt(g), _fmt(th), _fmt(e)]
            for t, g, th, e in zip(curve.times, curve.gamma, curve.theta, curve.error_estimates)
        ]
        return self._write_rows(["t_ps", "gamma", "coherence", "error_estimate"], rows)

    def format_chain_length(self, length: int, temperature: float, t_max: float, threshold: float) -> str:
        """链长估计，只有一行 N_estimate 记录"""
        return self._write_rows(
            ["N_estimate", "temperature_K", "t_max_ps", "return_threshold"],
            [[str(length), _fmt(temperature), _fmt(t_max), _fmt(threshold)]],
        )

    def format_walk_profile(self, walk: WalkProfile) -> str:
        """量子行走的 |α_n(t)|²，每个格点一列"""
        probabilities = walk.probabilities
        header = ["t_ps"] + [f"alpha2_{n}" for n in range(probabilities.shape[1])]
        rows = [[_fmt(t)] + [_fmt(p) for p in row] for t, row in zip(walk.times, probabilities)]
        return self._write_rows(header, rows)

    def read_csv(self, path: PathLike) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        """
        读回带表头的数值 CSV

        Returns:
            (时间列, 其余各列)
        """
        with open(path, "r", encoding="utf-8", newline="") as f:
            reader = csv.reader(f)
            try:
                header = next(reader)
            except StopIteration:
                raise DomainError(f"empty CSV file: {path}")
            rows = [r for r in reader if r]
        if not header or header[0] != "t_ps":
            raise DomainError(f"{path}: first column must be t_ps")
        data = np.array([[float(x) for x in r] for r in rows], dtype=float).reshape(len(rows), len(header))
        columns = {name: data[:, k] for k, name in enumerate(header) if k > 0}
        return data[:, 0], columns

    # ------------------------------------------------------------------
    # JSON
    # ------------------------------------------------------------------

    def format_manifest(
        self,
        config: Dict[str, Any],
        model: Dict[str, Any],
        temperature: float,
        chain_length: int,
        local_dims: List[int],
        coefficients: Sequence[ChainCoefficients],
        series: TimeSeries,
        wall_time: float,
        outputs: Dict[str, str],
    ) -> Dict[str, Any]:
        """运行清单：解析后的全部参数、系数校验和、截断权重摘要与耗时"""
        weights = np.asarray(series.discarded_weight)
        return {
            "schema_version": SCHEMA_VERSION,
            "created_at": datetime.now().isoformat(),
            "config": config,
            "model": model,
            "temperature": temperature,
            "chain_length": chain_length,
            "local_dims": list(local_dims),
            "coefficients": [
                {"checksum": c.checksum(), "kappa_0": c.system_coupling, "length": len(c), "descriptor": c.descriptor}
                for c in coefficients
            ],
            "discarded_weight": {
                "final": float(weights[-1]) if weights.size else 0.0,
                "max": float(np.max(weights)) if weights.size else 0.0,
            },
            "max_bond_dim": int(np.max(series.max_bond_dim)) if len(series) else 1,
            "warnings": list(series.warnings),
            "wall_time_s": wall_time,
            "outputs": outputs,
        }

    def format_error_record(self, stage: str, error: BaseException, temperature: Optional[float] = None) -> Dict[str, Any]:
        """机器可读的错误记录"""
        record = {
            "schema_version": SCHEMA_VERSION,
            "created_at": datetime.now().isoformat(),
            "stage": stage,
            "type": type(error).__name__,
            "message": str(error),
            "exit_code": exit_code_for(error),
            "temperature": temperature,
        }
        fields = {}
        for attr in ("field", "index", "last_tested", "cap", "achieved_error"):
            if hasattr(error, attr):
                fields[attr] = getattr(error, attr)
        record["fields"] = fields
        return record

    def write_text(self, content: str, path: PathLike) -> Path:
        output_file = Path(path)
        output_file.parent.mkdir(parents=True, exist_ok=True)
        output_file.write_text(content, encoding="utf-8")
        self.logger.info(f"已写入: {output_file}")
        return output_file

    def write_json(self, data: Dict[str, Any], path: PathLike) -> Path:
        return self.write_text(json.dumps(data, ensure_ascii=False, indent=2), path)

    # ------------------------------------------------------------------
    # 摘要
    # ------------------------------------------------------------------

    def format_summary(self, series: TimeSeries, title: str = "模拟结果") -> str:
        """
        终端摘要

        Args:
            series: 时间序列
            title: 标题

        Returns:
            摘要字符串
        """
        if len(series) == 0:
            return "没有采样数据"

        lines = [
            f"=== {title} ===",
            f"采样点数: {len(series)}",
            f"时间范围: {series.times[0]:.6g} 至 {series.times[-1]:.6g} ps",
            f"最大键维数: {int(np.max(series.max_bond_dim))}",
            f"累计截断权重: {float(series.discarded_weight[-1]):.3e}",
            "",
            "观测量 (初值 -> 终值):",
        ]
        for name in series.column_names:
            col = series.columns[name]
            lines.append(f"  - {name}: {col[0]:.10g} -> {col[-1]:.10g}")
        for w in series.warnings:
            lines.append(f"警告: {w}")
        return "\n".join(lines)
