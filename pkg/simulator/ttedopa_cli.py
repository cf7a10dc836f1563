#!/usr/bin/env python3
"""
T-TEDOPA Simulator - 用热化谱密度链映射与 TEBD 模拟开放量子系统

这个程序把有限温度玻色环境映射成初始处于真空的振子链，再用矩阵乘积态做时间演化，
并提供链系数、热占据数、链长估计以及两种独立校验（解析退相干、精确对角化）。

使用方法:
    python ttedopa_cli.py simulate --preset dephasing-wscp --temperature 300 --output out/
    python ttedopa_cli.py simulate --config out/dephasing-wscp_T300K_manifest.json
    python ttedopa_cli.py compare out/a.csv out/b.csv --column coherence
"""

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from chain_diagnostics import (
    estimate_chain_length,
    local_dimension_schedule,
    quantum_walk,
    thermal_occupation,
    walk_time_grid,
)
from chain_mapping import (
    ChainCoefficients,
    assemble_chain,
    load_coefficients,
    recurrence_coefficients,
    save_coefficients,
)
from config_manager import DEFAULT_OBSERVABLES, PRESETS, ConfigManager, RunConfig, load_run_config
from errors import DomainError, LinearAlgebraError, TTedopaError
from models import DEPHASING, DIMER
from oracle import dephasing_coherence, ed_evolve
from output_formatter import OutputFormatter, exit_code_for
from spectral_density import thermalize
from tebd_engine import DEFAULT_CHI_DIMER, DEFAULT_CHI_MONOMER, init_vacuum, tebd_evolve

# 自动估计链长时先计算的系数个数，估计结果更长时再补算
ESTIMATE_LENGTH = 64
GRID_TOLERANCE = 1e-12


@dataclass
class RunResult:
    """一个温度的运行结果"""
    temperature: float
    exit_code: int
    outputs: Dict[str, str] = field(default_factory=dict)
    error: Optional[Dict[str, Any]] = None


def _temperature_tag(temperature: float) -> str:
    return f"T{temperature:g}K"


def _as_simulator_error(error: Exception) -> TTedopaError:
    """numpy / scipy 的 LinAlgError 归为数值错误"""
    if isinstance(error, TTedopaError):
        return error
    return LinearAlgebraError(f"linear algebra failure: {error}")


class TTedopaSimulator:
    """T-TEDOPA 模拟器主类"""

    def __init__(self, config: RunConfig, coefficients: Optional[Sequence[ChainCoefficients]] = None):
        """
        初始化模拟器

        Args:
            config: 已校验的运行配置
            coefficients: chain-coeffs 导出后读回的链系数，给出时不再重新计算
        """
        self.config = config
        self.preloaded = list(coefficients) if coefficients else []
        self.formatter = OutputFormatter()
        self.results: List[RunResult] = []
        self.logger = logging.getLogger(__name__)

    @property
    def output_dir(self) -> Path:
        return Path(self.config.output_dir)

    def _stem(self, temperature: float) -> str:
        return f"{self.config.preset}_{_temperature_tag(temperature)}"

    # ------------------------------------------------------------------
    # 链准备
    # ------------------------------------------------------------------

    def chain_coefficients(self, temperature: float, n_sites: int) -> List[ChainCoefficients]:
        """每个环境的 T-TEDOPA 链系数（相同的环境只计算一次）"""
        if self.preloaded:
            return self._preloaded_coefficients(temperature)
        model = self.config.build_model(temperature)
        cache: Dict[Tuple[Any, float], ChainCoefficients] = {}
        coeffs = []
        for bath in model.baths:
            key = (bath.spectral_density, bath.temperature)
            if key not in cache:
                self.logger.info(f"热化谱密度并计算链系数: T={bath.temperature} K, N={n_sites}")
                cache[key] = recurrence_coefficients(thermalize(bath.spectral_density, bath.temperature), n_sites)
            coeffs.append(cache[key])
        return coeffs

    def _preloaded_coefficients(self, temperature: float) -> List[ChainCoefficients]:
        """
        使用读入的系数；二聚体只给一组时左右两条链共用

        Raises:
            DomainError: 组数与环境个数不符，或系数的温度与本次运行不同
        """
        expected = 2 if self.config.kind == DIMER else 1
        coeffs = list(self.preloaded)
        if len(coeffs) == 1 and expected == 2:
            coeffs = coeffs * 2
        if len(coeffs) != expected:
            raise DomainError(f"{self.config.kind} model needs {expected} coefficient set(s), got {len(coeffs)}")
        for c in coeffs:
            stored = c.descriptor.get("temperature")
            if stored is not None and abs(float(stored) - temperature) > 1e-9:
                raise DomainError(f"coefficients were computed at T={stored} K but the run asks for T={temperature} K")
        return coeffs

    def resolve_chain_length(self, temperature: float) -> Tuple[int, List[ChainCoefficients]]:
        """
        确定链长 N 并返回至少 N 个系数

        Returns:
            (N, 每个环境的系数)
        """
        cfg = self.config
        if not cfg.auto_chain_length:
            n = cfg.chain_length
            return n, self.chain_coefficients(temperature, n)

        trial = self.chain_coefficients(temperature, min(ESTIMATE_LENGTH, cfg.chain_length_cap))
        n = max(
            estimate_chain_length(
                c, cfg.evolution.t_max, cfg.chain_length_threshold, cap=cfg.chain_length_cap
            )
            for c in trial
        )
        self.logger.info(f"T={temperature} K: 自动估计链长 N={n}")
        if n > len(trial[0]):
            trial = self.chain_coefficients(temperature, n)
        return n, trial

    # ------------------------------------------------------------------
    # 运行
    # ------------------------------------------------------------------

    def run_temperature(self, temperature: float) -> RunResult:
        """
        单个温度的完整流程：链系数 → 链长 → 局域维数 → 真空初态 → TEBD → 写文件

        任何阶段的 TTedopaError 或 LinAlgError 都转为错误记录，不影响其他温度。
        """
        cfg = self.config
        stem = self._stem(temperature)
        stage = "model"
        started = time.perf_counter()
        try:
            model = cfg.build_model(temperature)
            stage = "chain_coefficients"
            n, coeffs = self.resolve_chain_length(temperature)
            stage = "assemble"
            dims = local_dimension_schedule(cfg.d_max, n)
            ham = assemble_chain([c.truncated(n) for c in coeffs], model, dims)
            stage = "evolution"
            state = init_vacuum(model, ham)
            series = tebd_evolve(state, ham, cfg.evolution_for_run())
            wall = time.perf_counter() - started

            stage = "write"
            outputs = {"series": str(self.formatter.write_text(self.formatter.format_time_series(series), self.output_dir / f"{stem}.csv"))}
            labels = ["L", "R"] if model.kind == DIMER else [""]
            for label, c in zip(labels, coeffs):
                suffix = f"_coefficients_{label}.csv" if label else "_coefficients.csv"
                path = self.formatter.write_text(self.formatter.format_coefficients(c.truncated(n)), self.output_dir / f"{stem}{suffix}")
                outputs[f"coefficients{'_' + label if label else ''}"] = str(path)

            resolved = cfg.to_dict()
            resolved.update({"temperatures": [temperature], "chain_length": n, "auto_chain_length": False})
            manifest = self.formatter.format_manifest(
                config=resolved,
                model=model.describe(),
                temperature=temperature,
                chain_length=n,
                local_dims=dims,
                coefficients=[c.truncated(n) for c in coeffs],
                series=series,
                wall_time=wall,
                outputs=outputs,
            )
            manifest_path = self.output_dir / f"{stem}_manifest.json"
            self.formatter.write_json(manifest, manifest_path)
            outputs["manifest"] = str(manifest_path)
            self.logger.info(f"T={temperature} K 完成，用时 {wall:.1f} s\n{self.formatter.format_summary(series, stem)}")
            return RunResult(temperature, 0, outputs)

        except (TTedopaError, np.linalg.LinAlgError) as e:
            error = _as_simulator_error(e)
            self.logger.error(f"T={temperature} K 在阶段 {stage} 失败: {error}")
            record = self.formatter.format_error_record(stage, error, temperature)
            path = self.formatter.write_json(record, self.output_dir / f"{stem}_error.json")
            return RunResult(temperature, exit_code_for(error), {"error": str(path)}, record)

    def run(self) -> int:
        """
        依次（或用 run_workers 个工作线程）运行所有温度

        Returns:
            int: 0 表示全部成功，否则为各温度退出码的最大值
        """
        temps = list(self.config.temperatures)
        self.logger.info(f"开始运行预设 {self.config.preset}: 温度 {temps} K")
        if self.config.run_workers > 1 and len(temps) > 1:
            with ThreadPoolExecutor(max_workers=self.config.run_workers) as pool:
                results = list(pool.map(self.run_temperature, temps))
        else:
            results = [self.run_temperature(t) for t in temps]
        self.results = results
        return max(r.exit_code for r in results)

    # ------------------------------------------------------------------
    # 诊断与校验
    # ------------------------------------------------------------------

    def export_coefficients(self, n_sites: int) -> List[Path]:
        """链系数 CSV，以及可由 simulate --coefficients 读回的 JSON"""
        paths = []
        for t in self.config.temperatures:
            coeffs = self.chain_coefficients(t, n_sites)
            labels = ["L", "R"] if self.config.kind == DIMER else [""]
            for label, c in zip(labels, coeffs):
                name = f"{self._stem(t)}_coefficients_{label}" if label else f"{self._stem(t)}_coefficients"
                paths.append(self.formatter.write_text(self.formatter.format_coefficients(c), self.output_dir / f"{name}.csv"))
                save_coefficients(c, self.output_dir / f"{name}.json")
                paths.append(self.output_dir / f"{name}.json")
        return paths

    def export_occupation(self, n_sites: int) -> List[Path]:
        """标准链映射（未热化谱密度）下的热占据数"""
        sd = self.config.density()
        coeffs = recurrence_coefficients(sd, n_sites)
        paths = []
        for t in self.config.temperatures:
            profile = thermal_occupation(coeffs, t)
            self.logger.info(f"T={t} K: 最大占据数 {profile.max_occupation:.4f}")
            paths.append(self.formatter.write_text(self.formatter.format_occupation(profile), self.output_dir / f"{self._stem(t)}_occupation.csv"))
        return paths

    def export_chain_length(self, alpha_profile: bool = False) -> List[Dict[str, Any]]:
        """
        每个温度写一行 N_estimate 记录

        alpha_profile 为真时另写 2N 个格点上的 |α_n(t)|²，即估计时用作参照的那条链
        """
        records = []
        cfg = self.config
        t_max = cfg.evolution.t_max
        for t in cfg.temperatures:
            trial = self.chain_coefficients(t, min(ESTIMATE_LENGTH, cfg.chain_length_cap))
            lengths = [estimate_chain_length(c, t_max, cfg.chain_length_threshold, cap=cfg.chain_length_cap) for c in trial]
            n = max(lengths)
            stem = self._stem(t)
            record = {"temperature": t, "chain_length": n}
            record["path"] = str(self.formatter.write_text(
                self.formatter.format_chain_length(n, t, t_max, cfg.chain_length_threshold),
                self.output_dir / f"{stem}_chain_length.csv",
            ))
            if alpha_profile:
                walk = quantum_walk(trial[lengths.index(n)], 2 * n, walk_time_grid(t_max))
                record["alpha_profile"] = str(self.formatter.write_text(
                    self.formatter.format_walk_profile(walk), self.output_dir / f"{stem}_alpha_profile.csv"
                ))
            records.append(record)
        return records

    def export_dephasing_oracle(self) -> List[Path]:
        if self.config.kind != DEPHASING:
            raise DomainError("the analytic solution exists only for the pure-dephasing model")
        evo = self.config.evolution
        times = np.arange(0, evo.n_steps + 1, evo.stride) * evo.dt
        paths = []
        for t in self.config.temperatures:
            curve = dephasing_coherence(self.config.density(), t, times)
            paths.append(self.formatter.write_text(self.formatter.format_decoherence(curve), self.output_dir / f"{self._stem(t)}_oracle.csv"))
        return paths

    def export_ed_oracle(self, n_sites: int, local_dim: int) -> List[Path]:
        paths = []
        for t in self.config.temperatures:
            model = self.config.build_model(t)
            coeffs = self.chain_coefficients(t, n_sites) if n_sites > 0 else None
            series = ed_evolve(model, coeffs, [local_dim] * n_sites, self.config.evolution, include_invariants=False)
            paths.append(self.formatter.write_text(self.formatter.format_time_series(series), self.output_dir / f"{self._stem(t)}_ed.csv"))
        return paths


def _load_coefficient_files(paths: Optional[Sequence[str]]) -> List[ChainCoefficients]:
    """读入 --coefficients 指定的 JSON 文件"""
    coeffs = []
    for path in paths or ():
        try:
            coeffs.append(load_coefficients(path))
        except (OSError, json.JSONDecodeError) as e:
            raise DomainError(f"cannot read chain coefficients from {path}: {e}") from e
    return coeffs


def compare(series_a: str, series_b: str, column: str) -> Dict[str, float]:
    """
    两个 CSV 同一列的最大绝对差

    Raises:
        DomainError: 时间网格不一致或缺少该列
    """
    formatter = OutputFormatter()
    ta, cols_a = formatter.read_csv(series_a)
    tb, cols_b = formatter.read_csv(series_b)
    if ta.shape != tb.shape or (ta.size and np.max(np.abs(ta - tb)) > GRID_TOLERANCE):
        raise DomainError(f"time grids of {series_a} and {series_b} do not match")
    for name, cols in ((series_a, cols_a), (series_b, cols_b)):
        if column not in cols:
            raise DomainError(f"{name} has no column '{column}'")
    diff = np.abs(cols_a[column] - cols_b[column])
    if diff.size == 0:
        return {"max_abs_diff": 0.0, "t_ps": 0.0}
    k = int(np.argmax(diff))
    return {"max_abs_diff": float(diff[k]), "t_ps": float(ta[k])}


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    """配置文件（默认项目根目录 config.json）加命令行覆盖"""
    if args.config:
        base = load_run_config(args.config)
    else:
        base = ConfigManager().get_run_config()
    data = base.to_dict()

    if args.preset and args.preset != base.preset:
        data["preset"] = args.preset
        old_default = DEFAULT_CHI_DIMER if base.kind == DIMER else DEFAULT_CHI_MONOMER
        if data["evolution"].get("chi_max") == old_default:
            del data["evolution"]["chi_max"]
        if tuple(data["evolution"].get("observables", ())) == DEFAULT_OBSERVABLES[base.kind]:
            del data["evolution"]["observables"]
    if args.temperature:
        data["temperatures"] = list(args.temperature)
    if args.threads is not None:
        data["threads"] = args.threads
    if args.output:
        data["output_dir"] = args.output
    for key in ("chain_length", "t_max"):
        value = getattr(args, key, None)
        if value is None:
            continue
        if key == "t_max":
            data["evolution"]["t_max"] = value
        elif args.command == "simulate":
            data["chain_length"] = value
            data["auto_chain_length"] = False
    return RunConfig.from_dict(data)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='运行配置 JSON（也可以是之前的运行清单）')
    common.add_argument('--output', '-o', help='输出目录')
    common.add_argument('--temperature', '-T', type=float, action='append', help='温度 (K)，可重复')
    common.add_argument('--threads', type=int, help='TEBD 每层的线程数')
    common.add_argument('--preset', choices=sorted(PRESETS), help='预设模型')
    common.add_argument('--t-max', dest='t_max', type=float, help='模拟时长 (ps)')
    common.add_argument('--verbose', '-v', action='store_true', help='详细输出')

    parser = argparse.ArgumentParser(
        description="T-TEDOPA: 热化谱密度链映射 + TEBD 的开放量子系统模拟",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
示例用法:
  %(prog)s chain-coeffs --preset dephasing-wscp -T 300 --chain-length 100 -o out/
  %(prog)s chain-length --preset dephasing-wscp -T 300 --t-max 1.4 --alpha-profile -o out/
  %(prog)s simulate --preset dephasing-wscp -T 300 -N 100 --coefficients out/dephasing-wscp_T300K_coefficients.json -o out/
  %(prog)s simulate --preset dimer-wscp -T 300 --threads 4 -o out/
  %(prog)s dephasing-oracle --preset dephasing-wscp -T 77 -o out/
  %(prog)s compare out/a.csv out/b.csv --column coherence
        """
    )
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('chain-coeffs', parents=[common], help='计算热化谱密度的链系数')
    p.add_argument('--chain-length', '-N', dest='chain_length', type=int, default=100, help='系数个数 (默认: 100)')

    p = sub.add_parser('occupation', parents=[common], help='标准链映射下的热占据数')
    p.add_argument('--chain-length', '-N', dest='chain_length', type=int, default=50, help='链长 (默认: 50)')

    p = sub.add_parser('chain-length', parents=[common], help='量子行走链长估计')
    p.add_argument('--alpha-profile', dest='alpha_profile', action='store_true', help='同时导出 |α_n(t)|² 表')

    p = sub.add_parser('simulate', parents=[common], help='TEBD 时间演化')
    p.add_argument('--chain-length', '-N', dest='chain_length', type=int, help='固定链长（关闭自动估计）')
    p.add_argument('--coefficients', action='append', help='chain-coeffs 导出的系数 JSON（二聚体按 L、R 顺序给两次，只给一次则左右共用）')

    sub.add_parser('dephasing-oracle', parents=[common], help='纯退相干解析解')

    p = sub.add_parser('ed-oracle', parents=[common], help='小体系精确对角化')
    p.add_argument('--chain-length', '-N', dest='chain_length', type=int, default=3, help='链长 (默认: 3)')
    p.add_argument('--local-dim', '-d', dest='local_dim', type=int, default=4, help='振子截断维数 (默认: 4)')

    p = sub.add_parser('compare', help='比较两个 CSV 的同一列')
    p.add_argument('series_a')
    p.add_argument('series_b')
    p.add_argument('--column', required=True, help='列名')
    p.add_argument('--tolerance', type=float, help='超过此值时以状态 1 退出')
    p.add_argument('--verbose', '-v', action='store_true', help='详细输出')
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """主函数 - 命令行接口"""
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    logger = logging.getLogger(__name__)

    try:
        if args.command == 'compare':
            report = compare(args.series_a, args.series_b, args.column)
            print(f"{args.column}: 最大绝对差 {report['max_abs_diff']:.6e}，位于 t = {report['t_ps']:.6g} ps")
            if args.tolerance is not None and report['max_abs_diff'] > args.tolerance:
                return 1
            return 0

        config = _config_from_args(args)
        simulator = TTedopaSimulator(config, _load_coefficient_files(getattr(args, 'coefficients', None)))

        if args.command == 'simulate':
            status = simulator.run()
            for r in simulator.results:
                if r.exit_code == 0:
                    print(f"T={r.temperature:g} K: 成功 -> {r.outputs['series']}")
                else:
                    print(f"T={r.temperature:g} K: 失败 ({r.error['type']}: {r.error['message']})")
            return status
        if args.command == 'chain-coeffs':
            paths = simulator.export_coefficients(args.chain_length)
        elif args.command == 'occupation':
            paths = simulator.export_occupation(args.chain_length)
        elif args.command == 'chain-length':
            for record in simulator.export_chain_length(args.alpha_profile):
                print(f"T={record['temperature']:g} K: N = {record['chain_length']}")
            return 0
        elif args.command == 'dephasing-oracle':
            paths = simulator.export_dephasing_oracle()
        else:
            paths = simulator.export_ed_oracle(args.chain_length, args.local_dim)
        for p in paths:
            print(f"导出成功: {p}")
        return 0

    except (TTedopaError, np.linalg.LinAlgError) as e:
        error = _as_simulator_error(e)
        logger.error(f"{type(error).__name__}: {error}")
        print(f"错误: {error}", file=sys.stderr)
        return exit_code_for(error)


if __name__ == '__main__':
    sys.exit(main())
