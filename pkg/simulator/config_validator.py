"""
配置验证器 - 检查运行配置中每个字段的合法性

这个模块负责：
1. 逐项检查运行配置（预设、温度、链长、局域维数、演化参数、线程数）
2. 返回带有出错字段名的 ValidationResult
3. 为命令行把第一个无效结果转换为 ConfigValidationError
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Optional

from errors import ConfigValidationError, DomainError
from observables import parse_observable
from spectral_density import SpectralDensity

logger = logging.getLogger(__name__)

PRESET_NAMES = ("dephasing-wscp", "dephasing-wscp-background", "dimer-wscp", "dimer-wscp-background", "custom")
MODEL_KINDS = ("dephasing", "dimer")


@dataclass
class ValidationResult:
    """配置验证结果"""
    is_valid: bool
    field: str
    message: str
    details: Optional[Dict[str, Any]] = None


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


class ConfigValidator:
    """运行配置验证器类"""

    def __init__(self):
        self.logger = logging.getLogger(__name__)

    def validate(self, data: Dict[str, Any]) -> ValidationResult:
        """
        验证运行配置字典

        Args:
            data: RunConfig 的字典形式

        Returns:
            ValidationResult: 第一个无效字段的结果，全部有效时 is_valid=True
        """
        if not isinstance(data, dict):
            return ValidationResult(False, "config", "运行配置必须是对象")

        checks = (
            self._validate_preset,
            self._validate_temperatures,
            self._validate_chain_length,
            self._validate_dimensions,
            self._validate_workers,
            self._validate_evolution,
        )
        for check in checks:
            result = check(data)
            if result is not None:
                self.logger.debug(f"配置字段 {result.field} 无效: {result.message}")
                return result
        return ValidationResult(True, "", "配置有效", details={"preset": data.get("preset", "dephasing-wscp")})

    def require_valid(self, data: Dict[str, Any]) -> None:
        """
        Raises:
            ConfigValidationError: 配置无效
        """
        result = self.validate(data)
        if not result.is_valid:
            raise ConfigValidationError(result.field, result.message)

    def _validate_preset(self, data: Dict[str, Any]) -> Optional[ValidationResult]:
        preset = data.get("preset", "dephasing-wscp")
        if preset not in PRESET_NAMES:
            return ValidationResult(False, "preset", f"不支持的预设: {preset}", details={"supported": list(PRESET_NAMES)})
        if preset != "custom":
            return None

        if data.get("model_kind") not in MODEL_KINDS:
            return ValidationResult(False, "model_kind", f"custom 预设需要 model_kind ∈ {MODEL_KINDS}")
        sd = data.get("spectral_density")
        if not isinstance(sd, dict):
            return ValidationResult(False, "spectral_density", "custom 预设需要谱密度参数")
        try:
            SpectralDensity.from_dict(sd)
        except (DomainError, KeyError, TypeError) as e:
            return ValidationResult(False, "spectral_density", f"谱密度参数无效: {e}")
        return None

    def _validate_temperatures(self, data: Dict[str, Any]) -> Optional[ValidationResult]:
        temps = data.get("temperatures", [0.0])
        if not isinstance(temps, (list, tuple)) or len(temps) == 0:
            return ValidationResult(False, "temperatures", "至少需要一个温度")
        for t in temps:
            if not _is_number(t) or t < 0:
                return ValidationResult(False, "temperatures", f"温度必须是非负有限数 (K)，得到 {t}")
        return None

    def _validate_chain_length(self, data: Dict[str, Any]) -> Optional[ValidationResult]:
        n = data.get("chain_length")
        auto = data.get("auto_chain_length", n is None)
        if not isinstance(auto, bool):
            return ValidationResult(False, "auto_chain_length", "必须是布尔值")
        if n is not None and auto:
            return ValidationResult(False, "chain_length", "chain_length 与 auto_chain_length 不能同时设置")
        if n is None and not auto:
            return ValidationResult(False, "chain_length", "关闭自动估计时必须给出 chain_length")
        if n is not None and (not _is_int(n) or n < 1):
            return ValidationResult(False, "chain_length", f"链长必须是正整数，得到 {n}")

        threshold = data.get("chain_length_threshold", 1e-6)
        if not _is_number(threshold) or not 0 < threshold < 1:
            return ValidationResult(False, "chain_length_threshold", f"阈值必须在 (0, 1) 内，得到 {threshold}")
        cap = data.get("chain_length_cap", 2000)
        if not _is_int(cap) or cap < 2:
            return ValidationResult(False, "chain_length_cap", f"链长上限必须是不小于 2 的整数，得到 {cap}")
        return None

    def _validate_dimensions(self, data: Dict[str, Any]) -> Optional[ValidationResult]:
        d_max = data.get("d_max", 6)
        if not _is_int(d_max) or d_max < 2:
            return ValidationResult(False, "d_max", f"局域维数必须是不小于 2 的整数，得到 {d_max}")
        for key in ("cross_coupling", "epsilon"):
            if key in data and not _is_number(data[key]):
                return ValidationResult(False, key, f"必须是有限数，得到 {data[key]}")
        return None

    def _validate_workers(self, data: Dict[str, Any]) -> Optional[ValidationResult]:
        for key in ("threads", "run_workers"):
            value = data.get(key, 1)
            if not _is_int(value) or value < 1:
                return ValidationResult(False, key, f"必须是正整数，得到 {value}")
        output_dir = data.get("output_dir", "output")
        if not isinstance(output_dir, str) or not output_dir:
            return ValidationResult(False, "output_dir", "输出目录不能为空")
        return None

    def _validate_evolution(self, data: Dict[str, Any]) -> Optional[ValidationResult]:
        evo = data.get("evolution", {})
        if not isinstance(evo, dict):
            return ValidationResult(False, "evolution", "演化参数必须是对象")
        rules = {
            "dt": lambda v: _is_number(v) and v > 0,
            "t_max": lambda v: _is_number(v) and v >= 0,
            "chi_max": lambda v: _is_int(v) and v >= 1,
            "svd_cutoff": lambda v: _is_number(v) and 0 <= v < 1,
            "stride": lambda v: _is_int(v) and v >= 1,
            "discarded_budget": lambda v: _is_number(v) and v >= 0,
            "threads": lambda v: _is_int(v) and v >= 1,
            "observables": lambda v: isinstance(v, (list, tuple)) and len(v) > 0 and all(isinstance(o, str) for o in v),
        }
        for key, ok in rules.items():
            if key in evo and not ok(evo[key]):
                return ValidationResult(False, f"evolution.{key}", f"取值无效: {evo[key]}")
        unknown = sorted(set(evo) - set(rules))
        if unknown:
            return ValidationResult(False, "evolution", f"未知的演化参数: {unknown}")
        for label in evo.get("observables", ()):
            try:
                parse_observable(label)
            except DomainError as e:
                return ValidationResult(False, "evolution.observables", str(e))
        return None
