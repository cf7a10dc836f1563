"""
配置管理器 - 统一管理 T-TEDOPA 模拟的运行配置

这个模块负责：
1. 定义运行配置 RunConfig 和预设模型（WSCP 退相干 / 二聚体）
2. 读取和写入项目根目录下的 config.json，格式无效时回退到默认配置
3. 从运行清单 (manifest) 中恢复配置，便于复现
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

from config_validator import ConfigValidator
from errors import ConfigValidationError, DomainError
from models import DEPHASING, DIMER, WSCP_CROSS_COUPLING, BathSpec, ModelSpec
from spectral_density import SpectralDensity, wscp_background_density, wscp_density
from tebd_engine import DEFAULT_CHI_DIMER, DEFAULT_CHI_MONOMER, EvolutionConfig

logger = logging.getLogger(__name__)

# 预设名 -> (模型类型, 谱密度构造函数)
PRESETS = {
    "dephasing-wscp": (DEPHASING, wscp_density),
    "dephasing-wscp-background": (DEPHASING, wscp_background_density),
    "dimer-wscp": (DIMER, wscp_density),
    "dimer-wscp-background": (DIMER, wscp_background_density),
    "custom": (None, None),
}

DEFAULT_OBSERVABLES = {
    DEPHASING: ("coherence",),
    DIMER: ("p_plus",),
}


@dataclass
class RunConfig:
    """
    一次模拟运行的全部参数

    chain_length 与 auto_chain_length 互斥；custom 预设需要 spectral_density 与 model_kind。
    """
    preset: str = "dephasing-wscp"
    temperatures: List[float] = field(default_factory=lambda: [0.0])
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    chain_length: Optional[int] = None
    auto_chain_length: bool = True
    d_max: int = 6
    output_dir: str = "output"
    threads: int = 1
    run_workers: int = 1
    model_kind: Optional[str] = None
    spectral_density: Optional[Dict[str, Any]] = None
    cross_coupling: float = WSCP_CROSS_COUPLING
    epsilon: float = 0.0
    chain_length_threshold: float = 1e-6
    chain_length_cap: int = 2000

    @property
    def kind(self) -> str:
        if self.preset == "custom":
            return self.model_kind
        return PRESETS[self.preset][0]

    def density(self) -> SpectralDensity:
        """预设对应的谱密度"""
        if self.preset == "custom":
            return SpectralDensity.from_dict(self.spectral_density, name="custom")
        return PRESETS[self.preset][1]()

    def build_model(self, temperature: float) -> ModelSpec:
        sd = self.density()
        n_baths = 1 if self.kind == DEPHASING else 2
        baths = tuple(BathSpec(sd, float(temperature)) for _ in range(n_baths))
        return ModelSpec(kind=self.kind, baths=baths, cross_coupling=self.cross_coupling, epsilon=self.epsilon)

    def evolution_for_run(self) -> EvolutionConfig:
        """线程数以运行配置为准"""
        data = self.evolution.to_dict()
        data["threads"] = self.threads
        return EvolutionConfig.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["evolution"] = self.evolution.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        """
        由字典构造（先校验）

        Raises:
            ConfigValidationError: 字段不合法，field 指出出错的配置项
        """
        ConfigValidator().require_valid(data)
        values = {k: data[k] for k in cls.__dataclass_fields__ if k in data and k != "evolution"}
        values["temperatures"] = [float(t) for t in data.get("temperatures", [0.0])]
        if data.get("chain_length") is not None and "auto_chain_length" not in data:
            values["auto_chain_length"] = False

        evolution = dict(data.get("evolution") or {})
        kind = data.get("model_kind") if data.get("preset") == "custom" else PRESETS[data.get("preset", "dephasing-wscp")][0]
        if "chi_max" not in evolution:
            evolution["chi_max"] = DEFAULT_CHI_DIMER if kind == DIMER else DEFAULT_CHI_MONOMER
        if "observables" not in evolution:
            evolution["observables"] = list(DEFAULT_OBSERVABLES[kind])
        try:
            values["evolution"] = EvolutionConfig.from_dict(evolution)
        except DomainError as e:
            raise ConfigValidationError("evolution", str(e))
        return cls(**values)


def load_run_config(path: str) -> RunConfig:
    """
    读取运行配置文件

    支持三种格式：裸的 RunConfig 字典、config.json（取 "run" 部分）、
    运行清单（取 "config" 部分）。
    """
    config_path = Path(path)
    if not config_path.exists():
        raise ConfigValidationError("config", f"配置文件不存在: {path}")
    try:
        with open(config_path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigValidationError("config", f"JSON 解析失败: {e}")
    if not isinstance(data, dict):
        raise ConfigValidationError("config", "配置文件顶层必须是对象")
    if "config" in data and "schema_version" in data:
        logger.info(f"从运行清单恢复配置: {path}")
        data = data["config"]
    elif "run" in data and "version" in data:
        data = data["run"]
    return RunConfig.from_dict(data)


class ConfigManager:
    """项目级默认配置 (config.json) 的读写"""

    CONFIG_FILE = "config.json"
    CONFIG_VERSION = "1.0"

    def __init__(self, config_file_path: Optional[str] = None):
        """
        初始化配置管理器

        Args:
            config_file_path: 配置文件路径，默认为项目根目录下的config.json
        """
        self.logger = logging.getLogger(__name__)

        if config_file_path:
            self.config_file_path = Path(config_file_path)
        else:
            project_root = Path(__file__).parent.parent  # 从simulator目录回到项目根目录
            self.config_file_path = project_root / self.CONFIG_FILE

        self.logger.info(f"配置文件路径: {self.config_file_path}")

        self._config = None
        self._load_config()

    def _load_config(self) -> None:
        """加载配置文件"""
        try:
            if self.config_file_path.exists():
                with open(self.config_file_path, 'r', encoding='utf-8') as f:
                    self._config = json.load(f)
                    self.logger.info("成功加载配置文件")

                if not self._validate_config():
                    self.logger.warning("配置文件格式无效，将重新初始化")
                    self._create_default_config()
            else:
                self.logger.info("配置文件不存在，创建默认配置")
                self._create_default_config()

        except (OSError, json.JSONDecodeError) as e:
            self.logger.error(f"加载配置文件失败: {e}")
            self.logger.warning("使用默认配置")
            self._create_default_config()

    def _validate_config(self) -> bool:
        """验证配置文件格式"""
        if not isinstance(self._config, dict):
            return False

        for key in ("version", "run", "created_at", "updated_at"):
            if key not in self._config:
                return False

        if not isinstance(self._config["run"], dict):
            return False

        result = ConfigValidator().validate(self._config["run"])
        if not result.is_valid:
            self.logger.warning(f"运行配置无效 ({result.field}): {result.message}")
            return False
        return True

    def _create_default_config(self) -> None:
        """创建默认配置"""
        current_time = datetime.now().isoformat()

        self._config = {
            "version": self.CONFIG_VERSION,
            "run": RunConfig().to_dict(),
            "created_at": current_time,
            "updated_at": current_time
        }

        self._save_config()

    def _save_config(self) -> bool:
        """
        保存配置到文件

        Returns:
            bool: 保存是否成功
        """
        try:
            self._config["updated_at"] = datetime.now().isoformat()
            self.config_file_path.parent.mkdir(parents=True, exist_ok=True)

            with open(self.config_file_path, 'w', encoding='utf-8') as f:
                json.dump(self._config, f, indent=2, ensure_ascii=False)

            self.logger.info("配置文件保存成功")
            return True

        except OSError as e:
            self.logger.error(f"保存配置文件失败: {e}")
            return False

    def get_run_config(self) -> RunConfig:
        return RunConfig.from_dict(self._config["run"])

    def set_run_config(self, config: RunConfig) -> bool:
        """
        替换默认运行配置

        Returns:
            bool: 保存是否成功
        """
        self._config["run"] = config.to_dict()
        return self._save_config()

    def reset(self) -> bool:
        return self.set_run_config(RunConfig())

    def get_config_info(self) -> Dict[str, Any]:
        """
        获取配置文件信息

        Returns:
            Dict: 配置文件信息
        """
        if not self._config:
            return {}

        return {
            "version": self._config.get("version"),
            "created_at": self._config.get("created_at"),
            "updated_at": self._config.get("updated_at"),
            "config_file_path": str(self.config_file_path),
            "config_file_exists": self.config_file_path.exists()
        }
