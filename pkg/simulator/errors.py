"""
异常定义 - T-TEDOPA 模拟器统一使用的异常层次

DomainError 表示输入不合法（命令行退出码 2），
NumericalError 表示数值过程失败（命令行退出码 3）。
"""

from typing import Optional


class TTedopaError(Exception):
    """所有模拟器异常的基类"""


class DomainError(TTedopaError, ValueError):
    """输入超出定义域"""


class ConfigValidationError(DomainError):
    """运行配置校验失败，field 指出出错的配置项"""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


class NumericalError(TTedopaError, ArithmeticError):
    """数值计算失败"""


class QuadratureError(NumericalError):
    """积分未在容差内收敛"""

    def __init__(self, message: str, achieved_error: float):
        super().__init__(f"{message} (achieved error {achieved_error:.3e})")
        self.achieved_error = achieved_error


class ChainInstabilityError(NumericalError):
    """递推系数失去正定性"""

    def __init__(self, index: int, value: Optional[float] = None):
        detail = "" if value is None else f", beta={value:.3e}"
        super().__init__(f"recurrence lost positivity at index {index}{detail}")
        self.index = index
        self.value = value


class ChainLengthError(NumericalError):
    """链长估计在上限之前没有收敛"""

    def __init__(self, last_tested: int, cap: int):
        super().__init__(f"chain length estimate did not converge up to cap {cap} (last tested M={last_tested})")
        self.last_tested = last_tested
        self.cap = cap


class LinearAlgebraError(NumericalError):
    """LAPACK 例程（SVD、本征分解）没有收敛"""
