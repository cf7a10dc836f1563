"""
单位换算 - 能量与频率统一使用 cm^-1，时间使用 ps
"""

import math

# Boltzmann 常数 (cm^-1 / K)
K_B_CM = 0.695034800

# 光速 (cm / ps)
SPEED_OF_LIGHT_CM_PER_PS = 2.99792458e-2

# 1 cm^-1 的频率在 1 ps 内累积的相位 (rad)
PHASE_PER_PS = 2.0 * math.pi * SPEED_OF_LIGHT_CM_PER_PS


def temperature_to_beta(temperature: float) -> float:
    """温度 (K) 转换为逆温度 (1/cm^-1)，T = 0 对应 inf"""
    if temperature == 0:
        return math.inf
    return 1.0 / (K_B_CM * temperature)


def ps_to_phase(t_ps):
    """物理时间 (ps) 转换为 cm^-1 单位下的相位时间"""
    return PHASE_PER_PS * t_ps
