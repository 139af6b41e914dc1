#!/usr/bin/env python3
"""
例外定義
Exceptions raised by the wmnet package
"""


class WMNetError(Exception):
    """所有 wmnet 例外的基底"""


class DimensionError(WMNetError, ValueError):
    """形狀不相容"""

    def __init__(self, op: str, left, right):
        self.op = op
        self.left = tuple(left)
        self.right = tuple(right)
        super().__init__(f"{op}: 形狀不相容 {self.left} vs {self.right}")


class DomainError(WMNetError, ValueError):
    """參數超出定義域"""


class NumericalError(WMNetError, ArithmeticError):
    """運算結果出現 NaN / Inf"""


class NonFiniteWeightError(NumericalError):
    """訓練中權重變成非有限值"""

    def __init__(self, step: int, layer: int):
        self.step = step
        self.layer = layer
        super().__init__(f"第 {step} 步後 W^{layer} 出現非有限值，中止訓練")


class BudgetExceededError(WMNetError):
    """窮舉規模超過預算"""


class ConfigError(WMNetError, ValueError):
    """設定檔錯誤"""
