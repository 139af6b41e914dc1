"""
Weight Maximization 網路訓練套件
Bernoulli logistic networks trained with local reward rules
"""

__version__ = "1.0.0"
