"""
驗證套件測試
Tests for wmnet.checks
"""

import json

import pytest

from wmnet.checks import (MUX5_PARAM_COUNT, check_arp_identity, check_direct_matches_ste,
                          check_param_count, check_reinforce_matches_expansion, run_verification)
from wmnet.oracle import EnumBudget


class TestIndividualChecks:

    def test_arp_identity(self):
        result = check_arp_identity(seed=1, samples=500)
        assert result.passed
        assert result.measured <= 1e-12

    def test_direct_matches_ste(self):
        ratio, expansion = check_direct_matches_ste(seed=2, traces=20)
        assert ratio.passed
        assert expansion.passed

    def test_reinforce_matches_expansion(self):
        assert check_reinforce_matches_expansion(seed=3, traces=20).passed

    def test_param_count(self):
        result = check_param_count()
        assert result.passed
        assert result.measured == MUX5_PARAM_COUNT


@pytest.fixture(scope="module")
def report():
    return run_verification(EnumBudget(), seed=0)


class TestRunVerification:

    def test_all_checks_pass(self, report):
        failed = [c['name'] for c in report['checks'] if not c['passed']]
        assert failed == []
        assert report['passed']

    def test_second_order_reports_spread(self, report):
        [check] = [c for c in report['checks'] if c['name'] == "wm_reinforce_second_order"]
        assert check['tolerance'] == 4.0
        assert 1.0 < check['measured'] < 4.0

    def test_report_is_json(self, report):
        text = json.dumps(report)
        names = {c['name'] for c in json.loads(text)['checks']}
        assert {"arp_identity", "global_reinforce_unbiased", "wm_direct_ratio_constant",
                "ste_equals_expansion", "wm_reinforce_cosine_small_norm", "wm_reinforce_second_order",
                "gradient_fd_vs_analytic", "score_function_forms", "param_count"} <= names

    def test_budget_too_small_raises(self):
        from wmnet.exceptions import BudgetExceededError
        with pytest.raises(BudgetExceededError):
            run_verification(EnumBudget(max_total_hidden_bits=1), seed=0)
