import pytest

from db.ledger_manager import LedgerManager, init_ledger
from models.models import Algorithm, MechanismSpec, PrivacyBudget, ResultRow
from privacy.rdp_accountant import calibrate_noise, epsilon_for


DELTA = 1e-5


def private_row(algorithm=Algorithm.DP_GD, epsilon=1.0, z=None, steps=100, q=1.0, accountant="rdp"):
    if z is None:
        z = calibrate_noise(PrivacyBudget(epsilon=epsilon, delta=DELTA), q, 1 if accountant == "gaussian" else steps)
    return ResultRow(dataset="toy", algorithm=algorithm, epsilon=epsilon, delta=DELTA, steps=steps,
                     learning_rate=1.0, noise_multiplier=z, sampling_ratio=q, accountant=accountant,
                     mean_accuracy=80.0, std_accuracy=1.0, mean_excess_risk=0.1, excess_risk_se=0.01, repeats=5)


@pytest.fixture
def ledger(tmp_path):
    return init_ledger(tmp_path / "ledger.db")


class TestLedger:
    def test_calibrated_rows_pass_the_audit(self, ledger):
        assert ledger.record("run", private_row()) is not None
        assert ledger.record("run", private_row(Algorithm.DP_SGD, q=0.1, steps=200)) is not None
        assert ledger.audit("run") == []
        assert len(ledger.get_mechanisms("run")) == 2

    def test_understated_epsilon_is_flagged(self, ledger):
        row = private_row(epsilon=1.0)
        ledger.record("run", row.model_copy(update={"epsilon": 0.5}))
        violations = ledger.audit("run")
        assert len(violations) == 1
        expected = epsilon_for(MechanismSpec(noise_multiplier=row.noise_multiplier, steps=100), DELTA)
        assert violations[0]["recomputed_epsilon"] == pytest.approx(expected)
        assert violations[0]["recomputed_epsilon"] > 0.5

    def test_single_release_rows(self, ledger):
        row = private_row(Algorithm.OUT_GD, steps=800, accountant="gaussian")
        ledger.record("run", row)
        (entry,) = ledger.get_mechanisms("run")
        assert (entry["steps"], entry["sampling_ratio"]) == (1, 1.0)
        assert ledger.audit("run") == []

    def test_rows_without_a_mechanism_are_skipped(self, ledger):
        infeasible = ResultRow(dataset="toy", algorithm=Algorithm.DP_GD, epsilon=0.01, delta=DELTA,
                               accountant="rdp", repeats=5, feasible=False)
        ablation = private_row(z=0.0)
        nonprivate = ResultRow(dataset="toy", algorithm=Algorithm.NONPRIVATE, epsilon=1.0, delta=DELTA,
                               accountant="none", mean_accuracy=85.0, repeats=1)
        assert all(ledger.record("run", row) is None for row in (infeasible, ablation, nonprivate))
        assert ledger.get_mechanisms() == []

    def test_runs_are_separate(self, ledger, tmp_path):
        ledger.record("a", private_row())
        ledger.record("a", private_row(epsilon=0.5))
        ledger.record("b", private_row())
        assert ledger.clear_run("a") == 2
        assert [m["run_id"] for m in ledger.get_mechanisms()] == ["b"]
        # a fresh handle on the same file sees the stored rows
        assert len(LedgerManager(tmp_path / "ledger.db").get_mechanisms("b")) == 1
