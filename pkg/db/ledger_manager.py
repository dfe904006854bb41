"""
Privacy Ledger for the DP-ERM bench.

This module keeps an SQLite record of the mechanism behind every emitted
result row so that the declared privacy of a table can be re-checked later
by re-running the accountant on the stored (z, q, T, delta).

Classes:
    LedgerManager: Records mechanisms and audits them.

Functions:
    init_ledger: Factory function to create a LedgerManager instance.

Tables:
    mechanisms: One row per private ResultRow, keyed by run id.

Example:
    >>> from db.ledger_manager import LedgerManager
    >>> ledger = LedgerManager("results/ledger.db")
    >>> ledger.record(run_id, row)
    >>> violations = ledger.audit(run_id)
"""

import logging
import sqlite3
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Union

from models.models import MechanismSpec, ResultRow
from privacy.rdp_accountant import epsilon_for


logger = logging.getLogger(__name__)

# Recomputed epsilons may exceed the declared one by float noise only.
AUDIT_SLACK = 1e-9


class LedgerManager:
    """
    SQLite ledger of released mechanisms.

    Attributes:
        db_path: Path to the SQLite database file.
    """

    def __init__(self, db_path: Union[str, Path]):
        self.db_path = str(db_path)
        self._create_tables()

    def _get_connection(self) -> sqlite3.Connection:
        conn = sqlite3.connect(self.db_path)
        conn.row_factory = sqlite3.Row
        return conn

    def _create_tables(self):
        with self._get_connection() as conn:
            cursor = conn.cursor()
            cursor.execute("""
                CREATE TABLE IF NOT EXISTS mechanisms (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    run_id TEXT NOT NULL,
                    dataset TEXT NOT NULL,
                    algorithm TEXT NOT NULL,
                    epsilon REAL NOT NULL,
                    delta REAL NOT NULL,
                    noise_multiplier REAL NOT NULL,
                    sampling_ratio REAL NOT NULL,
                    steps INTEGER NOT NULL,
                    accountant TEXT NOT NULL,
                    recorded_at TIMESTAMP NOT NULL
                )
            """)
            cursor.execute("""
                CREATE INDEX IF NOT EXISTS idx_mechanisms_run_id
                ON mechanisms (run_id)
            """)
            conn.commit()

    def clear_run(self, run_id: str) -> int:
        """Drop the rows of an earlier run with the same id. Returns the count deleted."""
        with self._get_connection() as conn:
            cursor = conn.cursor()
            cursor.execute("DELETE FROM mechanisms WHERE run_id = ?", (run_id,))
            conn.commit()
            return cursor.rowcount

    def record(self, run_id: str, row: ResultRow) -> Optional[int]:
        """
        Store the mechanism of a private row.

        Output-perturbation rows are a single Gaussian release (q = 1, T = 1);
        gradient-perturbation rows compose T steps at ratio q. Rows without a
        noise multiplier (infeasible, non-private or zero-noise ablations)
        are not recorded and return None.
        """
        if not row.feasible or not row.noise_multiplier:
            return None
        single_shot = row.accountant == "gaussian"
        steps = 1 if single_shot else row.steps
        ratio = 1.0 if single_shot else row.sampling_ratio
        try:
            with self._get_connection() as conn:
                cursor = conn.cursor()
                cursor.execute("""
                    INSERT INTO mechanisms (run_id, dataset, algorithm, epsilon, delta,
                        noise_multiplier, sampling_ratio, steps, accountant, recorded_at)
                    VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
                """, (run_id, row.dataset, row.algorithm.value, row.epsilon, row.delta,
                      row.noise_multiplier, ratio, steps, row.accountant, datetime.now().isoformat()))
                conn.commit()
                return cursor.lastrowid
        except sqlite3.Error as e:
            logger.error("Error recording mechanism for %s/%s: %s", row.dataset, row.algorithm.value, e)
            return None

    def get_mechanisms(self, run_id: Optional[str] = None) -> List[Dict]:
        with self._get_connection() as conn:
            cursor = conn.cursor()
            if run_id is None:
                cursor.execute("SELECT * FROM mechanisms ORDER BY id")
            else:
                cursor.execute("SELECT * FROM mechanisms WHERE run_id = ? ORDER BY id", (run_id,))
            return [dict(r) for r in cursor.fetchall()]

    def audit(self, run_id: Optional[str] = None) -> List[Dict]:
        """
        Re-run the accountant on every stored mechanism.

        Returns:
            The rows whose recomputed epsilon exceeds the declared epsilon,
            each with an added ``recomputed_epsilon`` key.
        """
        violations = []
        for entry in self.get_mechanisms(run_id):
            mechanism = MechanismSpec(
                noise_multiplier=entry["noise_multiplier"],
                sampling_ratio=entry["sampling_ratio"],
                steps=entry["steps"],
            )
            recomputed = epsilon_for(mechanism, entry["delta"])
            if recomputed > entry["epsilon"] * (1.0 + AUDIT_SLACK):
                logger.error("Ledger violation: %s/%s declared eps=%.6g, accountant gives %.6g",
                             entry["dataset"], entry["algorithm"], entry["epsilon"], recomputed)
                violations.append({**entry, "recomputed_epsilon": recomputed})
        return violations


def init_ledger(db_path: Union[str, Path]) -> LedgerManager:
    return LedgerManager(db_path)
