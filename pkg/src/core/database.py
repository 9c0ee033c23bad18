import logging
import sqlite3
from datetime import datetime

from src.core.calibration import CapParams

logger = logging.getLogger(__name__)


class CalibrationStore:
    """sqlite cache of calibrated parameters, keyed by (r, tol)."""

    def __init__(self, db_path="calibrations.db"):
        self.db_path = db_path
        self.connection = None
        self.cursor = None
        self.init_db()

    def connect(self):
        """Opens the sqlite file; every operation connects and closes on its own."""
        try:
            self.connection = sqlite3.connect(self.db_path)
            self.cursor = self.connection.cursor()
        except sqlite3.Error as e:
            logger.error("Database connection error (%s): %s", self.db_path, e)

    def init_db(self):
        """Creates the calibrations table if it is missing."""
        self.connect()
        if self.connection:
            try:
                self.cursor.execute("""
                    CREATE TABLE IF NOT EXISTS calibrations (
                        id INTEGER PRIMARY KEY AUTOINCREMENT,
                        r REAL NOT NULL,
                        tol REAL NOT NULL,
                        a REAL NOT NULL,
                        s_r REAL NOT NULL,
                        f1 REAL NOT NULL,
                        f2 REAL NOT NULL,
                        seed_a REAL NOT NULL,
                        method TEXT NOT NULL,
                        created TIMESTAMP,
                        UNIQUE (r, tol)
                    )
                """)
                self.connection.commit()
            except sqlite3.Error as e:
                logger.error("Error creating table: %s", e)
            finally:
                self.close()

    def add_params(self, params, tol):
        """Stores one calibration. Returns True if a row was written."""
        return self.batch_insert_params([(params, tol)]) > 0

    def batch_insert_params(self, entries):
        """Stores (CapParams, tol) pairs in a single transaction; existing keys are replaced.

        Returns:
            int: Number of rows written.
        """
        self.connect()
        if not self.connection:
            return 0

        try:
            created = datetime.now().isoformat(timespec='seconds')
            rows = [
                (p.r, tol, p.a, p.s_r, p.residual[0], p.residual[1], p.seed_a, p.method, created)
                for p, tol in entries
            ]
            self.cursor.executemany("""
                INSERT OR REPLACE INTO calibrations
                (r, tol, a, s_r, f1, f2, seed_a, method, created)
                VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)
            """, rows)
            self.connection.commit()
            return self.cursor.rowcount
        except sqlite3.Error as e:
            logger.error("Error storing calibrations: %s", e)
            return 0
        finally:
            self.close()

    @staticmethod
    def _row_to_params(row):
        r, _tol, a, s_r, f1, f2, seed_a, method = row
        return CapParams(r=r, a=a, s_r=s_r, residual=(f1, f2), seed_a=seed_a, method=method)

    def get_params(self, r, tol):
        """Cached CapParams for exactly this (r, tol), or None."""
        self.connect()
        if not self.connection:
            return None

        try:
            self.cursor.execute(
                "SELECT r, tol, a, s_r, f1, f2, seed_a, method FROM calibrations WHERE r = ? AND tol = ?",
                (r, tol),
            )
            row = self.cursor.fetchone()
            return self._row_to_params(row) if row else None
        except sqlite3.Error as e:
            logger.error("Error fetching calibration for r=%s: %s", r, e)
            return None
        finally:
            self.close()

    def get_all_params(self):
        """All cached calibrations ordered by radius, as (CapParams, tol) pairs."""
        self.connect()
        if not self.connection:
            return []

        try:
            self.cursor.execute(
                "SELECT r, tol, a, s_r, f1, f2, seed_a, method FROM calibrations ORDER BY r, tol"
            )
            return [(self._row_to_params(row), row[1]) for row in self.cursor.fetchall()]
        except sqlite3.Error as e:
            logger.error("Error fetching calibrations: %s", e)
            return []
        finally:
            self.close()

    def remove_params(self, r):
        """Removes every cached calibration for radius r."""
        self.connect()
        if not self.connection:
            return 0

        try:
            self.cursor.execute("DELETE FROM calibrations WHERE r = ?", (r,))
            deleted_count = self.cursor.rowcount
            self.connection.commit()
            logger.debug("removed %d calibrations for r=%s", deleted_count, r)
            return deleted_count
        except sqlite3.Error as e:
            logger.error("Error removing calibrations for r=%s: %s", r, e)
            return 0
        finally:
            self.close()

    def optimize_db(self):
        """VACUUM after bulk removals."""
        self.connect()
        if not self.connection:
            return False

        try:
            self.connection.execute("VACUUM")
            return True
        except sqlite3.Error as e:
            logger.error("Error optimizing database: %s", e)
            return False
        finally:
            self.close()

    def close(self):
        """Drops the connection and cursor."""
        if self.connection:
            self.connection.close()
            self.connection = None
            self.cursor = None
