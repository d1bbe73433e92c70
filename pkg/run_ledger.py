"""
Run Ledger for structure-learning experiments

This module keeps a SQLite record of sweep results and learner invocations so
experiments can be inspected and summarized after the fact.

Features:
1. One row per experiment record (cell, N, algorithm, trial, metrics)
2. Learner event log (node, rounds, members, wall time)
3. Filtered, paginated record retrieval
4. Per (generator, algorithm, N) summaries for success-rate curves
"""

import json
import sqlite3
from contextlib import closing
from typing import Any, Dict, List, Optional, Sequence

import settings

ledger_logger = settings.get_logger('run_ledger')


class RunLedger:
    """
    SQLite ledger of experiment records and learner events.
    """

    def __init__(self, database_path: Optional[str] = None):
        """
        Initialize the ledger.

        Args:
            database_path: Path to SQLite database (default GGM_RESULTS_DB)
        """
        self.database_path = database_path or settings.RESULTS_DB
        self._init_tables()

    def _connect(self):
        # closed on exit even when a statement raises
        return closing(sqlite3.connect(self.database_path))

    def _init_tables(self):
        with self._connect() as conn:
            conn.execute('''
                CREATE TABLE IF NOT EXISTS experiment_records (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    generator TEXT NOT NULL,
                    n INTEGER NOT NULL,
                    params TEXT,
                    sample_count INTEGER NOT NULL,
                    algorithm TEXT NOT NULL,
                    seed INTEGER NOT NULL,
                    trial INTEGER NOT NULL,
                    success_rate REAL,
                    accuracy REAL,
                    wall_time_ms REAL,
                    edges_selected INTEGER,
                    pseudo_size_mean REAL,
                    failed BOOLEAN DEFAULT FALSE,
                    failure TEXT,
                    created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
                )
            ''')

            conn.execute('''
                CREATE TABLE IF NOT EXISTS learner_events (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    algorithm TEXT NOT NULL,
                    node INTEGER NOT NULL,
                    n INTEGER NOT NULL,
                    rounds INTEGER,
                    truncated BOOLEAN DEFAULT FALSE,
                    members TEXT,
                    wall_time_ms REAL,
                    created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
                )
            ''')

            conn.commit()

    def log_record(self, record) -> bool:
        """
        Store one ExperimentRecord.

        Returns:
            bool: True if stored successfully
        """
        try:
            with self._connect() as conn:
                conn.execute('''
                    INSERT INTO experiment_records
                    (generator, n, params, sample_count, algorithm, seed, trial, success_rate,
                     accuracy, wall_time_ms, edges_selected, pseudo_size_mean, failed, failure)
                    VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
                ''', (record.generator, record.n, json.dumps(record.params, sort_keys=True),
                      record.sample_count, record.algorithm, record.seed, record.trial,
                      record.success_rate, record.accuracy, record.wall_time_ms,
                      record.edges_selected, record.pseudo_size_mean, record.failed, record.failure or None))
                conn.commit()

            if record.failed:
                ledger_logger.warning(
                    f"RECORD FAILED: {record.generator} N={record.sample_count} {record.algorithm} "
                    f"trial {record.trial} - {record.failure}"
                )
            return True

        except Exception as e:
            ledger_logger.error(f"Failed to store experiment record: {e}")
            return False

    def log_learner_event(self, algorithm: str, node: int, n: int, rounds: int,
                          truncated: bool, members: Sequence[int], wall_time_ms: float) -> bool:
        """
        Store one learner invocation.

        Returns:
            bool: True if stored successfully
        """
        try:
            with self._connect() as conn:
                conn.execute('''
                    INSERT INTO learner_events
                    (algorithm, node, n, rounds, truncated, members, wall_time_ms)
                    VALUES (?, ?, ?, ?, ?, ?, ?)
                ''', (algorithm, int(node), int(n), int(rounds), bool(truncated),
                      json.dumps([int(m) for m in members]), float(wall_time_ms)))
                conn.commit()
            return True

        except Exception as e:
            ledger_logger.error(f"Failed to store learner event: {e}")
            return False

    def get_records(self, limit: int = 100, offset: int = 0, generator: Optional[str] = None,
                    algorithm: Optional[str] = None, sample_count: Optional[int] = None) -> Dict[str, Any]:
        """
        Retrieve experiment records with filtering and pagination.

        Returns:
            Dict containing records and metadata
        """
        try:
            query = 'SELECT * FROM experiment_records WHERE 1=1'
            params: List[Any] = []

            if generator:
                query += ' AND generator = ?'
                params.append(generator)

            if algorithm:
                query += ' AND algorithm = ?'
                params.append(algorithm)

            if sample_count is not None:
                query += ' AND sample_count = ?'
                params.append(int(sample_count))

            count_query = query.replace('SELECT * FROM', 'SELECT COUNT(*) FROM')

            with self._connect() as conn:
                conn.row_factory = sqlite3.Row
                total_count = conn.execute(count_query, params).fetchone()[0]

                query += ' ORDER BY id ASC LIMIT ? OFFSET ?'
                params.extend([int(limit), int(offset)])
                rows = conn.execute(query, params).fetchall()

            records = []
            for row in rows:
                record = dict(row)
                record['params'] = json.loads(record['params']) if record['params'] else {}
                record['failed'] = bool(record['failed'])
                records.append(record)

            return {
                'records': records,
                'total_count': total_count,
                'limit': limit,
                'offset': offset
            }

        except Exception as e:
            ledger_logger.error(f"Failed to retrieve experiment records: {e}")
            return {'records': [], 'total_count': 0, 'limit': limit, 'offset': offset}

    def get_learner_events(self, limit: int = 50, algorithm: Optional[str] = None) -> List[Dict]:
        try:
            query = 'SELECT * FROM learner_events'
            params: List[Any] = []

            if algorithm:
                query += ' WHERE algorithm = ?'
                params.append(algorithm)

            query += ' ORDER BY id ASC LIMIT ?'
            params.append(int(limit))

            with self._connect() as conn:
                conn.row_factory = sqlite3.Row
                events = conn.execute(query, params).fetchall()

            out = []
            for event in events:
                item = dict(event)
                item['members'] = json.loads(item['members']) if item['members'] else []
                item['truncated'] = bool(item['truncated'])
                out.append(item)
            return out

        except Exception as e:
            ledger_logger.error(f"Failed to retrieve learner events: {e}")
            return []

    def get_summary(self) -> List[Dict[str, Any]]:
        """
        Mean success rate and accuracy per (generator, algorithm, N), ascending N.
        Failed records count toward the trial and failure counts and the means.
        """
        try:
            with self._connect() as conn:
                rows = conn.execute('''
                    SELECT generator, algorithm, sample_count,
                           AVG(success_rate), AVG(accuracy), COUNT(*),
                           SUM(CASE WHEN failed THEN 1 ELSE 0 END)
                    FROM experiment_records
                    GROUP BY generator, algorithm, sample_count
                    ORDER BY generator, algorithm, sample_count = 0, sample_count ASC
                ''').fetchall()

            keys = ['generator', 'algorithm', 'sample_count', 'mean_success_rate',
                    'mean_accuracy', 'trials', 'failures']
            return [dict(zip(keys, row)) for row in rows]

        except Exception as e:
            ledger_logger.error(f"Failed to summarize experiment records: {e}")
            return []
