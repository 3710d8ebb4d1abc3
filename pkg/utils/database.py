# utils/database.py
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

from sqlalchemy import (
    Boolean,
    Column,
    Integer,
    MetaData,
    String,
    Table,
    Text,
    create_engine,
    insert,
    select,
    text,
)
from sqlalchemy.engine import Engine

from config.config import get_archive_path
from orchestration.state import SimReport

logger = logging.getLogger(__name__)

metadata = MetaData()

verify_runs = Table(
    "verify_runs",
    metadata,
    Column("id", Integer, primary_key=True, autoincrement=True),
    Column("design", String(32), nullable=False),
    Column("seed", String(24), nullable=False),
    Column("reps", Integer, nullable=False),
    Column("worker_count", Integer, nullable=False),
    Column("passed", Boolean, nullable=False),
    Column("law_override", String(64)),
    Column("report", Text, nullable=False),
)


def get_db_path(path: Optional[Path] = None) -> Path:
    """Return the path to the verification archive."""
    return Path(path) if path is not None else get_archive_path()


def get_db_uri(path: Optional[Path] = None) -> str:
    """Return the SQLAlchemy connection URI for the archive."""
    return f"sqlite:///{get_db_path(path).as_posix()}"


def get_engine(path: Optional[Path] = None, echo: bool = False) -> Engine:
    """Create and return a SQLAlchemy engine for the archive, creating the table if needed."""
    db_path = get_db_path(path)
    db_path.parent.mkdir(parents=True, exist_ok=True)
    engine = create_engine(get_db_uri(db_path), echo=echo, future=True)
    metadata.create_all(engine)
    return engine


def run_query(query: str, params: Optional[dict] = None, path: Optional[Path] = None) -> List[Dict[str, Any]]:
    """Run raw SQL on the archive and return rows as dictionaries."""
    engine = get_engine(path)
    with engine.connect() as conn:
        result = conn.execute(text(query), params or {})
        rows = [dict(row._mapping) for row in result]
    engine.dispose()
    return rows


def get_tables(path: Optional[Path] = None) -> List[str]:
    rows = run_query("SELECT name FROM sqlite_master WHERE type='table' ORDER BY name", path=path)
    return [r["name"] for r in rows]


def record_report(report: SimReport, path: Optional[Path] = None) -> int:
    """Store a verification report and return its run id."""
    engine = get_engine(path)
    with engine.begin() as conn:
        result = conn.execute(
            insert(verify_runs).values(
                design=report["model"]["design"],
                # 64-bit seeds do not fit SQLite's signed INTEGER
                seed=str(report["seed"]),
                reps=report["reps"],
                worker_count=report["worker_count"],
                passed=report["passed"],
                law_override=report["law_override"],
                report=json.dumps(report, sort_keys=True),
            )
        )
        run_id = int(result.inserted_primary_key[0])
    engine.dispose()
    logger.info("archived verification run %d in %s", run_id, get_db_path(path))
    return run_id


def list_runs(limit: int = 20, path: Optional[Path] = None) -> List[Dict[str, Any]]:
    """Archived runs, newest first, without the report body."""
    engine = get_engine(path)
    query = (
        select(
            verify_runs.c.id,
            verify_runs.c.design,
            verify_runs.c.seed,
            verify_runs.c.reps,
            verify_runs.c.worker_count,
            verify_runs.c.passed,
            verify_runs.c.law_override,
        )
        .order_by(verify_runs.c.id.desc())
        .limit(limit)
    )
    with engine.connect() as conn:
        rows = [dict(row._mapping) for row in conn.execute(query)]
    engine.dispose()
    return rows


def get_report(run_id: int, path: Optional[Path] = None) -> Optional[SimReport]:
    engine = get_engine(path)
    with engine.connect() as conn:
        body = conn.execute(
            select(verify_runs.c.report).where(verify_runs.c.id == run_id)
        ).scalar_one_or_none()
    engine.dispose()
    return None if body is None else json.loads(body)
