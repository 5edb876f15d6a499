"""
Series persistence to SQLite or PostgreSQL through SQLAlchemy.
"""

import logging
import os

import pandas as pd
from sqlalchemy import create_engine

logger = logging.getLogger(__name__)

DEFAULT_TABLE = 'run_series'


def normalize_url(database_url: str) -> str:
    # Render hands out postgres:// URLs, SQLAlchemy wants postgresql://
    if database_url.startswith('postgres://'):
        return database_url.replace('postgres://', 'postgresql://', 1)
    return database_url


def _ensure_sqlite_dir(database_url: str):
    if not database_url.startswith('sqlite:///'):
        return
    db_dir = os.path.dirname(database_url.replace('sqlite:///', '', 1))
    if db_dir and not os.path.exists(db_dir):
        os.makedirs(db_dir, exist_ok=True)


def save_series(frame: pd.DataFrame, database_url: str, table: str = DEFAULT_TABLE) -> int:
    """Append series rows to table, creating it on first use"""
    database_url = normalize_url(database_url)
    _ensure_sqlite_dir(database_url)
    engine = create_engine(database_url)
    try:
        frame.to_sql(table, engine, if_exists='append', index=False)
    finally:
        engine.dispose()
    logger.info("Saved %d rows to table %s", len(frame), table)
    return len(frame)


def load_series(database_url: str, table: str = DEFAULT_TABLE) -> pd.DataFrame:
    engine = create_engine(normalize_url(database_url))
    try:
        return pd.read_sql_table(table, engine)
    finally:
        engine.dispose()
