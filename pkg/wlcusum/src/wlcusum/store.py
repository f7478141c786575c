"""
Result store: Monte Carlo records and run manifests in a SQL database.

Both stores create their two tables on connect:

- ``runs``: one row per saved run (run_id, created_at, tool_version, manifest JSON)
- ``metrics``: one row per MetricsRecord, keyed by run_id

Examples:
    Sync:
    >>> store = ResultStore.connect('sqlite:///results.db')
    >>> run_id = store.save_run(manifest, records)
    >>> store.load_records(run_id, metric='wadd')
    >>> store.close()

    Async:
    >>> store = await AsyncResultStore.connect('sqlite+aiosqlite:///results.db')
    >>> run_id = await store.save_run(manifest, records)
    >>> await store.close()
"""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import uuid
from contextlib import asynccontextmanager, contextmanager
from typing import Any, AsyncIterator, Iterator, Sequence

from sqlalchemy import (
    Column,
    Engine,
    Float,
    ForeignKey,
    Integer,
    MetaData,
    String,
    Table,
    Text,
    create_engine,
    select,
)
from sqlalchemy.exc import SQLAlchemyError
from sqlalchemy.ext.asyncio import AsyncConnection, AsyncEngine, create_async_engine

from .exceptions import StoreError
from .montecarlo import MetricsRecord, RunManifest

logger = logging.getLogger(__name__)


def build_metadata() -> tuple[MetaData, Table, Table]:
    """Table definitions shared by the sync and async stores."""
    metadata = MetaData()
    runs = Table(
        'runs',
        metadata,
        Column('run_id', String(36), primary_key=True),
        Column('created_at', String(32), nullable=False),
        Column('tool_version', String(32), nullable=False),
        Column('manifest', Text, nullable=False),
    )
    metrics = Table(
        'metrics',
        metadata,
        Column('id', Integer, primary_key=True, autoincrement=True),
        Column('run_id', String(36), ForeignKey('runs.run_id'), nullable=False, index=True),
        Column('method', String(32), nullable=False),
        Column('gamma', Float, nullable=False),
        Column('window', Integer, nullable=True, quote=True),
        Column('metric', String(8), nullable=False),
        Column('mean', Float, nullable=False),
        Column('stderr', Float, nullable=False),
        Column('trials', Integer, nullable=False),
        Column('censored', Integer, nullable=False),
        Column('mean_overshoot', Float, nullable=True),
    )
    return metadata, runs, metrics


def create_pool_config(pool_size: int = 5, max_overflow: int = 10) -> dict:
    """Pool settings for server databases; SQLite keeps its own pool class."""
    return {
        'pool_size': pool_size,
        'max_overflow': max_overflow,
        'pool_timeout': 30.0,
        'pool_recycle': 3600,
        'pool_pre_ping': True,
    }


def _engine_config(url: str, engine_kwargs: dict) -> dict:
    config = {**engine_kwargs}
    if not url.startswith('sqlite'):
        config.update(create_pool_config())
    return config


def _run_row(run_id: str, manifest: RunManifest) -> dict[str, Any]:
    return {
        'run_id': run_id,
        'created_at': manifest.created_at,
        'tool_version': manifest.tool_version,
        'manifest': json.dumps(dataclasses.asdict(manifest), sort_keys=True),
    }


def _metric_rows(run_id: str, records: Sequence[MetricsRecord]) -> list[dict[str, Any]]:
    rows = []
    for r in records:
        row = dataclasses.asdict(r)
        # SQLite has no NaN; store it as NULL.
        if math.isnan(row['mean_overshoot']):
            row['mean_overshoot'] = None
        row['run_id'] = run_id
        rows.append(row)
    return rows


def _record_from_row(row: Any) -> MetricsRecord:
    m = row._mapping
    return MetricsRecord(
        method=m['method'],
        gamma=m['gamma'],
        window=m['window'],
        metric=m['metric'],
        mean=m['mean'],
        stderr=m['stderr'],
        trials=m['trials'],
        censored=m['censored'],
        mean_overshoot=math.nan if m['mean_overshoot'] is None else m['mean_overshoot'],
    )


def _records_query(metrics: Table, run_id: str | None, method: str | None, metric: str | None):
    stmt = select(metrics)
    if run_id is not None:
        stmt = stmt.where(metrics.c.run_id == run_id)
    if method is not None:
        stmt = stmt.where(metrics.c.method == method)
    if metric is not None:
        stmt = stmt.where(metrics.c.metric == metric)
    return stmt.order_by(metrics.c.id)


class ResultStore:
    """Sync result store over a SQLAlchemy Engine."""

    def __init__(self, engine: Engine):
        self._engine = engine
        self._metadata, self._runs, self._metrics = build_metadata()

    @classmethod
    def connect(cls, url: str, **engine_kwargs) -> 'ResultStore':
        """
        Open a store and create its tables if missing.

        Raises:
            StoreError: If the engine cannot be created or the DDL fails
        """
        try:
            engine = create_engine(url, **_engine_config(url, engine_kwargs))
            store = cls(engine)
            store._metadata.create_all(engine)
        except (SQLAlchemyError, ImportError, ValueError) as e:
            raise StoreError(f"Failed to open result store {url!r}: {e}") from e
        return store

    @contextmanager
    def _begin(self) -> Iterator:
        try:
            with self._engine.begin() as conn:
                yield conn
        except SQLAlchemyError as e:
            raise StoreError(f"Result store operation failed: {e}") from e

    def save_run(self, manifest: RunManifest, records: Sequence[MetricsRecord]) -> str:
        """Persist a run and its records in one transaction; returns the run id."""
        run_id = str(uuid.uuid4())
        with self._begin() as conn:
            conn.execute(self._runs.insert(), [_run_row(run_id, manifest)])
            rows = _metric_rows(run_id, records)
            if rows:
                conn.execute(self._metrics.insert(), rows)
        logger.info("Saved run %s with %d records", run_id, len(records))
        return run_id

    def load_records(
        self,
        run_id: str | None = None,
        method: str | None = None,
        metric: str | None = None,
    ) -> list[MetricsRecord]:
        """Records in insertion order, optionally filtered."""
        with self._begin() as conn:
            result = conn.execute(_records_query(self._metrics, run_id, method, metric))
            return [_record_from_row(row) for row in result]

    def runs(self) -> list[dict[str, Any]]:
        """Saved runs, oldest first, with their manifests decoded."""
        with self._begin() as conn:
            result = conn.execute(select(self._runs).order_by(self._runs.c.created_at))
            return [{**row._mapping, 'manifest': json.loads(row.manifest)} for row in result]

    def close(self) -> None:
        self._engine.dispose()

    @property
    def engine(self) -> Engine:
        return self._engine


class AsyncResultStore:
    """Async result store over a SQLAlchemy AsyncEngine."""

    def __init__(self, engine: AsyncEngine):
        self._engine = engine
        self._metadata, self._runs, self._metrics = build_metadata()

    @classmethod
    async def connect(cls, url: str, **engine_kwargs) -> 'AsyncResultStore':
        """
        Open a store and create its tables if missing.

        Raises:
            StoreError: If the engine cannot be created or the DDL fails
        """
        try:
            engine = create_async_engine(url, **_engine_config(url, engine_kwargs))
            store = cls(engine)
            async with engine.begin() as conn:
                await conn.run_sync(store._metadata.create_all)
        except (SQLAlchemyError, ImportError, ValueError) as e:
            raise StoreError(f"Failed to open result store {url!r}: {e}") from e
        return store

    @asynccontextmanager
    async def _begin(self) -> AsyncIterator[AsyncConnection]:
        try:
            async with self._engine.begin() as conn:
                yield conn
        except SQLAlchemyError as e:
            raise StoreError(f"Result store operation failed: {e}") from e

    async def save_run(self, manifest: RunManifest, records: Sequence[MetricsRecord]) -> str:
        """Persist a run and its records in one transaction; returns the run id."""
        run_id = str(uuid.uuid4())
        async with self._begin() as conn:
            await conn.execute(self._runs.insert(), [_run_row(run_id, manifest)])
            rows = _metric_rows(run_id, records)
            if rows:
                await conn.execute(self._metrics.insert(), rows)
        logger.info("Saved run %s with %d records", run_id, len(records))
        return run_id

    async def load_records(
        self,
        run_id: str | None = None,
        method: str | None = None,
        metric: str | None = None,
    ) -> list[MetricsRecord]:
        async with self._begin() as conn:
            result = await conn.execute(_records_query(self._metrics, run_id, method, metric))
            return [_record_from_row(row) for row in result]

    async def runs(self) -> list[dict[str, Any]]:
        async with self._begin() as conn:
            result = await conn.execute(select(self._runs).order_by(self._runs.c.created_at))
            return [{**row._mapping, 'manifest': json.loads(row.manifest)} for row in result]

    async def close(self) -> None:
        await self._engine.dispose()

    @property
    def engine(self) -> AsyncEngine:
        return self._engine
