# -*- encoding: utf-8 -*-
"""Run library implemented with SQLAlchemy.

The library is not used by itself but inherited from by implementations that
provide a database connection. An example is the DuckDB run library, which is
the default.
"""

from __future__ import annotations

import logging
import math
import uuid
from contextlib import contextmanager
from typing import Any, Dict, List, Optional, Union

from sqlalchemy import Engine, asc, desc, func
from sqlalchemy.orm import sessionmaker

from condlab.config import CondlabConfig, get_settings
from condlab.library import model
from condlab.schema.exception import CondlabLibraryError, CondlabRunNotFoundError
from condlab.schema.experiment import RunArtifact, RunMetric, RunRecord, RunReport
from condlab.utils import ensure_uuid

logger = logging.getLogger("condlab")

EPOCH_METRICS = ("train_loss", "val_loss", "val_accuracy", "sab_log_condition")


def _status(report: RunReport) -> str:
    if report.error is not None:
        return "failed"
    if report.diverged:
        return "diverged"
    return "completed"


class SqlAlchemyRunLibrary:
    """Implementation of the run library using SQLAlchemy."""

    config: CondlabConfig = None
    db: Engine = None

    def __init__(self, config: Optional[CondlabConfig] = None) -> None:  # noqa: D107
        self.config = config or get_settings()

    @contextmanager
    def session_scope(self):
        """Provide a transactional scope around a series of operations."""
        session = sessionmaker(autocommit=False, autoflush=False, bind=self.db)()
        try:
            yield session
            session.commit()
        except:
            session.rollback()
            raise
        finally:
            session.close()

    def __del__(self) -> None:
        self._disconnect()

    def _disconnect(self):
        """Close the connection to the database."""
        if hasattr(self, "db") and self.db is not None:
            self.db.dispose()

    def __len__(self) -> int:
        with self.session_scope() as session:
            return session.query(func.count(model.RunDB.id)).scalar()

    def add_run(
        self,
        report: RunReport,
        config: Optional[Union[Dict[str, Any], Any]] = None,
        kind: str = "train",
    ) -> RunRecord:
        """Record a finished run with its per-epoch metrics and checkpoint.

        Args:
            report (RunReport): The report of the run.
            config (dict or BaseModel, optional): The configuration of the run.
            kind (str): Kind of experiment the run belongs to, e.g. "train",
                "ablate" or "sweep".

        Returns:
            RunRecord: The stored run.
        """
        if config is not None and hasattr(config, "model_dump"):
            config = config.model_dump(mode="json")
        with self.session_scope() as session:
            run_db = model.RunDB(
                name=report.name,
                kind=kind,
                arm=report.arm,
                seed=report.seed,
                status=_status(report),
                config=config or {},
                summary=report.summary(),
            )
            session.add(run_db)
            session.flush()
            for record in report.epochs:
                for key in EPOCH_METRICS:
                    value = getattr(record, key)
                    if value is not None and not math.isfinite(value):
                        value = None
                    session.add(
                        model.RunMetricDB(
                            run_id=run_db.id,
                            epoch=record.epoch,
                            key=key,
                            value=value,
                        ),
                    )
            if report.checkpoint_path is not None:
                session.add(
                    model.RunArtifactDB(
                        run_id=run_db.id,
                        kind="checkpoint",
                        file_path=report.checkpoint_path,
                        checksum=report.final_checksum,
                    ),
                )
            session.commit()
            session.refresh(run_db)
            logger.info("Recorded run %s (%s, arm %s)", run_db.id, kind, report.arm)
            return RunRecord.model_validate(run_db)

    def get_run(self, run_id: Union[str, uuid.UUID]) -> Optional[RunRecord]:
        """Get a single run from the library by ID."""
        with self.session_scope() as session:
            run_db = (
                session.query(model.RunDB)
                .filter(model.RunDB.id == ensure_uuid(run_id))
                .one_or_none()
            )
            return RunRecord.model_validate(run_db) if run_db is not None else None

    def get_runs(
        self,
        kind: Optional[str] = None,
        order_by: Optional[str] = None,
        order: str = "asc",
        limit: Optional[int] = None,
        offset: Optional[int] = None,
    ) -> List[RunRecord]:
        """Get runs based on the given query parameters.

        Args:
            kind (str, optional): Only return runs of this kind.
            order_by (str, optional): Column used for ordering the results.
            order (str, optional): Order in which to retrieve results ("asc" or "desc").
            limit (int, optional): Limit the number of returned results.
            offset (int, optional): Offset into the paginated results (requires limit).

        Returns:
            List[RunRecord]: The matching runs.
        """
        with self.session_scope() as session:
            query = session.query(model.RunDB)
            if kind is not None:
                query = query.filter(model.RunDB.kind == kind)
            if order_by:
                if not hasattr(model.RunDB, order_by):
                    raise CondlabLibraryError(f"Cannot order runs by '{order_by}'.")
                column = getattr(model.RunDB, order_by)
                query = query.order_by(desc(column) if order == "desc" else asc(column))
            if limit:
                query = query.limit(limit)
                if offset:
                    query = query.offset(offset)
            return [RunRecord.model_validate(run_db) for run_db in query]

    def get_metrics(
        self,
        run_id: Union[str, uuid.UUID],
        key: Optional[str] = None,
    ) -> List[RunMetric]:
        """Get the per-epoch metrics of a run, ordered by epoch."""
        with self.session_scope() as session:
            query = session.query(model.RunMetricDB).filter(
                model.RunMetricDB.run_id == ensure_uuid(run_id),
            )
            if key is not None:
                query = query.filter(model.RunMetricDB.key == key)
            query = query.order_by(asc(model.RunMetricDB.epoch), asc(model.RunMetricDB.key))
            return [RunMetric.model_validate(metric) for metric in query]

    def add_artifact(
        self,
        run_id: Union[str, uuid.UUID],
        kind: str,
        file_path: str,
        checksum: Optional[str] = None,
    ) -> RunArtifact:
        """Attach a file, e.g. a report or a plot, to a run.

        Raises:
            CondlabRunNotFoundError: If the run does not exist.
        """
        run_id = ensure_uuid(run_id)
        with self.session_scope() as session:
            if session.get(model.RunDB, run_id) is None:
                raise CondlabRunNotFoundError("Run not found", run_id)
            artifact_db = model.RunArtifactDB(
                run_id=run_id,
                kind=kind,
                file_path=str(file_path),
                checksum=checksum,
            )
            session.add(artifact_db)
            session.commit()
            session.refresh(artifact_db)
            return RunArtifact.model_validate(artifact_db)

    def get_artifacts(self, run_id: Union[str, uuid.UUID]) -> List[RunArtifact]:
        """Get all files attached to a run."""
        with self.session_scope() as session:
            query = session.query(model.RunArtifactDB).filter(
                model.RunArtifactDB.run_id == ensure_uuid(run_id),
            )
            return [RunArtifact.model_validate(artifact) for artifact in query]

    def remove_run(self, run_id: Union[str, uuid.UUID]) -> bool:
        """Delete a run together with its metrics and artifact records.

        The artifact files themselves are kept.

        Raises:
            CondlabRunNotFoundError: If the run does not exist.

        Returns:
            bool: True if the run was removed.
        """
        run_id = ensure_uuid(run_id)
        with self.session_scope() as session:
            run_db = session.get(model.RunDB, run_id)
            if run_db is None:
                raise CondlabRunNotFoundError("Run not found", run_id)
            session.query(model.RunMetricDB).filter(model.RunMetricDB.run_id == run_id).delete()
            session.query(model.RunArtifactDB).filter(
                model.RunArtifactDB.run_id == run_id,
            ).delete()
            session.delete(run_db)
        return True

    def reset(self, force: bool = False) -> None:
        """Reset the run library.

        Erase all runs, metrics and artifact records. Ask before erasing everything.

        Args:
            force (bool, optional): Flag that specifies whether to ask the user for
                confirmation of the operation. Default is to ask the user.
        """
        should_proceed = (
            force
            or input(
                "Are you sure you want to reset the run library? "
                "This will purge ALL recorded runs! "
                "Enter 'y' to confirm: ",
            ).lower()
            == "y"
        )
        if not should_proceed:
            logger.info("Reset operation cancelled.")
            return
        logger.info("Resetting run library.")
        with self.session_scope() as session:
            session.query(model.RunMetricDB).delete()
            session.query(model.RunArtifactDB).delete()
            session.query(model.RunDB).delete()
