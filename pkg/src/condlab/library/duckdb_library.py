# -*- encoding: utf-8 -*-
"""Run library using DuckDB.

A lightweight implementation that is used as the default run library.
"""

import logging
import os
from typing import Optional

from sqlalchemy import Engine, create_engine

from condlab.config import CondlabConfig
from condlab.library import model

from .sqlalchemy_library import SqlAlchemyRunLibrary

logger = logging.getLogger("condlab")


class DuckDBRunLibrary(SqlAlchemyRunLibrary):
    """DuckDB-based implementation of the run library.

    Inherits all functions from the SQLAlchemy implementation and only differs
    in the way it connects to the database.
    """

    def __init__(
        self,
        config: Optional[CondlabConfig] = None,
        db: Optional[Engine] = None,
    ) -> None:
        """Configure and connect to the database."""
        super().__init__(config=config)
        self._connect(db)

    def _connect(self, db: Optional[Engine] = None) -> None:
        """Open local DuckDB session."""
        if db is None:
            os.makedirs(self.config.library_path, exist_ok=True)
            db = create_engine(f"duckdb:///{self.config.library_path}/condlab.db")
        self.db = db
        model.Base.metadata.create_all(bind=self.db)
