# -*- encoding: utf-8 -*-
# ruff: noqa: A003, D101
"""SQLAlchemy ORM models of the run library.

Used by the SQLAlchemy implementation of the run library.
"""

from __future__ import annotations

import uuid

from sqlalchemy import (
    BigInteger,
    Column,
    DateTime,
    Float,
    ForeignKey,
    Integer,
    MetaData,
    String,
)
from sqlalchemy.dialects.postgresql import JSON, UUID
from sqlalchemy.orm import declarative_base, relationship
from sqlalchemy.sql import func
from sqlalchemy.types import TypeDecorator
from sqlalchemy_json import mutable_json_type

from condlab.utils import to_jsonable

Base = declarative_base(metadata=MetaData())


class JSONEncodedDict(TypeDecorator):
    impl = JSON
    cache_ok = True

    def process_bind_param(self, value, dialect):  # noqa: ARG002, D102
        return to_jsonable(value)


class RunDB(Base):
    __tablename__ = "runs"

    id = Column(UUID(as_uuid=True), primary_key=True, default=uuid.uuid4)
    name = Column(String, nullable=False)
    kind = Column(String, nullable=False, default="train")
    arm = Column(String, nullable=False, default="default")
    seed = Column(BigInteger, nullable=False)
    status = Column(String, nullable=False, default="completed")
    config = Column(mutable_json_type(dbtype=JSONEncodedDict, nested=True))
    summary = Column(mutable_json_type(dbtype=JSONEncodedDict, nested=True))
    created_at = Column(DateTime(timezone=True), default=func.now())
    updated_at = Column(
        DateTime(timezone=True),
        default=func.now(),
        onupdate=func.now(),
    )

    # relationships
    metrics = relationship(
        "RunMetricDB",
        primaryjoin="RunDB.id==RunMetricDB.run_id",
        foreign_keys="[RunMetricDB.run_id]",
    )
    artifacts = relationship(
        "RunArtifactDB",
        primaryjoin="RunDB.id==RunArtifactDB.run_id",
        foreign_keys="[RunArtifactDB.run_id]",
    )


class RunMetricDB(Base):
    __tablename__ = "run_metrics"

    id = Column(UUID(as_uuid=True), primary_key=True, default=uuid.uuid4)
    run_id = Column(UUID(as_uuid=True), ForeignKey("runs.id"))
    epoch = Column(Integer, nullable=False)
    key = Column(String, nullable=False)
    value = Column(Float, nullable=True)


class RunArtifactDB(Base):
    __tablename__ = "run_artifacts"

    id = Column(UUID(as_uuid=True), primary_key=True, default=uuid.uuid4)
    run_id = Column(UUID(as_uuid=True), ForeignKey("runs.id"))
    kind = Column(String, nullable=False)
    file_path = Column(String, nullable=False)
    checksum = Column(String, nullable=True)
    created_at = Column(DateTime(timezone=True), default=func.now())
