# -*- encoding: utf-8 -*-
# ruff: noqa: F401
"""Persistent registry of training runs."""

from .duckdb_library import DuckDBRunLibrary
from .sqlalchemy_library import SqlAlchemyRunLibrary
