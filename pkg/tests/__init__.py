# -*- encoding: utf-8 -*-
"""Tests for condlab."""
