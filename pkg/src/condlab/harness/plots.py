# -*- encoding: utf-8 -*-
"""PNG figures of condition profiles, training curves and Jacobian spectra.

Figures are rendered with the non-interactive Agg backend so they can be
produced on machines without a display.
"""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Dict, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from condlab.schema.core import BoundTrialStats, ConditionReport  # noqa: E402
from condlab.schema.experiment import RunReport  # noqa: E402

logger = logging.getLogger("condlab")

PathLike = Union[str, Path]

GOLDEN_RATIO = (math.sqrt(5) - 1.0) / 2.0
STYLE = {
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
    "savefig.bbox": "tight",
    "savefig.dpi": 150,
}


def _figure(width: float = 7.0):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(width, width * GOLDEN_RATIO))
    return fig, ax


def _save(fig, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(STYLE):
        fig.savefig(path)
    plt.close(fig)
    logger.info("Wrote figure %s.", path)
    return path


def _finite(values: Sequence) -> np.ndarray:
    return np.array([np.nan if v is None else v for v in values], dtype=np.float64)


def plot_layer_profile(report: ConditionReport, path: PathLike) -> Path:
    """ln condition number per layer of the attention and feedforward outputs with and without skip."""
    fig, ax = _figure()
    layers = [record.layer for record in report.records]
    for field, label, style in (
        ("sa_no_skip", "attention, no skip", "o--"),
        ("sa_skip", "attention + skip", "o-"),
        ("mlp_no_skip", "feedforward, no skip", "s--"),
        ("mlp_skip", "feedforward + skip", "s-"),
    ):
        values = _finite([getattr(record, field) for record in report.records])
        ax.plot(layers, np.where(np.isfinite(values), values, np.nan), style, label=label)
    ax.set_xlabel("layer")
    ax.set_ylabel("ln condition number")
    ax.legend()
    return _save(fig, path)


def plot_curves(reports: Sequence[RunReport], path: PathLike) -> Path:
    """Training loss and validation accuracy per epoch for every run."""
    with plt.rc_context(STYLE):
        fig, (loss_ax, acc_ax) = plt.subplots(1, 2, figsize=(12.0, 12.0 * GOLDEN_RATIO / 2.0))
    for report in reports:
        epochs = [record.epoch for record in report.epochs]
        loss_ax.plot(epochs, _finite([r.train_loss for r in report.epochs]), label=report.arm)
        acc_ax.plot(epochs, [r.val_accuracy for r in report.epochs], label=report.arm)
        if report.divergence_epoch is not None:
            loss_ax.axvline(report.divergence_epoch, linestyle=":", color="grey")
    loss_ax.set_xlabel("epoch")
    loss_ax.set_ylabel("training loss")
    acc_ax.set_xlabel("epoch")
    acc_ax.set_ylabel("validation accuracy")
    acc_ax.legend()
    return _save(fig, path)


def plot_condition_trace(reports: Sequence[RunReport], path: PathLike) -> Path:
    """Layer-mean ln condition number of the attention block output per epoch."""
    fig, ax = _figure()
    for report in reports:
        epochs = [record.epoch for record in report.epochs]
        ax.plot(epochs, _finite([r.sab_log_condition for r in report.epochs]), "o-", label=report.arm)
    ax.set_xlabel("epoch")
    ax.set_ylabel("ln condition number")
    ax.legend()
    return _save(fig, path)


def plot_spectra(spectra: Dict[str, np.ndarray], path: PathLike) -> Path:
    """Singular values in descending order, one line per labelled spectrum, log scale."""
    fig, ax = _figure()
    for label, sigma in spectra.items():
        sigma = np.sort(np.asarray(sigma, dtype=np.float64))[::-1]
        ax.semilogy(np.arange(1, sigma.size + 1), np.maximum(sigma, np.finfo(float).tiny), label=label)
    ax.set_xlabel("index")
    ax.set_ylabel("singular value")
    ax.legend()
    return _save(fig, path)


def plot_bound_ratios(stats: Sequence[BoundTrialStats], path: PathLike) -> Path:
    """Histogram of ln(lhs / rhs) per bound suite; values left of zero satisfy the bound."""
    fig, ax = _figure()
    for suite in stats:
        ratios = np.array([trial.log_ratio for trial in suite.trials], dtype=np.float64)
        ratios = ratios[np.isfinite(ratios)]
        if ratios.size:
            ax.hist(ratios, bins=30, alpha=0.5, label=suite.label)
    ax.axvline(0.0, color="black", linewidth=1.0)
    ax.set_xlabel("ln(lhs / rhs)")
    ax.set_ylabel("trials")
    ax.legend()
    return _save(fig, path)
