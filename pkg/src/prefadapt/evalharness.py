"""Evaluation protocols: pairwise accuracy, repeated training draws,
learning curves over training-set size, and vote tallies.

The protocol reserves a fixed evaluation split, then for every
(training size, repeat) cell draws a fresh training set from the remaining
pool and scores three variants on the same evaluation pairs:

- ``original``: the base query, untouched.
- ``positive``: the query stepped toward the mean of the training winners.
- ``bt``: the query adapted with the Bradley-Terry gradient on full pairs.

Every cell's random draw is seeded independently from
(master seed, size, repeat) via a stable hash, so cells never share or
perturb each other's randomness and reports are byte-reproducible.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataio import PreferenceDataset, split
from .errors import DomainError
from .prefcore import AdaptConfig, Embedding, adapt, positive_adapt

__all__ = [
    "VARIANTS",
    "EvalCell",
    "EvalReport",
    "derive_seed",
    "pairwise_accuracy",
    "run_protocol",
    "win_rate",
    "emit_report",
    "report_to_dict",
]

VARIANTS = ("original", "positive", "bt")

DEFAULT_EVAL_RESERVE = 2000
FALLBACK_EVAL_FRACTION = 0.2


@dataclass(frozen=True)
class EvalCell:
    """Accuracy aggregate for one (variant, training size) combination."""

    variant: str
    n_train: int
    mean: float
    std: float
    accuracies: tuple[float, ...]
    seeds: tuple[int, ...]


@dataclass(frozen=True)
class EvalReport:
    """All cells of one protocol run plus the run's fixed parameters."""

    variants: tuple[str, ...]
    sizes: tuple[int, ...]
    n_repeats: int
    master_seed: int
    eval_size: int
    cells: tuple[EvalCell, ...]

    def cell(self, variant: str, n_train: int) -> EvalCell:
        for cell in self.cells:
            if cell.variant == variant and cell.n_train == n_train:
                return cell
        raise DomainError(f"no cell for variant {variant!r}, n_train {n_train}")


def derive_seed(master_seed: int, *parts) -> int:
    """Stable 64-bit seed derived from a master seed and cell coordinates.

    SHA-256 over the colon-joined decimal/text parts; platform- and
    process-independent, unlike the builtin hash().
    """
    text = ":".join(str(p) for p in (master_seed, *parts))
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def pairwise_accuracy(
    x: Embedding, eval_set: PreferenceDataset, temperature: float = 1.0
) -> float:
    """Fraction of pairs whose stored winner the query prefers.

    Exact similarity ties count for the winner, matching the deterministic
    first-slot tie-break of prediction. ``temperature`` cannot change the
    result and is accepted only for signature parity.
    """
    if len(eval_set) == 0:
        raise DomainError("evaluation set must be nonempty")
    if x.dim != eval_set.table.dim:
        raise DomainError(f"dimension mismatch: {x.dim} vs {eval_set.table.dim}")
    winner_scores = eval_set.winner_vectors() @ x.values
    loser_scores = eval_set.loser_vectors() @ x.values
    return float(np.mean(winner_scores >= loser_scores))


def _default_eval_reserve(pool_size: int, max_size: int) -> int:
    if pool_size - DEFAULT_EVAL_RESERVE >= max_size and DEFAULT_EVAL_RESERVE <= pool_size:
        return DEFAULT_EVAL_RESERVE
    return max(1, round(FALLBACK_EVAL_FRACTION * pool_size))


def run_protocol(
    base: Embedding,
    pool: PreferenceDataset,
    sizes: Sequence[int],
    n_repeats: int,
    config: AdaptConfig,
    seed: int,
    eval_size: int | None = None,
) -> EvalReport:
    """Learning-curve protocol over training sizes and seeded repeats.

    Reserves a fixed evaluation split first (2000 pairs when the pool
    allows, else 20% of it), then fills every (size, repeat) cell with an
    independently seeded training draw from the remaining pool. Size 0
    applies no adaptation and consumes no randomness, so all variants agree
    exactly there. Std is the population standard deviation over repeats.
    """
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise DomainError("sizes must be nonempty")
    if any(s < 0 for s in sizes):
        raise DomainError("sizes must be >= 0")
    if n_repeats < 1:
        raise DomainError(f"n_repeats must be >= 1, got {n_repeats}")
    max_size = max(sizes)
    if eval_size is None:
        eval_size = _default_eval_reserve(len(pool), max_size)
    if not 1 <= eval_size <= len(pool):
        raise DomainError(f"eval_size must be in [1, {len(pool)}], got {eval_size}")
    if max_size > len(pool) - eval_size:
        raise DomainError(
            f"largest training size {max_size} exceeds the "
            f"{len(pool) - eval_size} pairs left after the evaluation reserve"
        )

    train_pool, eval_set = split(
        pool, len(pool) - eval_size, derive_seed(seed, "eval-split")
    )
    base_accuracy = pairwise_accuracy(base, eval_set, config.temperature)

    per_cell: dict[tuple[str, int], list[float]] = {
        (variant, s): [] for variant in VARIANTS for s in sizes
    }
    cell_seeds: dict[int, list[int]] = {s: [] for s in sizes}
    for s in sizes:
        for repeat in range(n_repeats):
            cell_seed = derive_seed(seed, s, repeat)
            cell_seeds[s].append(cell_seed)
            if s == 0:
                for variant in VARIANTS:
                    per_cell[(variant, s)].append(base_accuracy)
                continue
            rng = np.random.default_rng(cell_seed)
            draw = rng.choice(len(train_pool), size=s, replace=False)
            train = train_pool.subset(draw)
            adapted_positive = positive_adapt(base, train.winner_embeddings(), config)
            adapted_bt, _ = adapt(base, train.preference_pairs(), config)
            per_cell[("original", s)].append(base_accuracy)
            per_cell[("positive", s)].append(
                pairwise_accuracy(adapted_positive, eval_set, config.temperature)
            )
            per_cell[("bt", s)].append(
                pairwise_accuracy(adapted_bt, eval_set, config.temperature)
            )

    cells = []
    for variant in VARIANTS:
        for s in sizes:
            accs = per_cell[(variant, s)]
            cells.append(
                EvalCell(
                    variant=variant,
                    n_train=s,
                    mean=float(np.mean(accs)),
                    std=float(np.std(accs)),
                    accuracies=tuple(accs),
                    seeds=tuple(cell_seeds[s]),
                )
            )
    return EvalReport(
        variants=VARIANTS,
        sizes=tuple(sizes),
        n_repeats=n_repeats,
        master_seed=seed,
        eval_size=eval_size,
        cells=tuple(cells),
    )


def win_rate(
    votes: Sequence[tuple[str, str]], variants: Sequence[str] = VARIANTS
) -> dict[str, float]:
    """Per-variant fraction of head-to-head votes.

    ``votes`` holds (voter id, chosen variant) records; every chosen variant
    must come from the declared set. Fractions sum to 1.
    """
    if len(votes) == 0:
        raise DomainError("votes must be nonempty")
    counts = {variant: 0 for variant in variants}
    for voter_id, chosen in votes:
        if chosen not in counts:
            raise DomainError(f"unknown variant {chosen!r} in vote by {voter_id!r}")
        counts[chosen] += 1
    total = len(votes)
    return {variant: counts[variant] / total for variant in variants}


def report_to_dict(report: EvalReport) -> dict:
    """JSON-ready dict with a stable field order."""
    return {
        "variants": list(report.variants),
        "sizes": list(report.sizes),
        "n_repeats": report.n_repeats,
        "master_seed": report.master_seed,
        "eval_size": report.eval_size,
        "cells": [
            {
                "variant": cell.variant,
                "n_train": cell.n_train,
                "accuracy_mean": cell.mean,
                "accuracy_std": cell.std,
                "accuracies": list(cell.accuracies),
                "seeds": list(cell.seeds),
            }
            for cell in report.cells
        ],
    }


def render_report_csv(report: EvalReport) -> str:
    """CSV with one row per (variant, size); floats keep full precision."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(
        ["variant", "n_train", "accuracy_mean", "accuracy_std", "n_repeats", "eval_size"]
    )
    for cell in report.cells:
        writer.writerow(
            [
                cell.variant,
                cell.n_train,
                repr(cell.mean),
                repr(cell.std),
                report.n_repeats,
                report.eval_size,
            ]
        )
    return buffer.getvalue()


def emit_report(report: EvalReport, path, format: str = "json") -> None:
    """Serialize a report deterministically as JSON or CSV."""
    if format == "json":
        text = json.dumps(report_to_dict(report), indent=2) + "\n"
    elif format == "csv":
        text = render_report_csv(report)
    else:
        raise DomainError(f"unknown report format {format!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
