"""Preference adaptation of embedding vectors with Bradley-Terry updates.

The package is organized around six concerns:

- :mod:`prefadapt.prefcore` — similarity, Bradley-Terry probability, the
  preference loss and its closed-form query gradient, single- and
  multi-step adaptation, the positive-only baseline, prediction, ranking.
- :mod:`prefadapt.dataio` — the PEMB binary embedding format, JSONL
  preference pairs, train/eval splitting, score-band pair construction.
- :mod:`prefadapt.evalharness` — pairwise accuracy, the repeated-training
  evaluation protocol, win rates, report serialization.
- :mod:`prefadapt.simulator` — seeded synthetic populations and
  BT-distributed preference labels with a known latent direction.
- :mod:`prefadapt.service` — a multi-profile HTTP service with an
  append-only event log and deterministic replay.
- :mod:`prefadapt.cli` — the ``prefadapt`` command.
"""

from .errors import (
    CorruptionError,
    DomainError,
    FormatError,
    IntegrityError,
    ParseError,
    PrefAdaptError,
    ValidationError,
)
from .prefcore import (
    FIRST,
    SECOND,
    AdaptConfig,
    AdaptTrace,
    BTOutcome,
    Embedding,
    PreferencePair,
    StepRecord,
    adapt,
    adapt_step,
    batch_gradient,
    batch_loss,
    bt_probability,
    finite_diff_grad,
    normalize,
    pair_outcome,
    positive_adapt,
    predict_preferred,
    rank_candidates,
    similarity,
)
from .dataio import (
    EmbeddingTable,
    PreferenceDataset,
    load_embeddings,
    load_pairs,
    pairs_from_scores,
    save_embeddings,
    save_pairs,
    split,
)
from .evalharness import (
    EvalCell,
    EvalReport,
    derive_seed,
    emit_report,
    pairwise_accuracy,
    run_protocol,
    win_rate,
)
from .simulator import (
    GroundTruth,
    gen_population,
    oracle_accuracy,
    random_ground_truth,
    sample_preferences,
)

__version__ = "0.1.0"
