"""Gender-bias measurement and mitigation tooling for masked language models.

The package probes a model through templated fill-mask queries, summarizes
the gendered probability ratios into a single absolute-log-ratio score,
builds gender-balanced counterfactual training corpora, prepares masked
pretraining batches, and aggregates multi-seed results with significance
testing. Model inference stays behind the pluggable scorer gateway; see the
companion service package for a real-checkpoint backend.
"""

__version__ = "0.1.0"

from .analysis import (
    ConvergenceResult,
    LearningCurve,
    PairedSamples,
    ReportRow,
    SeedRun,
    TTestResult,
    aggregate_seeds,
    convergence,
    emit_report,
    gender_share,
    is_significant,
    paired_t_test,
)
from .audit import (
    ExperimentAudit,
    OccupationDirectionResult,
    audit_experiment,
    occupation_direction_audit,
)
from .cda import (
    CdaDataset,
    CdaPair,
    DatasetStats,
    SwapLexicon,
    build_names_dataset,
    build_pronoun_dataset,
    dataset_stats,
    filter_sentences,
    sample_dataset,
    swap_gendered_terms,
)
from .collate import (
    MaskDecision,
    MaskedBatch,
    MaskingPolicy,
    TokenVocab,
    TokenizedSequence,
    TrainSchedule,
    lr_at,
    make_batches,
    mask_batch,
    pad_length,
    read_batches,
    write_batches,
)
from .metrics import (
    MalorReport,
    NameSetProbabilities,
    OccupationProfile,
    ProbabilityRecord,
    log_ratio,
    malor,
    name_set_probabilities,
    occupation_profile,
)
from .scoring import (
    BatchItem,
    CandidateProbability,
    FixtureRecorder,
    FixtureScorer,
    MaskedQuery,
    MockScorer,
    RemoteScorer,
    ScorerDescriptor,
    VocabCheck,
    make_scorer,
)
from .templates import (
    AssetBundle,
    Experiment,
    FieldGroup,
    NamePair,
    Occupation,
    Prompt,
    SentenceTemplate,
    asset_fingerprint,
    default_assets_path,
    instantiate,
    instantiate_gendered,
    load_assets,
)
