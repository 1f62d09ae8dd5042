"""Exception hierarchy.

Grouped under three roots so the CLI can map any failure to a stable exit
code: ConfigError -> 2, BackendError -> 3, DataError -> 4.
"""


class BiasAuditError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(BiasAuditError):
    """Invalid configuration: bad descriptor, bad policy, bad flag combination."""


class DataError(BiasAuditError):
    """Invalid or inconsistent data: assets, corpora, probability grids."""


class BackendError(BiasAuditError):
    """A scoring backend failed to produce results."""


# -- template / asset errors -------------------------------------------------

class MalformedTemplate(DataError):
    """Template does not carry exactly one mask and one occupation slot."""


class AssetMissing(DataError):
    """An expected asset file is absent."""


class AssetCountMismatch(DataError):
    """Asset files parsed but their counts violate the shipped contract."""


# -- scorer errors -----------------------------------------------------------

class BackendUnreachable(BackendError):
    """The scoring backend could not be reached or repeatedly failed."""


class FixtureMiss(BackendError):
    """A fixture backend was asked for a query it has no recording for."""


# -- metric errors -----------------------------------------------------------

class NonPositiveProbability(DataError):
    """A probability was negative, zero where forbidden, or not finite."""


class IncompleteGrid(DataError):
    """Records do not form a complete template x occupation grid."""


class IncompatibleName(DataError):
    """A name candidate is multi-token, so the names experiment is unsupported."""


class IncompatibleCandidate(DataError):
    """A required pronoun candidate is multi-token for this model."""


# -- corpus errors -----------------------------------------------------------

class CorpusUnreadable(DataError):
    """The input corpus could not be read or decoded."""


class UnrecognizedName(DataError):
    """A name-dataset seed sentence contains no name from the shipped table."""


# -- batching / schedule errors ----------------------------------------------

class EmptyBatch(DataError):
    """mask_batch was called with no sequences."""


class StepOutOfRange(DataError):
    """A schedule was queried outside [0, total_steps]."""


# -- analysis errors ----------------------------------------------------------

class TooFewRuns(DataError):
    """Seed aggregation needs at least two runs."""


class DegenerateVariance(DataError):
    """Paired differences have zero variance but a nonzero mean."""


class ZeroMass(DataError):
    """Both gendered probabilities are zero; no share is defined."""
