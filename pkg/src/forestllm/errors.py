"""Exception hierarchy shared across the package.

Every error raised on a documented failure path derives from ForestLLMError so
callers (and the CLI) can catch one base class and still branch on the precise
kind when they need to.
"""

from __future__ import annotations


class ForestLLMError(Exception):
    """Base class for all errors raised by this package."""


# ---------------------------------------------------------------- dataset ---

class DatasetError(ForestLLMError):
    """Malformed tabular input or an operation misapplied to it."""


class DuplicateHeader(DatasetError):
    """A CSV header names the same column more than once."""


class NoObservedValues(DatasetError):
    """Numeric imputation needs a column mean but the column is all missing."""


class StratifyInfeasible(DatasetError):
    """A stratified split cannot honor its per-class guarantees."""


class InsufficientData(DatasetError):
    """A sampling request asks for more rows than are available."""


# ---------------------------------------------------------------- distill ---

class PromptError(ForestLLMError):
    """Prompt construction failed."""


class NoCandidateFeatures(PromptError):
    """A split prompt was requested with an empty allowed-feature set."""


# ------------------------------------------------------------ llm gateway ---

class GatewayError(ForestLLMError):
    """Backend communication or scripted-response failure."""


class TransportError(GatewayError):
    """The live endpoint stayed unreachable or kept failing after retries."""


class CacheMiss(GatewayError):
    """Replay backend had no recorded response and no fallback to record from."""


class NoScriptMatch(GatewayError):
    """Scripted backend had no rule matching the request."""


class MalformedResponse(GatewayError):
    """The response body could not be decoded into a usable completion."""


class ResponseParseError(GatewayError):
    """A decoded completion does not contain a usable split or leaf answer."""


class MissingToolCall(ResponseParseError):
    """A split response arrived as plain text instead of a tool call."""


class UnknownFeature(ResponseParseError):
    """A proposed split names a feature outside the allowed set."""


class OperatorKindMismatch(ResponseParseError):
    """Split operator does not fit the feature kind or its arguments."""


class EmptyCategorySet(ResponseParseError):
    """A categorical split proposed no categories."""


class NonFiniteThreshold(ResponseParseError):
    """A numeric split proposed a missing or non-finite threshold."""


class UnrecognizedClass(ResponseParseError):
    """A leaf answer matches no class label, or matches ambiguously."""


class NoNumberFound(ResponseParseError):
    """A regression leaf answer contains no finite number."""


# -------------------------------------------------------------- induction ---

class InductionError(ForestLLMError):
    """Tree growth failed outside its documented fallback paths."""


class EmptyNode(InductionError):
    """Impurity was requested for an empty label multiset."""


# ----------------------------------------------------------------- forest ---

class TaskMismatch(ForestLLMError):
    """A classification-only operation was applied to a regression model."""


# ------------------------------------------------------------- evaluation ---

class MetricError(ForestLLMError):
    """A metric's preconditions do not hold."""


class DegenerateTruth(MetricError):
    """Macro AUC needs at least two distinct classes in the truth vector."""


class ZeroVariance(MetricError):
    """NRMSE needs a non-constant truth vector."""


# ---------------------------------------------------------------- model io ---

class ModelIOError(ForestLLMError):
    """A model file could not be read or written."""


class UnsupportedVersion(ModelIOError):
    """The model file declares a format version this build does not read."""


class InvariantViolation(ModelIOError):
    """A model file decodes but violates a structural invariant."""
