"""Few-shot tabular learning with backend-designed decision forests.

Splits and leaf labels are chosen by a chat-completion backend while the
forest is trained; the trained model predicts by pure tree routing and vote
aggregation, with no model access at inference time.
"""

from .dataset import (
    CLASSICAL,
    Dataset,
    Feature,
    LLM_FACING,
    Schema,
    SplitSpec,
    column_means,
    impute,
    labeled_subset,
    load_csv,
    sample_k_shot,
    train_test_split,
    unlabeled_subset,
)
from .distill import (
    FeatureSummary,
    NodeContext,
    PromptBundle,
    ToolSchema,
    induce_rule_text,
    render_leaf_prompt,
    render_split_prompt,
    serialize_rows,
    summarize_features,
)
from .errors import ForestLLMError
from .evaluation import (
    ExperimentReport,
    ExperimentSpec,
    auc_macro,
    nrmse,
    run_experiment,
    write_report,
)
from .forest import (
    ForestConfig,
    ForestModel,
    default_max_depth,
    predict,
    predict_scores,
    route,
    split_frequency,
    train_forest,
)
from .induction import (
    InductionConfig,
    SPLIT_CLASSICAL_ONLY,
    SPLIT_SEMANTIC,
    apply_split,
    classical_best_split,
    grow_tree,
    impurity,
    validate_split,
)
from .leaf import ExemplarSet, LeafAssignment, assign_leaf, retrieve_exemplars
from .llm_gateway import (
    ChatRequest,
    ChatResponse,
    Gateway,
    LiveBackend,
    MockBackend,
    ParsedSplit,
    ReplayBackend,
    ScriptRule,
    complete,
    parse_leaf,
    parse_split,
    text_response,
    tool_response,
)
from .model_io import load_model, save_model
from .trees import (
    CategoryMembership,
    Internal,
    Leaf,
    NumericThreshold,
    SplitPredicate,
    TreeNode,
)

__version__ = "0.1.0"

__all__ = [
    "CLASSICAL",
    "CategoryMembership",
    "ChatRequest",
    "ChatResponse",
    "Dataset",
    "ExemplarSet",
    "ExperimentReport",
    "ExperimentSpec",
    "Feature",
    "FeatureSummary",
    "ForestConfig",
    "ForestLLMError",
    "ForestModel",
    "Gateway",
    "InductionConfig",
    "Internal",
    "LLM_FACING",
    "Leaf",
    "LeafAssignment",
    "LiveBackend",
    "MockBackend",
    "NodeContext",
    "NumericThreshold",
    "ParsedSplit",
    "PromptBundle",
    "ReplayBackend",
    "SPLIT_CLASSICAL_ONLY",
    "SPLIT_SEMANTIC",
    "Schema",
    "ScriptRule",
    "SplitPredicate",
    "SplitSpec",
    "ToolSchema",
    "TreeNode",
    "apply_split",
    "assign_leaf",
    "auc_macro",
    "classical_best_split",
    "column_means",
    "complete",
    "default_max_depth",
    "grow_tree",
    "impurity",
    "impute",
    "induce_rule_text",
    "labeled_subset",
    "load_csv",
    "load_model",
    "nrmse",
    "parse_leaf",
    "parse_split",
    "predict",
    "predict_scores",
    "render_leaf_prompt",
    "render_split_prompt",
    "retrieve_exemplars",
    "route",
    "run_experiment",
    "sample_k_shot",
    "save_model",
    "serialize_rows",
    "split_frequency",
    "summarize_features",
    "text_response",
    "tool_response",
    "train_forest",
    "train_test_split",
    "unlabeled_subset",
    "validate_split",
    "write_report",
]
