from .export import dag_from_json, dag_to_json, to_dot, write_jsonl
from .ledger import (
    DEFAULT_RHO,
    DEFAULT_THRESHOLD,
    VALIDATION_TOLERANCE,
    DagState,
    Transaction,
    attach_transaction,
    confirm_transactions,
    cumulative_weight,
    own_weight,
)
from .walk import (
    TransitionTable,
    WalkParams,
    entry_point,
    heights,
    random_walk,
    tip_select,
    transition_probabilities,
)

__all__ = [name for name in dir() if not name.startswith("_")]
