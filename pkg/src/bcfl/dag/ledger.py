"""Permissioned DAG ledger: transactions, own/cumulative weights, attachment
with parent validation, and threshold confirmation."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

from ..errors import (
    DegenerateWeight,
    DuplicateTransaction,
    OrphanParent,
    ValidationFailed,
)

DEFAULT_RHO = 0.5
DEFAULT_THRESHOLD = 0.5
VALIDATION_TOLERANCE = 0.05


def own_weight(dataset_size: float, rho: float, accumulated_size: float, total_size: float,
               slots: float, accuracy: float) -> float:
    """Share of data behind a model, times training slots and accuracy, clamped to [0, 1].

    ``accumulated_size`` is the data already folded into the model through the
    transactions it builds on; ``rho`` discounts it relative to local data.
    """
    if min(dataset_size, accumulated_size, total_size, slots) < 0:
        raise ValueError("sizes and slot counts must be nonnegative")
    if not (0.0 <= rho <= 1.0 and 0.0 <= accuracy <= 1.0):
        raise ValueError("rho and accuracy must lie in [0, 1]")
    denom = total_size + accumulated_size
    if denom <= 0:
        raise DegenerateWeight("total dataset size is zero")
    w = (dataset_size + rho * accumulated_size) / denom * slots * accuracy
    return min(1.0, max(0.0, w))


def cumulative_weight(weight: float, approvers: Iterable[tuple[float, float]],
                      clamp: bool = True) -> float:
    """W + mean over approvers j of (Acc_j - W) * W_j.

    ``approvers`` holds (accuracy the approver measured for this model, approver's
    own weight). With ``clamp`` the result never drops below W.
    """
    approvers = list(approvers)
    if not approvers:
        return weight
    bonus = sum((acc - weight) * wj for acc, wj in approvers) / len(approvers)
    cw = weight + bonus
    return max(cw, weight) if clamp else cw


@dataclass(frozen=True)
class Transaction:
    parents: tuple[str, ...]
    issuer: str
    payload_digest: str
    dataset_size: int
    slots: int
    accuracy: float
    weight: float
    timestamp: int
    kind: str = "update"
    id: str = field(init=False)

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy {self.accuracy} outside [0, 1]")
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"weight {self.weight} outside [0, 1]")
        object.__setattr__(self, "parents", tuple(self.parents))
        object.__setattr__(self, "id", hashlib.sha256(self._canonical()).hexdigest())

    def _canonical(self) -> bytes:
        body = {k: v for k, v in self.to_dict().items() if k != "id"}
        return json.dumps(body, sort_keys=True, separators=(",", ":")).encode()

    def to_dict(self) -> dict:
        return {"id": getattr(self, "id", None), "parents": list(self.parents), "issuer": self.issuer,
                "payload_digest": self.payload_digest, "dataset_size": self.dataset_size,
                "slots": self.slots, "accuracy": self.accuracy, "weight": self.weight,
                "timestamp": self.timestamp, "kind": self.kind}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Transaction":
        tx = cls(tuple(d["parents"]), d["issuer"], d["payload_digest"], d["dataset_size"],
                 d["slots"], d["accuracy"], d["weight"], d["timestamp"], d.get("kind", "update"))
        if d.get("id") not in (None, tx.id):
            raise ValueError(f"transaction id mismatch for {d.get('id')}")
        return tx


EventSink = Callable[[str, dict], None]


class DagState:
    """Single-writer DAG. Transactions are kept in insertion (topological) order."""

    def __init__(self, genesis: Transaction, threshold: float = DEFAULT_THRESHOLD,
                 clamp: bool = True, tolerance: float = VALIDATION_TOLERANCE,
                 on_event: EventSink | None = None):
        if genesis.parents:
            raise ValueError("genesis must not have parents")
        if threshold <= 0:
            raise ValueError("confirmation threshold must be positive")
        self.genesis_id = genesis.id
        self.transactions: dict[str, Transaction] = {genesis.id: genesis}
        self.approvals: dict[str, list[tuple[str, float]]] = {genesis.id: []}
        self.tips: set[str] = {genesis.id}
        self.threshold = threshold
        self.clamp = clamp
        self.tolerance = tolerance
        self.confirmed: set[str] = set()
        self._cw: dict[str, float] = {}
        self._on_event = on_event

    @classmethod
    def create(cls, payload_digest: str = "", accuracy: float = 1.0, **kwargs) -> "DagState":
        g = Transaction((), "genesis", payload_digest, 0, 0, accuracy, 1.0, 0, kind="genesis")
        return cls(g, **kwargs)

    def __len__(self):
        return len(self.transactions)

    def __contains__(self, tx_id):
        return tx_id in self.transactions

    def approvers(self, tx_id: str) -> list[str]:
        return [a for a, _ in self.approvals[tx_id]]

    def cumulative_weight(self, tx_id: str) -> float:
        if tx_id not in self._cw:
            tx = self.transactions[tx_id]
            if tx_id == self.genesis_id:
                cw = tx.weight
            else:
                pairs = [(acc, self.transactions[a].weight) for a, acc in self.approvals[tx_id]]
                cw = cumulative_weight(tx.weight, pairs, self.clamp)
            self._cw[tx_id] = cw
        return self._cw[tx_id]

    def cw_map(self) -> dict[str, float]:
        return {t: self.cumulative_weight(t) for t in self.transactions}

    def emit(self, event: str, detail: dict) -> None:
        if self._on_event is not None:
            self._on_event(event, detail)


def attach_transaction(dag: DagState, candidate: Transaction,
                       validation: Mapping[str, float]) -> DagState:
    """Append ``candidate`` after re-checking both parents' reported accuracy.

    ``validation`` maps each parent id to the accuracy the attaching node
    measured for that parent's model; it must agree with the accuracy recorded
    in the parent within the ledger tolerance.
    """
    if candidate.id in dag.transactions:
        raise DuplicateTransaction(candidate.id)
    if len(candidate.parents) != 2:
        raise ValidationFailed(f"a transaction approves exactly two parents, got {len(candidate.parents)}")
    for pid in candidate.parents:
        if pid not in dag.transactions:
            raise OrphanParent(pid)
    distinct = list(dict.fromkeys(candidate.parents))
    for pid in distinct:
        if pid not in validation:
            raise ValidationFailed(f"parent {pid[:12]} was not validated")
        recorded = dag.transactions[pid].accuracy
        if abs(validation[pid] - recorded) > dag.tolerance:
            raise ValidationFailed(
                f"parent {pid[:12]} reports accuracy {recorded:.4f}, re-evaluated {validation[pid]:.4f}")
    dag.transactions[candidate.id] = candidate
    dag.approvals[candidate.id] = []
    for pid in distinct:
        dag.approvals[pid].append((candidate.id, float(validation[pid])))
        dag.tips.discard(pid)
        dag._cw.pop(pid, None)
    dag.tips.add(candidate.id)
    dag.emit("attach", {"id": candidate.id, "issuer": candidate.issuer, "kind": candidate.kind,
                        "parents": list(candidate.parents), "weight": candidate.weight})
    return dag


def confirm_transactions(dag: DagState, threshold: float | None = None) -> set[str]:
    """Ids whose cumulative weight reaches the threshold.

    With the ledger's own threshold the result is recorded and confirmation
    is permanent; an explicit threshold is a read-only query.
    """
    theta = dag.threshold if threshold is None else threshold
    if theta <= 0:
        raise ValueError("threshold must be positive")
    hits = {t for t in dag.transactions if dag.cumulative_weight(t) >= theta}
    if threshold is not None and threshold != dag.threshold:
        return hits
    order = {t: i for i, t in enumerate(dag.transactions)}
    for t in sorted(hits - dag.confirmed, key=order.__getitem__):
        dag.confirmed.add(t)
        dag.emit("confirm", {"id": t, "cw": dag.cumulative_weight(t)})
    return set(dag.confirmed)
