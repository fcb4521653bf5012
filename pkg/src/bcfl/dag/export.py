"""DOT rendering, JSON snapshots and line-delimited event logs for the ledger."""
from __future__ import annotations

import json
from typing import IO, Iterable

from .ledger import DagState, Transaction


def to_dot(dag: DagState, id_len: int = 12) -> str:
    lines = ["digraph dag {", "  rankdir=RL;"]
    for tid, tx in dag.transactions.items():
        short = tid[:id_len]
        label = f"{short}\\nW={tx.weight:.4f}\\nCW={dag.cumulative_weight(tid):.4f}"
        style = ", style=filled" if tid in dag.confirmed else ""
        lines.append(f'  "{short}" [label="{label}"{style}];')
    for tid in dag.transactions:
        for approver in dag.approvers(tid):
            lines.append(f'  "{approver[:id_len]}" -> "{tid[:id_len]}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


def dag_to_json(dag: DagState) -> dict:
    return {
        "threshold": dag.threshold,
        "clamp": dag.clamp,
        "tolerance": dag.tolerance,
        "transactions": [tx.to_dict() for tx in dag.transactions.values()],
        "approvals": {t: [[a, acc] for a, acc in v] for t, v in dag.approvals.items() if v},
        "confirmed": [t for t in dag.transactions if t in dag.confirmed],
    }


def dag_from_json(obj: dict) -> DagState:
    txs = [Transaction.from_dict(d) for d in obj["transactions"]]
    dag = DagState(txs[0], threshold=obj["threshold"], clamp=obj["clamp"], tolerance=obj["tolerance"])
    for tx in txs[1:]:
        dag.transactions[tx.id] = tx
        dag.approvals[tx.id] = []
        dag.tips.add(tx.id)
    for tid, lst in obj["approvals"].items():
        dag.approvals[tid] = [(a, float(acc)) for a, acc in lst]
        dag.tips.discard(tid)
    dag.confirmed = set(obj["confirmed"])
    return dag


def write_jsonl(events: Iterable[dict], fh: IO[str]) -> None:
    for ev in events:
        fh.write(json.dumps(ev, sort_keys=False, separators=(",", ":")) + "\n")
