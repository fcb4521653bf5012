"""Single-process simulation of the hospital consortium: local training,
secure aggregation through the ledger, DAG bookkeeping and round metrics."""
from __future__ import annotations

import hashlib
import json
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .. import fedlearn
from ..dag import (
    DagState,
    Transaction,
    WalkParams,
    attach_transaction,
    confirm_transactions,
    dag_to_json,
    own_weight,
    tip_select,
)
from ..errors import BcflError, NoUpdates, RoundError
from ..local_model import (
    SyntheticDataset,
    SyntheticSpec,
    evaluate_accuracy,
    gen_synthetic,
    init_weights,
    per_sample_loss,
    train_local,
)
from ..secure_agg import (
    CryptoParams,
    QuantParams,
    aggregate_and_unwrap,
    decrypt_sum,
    dequantize,
    encrypt_internal,
    gadget_wrap,
    modulus_switch,
    quantize,
    setup,
)
from ..secure_agg.serialize import dump_internal, dump_public, dump_secret, dump_share
from .config import ExperimentConfig
from .logs import EventLog, MessageLog, MetricsWriter, RoundMetrics

# named random streams; each subsystem draws from its own so that toggling
# encryption leaves training and data identical
STREAMS = {"task": 1, "data": 2, "validation": 3, "test": 4, "train": 5,
           "keys": 6, "encrypt": 7, "dag": 8}

LEDGER = "ledger"
DEALER = "dealer"


def stream(seed: int, name: str, *sub: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(STREAMS[name], *sub))
    return np.random.Generator(np.random.PCG64(ss))


def _hname(i: int) -> str:
    return f"h{i}"


class RoundClock:
    """Wall time of a round: hospitals work in parallel, then the ledger and
    leader finish serially.

    In "model" mode each operation is charged a fixed simulated cost, which
    keeps runs reproducible to the byte. In "measured" mode the real elapsed
    time of the same sections is charged instead.
    """

    def __init__(self, mode: str = "model"):
        self.mode = mode
        self.total_ms = 0.0
        self._parallel: dict[str, float] = {}
        self._serial = 0.0

    def begin_round(self) -> None:
        self._parallel = {}
        self._serial = 0.0

    @contextmanager
    def section(self, actor: str, model_ms: float):
        t0 = time.perf_counter()
        yield
        ms = model_ms if self.mode == "model" else 1e3 * (time.perf_counter() - t0)
        if actor.startswith("h"):
            self._parallel[actor] = self._parallel.get(actor, 0.0) + ms
        else:
            self._serial += ms

    def now(self, actor: Optional[str] = None) -> float:
        if actor is not None and actor.startswith("h"):
            return self.total_ms + self._parallel.get(actor, 0.0)
        return self.total_ms + max(self._parallel.values(), default=0.0) + self._serial

    def end_round(self) -> float:
        ms = max(self._parallel.values(), default=0.0) + self._serial
        self.total_ms += ms
        return ms


@dataclass
class Hospital:
    index: int
    train: SyntheticDataset
    rng_train: np.random.Generator
    rng_encrypt: np.random.Generator

    @property
    def name(self) -> str:
        return _hname(self.index)


@dataclass
class RunResult:
    config: ExperimentConfig
    metrics: list[RoundMetrics]
    model: np.ndarray
    dag: DagState
    events: list[dict]
    messages: Optional[MessageLog] = None
    private: dict[str, list[np.ndarray]] = field(default_factory=dict)
    completed_rounds: int = 0
    stop_reason: Optional[str] = None   # "time_budget" or "plateau"

    @property
    def stopped_early(self) -> bool:
        return self.stop_reason is not None


def build_data(cfg: ExperimentConfig):
    """Per-hospital training sets, the shared validation set and the test set."""
    d, seed = cfg.data, cfg.sim.seed
    task_seed = int(stream(seed, "task").integers(2 ** 32))

    cov = None
    if d.spread != 1.0:
        # axis-aligned noise, std geometric from sigma/sqrt(spread) to sigma*sqrt(spread)
        std = d.sigma * d.spread ** np.linspace(-0.5, 0.5, d.features)
        cov = np.diag(std * std)

    def spec(n):
        return SyntheticSpec(n_samples=n, n_features=d.features, n_classes=d.classes,
                             class_sep=d.class_sep, sigma=d.sigma, cov=cov, task_seed=task_seed)

    def draw(name, n, *sub):
        return gen_synthetic(spec(n), int(stream(seed, name, *sub).integers(2 ** 32)))

    trains = [draw("data", d.samples_per_hospital, i) for i in range(cfg.sim.hospitals)]
    return trains, draw("validation", d.validation_samples), draw("test", d.test_samples)


def _digest(*parts: bytes) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(p)
    return h.hexdigest()


class _Run:
    def __init__(self, cfg: ExperimentConfig, out_dir: Optional[Path], instrument: bool):
        self.cfg = cfg
        self.out_dir = out_dir
        self.instrument = instrument
        self.secure = cfg.crypto.enabled
        seed = cfg.sim.seed
        self.clock = RoundClock(cfg.sim.clock)
        self.cost = cfg.sim.cost
        self._events_fh = open(out_dir / "events.jsonl", "w") if out_dir else None
        self.events = EventLog(self._events_fh)
        self.messages = MessageLog() if instrument else None
        self.private: dict[str, list[np.ndarray]] = {}

        trains, self.validation, self.test = build_data(cfg)
        self.hospitals = [Hospital(i, trains[i], stream(seed, "train", i), stream(seed, "encrypt", i))
                          for i in range(cfg.sim.hospitals)]
        self.classes = cfg.data.classes
        self.theta = init_weights(cfg.data.features, cfg.data.classes)
        self.n_params = self.theta.size

        self.qp = QuantParams(cfg.quant.scale, cfg.quant.clip, cfg.quant.max_parties)
        self.params = None
        if self.secure:
            self.params = CryptoParams.generate(cfg.crypto.degree, cfg.crypto.q,
                                                cfg.crypto.sigma, cfg.crypto.base)
            self.qp.check_wrap_safe(self.params.q)
            self.blocks = -(-self.n_params // self.params.degree)
        self.rng_keys = stream(seed, "keys")
        self.rng_dag = stream(seed, "dag")
        self.wp = WalkParams(walkers=cfg.dag.walkers, start_depth=cfg.dag.start_depth)

        self.dag = DagState.create(
            payload_digest=_digest(self.theta.tobytes()),
            accuracy=evaluate_accuracy(self.theta, self.validation),
            threshold=cfg.dag.threshold, clamp=cfg.dag.clamp, tolerance=cfg.dag.tolerance,
            on_event=lambda ev, det: self.events.log(self.clock.now(), self.round, LEDGER, ev, det))
        # models behind transactions stay with their issuer; others only get
        # accuracy answers through eval requests
        self.models = {self.dag.genesis_id: (LEDGER, self.theta.copy())}
        self.round = 0
        self.committee: tuple[int, ...] = ()
        self.keys = None
        self.leader: Optional[int] = None

    # -- messaging ------------------------------------------------------------
    def send(self, sender, receiver, kind, payload):
        if self.messages is not None:
            self.messages.record(self.round, sender, receiver, kind, payload)

    def note_private(self, owner: str, *vecs):
        if self.instrument:
            self.private.setdefault(owner, []).extend(np.array(v, dtype=np.float64) for v in vecs)

    # -- key management ---------------------------------------------------------
    def rekey(self, active: list[int]) -> None:
        self.committee = tuple(active)
        if not self.secure:
            return
        with self.clock.section(LEDGER, 0.0):
            self.keys = setup(len(active), self.params, self.rng_keys)
        pk_blob = dump_public(self.keys.pk, self.params)
        for pos, h in enumerate(active):
            self.send(DEALER, _hname(h), "public_key", pk_blob)
            self.send(DEALER, _hname(h), "party_secret",
                      dump_secret(self.keys.party_secrets[pos], self.params, pos))
        self.send(DEALER, LEDGER, "ledger_secret", dump_secret(self.keys.ledger_secret, self.params))
        self.events.log(self.clock.now(), self.round, DEALER, "rekey",
                        {"parties": [_hname(h) for h in active]})
        if self.leader is not None:
            self.issue_evaluator_key()

    def issue_evaluator_key(self) -> None:
        if self.secure:
            self.send(DEALER, _hname(self.leader), "evaluator_secret",
                      dump_secret(self.keys.evaluator_secret, self.params))

    # -- ledger helpers -------------------------------------------------------
    def remote_accuracy(self, requester: str, tx_id: str) -> float:
        holder, w = self.models[tx_id]
        self.send(requester, holder, "eval_request", tx_id)
        acc = evaluate_accuracy(w, self.validation)
        self.send(holder, requester, "eval_response", np.array([acc]))
        return acc

    def attach(self, actor: str, model: np.ndarray, payload_digest: str, dataset_size: int,
               accuracy: float, total_size: int, kind: str) -> Transaction:
        cost = self.cost
        with self.clock.section(actor, self.wp.walkers * cost.walk
                                + 2 * len(self.validation) * cost.eval_per_sample):
            parents = tip_select(self.dag, self.wp, self.rng_dag)
            validation = {p: self.remote_accuracy(actor, p) for p in dict.fromkeys(parents)}
        accumulated = sum(self.dag.transactions[p].dataset_size for p in dict.fromkeys(parents))
        weight = own_weight(dataset_size, self.cfg.dag.rho, accumulated, total_size, 1, accuracy)
        tx = Transaction(parents, actor, payload_digest, dataset_size, 1, accuracy, weight,
                         self.round, kind=kind)
        self.send(actor, LEDGER, "transaction", json.dumps(tx.to_dict(), sort_keys=True))
        attach_transaction(self.dag, tx, validation)
        self.models[tx.id] = (actor, model.copy())
        return tx

    # -- one round ------------------------------------------------------------
    def local_update(self, h: Hospital, alpha: float):
        cfg, cost = self.cfg, self.cost
        lr, G = cfg.fed.lr, cfg.sim.grads_per_hospital
        with self.clock.section(h.name, G * cfg.fed.batch_size * self.n_params
                                * cost.grad_per_sample_param):
            w, _ = train_local(self.theta, h.train, lr, G, h.rng_train, cfg.fed.batch_size)
        delta = self.theta - w                   # pseudo-gradient of this round
        upload = alpha * cfg.fed.credibility * delta
        with self.clock.section(h.name, len(self.validation) * cost.eval_per_sample):
            acc = evaluate_accuracy(w, self.validation)
        clipped = int(np.sum(np.abs(upload) > self.qp.clip))
        if clipped:
            self.events.log(self.clock.now(h.name), self.round, h.name, "clipped", {"entries": clipped})
        return w, delta, upload, acc

    def encrypt_upload(self, h: Hospital, pos: int, upload: np.ndarray):
        P, d = self.params, self.params.degree
        qv = np.zeros(self.blocks * d, dtype=np.int64)
        qv[: upload.size] = quantize(upload, self.qp, P.q)
        self.note_private(h.name, qv[: upload.size])
        shares, blobs = [], []
        with self.clock.section(h.name, self.blocks * (self.cost.encrypt_per_block
                                                       + self.cost.wrap_per_block)):
            for b in range(self.blocks):
                ct = encrypt_internal(qv[b * d:(b + 1) * d], self.keys.pk, P, h.rng_encrypt)
                share = gadget_wrap(ct, self.keys.party_secrets[pos], pos, self.keys.pk, P,
                                    h.rng_encrypt)
                blob = dump_share(share, P)
                self.send(h.name, LEDGER, "share", blob)
                shares.append(share)
                blobs.append(blob)
        return shares, blobs

    def secure_sum(self, shares_by_party: list[list]) -> np.ndarray:
        P, n = self.params, len(self.committee)
        leader = _hname(self.leader)
        out = []
        for b in range(self.blocks):
            with self.clock.section(LEDGER, n * self.cost.unwrap_per_share):
                ct = aggregate_and_unwrap([s[b] for s in shares_by_party], self.keys.ledger_secret,
                                          self.keys.pk, P, n)
            self.send(LEDGER, leader, "aggregate", dump_internal(ct, P))
            with self.clock.section("leader", self.cost.decrypt_per_block):
                out.append(decrypt_sum(modulus_switch(ct, P), self.keys.evaluator_secret, P))
        return dequantize(np.concatenate(out)[: self.n_params], self.qp, P.q)

    def run_round(self, episode: int, active: list[int]) -> RoundMetrics:
        cfg = self.cfg
        sizes = {i: len(self.hospitals[i].train) for i in active}
        total = sum(sizes.values())
        credibility = cfg.fed.credibility
        entries, shares_by_party = [], []
        for i in range(cfg.sim.hospitals):
            if i not in active:
                entries.append(fedlearn.AggregationEntry(None))
                continue
            h = self.hospitals[i]
            alpha = sizes[i] / total
            w, delta, upload, acc = self.local_update(h, alpha)
            self.note_private(h.name, delta, upload)
            if self.secure:
                shares, blobs = self.encrypt_upload(h, active.index(i), upload)
                shares_by_party.append(shares)
                digest = _digest(*blobs)
            else:
                self.send(h.name, _hname(self.leader), "update", upload)
                entries.append(fedlearn.AggregationEntry(delta, alpha, credibility))
                digest = _digest(upload.tobytes())
            self.attach(h.name, w, digest, sizes[i], acc, total, "update")
        if not active:
            raise NoUpdates("no hospital is active")

        if self.secure:
            weighted = self.secure_sum(shares_by_party)
            norm = sum(sizes[i] / total * credibility for i in active)
            g, theta = fedlearn.apply_weighted_sum(weighted, norm, self.theta, cfg.fed.server_lr)
        else:
            g, theta = fedlearn.aggregate_global(entries, self.theta, cfg.fed.server_lr)
        self.theta = theta
        leader = _hname(self.leader)
        for i in active:
            self.send(leader, _hname(i), "global_model", theta)
        with self.clock.section("leader", len(self.validation) * self.cost.eval_per_sample):
            acc = evaluate_accuracy(theta, self.validation)
        self.attach(leader, theta, _digest(theta.tobytes()), total, acc, total, "global")
        confirmed = confirm_transactions(self.dag)

        test_acc = evaluate_accuracy(theta, self.test)
        loss = fedlearn.global_loss(
            theta, [(self.hospitals[i].train.X, self.hospitals[i].train.y) for i in active],
            lambda w, X, y: per_sample_loss(w, X, y, self.classes),
            [cfg.fed.multiplicity] * len(active))
        wall = self.clock.end_round()
        return RoundMetrics(episode, self.round, len(active), cfg.sim.grads_per_hospital,
                            test_acc, loss, wall, len(confirmed))

    def plateaued(self, metrics: list[RoundMetrics]) -> bool:
        k = self.cfg.fed.plateau_window
        if k == 0 or len(metrics) <= k:
            return False
        return metrics[-k - 1].global_loss - metrics[-1].global_loss < self.cfg.fed.plateau_tol

    def active_at(self, r: int) -> list[int]:
        gone = {h for when, h in self.cfg.sim.dropout if when <= r}
        return [i for i in range(self.cfg.sim.hospitals) if i not in gone]

    def execute(self) -> RunResult:
        cfg = self.cfg
        writer = MetricsWriter(self.out_dir / "metrics.csv", cfg.sim.seed) if self.out_dir else None
        metrics, elapsed = [], []
        limits = cfg.sim.time_limits or []
        stopped = None
        try:
            for episode in range(cfg.sim.episodes):
                for _slot in range(cfg.sim.time_slots):
                    if not fedlearn.time_budget_ok(fedlearn.RoundBudget(limits, elapsed)):
                        self.events.log(self.clock.now(), self.round, LEDGER, "budget_exhausted",
                                        {"elapsed_ms": round(sum(elapsed), 3)})
                        stopped = "time_budget"
                        break
                    try:
                        self.clock.begin_round()
                        active = self.active_at(self.round)
                        for h in sorted(set(self.committee) - set(active)):
                            self.events.log(self.clock.now(), self.round, _hname(h), "dropout", {})
                        if tuple(active) != self.committee:
                            self.rekey(active)
                        if not active:
                            raise NoUpdates("every hospital has dropped out")
                        if self.leader not in active or _slot == 0:
                            new = active[episode % len(active)]
                            if new != self.leader:
                                self.leader = new
                                self.events.log(self.clock.now(), self.round, _hname(new), "leader",
                                                {"episode": episode})
                                self.issue_evaluator_key()
                        m = self.run_round(episode, active)
                    except BcflError as exc:
                        raise RoundError(episode, self.round, exc) from exc
                    metrics.append(m)
                    elapsed.append(m.wall_time_ms)
                    self.events.log(self.clock.now(), self.round, LEDGER, "round_done",
                                    {"accuracy": m.global_accuracy, "confirmed": m.confirmed_tx})
                    if writer:
                        writer.write(m)
                    self.round += 1
                    if self.plateaued(metrics):
                        self.events.log(self.clock.now(), self.round - 1, LEDGER, "converged",
                                        {"loss": m.global_loss})
                        stopped = "plateau"
                        break
                if stopped:
                    break
        except BaseException:
            if writer:
                writer.abandon()
            self._close()
            raise
        if writer:
            writer.close()
        if self.out_dir:
            (self.out_dir / "dag.json").write_text(json.dumps(dag_to_json(self.dag), sort_keys=True))
            (self.out_dir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
            np.save(self.out_dir / "model.npy", self.theta)
        self._close()
        return RunResult(cfg, metrics, self.theta, self.dag, self.events.events, self.messages,
                         self.private, len(metrics), stopped)

    def _close(self):
        if self._events_fh:
            self._events_fh.close()
            self._events_fh = None


def run_experiment(cfg: ExperimentConfig, out_dir=None, instrument: bool = False) -> RunResult:
    """Run every episode of ``cfg``; with ``out_dir`` also write metrics.csv,
    events.jsonl, dag.json, config.json and model.npy there."""
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
    return _Run(cfg, out, instrument).execute()


def plaintext_control(cfg: ExperimentConfig, out_dir=None, instrument: bool = False) -> RunResult:
    """The same run with encryption switched off (same seeds, same data)."""
    return run_experiment(cfg.replace(crypto__enabled=False), out_dir, instrument)
