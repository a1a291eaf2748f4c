"""Round orchestration: the nine-step encrypted workflow, its plaintext twin, and experiments."""

from __future__ import annotations

import json
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..ckks import CkksParams, Encoder, Encryptor, Evaluator, dump_ciphertexts, keygen
from ..distance import (
    HoistPlan,
    MatrixMode,
    calibrate,
    reduction_width,
    required_rotation_steps,
    resolve_plan,
)
from ..errors import DepthError
from ..robust import DistanceTable, RuleConfig, SelectionResult, aggregation_depth, select
from .config import ExperimentConfig
from .data import Dataset, gaussian_mixture, load_idx, partition, train_val_split
from .entities import Client, Kgc, Server, ServerOptions
from .messages import (
    KGC,
    SERVER,
    AggregateSubmission,
    DistanceSubmission,
    EncryptedUpdate,
    GlobalModelBroadcast,
    MaskDelivery,
    MessageBus,
    PublicKeyBroadcast,
    ServerKeys,
)
from .models import accuracy, build_model

DISTANCE_LEVELS = 1


@dataclass
class RoundTranscript:
    """One round's record. ``selected`` and ``distances`` are KGC-side audit fields."""

    round: int
    accuracy: float
    times: dict[str, float] = field(default_factory=dict)
    counters: dict[str, int] = field(default_factory=dict)
    distance_counters: dict[str, int] = field(default_factory=dict)
    selected: list[int] | None = None
    distances: list | None = None
    divergence: float | None = None

    def record(self, with_times: bool = True) -> dict:
        out = {
            "round": self.round, "accuracy": self.accuracy, "counters": self.counters,
            "distance_counters": self.distance_counters, "selected": self.selected,
            "distances": self.distances, "divergence": self.divergence,
        }
        if with_times:
            out["times"] = self.times
        return out


class _Timer:
    def __init__(self):
        self.times: dict[str, float] = {}

    @contextmanager
    def phase(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.times[name] = self.times.get(name, 0.0) + time.perf_counter() - t0


def required_depth(rule: RuleConfig, n: int) -> int:
    """Levels each phase needs from fresh ciphertexts; both phases start at the top level."""
    return max(DISTANCE_LEVELS, aggregation_depth(rule.rule, rule.selection_size(n)))


def preflight(params: CkksParams, rule: RuleConfig, n: int) -> None:
    need = required_depth(rule, n)
    if params.depth < need:
        raise DepthError(f"rule {rule.rule} needs depth {need}, parameters provide {params.depth}")


# -- plaintext pipeline --------------------------------------------------------------------


def plaintext_select(updates: list[np.ndarray], rule: RuleConfig) -> SelectionResult:
    table = DistanceTable.from_points(np.stack(updates))
    return select(rule, table.totals() if rule.score_mode == "sumdis" else table)


def plaintext_aggregate(updates: list[np.ndarray], rule: RuleConfig) -> tuple[np.ndarray, SelectionResult]:
    """The same rule without encryption: select, then average the selected models."""
    if rule.rule == "mean":
        sel = SelectionResult("mean", tuple(range(len(updates))))
    else:
        sel = plaintext_select(updates, rule)
    return np.mean([updates[i] for i in sel.selected], axis=0), sel


# -- federation setup ----------------------------------------------------------------------


@dataclass
class Federation:
    model: object
    clients: list[Client]
    validation: Dataset
    malicious: frozenset[int]


def load_data(cfg: ExperimentConfig) -> Dataset:
    d = cfg.data
    if d.kind == "idx":
        return load_idx(d.images, d.labels, d.classes)
    return gaussian_mixture(d.samples, d.dim, d.classes, d.separation, seed=[cfg.seed, 1])


def build_federation(cfg: ExperimentConfig) -> Federation:
    data = load_data(cfg)
    train, val = train_val_split(data, cfg.data.val_fraction, [cfg.seed, 2])
    parts = partition(train, cfg.clients, [cfg.seed, 3], cfg.data.skew)
    model = build_model(cfg.model.kind, data.dim, data.num_classes, cfg.model.hidden)
    bad = cfg.attack.malicious_ids(cfg.clients, cfg.seed)
    clients = [Client(i, part, model, cfg.seed, cfg.attack if i in bad else None) for i, part in enumerate(parts)]
    return Federation(model, clients, val, bad)


def calibrate_host(params: CkksParams, seed: int = 0, runs: int = 11):
    """Measure T_H, T_D and M_c for ``params`` on this machine (keys for steps 1..4)."""
    keys = keygen(params, [seed, 0xCA1], rotation_steps=[1, 2, 3, 4])
    encoder = Encoder(params)
    ct = Encryptor(params, keys.public, [seed, 0xCA2]).encrypt(
        encoder.encode(np.linspace(-1, 1, params.slot_count), level=params.max_level - DISTANCE_LEVELS))
    return calibrate(Evaluator(params, keys.relin, keys.rotations), ct, runs=runs)


def make_plan(cfg: ExperimentConfig, params: CkksParams, length: int) -> HoistPlan:
    """Resolve the configured hoisting mode into a plan for this model size."""
    c = cfg.crypto
    width = reduction_width(length, params.slot_count)
    m_cipher = params.ciphertext_bytes(params.max_level - DISTANCE_LEVELS)
    budget = c.memory_budget if c.memory_budget is not None else 4 * m_cipher
    t_h, t_d = c.t_hoist, c.t_decompose
    if c.hoisting == "dynamic" and (t_h is None or t_d is None):
        cal = calibrate_host(params, cfg.seed)
        t_h = cal.t_hoist if t_h is None else t_h
        t_d = cal.t_decompose if t_d is None else t_d
    return resolve_plan(c.hoisting, width, m_cipher, budget, t_h or 1.0, t_d or 1.0)


@dataclass
class EncryptedSetup:
    params: CkksParams
    kgc: Kgc
    server: Server
    bus: MessageBus
    plan: HoistPlan | None


def setup_encrypted(cfg: ExperimentConfig, fed: Federation) -> EncryptedSetup:
    """Key generation and distribution (workflow stage 1)."""
    params = cfg.crypto.params()
    params.check_security()
    preflight(params, cfg.rule, cfg.clients)
    length = fed.model.num_params
    plan = None if cfg.crypto.slot_sum_at_kgc else make_plan(cfg, params, length)
    steps = [] if plan is None else required_rotation_steps(plan.k, plan.n)
    kgc = Kgc(params, cfg.seed, cfg.rule, steps)
    mode = MatrixMode.ROW_SUMS if cfg.rule.score_mode == "sumdis" else MatrixMode.PER_PAIR
    options = ServerOptions(cfg.crypto.lazy_relin, plan if plan is not None else 1,
                            cfg.crypto.slot_sum_at_kgc, mode, cfg.crypto.threads)
    server = Server(params, options)
    bus = MessageBus()
    bus.send(SERVER, kgc.server_keys_message())
    server.install_keys(bus.receive(SERVER, ServerKeys))
    pk = kgc.public_key_message()
    for c in fed.clients:
        bus.send(c.name, pk)
        c.receive_public_key(bus.receive(c.name, PublicKeyBroadcast), params)
    return EncryptedSetup(params, kgc, server, bus, plan)


# -- one round -----------------------------------------------------------------------------


def run_round(round_idx: int, global_w: np.ndarray, fed: Federation, setup: EncryptedSetup,
              cfg: ExperimentConfig) -> tuple[np.ndarray, RoundTranscript, list[np.ndarray]]:
    """Steps 1-9 of the workflow for one round.

    Returns the new global weights, the transcript and the clients' plaintext
    models (kept by the simulation harness for the mirror pipeline only). The
    caller commits the result; nothing outside the bus queues changes before
    the round completes, and the queues are cleared if it fails.
    """
    preflight(setup.params, cfg.rule, len(fed.clients))
    timer = _Timer()
    bus, server, kgc = setup.bus, setup.server, setup.kgc
    before = server.evaluator.counters.snapshot()
    try:
        with timer.phase("local_train"):  # step 1
            local = [c.local_update(global_w, round_idx, cfg.training) for c in fed.clients]
        with timer.phase("encrypt"):  # step 2
            for c, w in zip(fed.clients, local):
                bus.send(SERVER, c.encrypt(w, round_idx))
        updates = bus.receive_all(SERVER, EncryptedUpdate)
        selection, distances, dist_counters = None, None, {}
        mask = None
        if cfg.rule.rule != "mean":
            with timer.phase("distance"):  # step 3
                bus.send(KGC, server.distances(updates, round_idx))
            with timer.phase("kgc_select"):  # steps 4-7
                submission = bus.receive(KGC, DistanceSubmission)
                dist_counters = dict(submission.matrix.counters)
                mask_msg, decision = kgc.decide(submission, round_idx)
                bus.send(SERVER, mask_msg)
                selection, distances = decision.selection, decision.distances
            mask = bus.receive(SERVER, MaskDelivery)
        with timer.phase("aggregate"):  # step 8
            bus.send(KGC, server.aggregate(updates, mask, cfg.rule, len(fed.clients), round_idx))
        with timer.phase("decrypt"):  # step 9
            broadcast = kgc.open_aggregate(bus.receive(KGC, AggregateSubmission))
            for c in fed.clients:
                bus.send(c.name, broadcast)
        for c in fed.clients:
            bus.receive(c.name, GlobalModelBroadcast)
    except Exception:
        bus.clear()
        raise
    if cfg.output.dump_ciphertexts:
        root = Path(cfg.output.dump_ciphertexts) / f"round_{round_idx:03d}"
        for u in updates:
            dump_ciphertexts(u.packed.chunks, root, prefix=u.sender)
    transcript = RoundTranscript(
        round_idx, accuracy(fed.model, broadcast.weights, fed.validation), timer.times,
        server.evaluator.counters.diff(before), dist_counters,
        None if selection is None or cfg.output.redact_kgc else list(selection.selected),
        None if distances is None or cfg.output.redact_kgc else np.asarray(distances).tolist(),
    )
    return broadcast.weights, transcript, local


def run_plain_round(round_idx: int, global_w: np.ndarray, fed: Federation,
                    cfg: ExperimentConfig) -> tuple[np.ndarray, RoundTranscript]:
    timer = _Timer()
    with timer.phase("local_train"):
        local = [c.local_update(global_w, round_idx, cfg.training) for c in fed.clients]
    with timer.phase("aggregate"):
        new_w, sel = plaintext_aggregate(local, cfg.rule)
    transcript = RoundTranscript(round_idx, accuracy(fed.model, new_w, fed.validation), timer.times,
                                 selected=None if cfg.output.redact_kgc else list(sel.selected))
    return new_w, transcript


# -- experiments -----------------------------------------------------------------------------


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    transcripts: list[RoundTranscript]
    weights: np.ndarray
    accuracy: float
    malicious: list[int]
    plain_weights: np.ndarray | None = None
    plain_accuracy: float | None = None
    divergence: float | None = None
    stopped_early: bool = False
    plan: HoistPlan | None = None

    def summary(self) -> dict:
        total: dict[str, int] = {}
        for t in self.transcripts:
            for k, v in t.counters.items():
                total[k] = total.get(k, 0) + v
        return {
            "fingerprint": self.config.fingerprint(), "rounds": len(self.transcripts),
            "accuracy": self.accuracy, "plain_accuracy": self.plain_accuracy, "divergence": self.divergence,
            "stopped_early": self.stopped_early, "malicious": self.malicious, "counters": total,
            "plan_k": None if self.plan is None else self.plan.k,
        }


def run_experiment(cfg: ExperimentConfig, rounds: int | None = None) -> ExperimentResult:
    """Train until ``max_rounds`` (or ``rounds``) or until accuracy stalls for ``patience`` rounds."""
    fed = build_federation(cfg)
    rounds = cfg.training.max_rounds if rounds is None else rounds
    setup = setup_encrypted(cfg, fed) if cfg.mode == "encrypted" else None
    w = fed.model.init([cfg.seed, 4])
    plain_w = w.copy() if (setup is not None and cfg.mirror) else None
    transcripts: list[RoundTranscript] = []
    best, stale, stopped = -1.0, 0, False
    for t in range(rounds):
        if setup is None:
            w, tr = run_plain_round(t, w, fed, cfg)
        else:
            w, tr, _ = run_round(t, w, fed, setup, cfg)
            if plain_w is not None:
                plain_w, _ = run_plain_round(t, plain_w, fed, cfg)
                tr.divergence = float(np.max(np.abs(w - plain_w)))
        transcripts.append(tr)
        if cfg.output.transcript:
            append_transcript(cfg.output.transcript, tr)
        if tr.accuracy > best:
            best, stale = tr.accuracy, 0
        else:
            stale += 1
            if stale >= cfg.training.patience:
                stopped = True
                break
    result = ExperimentResult(cfg, transcripts, w, accuracy(fed.model, w, fed.validation),
                              sorted(fed.malicious), stopped_early=stopped,
                              plan=None if setup is None else setup.plan)
    if plain_w is not None:
        result.plain_weights = plain_w
        result.plain_accuracy = accuracy(fed.model, plain_w, fed.validation)
        result.divergence = float(np.max(np.abs(w - plain_w)))
    return result


def append_transcript(path, transcript: RoundTranscript) -> None:
    with open(path, "a") as fh:
        fh.write(json.dumps(transcript.record(), sort_keys=True) + "\n")


def read_transcript(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
