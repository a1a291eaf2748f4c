"""The three protocol parties. Each owns its state and talks only through messages."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ckks import CkksParams, Decryptor, Encoder, Encryptor, Evaluator, keygen
from ..distance import HoistPlan, MatrixMode, PackedWeights, build_distance_matrix, pack_and_encrypt
from ..robust import KgcDecision, RuleConfig, masked_aggregate, masked_sort_round, mean_aggregate
from .attacks import AttackConfig, poisoned_data, scale_attack
from .data import Dataset
from .messages import (
    KGC,
    SERVER,
    AggregateSubmission,
    DistanceSubmission,
    EncryptedUpdate,
    GlobalModelBroadcast,
    MaskDelivery,
    PublicKeyBroadcast,
    ServerKeys,
    client_name,
)
from .training import TrainingConfig, local_sgd


def round_rng(seed: int, round_idx: int, stream: int, party: int = 0) -> np.random.Generator:
    """Fresh generator per (seed, round, stream, party), so an aborted round leaves no trace."""
    return np.random.default_rng([int(seed), int(round_idx), int(stream), int(party)])


_TRAIN, _ENCRYPT, _MASK = 1, 2, 3


class Client:
    """Holds local data and the public key; trains and encrypts its model."""

    def __init__(self, cid: int, data: Dataset, model, seed: int, attack: AttackConfig | None = None):
        self.cid = cid
        self.name = client_name(cid)
        self.data = data
        self.model = model
        self.seed = seed
        self.attack = attack
        self.public_key = None
        self.encoder = None

    @property
    def malicious(self) -> bool:
        return self.attack is not None and self.attack.active()

    def receive_public_key(self, msg: PublicKeyBroadcast, params: CkksParams) -> None:
        self.public_key = msg.public
        self.encoder = Encoder(params)

    def local_update(self, global_w: np.ndarray, round_idx: int, cfg: TrainingConfig) -> np.ndarray:
        """Honest local SGD, or the poisoned variant for a malicious client."""
        rng = round_rng(self.seed, round_idx, _TRAIN, self.cid)
        data = poisoned_data(self.data, self.attack) if self.malicious else self.data
        w = local_sgd(self.model, global_w, data, cfg, rng)
        if self.malicious and self.attack.kind == "untargeted":
            w = scale_attack(global_w, w, self.attack.scale)
        return w

    def encrypt(self, w: np.ndarray, round_idx: int) -> EncryptedUpdate:
        enc = Encryptor(self.encoder.params, self.public_key, round_rng(self.seed, round_idx, _ENCRYPT, self.cid))
        return EncryptedUpdate(round_idx, self.name, pack_and_encrypt(w, enc, self.encoder))


@dataclass(frozen=True)
class ServerOptions:
    lazy_relin: bool = True
    plan: HoistPlan | int = 1
    slot_sum_at_kgc: bool = False
    matrix_mode: MatrixMode = MatrixMode.PER_PAIR
    threads: int | None = None


class Server:
    """Computes on ciphertexts with the evaluation keys; never sees plaintext."""

    name = SERVER

    def __init__(self, params: CkksParams, options: ServerOptions):
        self.params = params
        self.options = options
        self.evaluator: Evaluator | None = None

    def install_keys(self, msg: ServerKeys) -> None:
        self.evaluator = Evaluator(self.params, msg.relin, msg.rotations)

    def distances(self, updates: list[EncryptedUpdate], round_idx: int) -> DistanceSubmission:
        o = self.options
        matrix = build_distance_matrix([u.packed for u in updates], self.evaluator, o.plan, o.matrix_mode,
                                       lazy=o.lazy_relin, reduce=not o.slot_sum_at_kgc, threads=o.threads)
        return DistanceSubmission(round_idx, self.name, matrix)

    def aggregate(self, updates: list[EncryptedUpdate], mask: MaskDelivery | None, rule: RuleConfig,
                  n: int, round_idx: int) -> AggregateSubmission:
        weights = [u.packed for u in updates]
        if rule.rule == "mean":
            out = mean_aggregate(weights, self.evaluator)
        else:
            out = masked_aggregate(weights, mask.mask, self.evaluator, rule.rule, rule.selection_size(n))
        return AggregateSubmission(round_idx, self.name, out)


class Kgc:
    """Trusted key holder: generates keys, decrypts distances, builds masks, opens the model."""

    name = KGC

    def __init__(self, params: CkksParams, seed: int, rule: RuleConfig, rotation_steps=()):
        self.params = params
        self.seed = seed
        self.rule = rule
        self._keys = keygen(params, seed, list(rotation_steps))
        self._decryptor = Decryptor(params, self._keys.secret)
        self.encoder = Encoder(params)

    def public_key_message(self) -> PublicKeyBroadcast:
        return PublicKeyBroadcast(0, self.name, self._keys.public)

    def server_keys_message(self) -> ServerKeys:
        return ServerKeys(0, self.name, self._keys.relin, self._keys.rotations)

    def decide(self, sub: DistanceSubmission, round_idx: int) -> tuple[MaskDelivery, KgcDecision]:
        enc = Encryptor(self.params, self._keys.public, round_rng(self.seed, round_idx, _MASK))
        decision = masked_sort_round(sub.matrix, self._decryptor, self.encoder, enc, self.rule)
        return MaskDelivery(round_idx, self.name, decision.mask), decision

    def open_aggregate(self, sub: AggregateSubmission) -> GlobalModelBroadcast:
        w = sub.aggregate.decrypt(self._decryptor, self.encoder)
        return GlobalModelBroadcast(sub.round, self.name, w)
