"""Typed messages between clients, server and KGC, plus the privacy checker.

Every message whose sender or recipient is the server must carry ciphertexts
(and structural metadata such as sizes and round numbers) only. The bus runs
:func:`assert_ciphertext_only` on each such message, so a plaintext weight,
distance or client index reaching the server raises PrivacyViolation.
"""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, fields, is_dataclass
from enum import Enum
from typing import Any

import numpy as np

from ..ckks import Ciphertext, EvaluationKey, PublicKey, RotationKeySet, SecretKey
from ..ckks.encoding import Plaintext
from ..distance import EncryptedDistanceMatrix, PackedWeights
from ..errors import PrivacyViolation
from ..robust import SelectionMask

SERVER, KGC = "server", "kgc"


def client_name(cid: int) -> str:
    return f"client-{cid}"


@dataclass(frozen=True)
class Message:
    round: int
    sender: str


@dataclass(frozen=True)
class PublicKeyBroadcast(Message):
    public: PublicKey


@dataclass(frozen=True)
class ServerKeys(Message):
    relin: EvaluationKey
    rotations: RotationKeySet


@dataclass(frozen=True)
class EncryptedUpdate(Message):
    packed: PackedWeights


@dataclass(frozen=True)
class DistanceSubmission(Message):
    matrix: EncryptedDistanceMatrix


@dataclass(frozen=True)
class MaskDelivery(Message):
    mask: SelectionMask


@dataclass(frozen=True)
class AggregateSubmission(Message):
    aggregate: PackedWeights


@dataclass(frozen=True)
class GlobalModelBroadcast(Message):
    weights: np.ndarray


SERVER_MESSAGES = (ServerKeys, EncryptedUpdate, DistanceSubmission, MaskDelivery, AggregateSubmission)

# Leaves that are opaque to the server: their contents are ciphertext or public key material.
OPAQUE = (Ciphertext, PublicKey, EvaluationKey)
# Structural metadata the server may see: sizes, round numbers, names, op counts.
META_FIELDS = frozenset({"round", "sender", "length", "n", "width", "reduced", "mode", "counters"})
_FORBIDDEN = (SecretKey, Plaintext)


def _check_meta(value: Any, path: str) -> None:
    if isinstance(value, (bool, int, str, Enum)) and not isinstance(value, float):
        return
    if isinstance(value, dict) and all(isinstance(k, str) and isinstance(v, int) for k, v in value.items()):
        return
    raise PrivacyViolation(f"{path}: metadata field carries {type(value).__name__}")


def assert_ciphertext_only(value: Any, path: str = "message") -> None:
    """Raise PrivacyViolation unless ``value`` is built from ciphertexts and metadata only."""
    if isinstance(value, _FORBIDDEN):
        raise PrivacyViolation(f"{path}: {type(value).__name__} must never leave the KGC")
    if isinstance(value, OPAQUE):
        return
    if isinstance(value, RotationKeySet):
        for k, key in value.items():
            if not isinstance(key, EvaluationKey):
                raise PrivacyViolation(f"{path}[{k}]: rotation key set holds {type(key).__name__}")
        return
    if is_dataclass(value) and not isinstance(value, type):
        for f in fields(value):
            item = getattr(value, f.name)
            if f.name in META_FIELDS:
                _check_meta(item, f"{path}.{f.name}")
            else:
                assert_ciphertext_only(item, f"{path}.{f.name}")
        return
    if isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            assert_ciphertext_only(item, f"{path}[{i}]")
        return
    if isinstance(value, dict):
        for k, item in value.items():
            # keys are positions in the pair structure, never selection results
            if not (isinstance(k, int) or (isinstance(k, tuple) and all(isinstance(x, int) for x in k))):
                raise PrivacyViolation(f"{path}: unexpected key {k!r}")
            assert_ciphertext_only(item, f"{path}[{k}]")
        return
    raise PrivacyViolation(f"{path}: plaintext {type(value).__name__} in a server-side message")


def assert_no_secrets(value: Any, path: str = "message") -> None:
    """Clients may receive public data but never the secret or evaluation keys."""
    if isinstance(value, (SecretKey, EvaluationKey, RotationKeySet)):
        raise PrivacyViolation(f"{path}: clients must not receive {type(value).__name__}")
    if is_dataclass(value) and not isinstance(value, type):
        for f in fields(value):
            assert_no_secrets(getattr(value, f.name), f"{path}.{f.name}")


class MessageBus:
    """In-process queues with privacy checks at every server-facing edge."""

    def __init__(self):
        self.queues: dict[str, deque] = defaultdict(deque)
        self.log: list[tuple[int, str, str, str]] = []

    def send(self, recipient: str, msg: Message) -> None:
        if SERVER in (msg.sender, recipient):
            assert_ciphertext_only(msg, type(msg).__name__)
        if recipient.startswith("client-"):
            assert_no_secrets(msg, type(msg).__name__)
        self.queues[recipient].append(msg)
        self.log.append((msg.round, msg.sender, recipient, type(msg).__name__))

    def receive(self, recipient: str, kind: type) -> Message:
        queue = self.queues[recipient]
        for i, msg in enumerate(queue):
            if isinstance(msg, kind):
                del queue[i]
                return msg
        raise LookupError(f"no {kind.__name__} waiting for {recipient}")

    def receive_all(self, recipient: str, kind: type) -> list[Message]:
        out = []
        while any(isinstance(m, kind) for m in self.queues[recipient]):
            out.append(self.receive(recipient, kind))
        return out

    def clear(self) -> None:
        self.queues.clear()
