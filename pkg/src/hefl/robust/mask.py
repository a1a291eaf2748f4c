"""Masked encrypted sorting: the KGC turns a selection into an encrypted mask and
the server aggregates through it without learning which clients were picked."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..ckks import Ciphertext, Decryptor, Encoder, Encryptor, Evaluator
from ..distance import EncryptedDistanceMatrix, MatrixMode, PackedWeights, decrypt_matrix
from ..errors import DepthError, ShapeError
from .rules import DistanceTable, RuleConfig, SelectionResult, select


@dataclass
class SelectionMask:
    """``rows[r][i]`` encrypts 1 in every slot if client i holds selection rank r, else 0.

    Row r therefore decrypts to the basis vector of the r-th selected client,
    or to the zero vector when fewer than r + 1 clients were selected.
    """

    rows: list[list[Ciphertext]] = field(repr=False)
    n: int

    def ciphertexts(self) -> list[Ciphertext]:
        return [ct for row in self.rows for ct in row]


def mask_matrix(selection: SelectionResult, n: int, rows: int | None = None) -> np.ndarray:
    """Plaintext 0/1 matrix behind :func:`build_mask`: rank-ordered basis vectors, zero-padded."""
    rows = n if rows is None else rows
    m = np.zeros((rows, n))
    for r, i in enumerate(selection.selected[:rows]):
        m[r, i] = 1.0
    return m


def build_mask(selection: SelectionResult, n: int, encryptor: Encryptor, encoder: Encoder,
               rows: int | None = None, level: int | None = None) -> SelectionMask:
    """Encrypt the mask; ``rows`` limits it to the first rows (by default all n)."""
    plain = mask_matrix(selection, n, rows)
    params = encoder.params
    level = params.max_level if level is None else level
    pts = {v: encoder.encode_constant(v, params.scale, level) for v in (0.0, 1.0)}
    enc_rows = [[encryptor.encrypt(pts[float(v)]) for v in row] for row in plain]
    return SelectionMask(enc_rows, n)


def aggregation_depth(rule: str, l: int) -> int:  # noqa: E741
    """Levels consumed by the server-side aggregation of fresh ciphertexts."""
    if rule == "mean":
        return 1
    return 2 if rule == "multi-krum" and l > 1 else 1


def _check_weights(weights: list[PackedWeights]) -> None:
    if not weights:
        raise ShapeError("no client weights to aggregate")
    if len({w.shape() for w in weights}) != 1:
        raise ShapeError("client weights are not homogeneous")


def masked_aggregate(weights: list[PackedWeights], mask: SelectionMask, evaluator: Evaluator,
                     rule: str, l: int) -> PackedWeights:  # noqa: E741
    """Sum_r Sum_i W_i * M[r][i] chunk by chunk, relinearized once per chunk.

    Multi-Krum divides by l to average the selected updates.
    """
    _check_weights(weights)
    if mask.n != len(weights) or any(len(row) != mask.n for row in mask.rows):
        raise ShapeError(f"mask is for {mask.n} clients, got {len(weights)} weight sets")
    level = weights[0].level
    if level < aggregation_depth(rule, l):
        raise DepthError(f"aggregation for {rule} needs {aggregation_depth(rule, l)} levels, have {level}")
    out = []
    for c in range(weights[0].chunk_count):
        triples = [evaluator.multiply(w.chunks[c], row[i])
                   for row in mask.rows for i, w in enumerate(weights)]
        out.append(evaluator.rescale(evaluator.relinearize(evaluator.lazy_accumulate(triples))))
    if rule == "multi-krum" and l > 1:
        out = [evaluator.multiply_const(ct, 1.0 / l) for ct in out]
    return PackedWeights(out, weights[0].length)


def mean_aggregate(weights: list[PackedWeights], evaluator: Evaluator) -> PackedWeights:
    """Unweighted average of every client's update (the non-robust baseline)."""
    _check_weights(weights)
    n = len(weights)
    out = [evaluator.multiply_const(evaluator.add_many([w.chunks[c] for w in weights]), 1.0 / n)
           for c in range(weights[0].chunk_count)]
    return PackedWeights(out, weights[0].length)


@dataclass
class KgcDecision:
    """KGC-side result of one sorting round; only ``mask`` is sent to the server."""

    mask: SelectionMask | None
    selection: SelectionResult
    distances: np.ndarray = field(repr=False)


def masked_sort_round(matrix: EncryptedDistanceMatrix, decryptor: Decryptor, encoder: Encoder,
                      encryptor: Encryptor, cfg: RuleConfig, mask_rows: int | None = None) -> KgcDecision:
    """Decrypt the distances, apply the rule and encrypt the resulting mask."""
    plain = decrypt_matrix(matrix, decryptor, encoder)
    if matrix.mode is MatrixMode.PER_PAIR:
        table = DistanceTable.from_noisy(plain)
        selection = select(cfg, table)
        shown = table.d
    else:
        shown = np.clip(plain, 0.0, None)
        selection = select(cfg, shown)
    if cfg.rule == "mean":
        return KgcDecision(None, selection, shown)
    rows = selection.l if mask_rows is None else mask_rows
    return KgcDecision(build_mask(selection, matrix.n, encryptor, encoder, rows), selection, shown)
