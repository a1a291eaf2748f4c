"""Encrypted pairwise distances, slot reduction and hoisting plans."""

from .engine import (
    EncryptedDistanceMatrix,
    MatrixMode,
    build_distance_matrix,
    decrypt_distance,
    decrypt_matrix,
    encrypted_pairwise_distance,
    reduction_width,
    required_rotation_steps,
    slot_reduce,
    worker_count,
)
from .hoisting import HOISTING_MODES, Calibration, HoistPlan, calibrate, plan_unfold, resolve_plan, unfold_objective
from .packing import PackedWeights, as_weight_vector, pack_and_encrypt

__all__ = [
    "Calibration", "EncryptedDistanceMatrix", "HOISTING_MODES", "HoistPlan", "MatrixMode", "PackedWeights",
    "as_weight_vector", "build_distance_matrix", "calibrate", "decrypt_distance", "decrypt_matrix",
    "encrypted_pairwise_distance", "pack_and_encrypt", "plan_unfold", "reduction_width",
    "required_rotation_steps", "resolve_plan", "slot_reduce", "unfold_objective", "worker_count",
]
