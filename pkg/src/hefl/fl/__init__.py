"""Federated-learning simulation: data, models, attacks, parties and rounds."""

from .attacks import ATTACKS, AttackConfig, flip_labels, poisoned_data, retarget_labels, scale_attack
from .config import CryptoConfig, DataConfig, ExperimentConfig, ModelConfig, OutputConfig, dump_yaml
from .data import Dataset, gaussian_mixture, load_idx, partition, read_idx, train_val_split
from .entities import Client, Kgc, Server, ServerOptions
from .messages import MessageBus, assert_ciphertext_only, assert_no_secrets
from .models import MLP, LinearRegression, LogisticRegression, accuracy, build_model
from .protocol import (
    ExperimentResult,
    Federation,
    RoundTranscript,
    build_federation,
    calibrate_host,
    make_plan,
    plaintext_aggregate,
    preflight,
    read_transcript,
    run_experiment,
    run_plain_round,
    run_round,
    setup_encrypted,
)
from .training import TrainingConfig, local_sgd

__all__ = [
    "ATTACKS", "AttackConfig", "Client", "CryptoConfig", "DataConfig", "Dataset", "ExperimentConfig",
    "ExperimentResult", "Federation", "Kgc", "LinearRegression", "LogisticRegression", "MLP", "MessageBus",
    "ModelConfig", "OutputConfig", "RoundTranscript", "Server", "ServerOptions", "TrainingConfig",
    "accuracy", "assert_ciphertext_only", "assert_no_secrets", "build_federation", "build_model",
    "calibrate_host", "dump_yaml", "flip_labels", "gaussian_mixture", "load_idx", "local_sgd",
    "make_plan", "partition", "plaintext_aggregate", "poisoned_data", "preflight", "read_idx",
    "read_transcript", "retarget_labels", "run_experiment", "run_plain_round", "run_round",
    "scale_attack", "setup_encrypted", "train_val_split",
]
