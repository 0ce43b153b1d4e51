"""Video streaming platform fingerprinting from connection handshakes."""

import json

from ._core import (
    Forest,
    VidfpError,
    cross_validate,
    decrypt_initial,
    derive_initial_keys,
    mutual_information,
    quantile_sorted,
    synth,
    tier_for,
)
from . import _core


def extract(pcap, labels=""):
    """Flow records of a capture as dicts."""
    return [json.loads(line) for line in _core.extract_jsonl(str(pcap), str(labels))]


def classify(pcap, bank):
    """Cascade predictions for each provider flow of a capture."""
    return [json.loads(line) for line in _core.classify_jsonl(str(pcap), str(bank))]


__all__ = [
    "Forest",
    "VidfpError",
    "classify",
    "cross_validate",
    "decrypt_initial",
    "derive_initial_keys",
    "extract",
    "mutual_information",
    "quantile_sorted",
    "synth",
    "tier_for",
]
