"""Stage seeds derived from one master seed.

``derive_seed(seed, stage)`` hashes ``f"{seed}:{stage}"`` with SHA-256 and
takes the first 8 bytes (little-endian, top bit cleared). Stages in use:
``synth``, ``cnn-init``, ``split``, ``train``, ``ann-init``, ``ann-split``,
``ann-train``.
"""
import hashlib


def derive_seed(seed: int, stage: str) -> int:
    digest = hashlib.sha256(f"{seed}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1
