"""Readers for ML-KEM known-answer files in the NIST ACVP JSON layout."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class KeyGenCase:
    tc_id: int
    d: bytes
    z: bytes
    ek: bytes
    dk: bytes


@dataclass(frozen=True)
class EncapsCase:
    tc_id: int
    ek: bytes
    m: bytes
    c: bytes
    k: bytes


@dataclass(frozen=True)
class DecapsCase:
    tc_id: int
    dk: bytes
    c: bytes
    k: bytes
    reason: str


@dataclass
class KatSuite:
    keygen: list[KeyGenCase]
    encaps: list[EncapsCase]
    decaps: list[DecapsCase]

    def __len__(self):
        return len(self.keygen) + len(self.encaps) + len(self.decaps)


def _hex(s: str) -> bytes:
    return bytes.fromhex(s)


def load_acvp(path: str | Path, parameter_set: str = "ML-KEM-512") -> KatSuite:
    """Load keyGen / encapsulation / decapsulation cases for one parameter set.

    Accepts an ACVP ``internalProjection`` document (or a merged file with the
    same ``testGroups`` shape). Groups whose mode is not given are classified
    by the fields their cases carry.
    """
    doc = json.loads(Path(path).read_text())
    suite = KatSuite([], [], [])
    for group in doc["testGroups"]:
        if group.get("parameterSet") != parameter_set:
            continue
        function = group.get("function")
        for t in group["tests"]:
            if "d" in t and "z" in t:
                suite.keygen.append(KeyGenCase(t["tcId"], _hex(t["d"]), _hex(t["z"]), _hex(t["ek"]), _hex(t["dk"])))
            elif function == "encapsulation" or "m" in t:
                suite.encaps.append(EncapsCase(t["tcId"], _hex(t["ek"]), _hex(t["m"]), _hex(t["c"]), _hex(t["k"])))
            else:
                dk = t.get("dk", group.get("dk"))
                suite.decaps.append(DecapsCase(t["tcId"], _hex(dk), _hex(t["c"]), _hex(t["k"]), t.get("reason", "")))
    return suite
