"""Client key file: secret keys plus everything the client remembers about its files.

Plain JSON, written atomically with mode 0600. Integers are stored as decimal
strings and byte strings as hex.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field as dc_field
from pathlib import Path

from porkit.algebra import PrimeField, TransparentPairing
from porkit.authenticators import BlsKeyPair
from porkit.config import KEYS_ENV
from porkit.dynamic import DynClient
from porkit.erasure import CodeParams
from porkit.por.schemes import (SCHEME_NAMES, FileMeta, JkKeys, Scheme, SwPrivateKeys, SwPublicKey,
                                SwPublicSecret, scheme_name)
from porkit.por.sentinel import SentinelKeys, SentinelLedger

DEFAULT_PATH = "porkit-keys.json"
VERSION = 1


def keys_to_dict(keys) -> dict:
    scheme = keys.scheme
    d = {"scheme": scheme_name(scheme), "p": str(keys.field.p)}
    if scheme == Scheme.JK_MAC:
        d["mac_key"] = keys.mac_key.hex()
    elif scheme == Scheme.JK_SIG:
        d["sk"] = str(keys.bls.sk)
    elif scheme == Scheme.SW_PRIVATE:
        d["alpha"] = str(keys.alpha)
        d["prf_key"] = keys.prf_key.hex()
    elif scheme == Scheme.SW_PUBLIC:
        if not isinstance(keys, SwPublicSecret):
            raise ValueError("only full SW-public key sets are stored")
        d["x"] = str(keys.x)
        d["alpha"] = str(keys.public.alpha.exponent)
    elif scheme == Scheme.SENTINEL:
        d["key"] = keys.key.hex()
    return d


def keys_from_dict(d: dict):
    scheme = SCHEME_NAMES[d["scheme"]]
    field = PrimeField(int(d["p"]))
    if scheme == Scheme.JK_MAC:
        return JkKeys(field, mac_key=bytes.fromhex(d["mac_key"]))
    if scheme == Scheme.JK_SIG:
        group = TransparentPairing(field)
        sk = int(d["sk"])
        return JkKeys(field, bls=BlsKeyPair(sk, group.g ** sk))
    if scheme == Scheme.SW_PRIVATE:
        return SwPrivateKeys(field, int(d["alpha"]), bytes.fromhex(d["prf_key"]))
    if scheme == Scheme.SW_PUBLIC:
        group = TransparentPairing(field)
        x = int(d["x"])
        return SwPublicSecret(x, SwPublicKey(group, group.g ** x, group.element(int(d["alpha"]))))
    return SentinelKeys(field, bytes.fromhex(d["key"]))


def meta_to_dict(meta: FileMeta) -> dict:
    return {
        "scheme": scheme_name(meta.scheme), "f": meta.code.f, "n": meta.code.n,
        "length": meta.length, "block_count": meta.block_count, "stripes": meta.stripes,
        "stored": meta.stored,
    }


def meta_from_dict(file_id: str, d: dict, field: PrimeField) -> FileMeta:
    return FileMeta(bytes.fromhex(file_id), SCHEME_NAMES[d["scheme"]], CodeParams(d["n"], d["f"], field),
                    d["length"], d["block_count"], d["stripes"], d.get("stored", 0))


def ledger_to_dict(ledger: SentinelLedger) -> dict:
    return {"data_blocks": ledger.data_blocks, "sentinels": ledger.sentinels,
            "spent": sorted(ledger.spent), "audits": ledger.audits}


def ledger_from_dict(d: dict, keys: SentinelKeys) -> SentinelLedger:
    return SentinelLedger(keys, d["data_blocks"], d["sentinels"], set(d["spent"]), d["audits"])


def resolve_path(path: str | None) -> Path:
    return Path(path or os.environ.get(KEYS_ENV) or DEFAULT_PATH)


@dataclass
class KeyFile:
    path: Path
    keys: object
    files: dict[str, dict] = dc_field(default_factory=dict)
    dynamic: dict[str, dict] = dc_field(default_factory=dict)

    @property
    def field(self) -> PrimeField:
        return self.keys.field

    @classmethod
    def load(cls, path: str | os.PathLike) -> KeyFile:
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except FileNotFoundError:
            raise FileNotFoundError(f"no key file at {path}; run 'porkit keygen' first") from None
        if raw.get("version") != VERSION:
            raise ValueError(f"unsupported key file version {raw.get('version')}")
        return cls(path, keys_from_dict(raw["keys"]), raw.get("files", {}), raw.get("dynamic", {}))

    def save(self) -> None:
        data = json.dumps({"version": VERSION, "keys": keys_to_dict(self.keys),
                           "files": self.files, "dynamic": self.dynamic}, indent=1, sort_keys=True)
        tmp = self.path.with_name(self.path.name + ".tmp")
        fd = os.open(tmp, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
        with os.fdopen(fd, "w") as fh:
            fh.write(data + "\n")
        os.chmod(tmp, 0o600)
        os.replace(tmp, self.path)

    def add_file(self, meta: FileMeta, ledger: SentinelLedger | None = None) -> None:
        entry = meta_to_dict(meta)
        if ledger is not None:
            entry["ledger"] = ledger_to_dict(ledger)
        self.files[meta.file_id.hex()] = entry

    def resolve(self, prefix: str | None, dynamic: bool = False) -> str:
        """Full file id from a unique prefix, or the only file when ``prefix`` is omitted."""
        pool = self.dynamic if dynamic else self.files
        matches = [k for k in pool if k.startswith(prefix or "")]
        kind = "dynamic" if dynamic else "static"
        if not matches:
            raise KeyError(f"no {kind} file matching {prefix!r} in {self.path}")
        if len(matches) > 1:
            raise KeyError(f"{len(matches)} {kind} files match {prefix!r}; give a longer id")
        return matches[0]

    def meta(self, file_id: str) -> FileMeta:
        return meta_from_dict(file_id, self.files[file_id], self.field)

    def ledger(self, file_id: str) -> SentinelLedger | None:
        d = self.files[file_id].get("ledger")
        return ledger_from_dict(d, self.keys) if d else None

    def store_ledger(self, file_id: str, ledger: SentinelLedger) -> None:
        self.files[file_id]["ledger"] = ledger_to_dict(ledger)

    def dyn_client(self, file_id: str) -> DynClient:
        return DynClient.from_dict(self.dynamic[file_id])

    def store_dyn(self, client: DynClient) -> None:
        self.dynamic[client.file_id.hex()] = client.to_dict()
