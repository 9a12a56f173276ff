"""Recover the original file from a possibly dishonest prover.

The extractor reads every stored block with its tag, throws away the ones it
cannot authenticate, and erasure-decodes each stripe from what is left. JK
blocks are checked one by one. SW blocks are checked in batches through the
scheme's own aggregate equation under fresh random coefficients; a failing
batch is split in half until the bad blocks are isolated.
"""

from __future__ import annotations

import math
import random
import secrets
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Protocol, Sequence

from porkit.erasure import Codeword, Unrecoverable, decode_stripes
from porkit.por.schemes import (Challenge, FileMeta, JkKeys, JkPublicKey, Scheme, SwPrivateKeys,
                                SwPublicKey, por_verify, prove_with, public_keys)


class BlockSource(Protocol):
    def retrieve(self, indices: Sequence[int]) -> list[tuple]: ...


@dataclass
class ExtractionPolicy:
    batch_size: int = 256
    max_retries: int = 1
    rho: float | None = None
    workers: int = 1


@dataclass
class ExtractionReport:
    stripes: int
    deficient: list[tuple[int, int, int]] = dc_field(default_factory=list)
    invalid_blocks: int = 0
    checks: int = 0

    def describe(self) -> str:
        lines = [f"{len(self.deficient)} of {self.stripes} stripes unrecoverable"]
        lines += [f"  stripe {s}: {valid} valid symbols, {need} needed" for s, valid, need in self.deficient]
        return "\n".join(lines)


class ExtractionError(RuntimeError):
    def __init__(self, report: ExtractionReport):
        self.report = report
        super().__init__(report.describe())


class _Checker:
    def __init__(self, keys, rng: random.Random):
        self.keys = public_keys(keys)
        self.rng = rng
        self.checks = 0

    def valid(self, items: list[tuple[int, int, object]]) -> list[int]:
        """Indices among ``(i, block, tag)`` items that authenticate."""
        keys = self.keys
        present = [it for it in items if it[1] is not None and it[2] is not None]
        if isinstance(keys, (JkKeys, JkPublicKey)):
            self.checks += len(present)
            return [i for i, b, t in present if keys.check(i, b, t)]
        if isinstance(keys, (SwPrivateKeys, SwPublicKey)):
            return self._bisect(present)
        raise TypeError(f"no block check for {type(keys).__name__}")

    def _batch_ok(self, items) -> bool:
        self.checks += 1
        keys = self.keys
        field = keys.field
        if any(not 0 <= b < field.p for _, b, _ in items):
            return False
        coeffs = tuple(self.rng.randrange(1, field.p) for _ in items)
        ch = Challenge(tuple(i for i, _, _ in items), coeffs)
        lookup = {i: (b, t) for i, b, t in items}
        scheme = Scheme.SW_PRIVATE if isinstance(keys, SwPrivateKeys) else Scheme.SW_PUBLIC
        group = getattr(keys, "group", None)
        if scheme == Scheme.SW_PUBLIC and not all(group.contains(t) for _, _, t in items):
            return False
        if scheme == Scheme.SW_PRIVATE and not all(isinstance(t, int) for _, _, t in items):
            return False
        proof = prove_with(scheme, field, group, lookup.__getitem__, ch)
        return por_verify(keys, ch, proof)

    def _bisect(self, items) -> list[int]:
        if not items:
            return []
        if self._batch_ok(items):
            return [i for i, _, _ in items]
        if len(items) == 1:
            return []
        mid = len(items) // 2
        return self._bisect(items[:mid]) + self._bisect(items[mid:])


def extract(prover: BlockSource, keys, meta: FileMeta, policy: ExtractionPolicy | None = None,
            rng: random.Random | None = None) -> bytes:
    """Return the original bytes or raise :class:`ExtractionError`."""
    policy = policy or ExtractionPolicy()
    code = meta.code
    if meta.scheme == Scheme.SENTINEL:
        raise ValueError("use extract_sentinel for sentinel stores")
    rho = policy.rho if policy.rho is not None else code.f / code.n
    if rho < code.f / code.n:
        raise ValueError(f"rho={rho} is below the code rate {code.f}/{code.n}")
    needed = max(code.f, math.ceil(rho * code.n - 1e-9))
    checker = _Checker(keys, rng or secrets.SystemRandom())

    n = meta.n
    valid: dict[int, int] = {}
    pending = list(range(1, n + 1))
    for _ in range(1 + max(0, policy.max_retries)):
        if not pending:
            break
        batches = [pending[k:k + policy.batch_size] for k in range(0, len(pending), policy.batch_size)]

        def run(batch):
            return batch, prover.retrieve(batch)

        if policy.workers > 1:
            with ThreadPoolExecutor(policy.workers) as pool:
                answered = list(pool.map(run, batches))
        else:
            answered = [run(b) for b in batches]
        for batch, answers in answered:
            items = [(i, b, t) for i, (b, t) in zip(batch, answers)]
            good = set(checker.valid(items))
            for i, b, _ in items:
                if i in good:
                    valid[i] = b
        pending = [i for i in range(1, n + 1) if i not in valid]

    report = ExtractionReport(stripes=meta.stripes, invalid_blocks=n - len(valid), checks=checker.checks)
    codewords = []
    for s in range(meta.stripes):
        base = s * code.n
        symbols = [valid.get(base + j + 1) for j in range(code.n)]
        cw = Codeword.from_optional(symbols)
        if cw.present_count < needed:
            report.deficient.append((s, cw.present_count, needed))
        codewords.append(cw)
    if report.deficient:
        raise ExtractionError(report)
    try:
        return decode_stripes(codewords, code, meta.length)
    except Unrecoverable as exc:
        raise ExtractionError(report) from exc


def extract_sentinel(prover: BlockSource, ledger, meta: FileMeta) -> bytes:
    """Sentinel stores carry no per-block tags; only missing blocks become erasures."""
    from porkit.por.sentinel import sentinel_extract_blocks

    code = meta.code
    answers = prover.retrieve(list(range(1, ledger.total + 1)))
    blocks = sentinel_extract_blocks(ledger, [b for b, _ in answers])
    report = ExtractionReport(stripes=meta.stripes, invalid_blocks=sum(b is None for b in blocks))
    codewords = []
    for s in range(meta.stripes):
        cw = Codeword.from_optional(blocks[s * code.n:(s + 1) * code.n])
        if cw.present_count < code.f:
            report.deficient.append((s, cw.present_count, code.f))
        codewords.append(cw)
    if report.deficient:
        raise ExtractionError(report)
    return decode_stripes(codewords, code, meta.length)
