"""Misbehaving servers and the experiments that measure how often audits catch them.

A behaviour is applied to a copy of a store and yields a prover with the same
``prove``/``fetch``/``retrieve`` surface as an honest one. Lost blocks are
answered with zeros, so a cheating server always responds; it just responds
wrongly.

Experiments are reproducible: trial ``t`` of a run seeded with ``s`` draws
everything from ``random.Random(f"{s}:{t}")``.
"""

from __future__ import annotations

import copy
import json
import math
import random
import time
from dataclasses import asdict, dataclass, field as dc_field
from typing import Iterable, Union

from porkit.algebra import PrimeField
from porkit.dynamic import DynServer, dyn_init
from porkit.erasure import CodeParams, block_bytes
from porkit.por.container import StoredFile
from porkit.por.extract import ExtractionError, ExtractionPolicy, extract, extract_sentinel
from porkit.por.schemes import (SCHEME_NAMES, Scheme, TaggedFile, challenge_for, keygen, por_setup, por_verify,
                                scheme_name)
from porkit.por.sentinel import sentinel_challenge, sentinel_check, sentinel_meta, sentinel_setup


@dataclass(frozen=True)
class Honest:
    pass


@dataclass(frozen=True)
class EraseFraction:
    """Drop ``floor(delta * n)`` blocks.

    ``targeted`` packs the loss into as few stripes as possible; ``per_stripe``
    drops ``floor(delta * width)`` blocks from every stripe instead.
    """

    delta: float
    targeted: bool = False
    per_stripe: bool = False

    def __post_init__(self):
        _check_delta(self.delta)


@dataclass(frozen=True)
class CorruptFraction:
    delta: float

    def __post_init__(self):
        _check_delta(self.delta)


@dataclass(frozen=True)
class Replay:
    """Answer the first ``window`` challenges honestly, then replay those proofs in turn."""

    window: int = 1

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("replay window must be >= 1")


Behavior = Union[Honest, EraseFraction, CorruptFraction, Replay]


def _check_delta(delta: float) -> None:
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"delta={delta} outside [0, 1]")


def parse_behavior(text: str) -> Behavior:
    """``honest``, ``erase:0.1``, ``erase-targeted:0.1``, ``corrupt:0.1`` or ``replay:3``."""
    kind, _, arg = text.partition(":")
    if kind == "honest":
        return Honest()
    if kind == "erase":
        return EraseFraction(float(arg))
    if kind == "erase-targeted":
        return EraseFraction(float(arg), targeted=True)
    if kind == "erase-stripe":
        return EraseFraction(float(arg), per_stripe=True)
    if kind == "corrupt":
        return CorruptFraction(float(arg))
    if kind == "replay":
        return Replay(int(arg or 1))
    raise ValueError(f"unknown behaviour {text!r}")


# Static stores ----------------------------------------------------------------

def as_stored(store: TaggedFile | StoredFile) -> StoredFile:
    """An independent server-side copy of ``store``."""
    if isinstance(store, StoredFile):
        return StoredFile(store.scheme, store.field, list(store.blocks), list(store.tags),
                          store.length, store.f, store.width)
    width = len(store.blocks) if store.scheme == Scheme.SENTINEL else store.code.n
    return StoredFile(store.scheme, store.field, list(store.blocks), list(store.tags),
                      store.length, store.code.f, width)


def pick_positions(count: int, n: int, rng: random.Random, width: int | None = None,
                   targeted: bool = False) -> list[int]:
    """0-based positions to damage. ``targeted`` fills whole stripes in random order."""
    if not targeted or not width:
        return rng.sample(range(n), count)
    stripes = list(range(n // width))
    rng.shuffle(stripes)
    out: list[int] = []
    for s in stripes:
        out.extend(range(s * width, (s + 1) * width))
        if len(out) >= count:
            break
    return out[:count]


def erase_positions(store: StoredFile, positions: Iterable[int]) -> None:
    for k in positions:
        store.blocks[k] = None
        if k < len(store.tags):
            store.tags[k] = None


def corrupt_positions(store: StoredFile, positions: Iterable[int], rng: random.Random) -> None:
    p = store.field.p
    for k in positions:
        old = store.blocks[k]
        new = rng.randrange(p)
        while new == old:
            new = rng.randrange(p)
        store.blocks[k] = new


class ReplayProver:
    def __init__(self, inner, window: int):
        self.inner = inner
        self.window = window
        self.cache: list = []
        self.calls = 0

    def __getattr__(self, name):
        return getattr(self.inner, name)

    def prove(self, challenge):
        self.calls += 1
        if len(self.cache) < self.window:
            proof = self.inner.prove(challenge)
            self.cache.append(proof)
            return proof
        return self.cache[(self.calls - 1) % self.window]


def apply_behavior(store, behavior: Behavior, rng: random.Random):
    """A prover over a damaged copy of ``store``; the original is untouched."""
    if isinstance(store, DynServer):
        return apply_dynamic_behavior(store, behavior, rng)
    server = as_stored(store)
    n = len(server.blocks)
    if isinstance(behavior, Honest):
        return server
    if isinstance(behavior, EraseFraction):
        if behavior.per_stripe:
            per = math.floor(behavior.delta * server.width)
            positions = [s * server.width + j for s in range(n // server.width)
                         for j in rng.sample(range(server.width), per)]
        else:
            positions = pick_positions(math.floor(behavior.delta * n), n, rng, server.width,
                                       behavior.targeted)
        erase_positions(server, positions)
        return server
    if isinstance(behavior, CorruptFraction):
        corrupt_positions(server, rng.sample(range(n), math.floor(behavior.delta * n)), rng)
        return server
    if isinstance(behavior, Replay):
        return ReplayProver(server, behavior.window)
    raise TypeError(f"unknown behaviour {behavior!r}")


# Dynamic stores ---------------------------------------------------------------

def _random_symbol(field: PrimeField, width: int, rng: random.Random) -> tuple[int, ...]:
    return tuple(rng.randrange(field.p) for _ in range(width))


def apply_dynamic_behavior(server: DynServer, behavior: Behavior, rng: random.Random) -> DynServer:
    """Damage C and every full H level by the same fraction. U is left alone."""
    out = copy.deepcopy(server)
    if isinstance(behavior, Honest):
        return out
    if isinstance(behavior, Replay):
        raise ValueError("replay has no meaning for dynamic audits, which return raw symbols")
    count_c = math.floor(behavior.delta * len(out.c))
    positions_c = rng.sample(range(len(out.c)), count_c)
    levels = [(lvl, rng.sample(range(len(data)), math.floor(behavior.delta * len(data))))
              for lvl, data in enumerate(out.h) if data is not None]
    if isinstance(behavior, EraseFraction):
        out.erase_c(positions_c)
        for lvl, pos in levels:
            out.erase_level(lvl, pos)
    elif isinstance(behavior, CorruptFraction):
        for k in positions_c:
            out.c[k] = _random_symbol(out.field, out.beta, rng)
        for lvl, pos in levels:
            for k in pos:
                out.h[lvl][k] = _random_symbol(out.field, out.beta + 2, rng)
    return out


# Experiments ------------------------------------------------------------------

@dataclass
class ExperimentReport:
    scheme: str
    delta: float
    l: int
    trials: int
    detections: int
    rate: float
    reference: float
    stderr: float
    seconds: float
    behavior: str = ""

    def __post_init__(self):
        if self.detections > self.trials:
            raise ValueError("more detections than trials")

    @property
    def z(self) -> float:
        """Distance from the reference in standard errors (0 when both are degenerate)."""
        if self.stderr == 0:
            return 0.0 if self.rate == self.reference else math.inf
        return (self.rate - self.reference) / self.stderr

    def within(self, sigmas: float = 3.0) -> bool:
        if self.stderr == 0:
            return abs(self.rate - self.reference) <= 1.0 / self.trials
        return abs(self.z) <= sigmas

    def to_json(self) -> str:
        return json.dumps({**asdict(self), "z": None if math.isinf(self.z) else self.z})


def reference_rate(delta: float, l: int) -> float:
    return 1.0 - (1.0 - delta) ** l


def _stderr(ref: float, trials: int) -> float:
    return math.sqrt(ref * (1 - ref) / trials)


def trial_rng(seed: int, trial: int) -> random.Random:
    return random.Random(f"{seed}:{trial}")


def default_code(field: PrimeField) -> CodeParams:
    return CodeParams(128, 64, field)


def data_for_blocks(blocks: int, code: CodeParams, rng: random.Random) -> bytes:
    """Random bytes whose encoding fills exactly ``blocks`` stored blocks."""
    stripes = max(1, blocks // code.n)
    return rng.randbytes(stripes * code.f * block_bytes(code.field))


def detection_experiment(scheme: Scheme | str, delta: float, l: int, trials: int, seed: int = 0,
                         behavior: Behavior | None = None, blocks: int = 3200,
                         code: CodeParams | None = None, sentinels: int | None = None,
                         field: PrimeField | None = None) -> ExperimentReport:
    """Run ``trials`` damage-then-audit cycles and count failed audits.

    Tag-based schemes reuse one setup and draw fresh damage and a fresh
    challenge per trial. The sentinel scheme sets up from scratch every trial,
    because audits consume its key material.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    scheme = resolve_scheme(scheme)
    field = field or PrimeField()
    code = code or default_code(field)
    behavior = behavior if behavior is not None else CorruptFraction(delta)
    setup_rng = random.Random(f"{seed}:setup")
    start = time.perf_counter()
    detections = 0
    if scheme == Scheme.SENTINEL:
        s = sentinels or max(l, 100)
        for t in range(trials):
            rng = trial_rng(seed, t)
            keys = keygen(scheme, field, rng)
            tf, ledger = sentinel_setup(data_for_blocks(blocks, code, rng), keys, s, code)
            prover = apply_behavior(tf, behavior, rng)
            if isinstance(prover, ReplayProver):
                warm, chosen = sentinel_challenge(ledger, l, rng)
                sentinel_check(ledger, chosen, prover.prove(warm))
            ch, chosen = sentinel_challenge(ledger, l, rng, tf.file_id)
            detections += not sentinel_check(ledger, chosen, prover.prove(ch))
    else:
        keys = keygen(scheme, field, setup_rng)
        tf = por_setup(data_for_blocks(blocks, code, setup_rng), keys, code)
        meta = tf.meta
        for t in range(trials):
            rng = trial_rng(seed, t)
            prover = apply_behavior(tf, behavior, rng)
            if isinstance(prover, ReplayProver):
                prover.prove(challenge_for(meta, l, rng))
            ch = challenge_for(meta, l, rng)
            detections += not por_verify(keys, ch, prover.prove(ch))
    ref = 1.0 if isinstance(behavior, Replay) else reference_rate(delta, l)
    return ExperimentReport(scheme_name(scheme), delta, l, trials, detections, detections / trials,
                            ref, _stderr(ref, trials), time.perf_counter() - start,
                            behavior=type(behavior).__name__)


def resolve_scheme(scheme: Scheme | str) -> Scheme:
    if isinstance(scheme, str):
        try:
            return SCHEME_NAMES[scheme]
        except KeyError:
            raise ValueError(f"unknown scheme {scheme!r}") from None
    return Scheme(scheme)


def dynamic_detection_experiment(delta: float, samples: int, trials: int, n: int = 250,
                                 seed: int = 0, behavior: Behavior | None = None) -> ExperimentReport:
    """Erase a fraction of C (and of any full H level) and run one dynamic audit per trial."""
    setup_rng = random.Random(f"{seed}:setup")
    field = PrimeField()
    client, server = dyn_init(setup_rng.randbytes(n * block_bytes(field)), n, field=field)
    behavior = behavior if behavior is not None else EraseFraction(delta)
    start = time.perf_counter()
    detections = 0
    for t in range(trials):
        rng = trial_rng(seed, t)
        damaged = apply_dynamic_behavior(server, behavior, rng)
        detections += not client.audit(damaged, samples, rng)
    ref = reference_rate(delta, samples)
    return ExperimentReport("dynamic", delta, samples, trials, detections, detections / trials, ref,
                            _stderr(ref, trials), time.perf_counter() - start,
                            behavior=type(behavior).__name__)


@dataclass
class ExtractionSummary:
    scheme: str
    delta: float
    rate: float
    trials: int
    successes: int
    seconds: float
    failures: list[str] = dc_field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def extraction_experiment(delta: float, trials: int, code: CodeParams | None = None,
                          scheme: Scheme | str = Scheme.SW_PRIVATE, size: int = 1 << 16,
                          seed: int = 0, behavior: Behavior | None = None,
                          policy: ExtractionPolicy | None = None) -> ExtractionSummary:
    """Set up once, then per trial erase, extract and compare byte for byte."""
    scheme = resolve_scheme(scheme)
    field = code.field if code else PrimeField()
    code = code or default_code(field)
    setup_rng = random.Random(f"{seed}:setup")
    data = setup_rng.randbytes(size)
    keys = keygen(scheme, field, setup_rng)
    if scheme == Scheme.SENTINEL:
        tf, ledger = sentinel_setup(data, keys, 100, code)
        meta = sentinel_meta(tf, ledger)
    else:
        tf = por_setup(data, keys, code)
        meta = tf.meta
    behavior = behavior if behavior is not None else EraseFraction(delta)
    start = time.perf_counter()
    summary = ExtractionSummary(scheme_name(scheme), delta, code.rate, trials, 0, 0.0)
    for t in range(trials):
        rng = trial_rng(seed, t)
        prover = apply_behavior(tf, behavior, rng)
        try:
            if scheme == Scheme.SENTINEL:
                out = extract_sentinel(prover, ledger, meta)
            else:
                out = extract(prover, keys, meta, policy, rng)
        except ExtractionError as exc:
            summary.failures.append(str(exc).splitlines()[0])
            continue
        if out == data:
            summary.successes += 1
        else:
            summary.failures.append("recovered bytes differ")
    summary.seconds = time.perf_counter() - start
    return summary


def run_grid(schemes: Iterable[str], deltas: Iterable[float], ls: Iterable[int], trials: int,
             seed: int = 0, **kwargs) -> list[ExperimentReport]:
    reports = []
    for scheme in schemes:
        for delta in deltas:
            for l in ls:
                reports.append(detection_experiment(scheme, delta, l, trials, seed, **kwargs))
    return reports


def format_table(reports: list[ExperimentReport]) -> str:
    header = f"{'scheme':<11} {'delta':>6} {'l':>4} {'trials':>6} {'detected':>8} {'rate':>7} {'ref':>7} {'z':>6} {'sec':>6}"
    lines = [header, "-" * len(header)]
    for r in reports:
        z = "inf" if math.isinf(r.z) else f"{r.z:+.2f}"
        lines.append(f"{r.scheme:<11} {r.delta:>6.3f} {r.l:>4} {r.trials:>6} {r.detections:>8} "
                     f"{r.rate:>7.4f} {r.reference:>7.4f} {z:>6} {r.seconds:>6.1f}")
    return "\n".join(lines)
