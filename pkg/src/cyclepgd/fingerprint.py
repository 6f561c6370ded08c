"""Perturbation fingerprints and the visited-set behind cycle detection.

Two fingerprint modes:

* ``exact`` — a 128-bit blake2b digest over the little-endian byte encoding
  of the float64 values. Equal bit patterns always collide; anything else
  collides with cryptographic improbability.
* ``projected`` — the scalar h . delta (h a fixed seeded Gaussian vector)
  decomposed with frexp into a (mantissa, exponent) pair. Cheap, but two
  different perturbations can land on the same scalar, so the visited set
  confirms projected matches against exact digests by default. With that
  confirmation the revisit verdict is exactly as trustworthy as exact mode.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .rng import SplitMix64
from .validation import check_vector

EXACT = "exact"
PROJECTED = "projected"
FINGERPRINT_MODES = (EXACT, PROJECTED)


@dataclass(frozen=True)
class Fingerprint:
    mode: str
    value: object  # bytes (exact) or (mantissa, exponent) tuple (projected)

    def __post_init__(self):
        if self.mode not in FINGERPRINT_MODES:
            raise ValueError(f"unknown fingerprint mode {self.mode!r}")


@dataclass(frozen=True)
class ProjectionKey:
    """Seeded Gaussian projection vector; reproducible bit-exactly per seed."""

    h: np.ndarray
    seed: int

    @classmethod
    def from_seed(cls, seed: int, dim: int) -> "ProjectionKey":
        if dim < 1:
            raise ValueError("dim must be >= 1")
        rng = SplitMix64(seed)
        std = dim ** -0.25  # variance 1/sqrt(d)
        h = np.array(rng.normals(dim), dtype=np.float64) * std
        return cls(h=h, seed=seed)

    @property
    def dim(self) -> int:
        return int(self.h.shape[0])


def vector_bytes(delta: np.ndarray) -> bytes:
    """Canonical encoding: each float64 little-endian, in coordinate order."""
    return np.ascontiguousarray(delta, dtype="<f8").tobytes()


def fingerprint_exact(delta: np.ndarray) -> Fingerprint:
    delta = check_vector(delta, name="delta")
    digest = hashlib.blake2b(vector_bytes(delta), digest_size=16).digest()
    return Fingerprint(EXACT, digest)


def fingerprint_projected(delta: np.ndarray, key: ProjectionKey) -> Fingerprint:
    delta = check_vector(delta, dim=key.dim, name="delta")
    s = float(np.dot(key.h, delta))
    mantissa, exponent = math.frexp(s)  # frexp(0.0) == (0.0, 0)
    return Fingerprint(PROJECTED, (mantissa, exponent))


@dataclass
class VisitedSet:
    """Set of perturbations already seen during one attack run.

    ``insert`` reports the iteration at which an equal perturbation was
    first stored, or None if this one is new (and stores it). In projected
    mode with ``confirm_on_match`` (the default) a projected-pair match
    counts as a revisit only if the exact digests also agree, so a chance
    projection collision can never terminate an attack early.
    """

    mode: str = PROJECTED
    key: ProjectionKey | None = None
    confirm_on_match: bool = True
    store_vectors: bool = False  # test-oracle aid: keep full copies

    _buckets: dict = field(default_factory=dict, init=False, repr=False)
    count: int = field(default=0, init=False)
    vectors: list = field(default_factory=list, init=False, repr=False)

    def __post_init__(self):
        if self.mode not in FINGERPRINT_MODES:
            raise ValueError(f"unknown fingerprint mode {self.mode!r}")
        if self.mode == PROJECTED and self.key is None:
            raise ValueError("projected mode requires a ProjectionKey")

    def fingerprint(self, delta: np.ndarray) -> Fingerprint:
        if self.mode == EXACT:
            return fingerprint_exact(delta)
        return fingerprint_projected(delta, self.key)

    def insert(self, fp: Fingerprint, delta: np.ndarray, iteration: int = 0) -> int | None:
        """Return the first-visit iteration for a revisit, else store and
        return None. ``fp`` must have been computed under this set's mode."""
        if fp.mode != self.mode:
            raise ValueError(f"fingerprint mode {fp.mode!r} does not match set mode {self.mode!r}")
        return self._insert_value(fp.value, delta, iteration)

    def record(self, delta: np.ndarray, iteration: int) -> int | None:
        """Fingerprint-and-insert fast path for the attack loop; the caller
        guarantees a finite float64 vector of the right dim."""
        if self.mode == EXACT:
            value = hashlib.blake2b(vector_bytes(delta), digest_size=16).digest()
        else:
            value = math.frexp(float(np.dot(self.key.h, delta)))
        return self._insert_value(value, delta, iteration)

    def _insert_value(self, value, delta: np.ndarray, iteration: int) -> int | None:
        if self.mode == EXACT:
            entry_digest = value
        else:
            # Side-store of exact digests: one digest per insert buys exact
            # confirmation of projected matches.
            entry_digest = (
                hashlib.blake2b(vector_bytes(delta), digest_size=16).digest()
                if self.confirm_on_match
                else None
            )
        bucket = self._buckets.get(value)
        if bucket is not None:
            for stored_digest, stored_iter in bucket:
                if stored_digest is None or stored_digest == entry_digest:
                    return stored_iter
            bucket.append((entry_digest, iteration))
        else:
            self._buckets[value] = [(entry_digest, iteration)]
        self.count += 1
        if self.store_vectors:
            self.vectors.append(np.array(delta, dtype=np.float64, copy=True))
        return None

    def seen(self, fp: Fingerprint, delta: np.ndarray) -> bool:
        """Non-mutating membership test with the same confirmation rules."""
        if fp.mode != self.mode:
            raise ValueError(f"fingerprint mode {fp.mode!r} does not match set mode {self.mode!r}")
        bucket = self._buckets.get(fp.value)
        if bucket is None:
            return False
        if self.mode == EXACT or not self.confirm_on_match:
            return True
        entry_digest = fingerprint_exact(delta).value
        return any(d == entry_digest for d, _ in bucket)
