"""Versioned single-slot snapshot store: one writer, many non-blocking readers.

The feedback loop publishes preference posteriors here and the BO loop reads
them whenever it likes. Readers never take a lock: the latest snapshot lives
in a single slot reference that is swapped atomically (one attribute store),
so a read sees either the previous complete snapshot or the new complete
snapshot, never a mix. The writer lock only serializes concurrent publishers.
"""

from __future__ import annotations

import struct
import threading
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from steerbo.types import _frozen_array


class SnapshotError(ValueError):
    """Raised when a snapshot payload violates its invariants."""


@dataclass(frozen=True)
class PosteriorSnapshot:
    """Immutable publication of a fitted Gaussian parameter posterior.

    ``covariance_factor`` is the lower-triangular Cholesky factor of the
    posterior covariance; a strictly positive diagonal certifies positive
    definiteness. ``version`` is 0 until the store assigns one.
    """

    map_parameters: np.ndarray
    covariance_factor: np.ndarray
    architecture: tuple[int, ...]
    training_set_size: int
    version: int = 0
    input_center: float = 0.0
    input_halfwidth: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "map_parameters", _frozen_array(self.map_parameters))
        object.__setattr__(
            self, "covariance_factor", _frozen_array(self.covariance_factor, ndim=2)
        )
        object.__setattr__(self, "architecture", tuple(int(w) for w in self.architecture))


def validate_posterior_payload(snap: PosteriorSnapshot) -> None:
    """Check every PosteriorSnapshot invariant except the version."""
    p = snap.map_parameters.shape[0]
    if snap.covariance_factor.shape != (p, p):
        raise SnapshotError(
            f"covariance factor shape {snap.covariance_factor.shape} does not "
            f"match {p} parameters"
        )
    diag = np.diag(snap.covariance_factor)
    if not np.all(np.isfinite(snap.map_parameters)):
        raise SnapshotError("MAP parameters contain non-finite values")
    if not np.all(np.isfinite(snap.covariance_factor)):
        raise SnapshotError("covariance factor contains non-finite values")
    if not np.all(diag > 0.0):
        raise SnapshotError("covariance factor must have a strictly positive diagonal")
    if snap.training_set_size < 0:
        raise SnapshotError("training set size must be non-negative")


class SnapshotStore:
    """Latest-only versioned store, safe for one writer and many readers.

    ``stamp`` (optional) rewrites the payload with its assigned version so
    readers see a self-describing snapshot; ``validator`` (optional) rejects
    bad payloads before they become visible.
    """

    def __init__(
        self,
        validator: Optional[Callable] = None,
        stamp: Optional[Callable] = None,
    ):
        self._validator = validator
        self._stamp = stamp
        self._write_lock = threading.Lock()
        self._slot: Optional[tuple[int, object]] = None

    def publish(self, payload) -> int:
        """Validate, version, and expose a payload. Returns the new version."""
        if self._validator is not None:
            self._validator(payload)
        with self._write_lock:
            version = self._slot[0] + 1 if self._slot is not None else 1
            if self._stamp is not None:
                payload = self._stamp(payload, version)
            # Single reference assignment: readers see old or new, never a mix.
            self._slot = (version, payload)
            return version

    def latest(self) -> Optional[tuple[int, object]]:
        """Most recent (version, payload), or None. Never blocks a writer."""
        return self._slot

    @property
    def version(self) -> int:
        slot = self._slot
        return slot[0] if slot is not None else 0


def posterior_store() -> SnapshotStore:
    """Store configured for PosteriorSnapshot payloads."""
    return SnapshotStore(
        validator=validate_posterior_payload,
        stamp=lambda snap, v: replace(snap, version=v),
    )


_MAGIC = b"STBOSNAP"


def snapshot_to_bytes(snap: PosteriorSnapshot) -> bytes:
    """Serialize a snapshot.

    Layout (all integers uint32 little-endian, floats float64 little-endian,
    matrices row-major): magic, version, n_layers, layer sizes, training set
    size, parameter count P, input center, input halfwidth, P MAP
    parameters, P*P covariance factor entries.
    """
    p = snap.map_parameters.shape[0]
    head = struct.pack(
        f"<8sII{len(snap.architecture)}IIIdd",
        _MAGIC,
        snap.version,
        len(snap.architecture),
        *snap.architecture,
        snap.training_set_size,
        p,
        snap.input_center,
        snap.input_halfwidth,
    )
    body = snap.map_parameters.astype("<f8").tobytes() + np.ascontiguousarray(
        snap.covariance_factor, dtype="<f8"
    ).tobytes()
    return head + body


def snapshot_from_bytes(raw: bytes) -> PosteriorSnapshot:
    magic, version, n_layers = struct.unpack_from("<8sII", raw, 0)
    if magic != _MAGIC:
        raise SnapshotError("not a serialized posterior snapshot")
    off = 16
    arch = struct.unpack_from(f"<{n_layers}I", raw, off)
    off += 4 * n_layers
    train_size, p, center, halfwidth = struct.unpack_from("<IIdd", raw, off)
    off += 8 + 16
    theta = np.frombuffer(raw, dtype="<f8", count=p, offset=off).copy()
    off += 8 * p
    factor = (
        np.frombuffer(raw, dtype="<f8", count=p * p, offset=off).reshape(p, p).copy()
    )
    return PosteriorSnapshot(
        map_parameters=theta,
        covariance_factor=factor,
        architecture=arch,
        training_set_size=train_size,
        version=version,
        input_center=center,
        input_halfwidth=halfwidth,
    )
