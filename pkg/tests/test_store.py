"""Snapshot store: versioning, validation, atomicity under contention."""

import threading

import numpy as np
import pytest

from steerbo.store import (
    PosteriorSnapshot,
    SnapshotError,
    posterior_store,
    snapshot_from_bytes,
    snapshot_to_bytes,
)


def make_payload(fill=1.0, p=4):
    return PosteriorSnapshot(
        map_parameters=np.full(p, fill),
        covariance_factor=np.eye(p) * abs(fill),
        architecture=(2, 2, 1),
        training_set_size=3,
    )


def test_first_publish_gets_version_one():
    store = posterior_store()
    assert store.latest() is None
    assert store.publish(make_payload()) == 1


def test_versions_increase_without_gaps():
    store = posterior_store()
    versions = [store.publish(make_payload(float(i + 1))) for i in range(25)]
    assert versions == list(range(1, 26))


def test_latest_returns_stamped_snapshot():
    store = posterior_store()
    store.publish(make_payload(2.0))
    version, snap = store.latest()
    assert version == 1
    assert snap.version == 1
    assert np.all(snap.map_parameters == 2.0)


def test_rejects_nonpositive_covariance_diagonal():
    store = posterior_store()
    bad = PosteriorSnapshot(
        map_parameters=np.ones(3),
        covariance_factor=np.diag([1.0, 0.0, 1.0]),
        architecture=(1, 1),
        training_set_size=1,
    )
    with pytest.raises(SnapshotError, match="positive diagonal"):
        store.publish(bad)
    assert store.latest() is None


def test_rejects_shape_mismatch():
    bad = PosteriorSnapshot(
        map_parameters=np.ones(3),
        covariance_factor=np.eye(2),
        architecture=(1, 1),
        training_set_size=1,
    )
    with pytest.raises(SnapshotError, match="shape"):
        posterior_store().publish(bad)


def test_snapshots_are_immutable():
    store = posterior_store()
    store.publish(make_payload(3.0))
    _, snap = store.latest()
    with pytest.raises(ValueError):
        snap.map_parameters[0] = -1.0
    _, again = store.latest()
    assert np.array_equal(again.map_parameters, snap.map_parameters)


def test_concurrent_reads_see_only_complete_snapshots():
    """Reader/writer stress: every read is internally consistent.

    The writer publishes payloads whose parameters all equal their version;
    a torn read would mix fills or disagree with the stamped version.
    """
    store = posterior_store()
    n_ops = 100_000
    errors = []
    done = threading.Event()

    def writer():
        for i in range(1, n_ops + 1):
            store.publish(make_payload(float(i)))
        done.set()

    def reader():
        while not done.is_set():
            slot = store.latest()
            if slot is None:
                continue
            version, snap = slot
            params = snap.map_parameters
            if snap.version != version:
                errors.append("version mismatch")
                return
            if not np.all(params == params[0]):
                errors.append("torn parameter vector")
                return
            if params[0] != float(version):
                errors.append("payload does not match its version")
                return

    threads = [threading.Thread(target=writer)] + [
        threading.Thread(target=reader) for _ in range(3)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout=120)
    assert not errors
    assert store.version == n_ops


def test_serialization_round_trip():
    snap = PosteriorSnapshot(
        map_parameters=np.array([0.5, -1.5, 2.25]),
        covariance_factor=np.tril(np.arange(1.0, 10.0).reshape(3, 3)) + np.eye(3),
        architecture=(2, 1),
        training_set_size=7,
        version=4,
        input_center=1.5,
        input_halfwidth=2.0,
    )
    back = snapshot_from_bytes(snapshot_to_bytes(snap))
    assert back.version == 4
    assert back.architecture == (2, 1)
    assert back.training_set_size == 7
    assert back.input_center == 1.5
    assert back.input_halfwidth == 2.0
    assert np.array_equal(back.map_parameters, snap.map_parameters)
    assert np.array_equal(back.covariance_factor, snap.covariance_factor)


def test_bad_magic_rejected():
    with pytest.raises(SnapshotError):
        snapshot_from_bytes(b"NOTASNAP" + b"\x00" * 64)
