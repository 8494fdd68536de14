import struct

import numpy as np
import pytest

from relalign.embed_store import EmbeddingStore, load_store, unit_normalize, write_store
from relalign.errors import (
    DimensionMismatch,
    DuplicateId,
    MalformedHeader,
    NonFiniteValue,
    UnknownRecord,
    ZeroVector,
)


def test_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    vecs = rng.standard_normal((17, 5)).astype(np.float32)
    ids = [f"rec{i}" for i in range(17)]
    path = tmp_path / "store.emb"
    write_store(path, vecs, ids)
    store = load_store(path, "image")
    assert store.count == 17 and store.dim == 5
    assert store.ids == ids
    assert np.array_equal(store.vectors, vecs)
    assert store.vectors.tobytes() == vecs.tobytes()


def test_small_store_example(tmp_path):
    path = tmp_path / "s.emb"
    write_store(path, np.array([[1, 0], [0, 1], [1, 1]], dtype=np.float32), ["a", "b", "c"])
    store = load_store(path, "text")
    assert store.count == 3
    assert store.modality == "text"


def test_nan_rejected_with_index(tmp_path):
    vecs = np.array([[1, 0], [np.nan, 1], [1, 1]], dtype=np.float32)
    path = tmp_path / "s.emb"
    path.write_bytes(b"EMB1" + struct.pack("<II", 3, 2) + vecs.tobytes())
    (tmp_path / "s.emb.ids").write_text("a\nb\nc\n")
    with pytest.raises(NonFiniteValue) as err:
        load_store(path, "image")
    assert err.value.index == 1


def test_empty_store_ok(tmp_path):
    path = tmp_path / "empty.emb"
    write_store(path, np.empty((0, 4), dtype=np.float32), [])
    store = load_store(path, "image")
    assert store.count == 0 and store.dim == 4


def test_zero_vector_rejected(tmp_path):
    vecs = np.array([[1, 2], [0, 0]], dtype=np.float32)
    path = tmp_path / "s.emb"
    path.write_bytes(b"EMB1" + struct.pack("<II", 2, 2) + vecs.tobytes())
    (tmp_path / "s.emb.ids").write_text("a\nb\n")
    with pytest.raises(ZeroVector) as err:
        load_store(path, "image")
    assert err.value.index == 1


def test_duplicate_id_rejected(tmp_path):
    path = tmp_path / "s.emb"
    write_store(path, np.ones((3, 2), dtype=np.float32), ["a", "b", "a"])
    with pytest.raises(DuplicateId) as err:
        load_store(path, "image")
    assert err.value.index == 2


def test_bad_magic(tmp_path):
    path = tmp_path / "s.emb"
    path.write_bytes(b"NOPE" + struct.pack("<II", 1, 1) + b"\x00\x00\x80\x3f")
    with pytest.raises(MalformedHeader):
        load_store(path, "image")


def test_truncated_payload(tmp_path):
    vecs = np.ones((3, 2), dtype=np.float32)
    path = tmp_path / "s.emb"
    path.write_bytes(b"EMB1" + struct.pack("<II", 3, 2) + vecs.tobytes()[:-8])
    (tmp_path / "s.emb.ids").write_text("a\nb\nc\n")
    with pytest.raises(DimensionMismatch) as err:
        load_store(path, "image")
    assert err.value.index == 2


def test_sidecar_count_mismatch(tmp_path):
    path = tmp_path / "s.emb"
    write_store(path, np.ones((2, 2), dtype=np.float32), ["a", "b"])
    (tmp_path / "s.emb.ids").write_text("a\n")
    with pytest.raises(DimensionMismatch):
        load_store(path, "image")


def test_unknown_record_lookup():
    store = EmbeddingStore("image", np.ones((1, 2), dtype=np.float32), ["a"])
    with pytest.raises(UnknownRecord):
        store.index_of("missing")


def test_normalize_345_triangle():
    store = EmbeddingStore("image", np.array([[3.0, 4.0]], dtype=np.float32), ["a"])
    normed = unit_normalize(store)
    assert np.allclose(normed.vectors[0], [0.6, 0.8], atol=1e-7)


def test_normalize_unit_vector_unchanged():
    store = EmbeddingStore("image", np.array([[1.0, 0.0]], dtype=np.float32), ["a"])
    normed = unit_normalize(store)
    assert np.allclose(normed.vectors[0], [1.0, 0.0], atol=1e-7)


def test_normalize_idempotent_and_unit():
    rng = np.random.default_rng(3)
    store = EmbeddingStore(
        "text", rng.standard_normal((32, 9)).astype(np.float32), [str(i) for i in range(32)]
    )
    once = unit_normalize(store)
    twice = unit_normalize(once)
    norms = np.linalg.norm(once.vectors.astype(np.float64), axis=1)
    assert np.all(np.abs(norms - 1.0) < 1e-6)
    assert np.max(np.abs(once.vectors - twice.vectors)) < 1e-6
    assert once.ids == store.ids


def test_dot_equals_cosine_after_normalize():
    rng = np.random.default_rng(11)
    raw = rng.standard_normal((64, 8))
    store = EmbeddingStore("image", raw.astype(np.float32), [str(i) for i in range(64)])
    normed = unit_normalize(store).matrix64()
    raw32 = store.matrix64()
    for i in range(64):
        for j in range(64):
            dot = float(normed[i] @ normed[j])
            cos = float(
                raw32[i] @ raw32[j] / (np.linalg.norm(raw32[i]) * np.linalg.norm(raw32[j]))
            )
            assert abs(dot - cos) < 1e-6
