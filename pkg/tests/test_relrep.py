import math

import numpy as np
import pytest

from relalign.embed_store import EmbeddingStore
from relalign.errors import AnchorStoreMismatch, DimMismatch, UnknownRecord, ZeroRelRep
from relalign.relrep import (
    AnchorSet,
    RelRep,
    read_relreps,
    relrep_batch,
    relrep_cosine,
    relrep_from_obj,
    relrep_image,
    relrep_text,
    relrep_to_obj,
    write_relreps,
)
from util import paired_stores, random_relrep, store_from, toy_anchors


def dense_topk_oracle(vec, anchor_rows, k):
    """Straight-line reference: cosine per anchor, sort by (value desc, index asc)."""
    sims = []
    for row in anchor_rows:
        sims.append(
            float(np.dot(vec, row)) / (math.sqrt(np.dot(vec, vec)) * math.sqrt(np.dot(row, row)))
        )
    order = sorted(range(len(sims)), key=lambda i: (-sims[i], i))[:k]
    kept = sorted(order)
    return kept, [sims[i] for i in kept]


def axes_setup():
    images = store_from([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [5.0, 0.0]], "image", "i")
    texts = store_from([[0.0, 1.0], [1.0, 0.0], [2.0, 2.0], [0.0, 5.0]], "text", "t")
    anchors = AnchorSet((("i0", "t0"), ("i1", "t1")), source="axes")
    return images, texts, anchors


def test_identical_and_orthogonal_anchor():
    images, texts, anchors = axes_setup()
    rel = relrep_image("i0", images, anchors, k=2)
    assert rel.indices.tolist() == [0, 1]
    assert rel.values[0] == pytest.approx(1.0, abs=1e-12)
    # the 0.0 keeps its slot: k == M means nothing is cut
    assert rel.values[1] == pytest.approx(0.0, abs=1e-12)


def test_tie_at_45_degrees_goes_to_lower_index():
    images, texts, anchors = axes_setup()
    rel = relrep_image("i2", images, anchors, k=1)
    assert rel.indices.tolist() == [0]
    assert rel.values[0] == pytest.approx(0.70711, abs=5e-6)


def test_text_side_mirrors_image_side():
    images, texts, anchors = axes_setup()
    rel = relrep_text("t0", texts, anchors, k=2)
    assert rel.indices.tolist() == [0, 1]
    assert rel.values[0] == pytest.approx(1.0, abs=1e-12)
    assert rel.values[1] == pytest.approx(0.0, abs=1e-12)


def test_text_scale_invariance():
    images, texts, anchors = axes_setup()
    a = relrep_text("t0", texts, anchors, k=2)   # (0, 1)
    b = relrep_text("t3", texts, anchors, k=2)   # 5 * (0, 1)
    assert a.indices.tolist() == b.indices.tolist()
    assert np.allclose(a.values, b.values, atol=1e-6)


def test_random_instance_matches_dense_oracle():
    rng = np.random.default_rng(21)
    images, texts, pool = paired_stores(rng, 20, dim_image=8)
    anchors = toy_anchors(images, texts, 16)
    for rid in images.ids[16:]:
        rel = relrep_image(rid, images, anchors, k=5)
        rows = [images.matrix64()[images.index_of(a)] for a in anchors.image_ids()]
        kept, vals = dense_topk_oracle(images.matrix64()[images.index_of(rid)], rows, 5)
        assert rel.indices.tolist() == kept
        assert np.allclose(rel.values, vals, atol=1e-12)


def test_unknown_record_and_store_mismatch():
    images, texts, anchors = axes_setup()
    with pytest.raises(UnknownRecord):
        relrep_image("nope", images, anchors, k=1)
    with pytest.raises(AnchorStoreMismatch):
        relrep_image("i0", texts, anchors, k=1)  # anchor image ids absent from text store


def test_k_bounds():
    images, texts, anchors = axes_setup()
    with pytest.raises(ValueError):
        relrep_image("i0", images, anchors, k=0)
    with pytest.raises(ValueError):
        relrep_image("i0", images, anchors, k=3)


def test_batch_matches_single_calls_bitwise():
    rng = np.random.default_rng(7)
    images, texts, pool = paired_stores(rng, 120, dim_image=12)
    anchors = toy_anchors(images, texts, 20)
    ids = images.ids
    batch = relrep_batch(ids, images, anchors, k=9)
    for rid, rel in zip(ids, batch):
        single = relrep_image(rid, images, anchors, k=9)
        assert np.array_equal(single.indices, rel.indices)
        assert np.array_equal(single.values, rel.values)


def test_batch_of_one_and_empty():
    rng = np.random.default_rng(8)
    images, texts, pool = paired_stores(rng, 8)
    anchors = toy_anchors(images, texts, 4)
    assert relrep_batch([], images, anchors, k=2) == []
    one = relrep_batch([images.ids[5]], images, anchors, k=2)[0]
    single = relrep_image(images.ids[5], images, anchors, k=2)
    assert np.array_equal(one.values, single.values)


def test_batch_aborts_with_failing_index():
    rng = np.random.default_rng(9)
    images, texts, pool = paired_stores(rng, 8)
    anchors = toy_anchors(images, texts, 4)
    with pytest.raises(UnknownRecord) as err:
        relrep_batch([images.ids[0], "missing", images.ids[1]], images, anchors, k=2)
    assert err.value.index == 1


def test_cosine_self_similarity():
    rng = np.random.default_rng(10)
    rel = random_relrep(rng, 32, 8)
    assert relrep_cosine(rel, rel) == pytest.approx(1.0, abs=1e-9)


def test_cosine_disjoint_supports():
    a = RelRep(8, np.array([0, 1]), np.array([0.5, 0.5]), 2, "image")
    b = RelRep(8, np.array([2, 3]), np.array([0.5, 0.5]), 2, "text")
    assert relrep_cosine(a, b) == 0.0


def test_cosine_hand_value():
    a = RelRep(4, np.array([0, 1]), np.array([0.6, 0.8]), 2, "image")
    b = RelRep(4, np.array([1]), np.array([1.0]), 2, "text")
    # dot = 0.8, |a| = 1, |b| = 1
    assert relrep_cosine(a, b) == pytest.approx(0.8, abs=1e-12)
    dense = float(a.to_dense() @ b.to_dense())
    dense /= np.linalg.norm(a.to_dense()) * np.linalg.norm(b.to_dense())
    assert relrep_cosine(a, b) == pytest.approx(dense, abs=1e-12)


def test_cosine_symmetry():
    rng = np.random.default_rng(12)
    for _ in range(200):
        a = random_relrep(rng, 24, int(rng.integers(1, 24)))
        b = random_relrep(rng, 24, int(rng.integers(1, 24)))
        assert abs(relrep_cosine(a, b) - relrep_cosine(b, a)) < 1e-12


def test_cosine_errors():
    a = RelRep(8, np.array([0]), np.array([1.0]), 1, "image")
    b = RelRep(9, np.array([0]), np.array([1.0]), 1, "text")
    with pytest.raises(DimMismatch):
        relrep_cosine(a, b)
    zero = RelRep(8, np.array([0, 1]), np.array([0.0, 0.0]), 2, "text")
    with pytest.raises(ZeroRelRep):
        relrep_cosine(a, zero)


def test_scale_invariance_structure_and_values():
    rng = np.random.default_rng(13)
    base = rng.standard_normal((12, 6))
    anchors_rows = base[:8]
    anchors = AnchorSet(tuple((f"i{j}", f"t{j}") for j in range(8)), "s")

    def rel_at_scale(c):
        scaled = np.vstack([anchors_rows, base[8:] * c]).astype(np.float32)
        images = EmbeddingStore("image", scaled, [f"i{j}" for j in range(12)])
        return relrep_image("i9", images, anchors, k=4)

    reference = rel_at_scale(1.0)
    for c in (1e-3, 1e3):
        rel = rel_at_scale(c)
        assert rel.indices.tolist() == reference.indices.tolist()
        assert np.allclose(rel.values, reference.values, atol=1e-6)


def test_orthogonal_transform_invariance():
    rng = np.random.default_rng(14)
    images, texts, pool = paired_stores(rng, 40, dim_image=10)
    anchors = toy_anchors(images, texts, 24)
    before = relrep_batch(images.ids, images, anchors, k=10)
    q, _ = np.linalg.qr(rng.standard_normal((10, 10)))
    rotated = EmbeddingStore(
        "image", (images.matrix64() @ q.T).astype(np.float32), images.ids
    )
    after = relrep_batch(rotated.ids, rotated, anchors, k=10)
    for x, y in zip(before, after):
        assert x.indices.tolist() == y.indices.tolist()
        assert np.max(np.abs(x.values - y.values)) < 1e-5


def test_anchor_self_identification():
    rng = np.random.default_rng(15)
    images, texts, pool = paired_stores(rng, 30, dim_image=7)
    anchors = toy_anchors(images, texts, 12)
    for i, rid in enumerate(anchors.image_ids()):
        for k in (1, 5, 12):
            rel = relrep_image(rid, images, anchors, k=k)
            pos = np.searchsorted(rel.indices, i)
            assert pos < len(rel.indices) and rel.indices[pos] == i
            assert rel.values[pos] == pytest.approx(1.0, abs=1e-6)


def test_sparsification_matches_oracle_on_random_instances():
    rng = np.random.default_rng(16)
    for _ in range(100):
        m = int(rng.integers(2, 40))
        d = int(rng.integers(2, 12))
        k = int(rng.integers(1, m + 1))
        images = store_from(rng.standard_normal((m + 3, d)), "image", "i")
        texts = store_from(rng.standard_normal((m, 3)), "text", "t")
        anchors = AnchorSet(tuple((f"i{j}", f"t{j}") for j in range(m)), "s")
        rel = relrep_image(f"i{m}", images, anchors, k=k)
        rows = [images.matrix64()[j] for j in range(m)]
        kept, vals = dense_topk_oracle(images.matrix64()[m], rows, k)
        assert rel.indices.tolist() == kept
        assert np.allclose(rel.values, vals, atol=1e-12)


def test_relrep_jsonl_round_trip(tmp_path):
    rng = np.random.default_rng(17)
    rels = [random_relrep(rng, 16, int(rng.integers(1, 16))) for _ in range(5)]
    ids = [f"r{i}" for i in range(5)]
    path = tmp_path / "rels.jsonl"
    write_relreps(path, ids, rels)
    back_ids, back = read_relreps(path)
    assert back_ids == ids
    for x, y in zip(rels, back):
        assert x.dim == y.dim and x.k == y.k and x.modality == y.modality
        assert np.array_equal(x.indices, y.indices)
        assert np.array_equal(x.values, y.values)
    obj = relrep_to_obj("z", rels[0])
    rid, round_trip = relrep_from_obj(obj)
    assert rid == "z" and np.array_equal(round_trip.values, rels[0].values)
    assert all(np.all(np.diff(r.indices) > 0) for r in back)
