import numpy as np
import pytest

from protodet import (
    BBox,
    DiffusionConfig,
    EmbeddingStore,
    EntryMeta,
    Proposal,
    PrototypeSet,
    classify,
    diffuse,
    identity_refiner,
    refine_boxes,
    synth_clusters,
)
from protodet.errors import MissingEmbeddingError

from conftest import make_box, make_det, random_box
from oracles import diffusion_fixed_point


def store_with(vectors):
    dim = len(vectors[0])
    store = EmbeddingStore(dim=dim, kind="proposal")
    for i, v in enumerate(vectors):
        store.add(i, np.asarray(v, dtype=np.float32), EntryMeta(i))
    return store


def protoset(class_vecs, bg_vecs=()):
    ps = PrototypeSet()
    for cat, v in class_vecs.items():
        ps.class_protos[cat] = np.asarray(v, dtype=np.float64)
    ps.bg_protos = [np.asarray(v, dtype=np.float64) for v in bg_vecs]
    return ps


def prop(i, image_id=1, objectness=1.0):
    return Proposal(image_id=image_id, box=make_box(10 * i, 0, 8, 8), objectness=objectness, embedding_id=i)


class TestClassify:
    def test_exact_match_scores_one(self):
        store = store_with([[1.0, 0.0]])
        ps = protoset({3: [1.0, 0.0]})
        dets = classify([prop(0)], ps, store)
        assert len(dets) == 1
        assert dets[0].category_id == 3
        assert dets[0].score == pytest.approx(1.0, abs=1e-12)

    def test_background_rejection(self):
        store = store_with([[0.0, 1.0]])
        ps = protoset({1: [1.0, 0.0]}, bg_vecs=[[0.0, 1.0]])
        assert classify([prop(0)], ps, store) == []

    def test_synthetic_labels_recovered(self):
        support, queries, labels = synth_clusters(3, 4, 8, 0.0, seed=5)
        from protodet import build_prototypes

        ps = build_prototypes(support)
        proposals = [prop(i) for i in queries.entries]
        dets = classify(proposals, ps, queries)
        assert len(dets) == len(proposals)
        for p, d in zip(proposals, dets):
            assert d.category_id == labels[p.embedding_id]

    def test_missing_embedding(self):
        store = store_with([[1.0, 0.0]])
        ps = protoset({1: [1.0, 0.0]})
        with pytest.raises(MissingEmbeddingError):
            classify([prop(7)], ps, store)

    def test_fuse_objectness_geometric_mean(self):
        store = store_with([[1.0, 0.0]])
        ps = protoset({1: [1.0, 0.0]})
        dets = classify([prop(0, objectness=0.49)], ps, store, fuse_objectness=True)
        assert dets[0].score == pytest.approx(np.sqrt(0.49), abs=1e-9)

    def test_rescaling_invariance(self, rng):
        vecs = [rng.normal(size=6) for _ in range(5)]
        ps = protoset({1: rng.normal(size=6), 2: rng.normal(size=6)})
        d1 = classify([prop(i) for i in range(5)], ps, store_with(vecs))
        d2 = classify([prop(i) for i in range(5)], ps, store_with([7.5 * v for v in vecs]))
        assert [d.category_id for d in d1] == [d.category_id for d in d2]
        for a, b in zip(d1, d2):
            assert a.score == pytest.approx(b.score, abs=1e-6)


class TestDiffuse:
    def test_alpha_zero_identity(self, rng):
        from conftest import random_detections

        dets = random_detections(rng, 10)
        assert diffuse(dets, DiffusionConfig(alpha=0.0)) == dets

    def test_single_detection_unchanged(self):
        d = make_det(1, 0, 0, 10, 10, score=0.42)
        assert diffuse([d], DiffusionConfig()) == [d]

    def test_two_node_closed_form(self):
        # IoU 1 pair: fixed point (1-a)(I-aW)^-1 s0 = (0.7692, 0.2308)
        a = make_det(1, 0, 0, 10, 10, score=1.0)
        b = make_det(1, 0, 0, 10, 10, cat=2, score=0.0)
        out = diffuse([a, b], DiffusionConfig(steps=30, alpha=0.3))
        assert out[0].score == pytest.approx(0.7692, abs=1e-4)
        assert out[1].score == pytest.approx(0.2308, abs=1e-4)

    def test_matches_linear_solve_on_random_graphs(self, rng):
        for _ in range(30):
            n = int(rng.integers(2, 16))
            boxes = [random_box(rng, span=40.0, min_size=5, max_size=30) for _ in range(n)]
            scores = rng.uniform(0, 1, size=n)
            dets = [
                make_det(1, b.x, b.y, b.w, b.h, cat=1, score=float(s))
                for b, s in zip(boxes, scores)
            ]
            out = diffuse(dets, DiffusionConfig(steps=30, alpha=0.3))
            want = diffusion_fixed_point(
                [(b.x, b.y, b.w, b.h) for b in boxes], scores, alpha=0.3
            )
            got = np.array([d.score for d in out])
            assert np.max(np.abs(got - np.clip(want, 0, 1))) < 1e-4

    def test_preserves_everything_but_scores(self, rng):
        from conftest import random_detections

        dets = random_detections(rng, 25)
        out = diffuse(dets, DiffusionConfig())
        assert len(out) == len(dets)
        for a, b in zip(dets, out):
            assert a.image_id == b.image_id
            assert a.box == b.box
            assert a.category_id == b.category_id
            assert 0.0 <= b.score <= 1.0

    def test_contraction_rate(self, rng):
        # step-to-step deltas shrink at least geometrically with ratio alpha
        from protodet.matching import overlap_weights

        n = 8
        boxes = [random_box(rng, span=30.0, min_size=5, max_size=25) for _ in range(n)]
        w = overlap_weights(boxes)
        s0 = rng.uniform(0, 1, size=n)
        alpha = 0.3
        s_prev = s0.copy()
        s = (1 - alpha) * s0 + alpha * (w @ s_prev)
        first_delta = np.max(np.abs(s - s_prev))
        for t in range(2, 12):
            s_next = (1 - alpha) * s0 + alpha * (w @ s)
            delta = np.max(np.abs(s_next - s))
            assert delta <= (alpha ** (t - 1)) * first_delta + 1e-12
            s_prev, s = s, s_next

    def test_max_score_never_increases(self, rng):
        # The update is a convex combination of s0 and row-averages, so the
        # per-image sup-norm cannot grow (total mass can: scores spread).
        for _ in range(20):
            n = int(rng.integers(2, 10))
            dets = [
                make_det(1, random_box(rng, span=30).x, 0, 10, 10, score=float(rng.uniform()))
                for _ in range(n)
            ]
            out = diffuse(dets, DiffusionConfig())
            assert max(d.score for d in out) <= max(d.score for d in dets) + 1e-12


class TestRefineBoxes:
    def test_identity(self, rng):
        from conftest import random_detections

        dets = random_detections(rng, 5)
        assert refine_boxes(dets, identity_refiner) == dets

    def test_shrink_stub(self):
        def shrink(det):
            b = det.box
            return BBox(b.x + 0.05 * b.w, b.y + 0.05 * b.h, 0.9 * b.w, 0.9 * b.h)

        d = make_det(1, 0, 0, 10, 10, score=0.5)
        out = refine_boxes([d], shrink)
        assert out[0].box == BBox(0.5, 0.5, 9.0, 9.0)
        assert out[0].score == 0.5
        # same center
        assert out[0].box.x + out[0].box.w / 2 == pytest.approx(5.0)

    def test_empty(self):
        assert refine_boxes([], identity_refiner) == []

    def test_refiner_failure_propagates(self):
        from protodet.errors import RefinerFailureError

        def bad(det):
            raise RefinerFailureError("boom")

        with pytest.raises(RefinerFailureError):
            refine_boxes([make_det(1, 0, 0, 5, 5)], bad)
