"""Annotation service endpoint tests (in-process via TestClient)."""

import io
import json

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from ugda.metrics import mxa
from ugda.phantom import CorpusConfig, build_corpus
from ugda.points import SLOTS, ExtremePointSet, load_points
from ugda.rle import rle_decode, rle_encode
from ugda.service import create_app
from ugda.trainer import TrainConfig, pretrain_source
from ugda.volume import SegmentationMask, load_volume, window_normalize

TINY_SHAPE = (16, 16, 16)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("svc_corpus")
    cfg = CorpusConfig(
        out_dir=str(out), source_count=3, target_count=4, eval_count=1,
        ps_fraction=0.5, seed=9, shape=TINY_SHAPE, spacing_mm=(1.0, 1.0, 1.0),
        source_overrides=dict(radius_frac=(0.32, 0.42)),
        target_overrides=dict(radius_frac=(0.32, 0.42), deform_amplitude=0.15),
    )
    return build_corpus(cfg)


@pytest.fixture(scope="module")
def ckpt(corpus, tmp_path_factory):
    run = tmp_path_factory.mktemp("svc_run")
    cfg = TrainConfig(
        variant="supervised_dual", max_epochs=2, seed=0, input_shape=TINY_SHAPE,
        stage_channels=(4, 8), blocks_per_stage=(1, 1), norm_groups=2,
        disc_base_channels=4, disc_dilations=(2,), sigma_vox=2.0,
    )
    return pretrain_source(corpus, cfg, run)


@pytest.fixture()
def client(corpus, ckpt):
    app = create_app(corpus.root, ckpt=ckpt)
    return TestClient(app)


@pytest.fixture()
def bare_client(corpus):
    return TestClient(create_app(corpus.root))


def six_points(shape=TINY_SHAPE):
    c = [n // 2 for n in shape]
    coords = {
        ("x", "min"): [2, c[1], c[2]], ("x", "max"): [shape[0] - 3, c[1], c[2]],
        ("y", "min"): [c[0], 2, c[2]], ("y", "max"): [c[0], shape[1] - 3, c[2]],
        ("z", "min"): [c[0], c[1], 2], ("z", "max"): [c[0], c[1], shape[2] - 3],
    }
    return [
        {"axis": a, "side": s, "ijk": coords[(a, s)]} for a, s in SLOTS
    ]


class TestRle:
    def test_roundtrip_random(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            mask = (rng.random((5, 4, 6)) > 0.5).astype(np.uint8)
            np.testing.assert_array_equal(rle_decode(rle_encode(mask)), mask)

    def test_empty_and_full(self):
        empty = np.zeros((3, 3, 3), dtype=np.uint8)
        full = np.ones((3, 3, 3), dtype=np.uint8)
        assert rle_encode(empty)["counts"] == [27]
        assert rle_encode(full)["counts"] == [0, 27]
        np.testing.assert_array_equal(rle_decode(rle_encode(full)), full)

    def test_z_major_flattening(self):
        mask = np.zeros((2, 2, 2), dtype=np.uint8)
        mask[1, 0, 0] = 1  # second element in x-fastest order
        assert rle_encode(mask)["counts"] == [1, 1, 6]


class TestListing:
    def test_lists_all_target_studies(self, bare_client, corpus):
        res = bare_client.get("/studies")
        assert res.status_code == 200
        rows = res.json()
        want = (
            len(corpus.target_ps_studies)
            + len(corpus.target_unlabelled_studies)
            + len(corpus.evaluation_studies)
        )
        assert len(rows) == want
        assert rows == sorted(rows, key=lambda r: r["study_id"])

    def test_corpus_ps_marks_complete(self, bare_client, corpus):
        rows = {r["study_id"]: r for r in bare_client.get("/studies").json()}
        ps_id = corpus.target_ps_studies[0].study_id
        un_id = corpus.target_unlabelled_studies[0].study_id
        assert rows[ps_id]["status"] == "complete"
        assert rows[un_id]["status"] == "unannotated"

    def test_healthz(self, bare_client, client):
        assert bare_client.get("/healthz").json() == {
            "status": "ok", "model_loaded": False,
        }
        assert client.get("/healthz").json()["model_loaded"] is True


class TestSlices:
    def test_boundary_indices(self, bare_client, corpus):
        sid = corpus.target_ps_studies[0].study_id
        last = TINY_SHAPE[2] - 1
        assert bare_client.get(f"/studies/{sid}/slices/z/{last}").status_code == 200
        assert bare_client.get(f"/studies/{sid}/slices/z/{last + 1}").status_code == 404
        assert bare_client.get(f"/studies/{sid}/slices/z/-1").status_code == 404
        assert bare_client.get("/studies/nope/slices/z/0").status_code == 404

    def test_pixels_match_window_normalize_oracle(self, bare_client, corpus):
        ref = corpus.target_ps_studies[0]
        vol = load_volume(corpus.resolve(ref.volume), ref.study_id)
        res = bare_client.get(f"/studies/{ref.study_id}/slices/z/4")
        img = Image.open(io.BytesIO(res.content))
        got = np.asarray(img)
        norm = window_normalize(vol, 0.0, 1.0)
        expected = np.floor(norm.voxels[:, :, 4] * 255.0 + 0.5).astype(np.uint8)
        np.testing.assert_array_equal(got, expected.T)
        assert img.size == (TINY_SHAPE[0], TINY_SHAPE[1])  # width = x, height = y

    def test_repeat_identical(self, bare_client, corpus):
        sid = corpus.target_ps_studies[0].study_id
        a = bare_client.get(f"/studies/{sid}/slices/x/3").content
        b = bare_client.get(f"/studies/{sid}/slices/x/3").content
        assert a == b


class TestPutPoints:
    def _sid(self, corpus):
        return corpus.target_unlabelled_studies[0].study_id

    def test_six_points_complete(self, bare_client, corpus):
        sid = self._sid(corpus)
        res = bare_client.put(
            f"/studies/{sid}/extreme-points",
            json={"annotator": "alex", "points": six_points()},
        )
        assert res.status_code == 200
        body = res.json()
        assert body["status"] == "complete"
        assert len(body["points"]) == 6
        listing = {r["study_id"]: r for r in bare_client.get("/studies").json()}
        assert listing[sid]["status"] == "complete"

    def test_partial_save_in_progress(self, bare_client, corpus):
        sid = self._sid(corpus)
        res = bare_client.put(
            f"/studies/{sid}/extreme-points",
            json={"points": six_points()[:5]},
        )
        assert res.status_code == 200
        assert res.json()["status"] == "in_progress"

    def test_duplicate_slot_422(self, bare_client, corpus):
        pts = six_points()[:2]
        pts[1] = dict(pts[0])
        res = bare_client.put(
            f"/studies/{self._sid(corpus)}/extreme-points", json={"points": pts}
        )
        assert res.status_code == 422

    def test_out_of_bounds_422(self, bare_client, corpus):
        pts = six_points()
        pts[0]["ijk"] = [99, 0, 0]
        res = bare_client.put(
            f"/studies/{self._sid(corpus)}/extreme-points", json={"points": pts}
        )
        assert res.status_code == 422

    def test_unknown_study_404(self, bare_client):
        res = bare_client.put(
            "/studies/ghost/extreme-points", json={"points": six_points()}
        )
        assert res.status_code == 404

    def test_idempotent_bytes(self, bare_client, corpus):
        sid = self._sid(corpus)
        payload = {"annotator": "alex", "points": six_points()}
        bare_client.put(f"/studies/{sid}/extreme-points", json=payload)
        record_path = corpus.root / "annotations" / f"{sid}.json"
        first = record_path.read_bytes()
        bare_client.put(f"/studies/{sid}/extreme-points", json=payload)
        assert record_path.read_bytes() == first

    def test_ps_file_is_schema_exact(self, bare_client, corpus):
        sid = self._sid(corpus)
        bare_client.put(
            f"/studies/{sid}/extreme-points",
            json={"annotator": "alex", "points": six_points()},
        )
        ps = load_points(corpus.root / "annotations" / f"{sid}.ps.json")
        assert ps.source == "human_click"
        assert ps.study_id == sid

    def test_get_returns_stored_record(self, bare_client, corpus):
        sid = self._sid(corpus)
        payload = {"annotator": "alex", "points": six_points()}
        bare_client.put(f"/studies/{sid}/extreme-points", json=payload)
        res = bare_client.get(f"/studies/{sid}/extreme-points")
        assert res.status_code == 200
        assert res.json()["points"] == six_points()
        assert bare_client.get("/studies/ghost/extreme-points").status_code == 404

    def test_concurrent_puts_never_interleave(self, corpus):
        import concurrent.futures
        import json as _json

        from ugda.service import AnnotationStore, StudyEntry

        store = AnnotationStore(corpus.root / "concurrent_annotations")
        entries = [
            StudyEntry(f"s{i:02d}", corpus.root, None, TINY_SHAPE, (1.0, 1.0, 1.0))
            for i in range(6)
        ]
        def write(args):
            entry, rev = args
            pts = [dict(p, ijk=[rev % 4 + 2, 8, 8]) if p["axis"] == "x" and p["side"] == "min"
                   else p for p in six_points()]
            store.put(entry, pts, f"annotator{rev}", f"2026-01-01T00:00:0{rev}")
        jobs = [(e, r) for e in entries for r in range(4)]
        with concurrent.futures.ThreadPoolExecutor(max_workers=8) as pool:
            list(pool.map(write, jobs))
        for entry in entries:
            record = _json.loads(store.record_path(entry.study_id).read_text())
            assert record["status"] == "complete"
            assert len(record["points"]) == 6  # parseable, never interleaved


class TestInfer:
    def test_no_checkpoint_503(self, bare_client, corpus):
        sid = corpus.target_ps_studies[0].study_id
        assert bare_client.post(f"/studies/{sid}/infer").status_code == 503

    def test_unknown_study_404(self, client):
        assert client.post("/studies/ghost/infer").status_code == 404

    def test_predicted_heatmaps_when_no_record(self, client, corpus):
        sid = corpus.target_ps_studies[1].study_id
        res = client.post(f"/studies/{sid}/infer")
        assert res.status_code == 200
        body = res.json()
        assert body["heatmap_source"] == "predicted"
        mask = rle_decode(body["rle"])
        assert mask.shape == TINY_SHAPE

    def test_human_ps_inference_and_mxa_crosscheck(self, client, corpus):
        sid = corpus.target_unlabelled_studies[0].study_id
        client.put(
            f"/studies/{sid}/extreme-points",
            json={"annotator": "alex", "points": six_points()},
        )
        res = client.post(f"/studies/{sid}/infer")
        assert res.status_code == 200
        body = res.json()
        assert body["heatmap_source"] == "human_click"
        mask = rle_decode(body["rle"])
        if not body["empty_prediction"]:
            ps = ExtremePointSet(
                {(p["axis"], p["side"]): tuple(p["ijk"]) for p in six_points()},
                (1.0, 1.0, 1.0),
                "human_click",
                sid,
            )
            expected = mxa(SegmentationMask(mask, (1.0, 1.0, 1.0), sid), ps)
            assert body["mxa_mm"] == pytest.approx(expected, abs=1e-9)
