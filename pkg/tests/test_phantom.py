"""Phantom generation and corpus assembly tests."""

import numpy as np
import pytest

from ugda import dice_score, nifti
from ugda.errors import InvalidArgumentError
from ugda.phantom import (
    CorpusConfig,
    PhantomParams,
    build_corpus,
    generate_study,
    generate_study_with_meta,
    load_manifest,
    simulate_ps,
    source_params,
    study_seed,
    target_params,
)
from ugda.points import SLOTS, extract_extreme_points
from ugda.volume import SegmentationMask

from oracles import brute_extreme_points

SMALL = dict(shape=(48, 48, 24), spacing_mm=(1.0, 1.0, 2.0))


class TestGenerateStudy:
    def test_deterministic(self):
        p = source_params(**SMALL)
        v1, m1 = generate_study(123, p)
        v2, m2 = generate_study(123, p)
        assert v1.voxels.tobytes() == v2.voxels.tobytes()
        assert m1.voxels.tobytes() == m2.voxels.tobytes()

    def test_pure_ellipsoid_matches_analytic_inequality(self):
        p = PhantomParams(
            deform_amplitude=0.0, lesion_count=(0, 0), noise_level=0.0, **SMALL
        )
        _, mask, meta = generate_study_with_meta(7, p)
        c, r = meta["center"], meta["radii"]
        for idx in np.ndindex(mask.shape):
            rho2 = sum(((idx[d] - c[d]) / r[d]) ** 2 for d in range(3))
            assert bool(mask.voxels[idx]) == (rho2 <= 1.0)

    def test_different_seeds_differ(self):
        p = source_params(**SMALL)
        _, m1 = generate_study(1, p)
        _, m2 = generate_study(2, p)
        assert dice_score(m1, m2) < 1.0

    def test_mask_keeps_boundary_margin(self):
        for seed in range(5):
            _, m = generate_study(seed, target_params(**SMALL))
            fg = np.argwhere(m.voxels)
            for axis in range(3):
                assert fg[:, axis].min() >= 2
                assert fg[:, axis].max() <= m.shape[axis] - 3

    def test_margin_violating_params_rejected(self):
        with pytest.raises(InvalidArgumentError):
            generate_study(0, PhantomParams(radius_frac=(0.9, 0.95), **SMALL))

    def test_intensities_in_unit_range(self):
        v, _ = generate_study(5, target_params(**SMALL))
        assert v.voxels.min() >= 0.0 and v.voxels.max() <= 1.0

    def test_study_seed_stable(self):
        assert study_seed(7, "tgt_001") == study_seed(7, "tgt_001")
        assert study_seed(7, "tgt_001") != study_seed(7, "tgt_002")
        assert study_seed(7, "tgt_001") != study_seed(8, "tgt_001")


class TestSimulatePs:
    def _mask(self, seed=3):
        _, m = generate_study(seed, source_params(**SMALL))
        return m

    def test_zero_jitter_identical_to_extraction(self):
        m = self._mask()
        assert simulate_ps(m, 0.0).points == extract_extreme_points(m).points

    def test_box_example(self):
        arr = np.zeros((16, 16, 16), dtype=np.uint8)
        arr[2:7, 3:10, 4:12] = 1
        m = SegmentationMask(arr, (1, 1, 1))
        assert simulate_ps(m, 0.0).points[("x", "min")] == (2, 6, 7)

    def test_jitter_stays_in_mask_and_on_extremal_slice(self):
        m = self._mask()
        for seed in range(5):
            ps = simulate_ps(m, 2.0, seed=seed)
            for (axis, side), ijk in ps.points.items():
                assert m.voxels[ijk] == 1
                axis_idx = ("x", "y", "z").index(axis)
                base = extract_extreme_points(m).points[(axis, side)]
                assert ijk[axis_idx] == base[axis_idx]


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    cfg = CorpusConfig(
        out_dir=str(out), source_count=3, target_count=4, eval_count=2,
        ps_fraction=0.5, seed=11, shape=(48, 48, 24),
    )
    return build_corpus(cfg)


class TestBuildCorpus:

    def test_counts(self, corpus):
        assert len(corpus.source_studies) == 3
        assert corpus.n_ps == 2
        assert corpus.n_unlabelled == 2
        assert len(corpus.evaluation_studies) == 2

    def test_full_fraction_means_no_unlabelled(self, tmp_path):
        cfg = CorpusConfig(
            out_dir=str(tmp_path), source_count=1, target_count=3, eval_count=1,
            ps_fraction=1.0, shape=(48, 48, 24),
        )
        m = build_corpus(cfg)
        assert m.n_unlabelled == 0

    def test_partitions_disjoint(self, corpus):
        ids = [s.study_id for g in corpus.groups() for s in g]
        assert len(ids) == len(set(ids))

    def test_ps_revalidates_against_hidden_mask(self, corpus):
        for ref in corpus.evaluation_studies:
            mask_vox, spacing = nifti.read_nifti(corpus.resolve(ref.hidden_mask))
            from ugda.points import load_points

            ps = load_points(corpus.resolve(ref.ps))
            expected = brute_extreme_points(mask_vox)
            for slot in SLOTS:
                assert ps.points[slot] == tuple(expected[slot])

    def test_manifest_roundtrip(self, corpus):
        back = load_manifest(corpus.root / "manifest.json")
        assert back.seed == corpus.seed
        assert [s.study_id for s in back.source_studies] == [
            s.study_id for s in corpus.source_studies
        ]

    def test_nifti_roundtrip_bit_equal(self, corpus):
        ref = corpus.source_studies[0]
        vox, _ = nifti.read_nifti(corpus.resolve(ref.volume))
        p = source_params(shape=(48, 48, 24))
        regen, _ = generate_study(study_seed(corpus.seed, ref.study_id), p)
        assert vox.tobytes() == regen.voxels.astype(np.float32).tobytes()

    def test_rebuild_is_deterministic(self, corpus, tmp_path):
        cfg = CorpusConfig(
            out_dir=str(tmp_path), source_count=3, target_count=4, eval_count=2,
            ps_fraction=0.5, seed=11, shape=(48, 48, 24),
        )
        again = build_corpus(cfg)
        a = (corpus.root / "source/vol/src_000.nii.gz").read_bytes()
        b = (again.root / "source/vol/src_000.nii.gz").read_bytes()
        assert a == b


class TestDomainShift:
    def test_threshold_segmenter_gap(self):
        """A threshold fit on source phantoms transfers poorly to target ones."""
        src = [generate_study(s, source_params(**SMALL)) for s in range(6)]
        tgt = [generate_study(100 + s, target_params(**SMALL)) for s in range(6)]

        def mean_dsc(pairs, thr):
            scores = []
            for vol, mask in pairs:
                pred = SegmentationMask(
                    (vol.voxels >= thr).astype(np.uint8), vol.spacing_mm
                )
                scores.append(dice_score(pred, mask))
            return float(np.mean(scores))

        fit = src[:3]
        thresholds = np.linspace(0.3, 0.7, 17)
        best_thr = max(thresholds, key=lambda t: mean_dsc(fit, t))
        src_score = mean_dsc(src[3:], best_thr)
        tgt_score = mean_dsc(tgt, best_thr)
        assert tgt_score < src_score
