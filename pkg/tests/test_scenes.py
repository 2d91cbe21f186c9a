"""Synthetic scene generator: construction properties and dataset IO."""

import numpy as np
import pytest

from salgraph import scenes as S
from salgraph.errors import DataFormatError


def spec(seed=0, **kw):
    return S.SceneSpec(seed=seed, **kw)


class TestSceneSpec:
    def test_defaults(self):
        sp = spec()
        assert (sp.width, sp.height) == (64, 64)
        assert (sp.min_objects, sp.max_objects) == (3, 8)
        assert sp.n_fixations == 20
        assert sp.categories == list(S.DEFAULT_CATEGORIES)

    def test_bad_ranges(self):
        with pytest.raises(DataFormatError):
            spec(min_objects=0)
        with pytest.raises(DataFormatError):
            spec(min_objects=5, max_objects=3)

    def test_categories_must_match_graph(self):
        with pytest.raises(DataFormatError):
            S.SceneSpec(categories=["dog", "cat"],
                        graph=S.default_generation_graph())


class TestGenerateScene:
    def test_sample_invariants(self):
        samples = S.generate_dataset(spec(seed=3), 5)
        for s in samples:
            assert s.image.shape == (3, 64, 64)
            assert s.image.min() >= 0.0 and s.image.max() <= 1.0
            assert abs(s.density.sum() - 1.0) < 1e-9
            assert (s.density >= 0).all()
            assert len(s.fixations) == 20
            assert s.fixations[:, 0].max() < 64 and s.fixations[:, 1].max() < 64
            assert 3 <= len(s.boxes) <= 8
            for b in s.boxes:
                b.check_bounds(64, 64)
                assert b.label in S.DEFAULT_CATEGORIES

    def test_same_seed_bit_identical(self):
        a = S.generate_dataset(spec(seed=11), 4)
        b = S.generate_dataset(spec(seed=11), 4)
        for x, y in zip(a, b):
            assert np.array_equal(x.image, y.image)
            assert np.array_equal(x.density, y.density)
            assert np.array_equal(x.fixations, y.fixations)
            assert x.boxes == y.boxes

    def test_different_seeds_differ(self):
        a = S.generate_dataset(spec(seed=1), 1)[0]
        b = S.generate_dataset(spec(seed=2), 1)[0]
        assert not np.array_equal(a.image, b.image)

    def test_seed_box_holds_density_peak(self):
        # construction property: the seed object owns the global max
        samples = S.generate_dataset(spec(seed=7), 100)
        for s in samples:
            y, x = np.unravel_index(s.density.argmax(), s.density.shape)
            seed_box = s.boxes[s.seed_index]
            assert seed_box.x0 <= x < seed_box.x1
            assert seed_box.y0 <= y < seed_box.y1

    def test_fixations_concentrate_on_objects(self):
        samples = S.generate_dataset(spec(seed=13), 100)
        inside = total = 0
        for s in samples:
            for x, y in s.fixations:
                total += 1
                if any(b.x0 <= x < b.x1 and b.y0 <= y < b.y1 for b in s.boxes):
                    inside += 1
        assert inside / total >= 0.8

    def test_boxes_respect_overlap_budget(self):
        samples = S.generate_dataset(spec(seed=17), 50)
        for s in samples:
            for i, a in enumerate(s.boxes):
                for b in s.boxes[i + 1:]:
                    ix = max(0, min(a.x1, b.x1) - max(a.x0, b.x0))
                    iy = max(0, min(a.y1, b.y1) - max(a.y0, b.y0))
                    inter = ix * iy
                    smaller = min((a.x1 - a.x0) * (a.y1 - a.y0),
                                  (b.x1 - b.x0) * (b.y1 - b.y0))
                    assert inter / smaller <= S._MAX_OVERLAP + 1e-12

    def test_companion_labels_never_repeat_seed(self):
        samples = S.generate_dataset(spec(seed=19), 50)
        for s in samples:
            seed_label = s.boxes[s.seed_index].label
            rest = [b.label for i, b in enumerate(s.boxes) if i != s.seed_index]
            assert seed_label not in rest


class TestDatasetIO:
    def test_roundtrip(self, tmp_path):
        samples = S.generate_dataset(spec(seed=23), 3)
        S.save_dataset(tmp_path, samples)
        back = S.load_dataset(tmp_path)
        assert len(back) == 3
        for orig, loaded in zip(samples, back):
            assert loaded.image.shape == orig.image.shape
            # storage is f32: values match to f32 resolution
            assert np.allclose(loaded.image, orig.image, atol=1e-6)
            assert np.allclose(loaded.density, orig.density, atol=1e-6)
            assert abs(loaded.density.sum() - 1.0) < 1e-9
            assert np.array_equal(loaded.fixations, orig.fixations)
            assert loaded.boxes == orig.boxes

    def test_side_files_written(self, tmp_path):
        samples = S.generate_dataset(spec(seed=29), 2)
        S.save_dataset(tmp_path, samples)
        for name in ("dataset.txt", "corpus.txt", "categories.txt", "taxonomy.txt"):
            assert (tmp_path / name).exists(), name

    def test_corpus_reflects_scene_labels(self, tmp_path):
        from salgraph import knowledge as K
        samples = S.generate_dataset(spec(seed=31), 4)
        S.save_dataset(tmp_path, samples)
        docs = K.parse_corpus((tmp_path / "corpus.txt").read_text())
        assert len(docs) == 4
        for doc, s in zip(docs, samples):
            assert sorted(doc) == sorted(b.label for b in s.boxes)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DataFormatError):
            S.load_dataset(tmp_path)

    def test_truncated_manifest(self, tmp_path):
        samples = S.generate_dataset(spec(seed=37), 2)
        S.save_dataset(tmp_path, samples)
        manifest = tmp_path / "dataset.txt"
        lines = manifest.read_text().splitlines()
        manifest.write_text("\n".join(lines) + "\nsample_9999\n")
        with pytest.raises((DataFormatError, FileNotFoundError)):
            S.load_dataset(tmp_path)


class TestTaxonomyDefaults:
    def test_default_taxonomy_depths(self):
        tax = S.default_taxonomy()
        for cat in S.DEFAULT_CATEGORIES:
            assert tax.depth(cat) == 3  # root -> group -> leaf

    def test_generation_graph_matches_wup(self):
        from salgraph import knowledge as K
        g = S.default_generation_graph()
        tax = S.default_taxonomy()
        for a in S.DEFAULT_CATEGORIES[:3]:
            for b in S.DEFAULT_CATEGORIES[:3]:
                assert g.value(a, b) == K.wup_similarity(tax, a, b)
