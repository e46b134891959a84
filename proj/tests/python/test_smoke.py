"""Smoke tests for the python bindings: shapes, ranges, query accounting and
the curve endpoint identities, on a quickly trained fixture model."""

import numpy as np
import pytest

import groupcam as gc


@pytest.fixture(scope="module")
def fixtures():
    images, labels, bboxes = gc.generate_fixtures(seed=42, n=200)
    return [np.asarray(im) for im in images], list(labels), list(bboxes)


@pytest.fixture(scope="module")
def model(fixtures):
    images, labels, _ = fixtures
    model, report = gc.train_fixture_model(
        images, labels, epochs=40, seed=7, target_accuracy=0.0
    )
    assert report["final_holdout_accuracy"] > 0.6
    return model


def test_fixture_generation_is_deterministic():
    a = gc.generate_fixtures(seed=5, n=4)
    b = gc.generate_fixtures(seed=5, n=4)
    for x, y in zip(a[0], b[0]):
        assert np.array_equal(np.asarray(x), np.asarray(y))
    assert list(a[1]) == [0, 1, 0, 1]
    for im in a[0]:
        arr = np.asarray(im)
        assert arr.shape == (3, 64, 64)
        assert arr.min() >= 0.0 and arr.max() <= 1.0


def test_class_scores_are_probabilities(model, fixtures):
    images, _, _ = fixtures
    scores = model.class_scores(images[0])
    assert len(scores) == 2
    assert abs(sum(scores) - 1.0) < 1e-6


def test_group_cam_shape_range_and_budget(model, fixtures):
    images, labels, bboxes = fixtures
    model.reset_query_count()
    sal, alphas = gc.group_cam(model, images[0], labels[0])
    assert model.query_count == 34  # groups + 2
    sal = np.asarray(sal)
    assert sal.shape == (64, 64)
    assert sal.min() >= 0.0 and sal.max() <= 1.0
    assert len(alphas) == 32

    model.reset_query_count()
    mask = np.asarray(gc.finetune_mask(model, images[0], labels[0]))
    assert model.query_count == 17  # groups + 1
    assert set(np.unique(mask)).issubset({0.0, 1.0})


def test_gradcam_matches_single_group(model, fixtures):
    images, labels, _ = fixtures
    for idx in range(6):
        sal, alphas = gc.group_cam(
            model, images[idx], labels[idx], groups=1, denoise=False
        )
        if alphas[0] <= 0:
            continue
        ref = gc.grad_cam(model, images[idx], labels[idx])
        assert np.max(np.abs(np.asarray(sal) - np.asarray(ref))) < 1e-6
        return
    pytest.skip("no image with positive single-group gain in the first six")


def test_curve_endpoints(model, fixtures):
    images, labels, _ = fixtures
    img, label = images[1], labels[1]
    sal, _ = gc.group_cam(model, img, label)

    deletion = gc.deletion_curve(model, img, sal, label)
    insertion = gc.insertion_curve(model, img, sal, label)
    assert deletion["fractions"][0] == 0.0
    assert deletion["fractions"][-1] == 1.0
    assert insertion["scores"][-1] == deletion["scores"][0]
    assert insertion["scores"][0] == deletion["scores"][-1]

    overall = gc.overall_score(insertion["auc"], deletion["auc"])
    assert -1.0 <= overall <= 1.0


def test_pointing_and_sanity(model, fixtures):
    images, labels, bboxes = fixtures
    sal, _ = gc.group_cam(model, images[2], labels[2])
    assert isinstance(gc.pointing_hit(sal, bboxes[2]), bool)

    report = gc.sanity_check(model, images[2], labels[2], mode="cascade", seed=3, groups=8)
    assert report[0][0] == "none"
    assert report[0][1] == 1.0
    assert len(report) == len(model.layer_catalog()) + 1


def test_checkpoint_roundtrip(model, fixtures, tmp_path):
    images, _, _ = fixtures
    path = str(tmp_path / "model.ckpt")
    model.save(path)
    loaded = gc.Model.load(path)
    assert np.allclose(loaded.class_scores(images[3]), model.class_scores(images[3]))


def test_augment_preserves_shape_and_range(model, fixtures):
    images, labels, _ = fixtures
    aug = np.asarray(gc.augment_image(model, images[4], labels[4]))
    assert aug.shape == (3, 64, 64)
    assert aug.min() >= 0.0 and aug.max() <= 1.0
