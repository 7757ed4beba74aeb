import json

import numpy as np
import pytest

from momix.data import (
    AffineMaps,
    DataError,
    Dataset,
    GeometryError,
    MixtureSpec,
    coordinate_moments,
    denormalize_gaussian_params,
    empirical_moments,
    normalize,
    pca_reduce,
    random_mixture_spec,
    read_csv,
    sample_gmm,
    write_csv,
    write_spec,
)


def test_normalize_maps_to_unit_box_and_back():
    rng = np.random.default_rng(1)
    data = Dataset(rng.normal([3.0, -10.0], [2.0, 0.5], size=(500, 2)))
    out = normalize(data)
    assert out.points.min() == 0.0 and out.points.max() == 1.0
    assert np.allclose(out.maps.to_original(out.points), data.points)


def test_constant_column_is_flagged_and_centered():
    pts = np.column_stack([np.arange(5.0), np.full(5, 7.0)])
    out = normalize(Dataset(pts))
    assert out.maps.constant.tolist() == [False, True]
    assert np.all(out.points[:, 1] == 0.5)
    assert np.allclose(out.maps.to_original(out.points)[:, 1], 7.0)


def test_joint_scaling_keeps_relative_spread():
    rng = np.random.default_rng(3)
    pts = np.column_stack([rng.random(200) * 10, 5 + 1e-3 * rng.normal(size=200)])
    out = normalize(Dataset(pts), "joint")
    assert out.points.min() == 0.0 and out.points.max() == pytest.approx(1.0)
    assert out.points[:, 1].std() < 1e-3
    assert np.allclose(out.maps.to_original(out.points), pts)
    with pytest.raises(DataError):
        normalize(Dataset(pts), "bogus")


def test_denormalize_gaussian_parameters():
    maps = AffineMaps(np.array([1.0, -2.0]), np.array([4.0, 0.5]), np.zeros(2, dtype=bool))
    theta = np.array([[0.5, 0.5, 0.1, 0.2]])
    out = denormalize_gaussian_params(theta, maps)
    assert np.allclose(out, [[3.0, -1.75, 0.4, 0.1]])


def test_empirical_moments_match_direct_means():
    rng = np.random.default_rng(0)
    X = rng.random((30_001, 2))
    mu = empirical_moments(Dataset(X), 3)
    assert mu.mass == pytest.approx(1.0)
    assert mu[(2, 1)] == pytest.approx(np.mean(X[:, 0] ** 2 * X[:, 1]))
    c = coordinate_moments(Dataset(X), 1, 4)
    assert c[(3,)] == pytest.approx(np.mean(X[:, 1] ** 3))


def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset(np.array([[1.0, np.nan]]))
    with pytest.raises(DataError):
        Dataset(np.zeros((3, 2)), labels=[0, 1])
    assert Dataset(np.arange(4.0)).n == 1


def test_pca_keeps_dominant_direction():
    rng = np.random.default_rng(2)
    t = rng.normal(size=1000)
    X = np.column_stack([t, 2 * t, 0.01 * rng.normal(size=1000)])
    out, proj = pca_reduce(Dataset(X), 1)
    assert out.n == 1 and proj.retained > 0.999
    assert out.points.min() == 0.0 and out.points.max() == 1.0
    with pytest.raises(DataError):
        pca_reduce(Dataset(X), 4)


def test_random_mixture_geometry():
    rng = np.random.default_rng(5)
    spec = random_mixture_spec(5, 2, 5.0, 0.25, rng, sigma=0.05)
    assert spec.K == 5 and spec.n == 2
    assert spec.min_separation() >= 5.0 - 1e-12
    ratio = (spec.sigmas.min(1) / spec.sigmas.max(1)) ** 2
    assert np.allclose(ratio, 0.25)
    assert np.allclose(spec.weights, 0.2)
    back = MixtureSpec.from_dict(spec.to_dict())
    assert np.array_equal(back.means, spec.means)


def test_impossible_geometry_raises():
    with pytest.raises(GeometryError):
        random_mixture_spec(8, 1, 50.0, 1.0, np.random.default_rng(0), sigma=0.1, max_attempts=50)
    with pytest.raises(GeometryError):
        MixtureSpec([[0.0]], [[-1.0]], [1.0])


def test_single_component_spec():
    spec = random_mixture_spec(1, 3, 5.0, 0.25, np.random.default_rng(0))
    data = sample_gmm(spec, 50, 0)
    assert set(data.labels.tolist()) == {0}


def test_sampling_is_deterministic():
    spec = random_mixture_spec(3, 2, 3.0, 0.5, np.random.default_rng(0))
    a, b = sample_gmm(spec, 100, 7), sample_gmm(spec, 100, 7)
    assert np.array_equal(a.points, b.points) and np.array_equal(a.labels, b.labels)


def test_csv_round_trip(tmp_path):
    spec = random_mixture_spec(2, 2, 3.0, 0.5, np.random.default_rng(0))
    data = sample_gmm(spec, 20, 1)
    path = tmp_path / "d.csv"
    write_csv(data, path)
    back = read_csv(path, labels=True)
    assert np.array_equal(back.points, data.points)
    assert np.array_equal(back.labels, data.labels)
    write_spec(spec, tmp_path / "d.json", {"seed": 1})
    meta = json.loads((tmp_path / "d.json").read_text())
    assert meta["seed"] == 1 and meta["K"] == 2


def test_csv_header_and_errors(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("a,b\n1,2\n3,4\n")
    assert read_csv(p, header=True).N == 2
    p.write_text("1,2\n3\n")
    with pytest.raises(DataError, match="row 2"):
        read_csv(p)
    p.write_text("1,2\nfoo,4\n")
    with pytest.raises(DataError, match="row 2"):
        read_csv(p)
    p.write_text("")
    with pytest.raises(DataError):
        read_csv(p)
    with pytest.raises(DataError):
        read_csv(tmp_path / "missing.csv")
