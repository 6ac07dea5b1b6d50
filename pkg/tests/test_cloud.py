import numpy as np
import pytest
from hypothesis import given, strategies as st

from surffpt.cloud import (
    DuplicatePointsError, InsufficientPointsError, PointCloud, default_min_count, measure_fill_distance,
    neighbor_table, neighborhood_for, poly_dim,
)
from surffpt.sampling import (
    BoundaryRule, EmptyBoundaryError, SamplingPlan, format_cloud, label_boundary, lattice_kind, lattice_points,
    parse_cloud, sample_cloud,
)
from surffpt.surfaces import Ellipsoid, FlatDisk, SlicedTorus, Sphere, Torus


def test_poly_dims():
    assert [poly_dim(m) for m in (2, 4, 6)] == [6, 15, 28]
    assert default_min_count(4) == 30


def test_duplicate_points_rejected():
    with pytest.raises(DuplicatePointsError):
        PointCloud(np.array([[0.0, 0, 0], [1, 0, 0], [0, 0, 0]]))


def test_too_few_points():
    c = PointCloud(np.eye(3))
    with pytest.raises(InsufficientPointsError):
        neighborhood_for(c, 0, 4)


@given(st.integers(0, 1000), st.integers(3, 20))
def test_neighborhood_contract(seed, min_count):
    rng = np.random.default_rng(seed)
    cloud = PointCloud(rng.normal(size=(60, 3)))
    nb = neighborhood_for(cloud, 7, min_count)
    assert nb.indices[0] == 7
    assert len(nb) >= min_count
    d = np.linalg.norm(cloud.positions - cloud.positions[7], axis=1)
    kth = np.sort(d)[min_count - 1]
    assert nb.epsilon == pytest.approx(1.2 * kth)
    assert set(nb.indices.tolist()) == set(np.flatnonzero(d <= nb.epsilon).tolist())
    assert np.all(np.diff(nb.distances) >= 0)


def test_table_matches_single_queries(sphere_cloud):
    t = neighbor_table(sphere_cloud, 30)
    for i in (0, 17, 500, sphere_cloud.n - 1):
        nb = neighborhood_for(sphere_cloud, i, 30)
        row = t.row(i)
        assert np.array_equal(np.sort(row.indices), np.sort(nb.indices))
        assert row.epsilon == pytest.approx(nb.epsilon)
    assert np.all(t.indices[np.arange(len(t)), t.counts - 1] >= 0)


def test_fill_distance_measures(sphere_cloud):
    h, hbar = measure_fill_distance(sphere_cloud)
    assert 0.05 < h < 0.09
    assert hbar == pytest.approx(sphere_cloud.n ** -0.5)


@pytest.mark.parametrize("model", [Sphere(1.0), Ellipsoid(1.2, 1.2, 1.0), Torus(0.7, 0.3)], ids=repr)
def test_lattice_clouds_are_quasi_uniform(model):
    cloud = sample_cloud(model, 0.08)
    assert lattice_kind(model) is not None
    assert np.max(np.abs(model.implicit(cloud.positions))) < 1e-12
    nn = cloud.nn_distances
    # nearest-neighbor spacing concentrates around the target
    assert 0.6 * 0.08 < np.median(nn) < 1.1 * 0.08
    assert nn.min() > 0.3 * 0.08


def test_lattice_seed_shifts_points():
    m = Torus(0.7, 0.3)
    a, b = lattice_points(m, 500, 0), lattice_points(m, 500, 1)
    assert a.shape == b.shape == (500, 3)
    assert not np.allclose(a, b)
    assert np.array_equal(a, lattice_points(m, 500, 0))


def test_relaxed_clouds_respect_the_edge():
    m = SlicedTorus()
    cloud = sample_cloud(m, 0.06, boundary="edge::1e-9")
    assert np.all(m.domain(cloud.positions) >= -1e-12)
    assert cloud.boundary.sum() > 0
    assert np.max(np.abs(m.implicit(cloud.positions))) < 1e-10


def test_sampling_is_deterministic():
    a = sample_cloud(FlatDisk(1.0), 0.1, seed=4)
    b = sample_cloud(FlatDisk(1.0), 0.1, seed=4)
    assert np.array_equal(a.positions, b.positions)


def test_plan_validation():
    with pytest.raises(ValueError):
        SamplingPlan(0.0)
    with pytest.raises(ValueError):
        SamplingPlan(0.1, method="poisson")
    p = SamplingPlan(0.1, expected_n=100).refined(2)
    assert p.target_h == pytest.approx(0.025) and p.expected_n == 1600


@pytest.mark.parametrize("text,expected", [
    ("z:0:0.04", BoundaryRule("z", 0.0, 0.04)),
    ("rho:1.0:0.01", BoundaryRule("rho", 1.0, 0.01)),
    ("edge::1e-9", BoundaryRule("edge", 0.0, 1e-9)),
    ("x", BoundaryRule("x", 0.0, 4e-2)),
])
def test_rule_parsing(text, expected):
    assert BoundaryRule.parse(text) == expected
    assert BoundaryRule.parse(str(expected)) == expected


def test_rule_rejects_bad_input():
    with pytest.raises(ValueError):
        BoundaryRule.parse("w:0:1")
    with pytest.raises(ValueError):
        BoundaryRule("z", 0.0, 0.0)


def test_two_sided_band():
    r = BoundaryRule("z", 0.5, 0.1)
    x = np.array([[0, 0, 0.45], [0, 0, 0.59], [0, 0, 0.7], [0, 0, 0.3]])
    assert r.contains(x).tolist() == [True, True, False, False]


def test_edge_band_is_one_sided():
    r = BoundaryRule("edge", 0.0, 0.1).bind(Sphere(1.0, 0.0))
    x = np.array([[1.0, 0, 0], [0.99, 0, 0.05], [0.9, 0, 0.3], [1.0, 0, -0.5]])
    assert r.contains(x).tolist() == [True, True, False, True]


def test_edge_rule_needs_a_model():
    with pytest.raises(ValueError):
        BoundaryRule("edge").coordinate(np.zeros((1, 3)))


def test_empty_boundary():
    cloud = sample_cloud(Sphere(1.0), 0.2)
    with pytest.raises(EmptyBoundaryError):
        label_boundary(cloud, "z:5:0.01")


def test_cloud_text_round_trip(disk_cloud):
    text = format_cloud(disk_cloud)
    back = parse_cloud(text)
    assert np.array_equal(back.positions, disk_cloud.positions)
    assert np.array_equal(back.boundary, disk_cloud.boundary)
    assert back.source_model == disk_cloud.source_model
    assert format_cloud(back) == text


def test_cloud_parse_errors():
    with pytest.raises(ValueError):
        parse_cloud("0,0,0,interior\n")
    with pytest.raises(ValueError):
        parse_cloud("# n=2\n0,0,0,interior\n")
    with pytest.raises(ValueError):
        parse_cloud("# n=1\n0,0,0,inside\n")
