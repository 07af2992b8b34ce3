import numpy as np
import pytest
from scipy.stats import multivariate_normal

from bridgelab import datasets2d
from bridgelab.datasets2d import Dist2D


def test_checkerboard_samples_lie_on_dark_cells(rng):
    d = Dist2D("checkerboard", scale=4)
    x = datasets2d.sample(d, 20000, rng)
    assert datasets2d.in_support(d, x).all()
    # 32 occupied unit cells, each hit about n/32 times
    cells = np.floor(x).astype(int)
    _, counts = np.unique(cells, axis=0, return_counts=True)
    assert len(counts) == 32
    assert counts.min() > 0.8 * 20000 / 32 and counts.max() < 1.2 * 20000 / 32


@pytest.mark.parametrize("scale", [1, 2, 3])
def test_checkerboard_small_boards(scale, rng):
    d = Dist2D("checkerboard", scale=scale)
    x = datasets2d.sample(d, 4000, rng)
    assert datasets2d.in_support(d, x).all()
    assert len(np.unique(np.floor(x), axis=0)) == 2 * scale * scale


def test_checkerboard_rejects_fractional_scale(rng):
    with pytest.raises(ValueError):
        datasets2d.sample(Dist2D("checkerboard", scale=2.5), 10, rng)


def test_off_board_points_are_outside_support():
    d = Dist2D("checkerboard", scale=4)
    x = np.array([[0.5, 0.5], [0.5, 1.5], [4.5, 0.5], [np.nan, 0.0]])
    np.testing.assert_array_equal(datasets2d.in_support(d, x), [True, False, False, False])


def test_pinwheel_support_and_blades(rng):
    d = Dist2D("pinwheel", scale=4)
    x = datasets2d.sample(d, 5000, rng)
    assert datasets2d.in_support(d, x).all()
    assert not datasets2d.in_support(d, np.array([[100.0, 0.0]]))[0]


def test_standardized_samples_have_unit_moments(rng):
    for kind in ("checkerboard", "pinwheel", "moons"):
        x = datasets2d.sample(Dist2D(kind, standardize=True), 50000, rng)
        np.testing.assert_allclose(x.mean(axis=0), 0.0, atol=0.03)
        np.testing.assert_allclose(x.std(axis=0), 1.0, atol=0.03)


def test_to_raw_inverts_standardization(rng):
    d = Dist2D("pinwheel", standardize=True)
    raw = datasets2d._raw_sample(d, 100, np.random.default_rng(0))
    mu, sd = datasets2d.standardization(d)
    np.testing.assert_allclose(datasets2d.to_raw(d, (raw - mu) / sd), raw, atol=1e-12)


def test_empty_sample_shape(rng):
    assert datasets2d.sample(Dist2D("moons"), 0, rng).shape == (0, 2)
    with pytest.raises(ValueError):
        datasets2d.sample(Dist2D("moons"), -1, rng)


def test_gaussian_log_density_matches_scipy(rng):
    d = Dist2D("gaussian", mean=(1.0, -2.0), std=(0.5, 2.0))
    x = rng.standard_normal((50, 2))
    ref = multivariate_normal([1.0, -2.0], np.diag([0.25, 4.0])).logpdf(x)
    np.testing.assert_allclose(datasets2d.log_density_reference(d, x), ref, rtol=1e-12)


def test_mixture_log_density_matches_direct_sum(rng):
    comps = ((0.3, (0.0, 0.0), 1.0), (0.7, (3.0, 1.0), 0.5))
    d = Dist2D("gaussian-mixture", components=comps)
    x = rng.standard_normal((20, 2))
    direct = sum(w * multivariate_normal(mu, s**2 * np.eye(2)).pdf(x) for w, mu, s in comps)
    np.testing.assert_allclose(datasets2d.log_density_reference(d, x), np.log(direct), rtol=1e-10)
    with pytest.raises(NotImplementedError, match="histogram"):
        datasets2d.log_density_reference(Dist2D("checkerboard"), x)


def test_mixture_sampling_moments(rng):
    comps = ((0.5, (-2.0, 0.0), 0.1), (0.5, (2.0, 0.0), 0.1))
    x = datasets2d.sample(Dist2D("gaussian-mixture", components=comps), 20000, rng)
    assert abs(np.mean(x[:, 0] > 0) - 0.5) < 0.02


@pytest.mark.parametrize("kwargs", [dict(kind="spiral"), dict(kind="gaussian", std=(0.0, 1.0)),
                                    dict(kind="gaussian-mixture"),
                                    dict(kind="gaussian-mixture", components=((0.5, (0, 0), 1.0),))])
def test_invalid_distributions(kwargs):
    with pytest.raises(ValueError):
        Dist2D(**kwargs)


def test_dict_round_trip():
    for d in (Dist2D("gaussian", mean=(1.0, 2.0)), Dist2D("pinwheel", standardize=True),
              Dist2D("gaussian-mixture", components=((1.0, (0.0, 1.0), 0.3),))):
        assert Dist2D.from_dict(d.to_dict()) == d


def test_csv_round_trip(tmp_path, rng):
    x = rng.standard_normal((17, 2))
    path = tmp_path / "s.csv"
    datasets2d.write_samples_csv(path, x)
    np.testing.assert_array_equal(datasets2d.read_samples_csv(path), x)
    datasets2d.write_samples_csv(path, np.zeros((0, 2)))
    assert datasets2d.read_samples_csv(path).shape == (0, 2)
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        datasets2d.read_samples_csv(path)
