import numpy as np
import pytest

from faceobf.composite import forward
from faceobf.extractor import BuiltinEmbedder
from faceobf.gradient import Objective
from faceobf.optimizer import LbfgsConfig, LbfgsState, lbfgs_minimize, optimize, strong_wolfe
from faceobf.params import FIXED_FAMILIES, flatten
from faceobf.rng import init_parameters
from faceobf.image import make_grid


def quadratic(c, dvec):
    def fun(x):
        r = x - c
        return 0.5 * float(r @ (dvec * r)), dvec * r, None
    return fun


@pytest.mark.parametrize("seed", range(5))
def test_box_projected_quadratic(seed):
    r = np.random.default_rng(seed)
    n = 40
    c = r.normal(scale=2, size=n)
    dvec = r.uniform(0.5, 20, size=n)
    lo, hi = -np.ones(n), np.ones(n)
    cfg = LbfgsConfig(max_iters=50, ftol=0.0, gtol=1e-12)
    res = lbfgs_minimize(quadratic(c, dvec), r.uniform(-1, 1, n), lo, hi, cfg)
    assert res.iterations <= 50
    assert np.max(np.abs(res.x - np.clip(c, lo, hi))) < 1e-6


def test_unconstrained_rosenbrock():
    def fun(x):
        a, b = x
        f = (1 - a) ** 2 + 100 * (b - a * a) ** 2
        g = np.array([-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)])
        return f, g, None
    res = lbfgs_minimize(fun, np.array([-1.2, 1.0]), config=LbfgsConfig(max_iters=200, ftol=0))
    assert np.allclose(res.x, [1, 1], atol=1e-5)


def test_curvature_guard():
    st = LbfgsState(3)
    assert not st.push(np.array([1.0, 0.0]), np.array([-1.0, 0.0]))
    for k in range(5):
        assert st.push(np.array([1.0, k]), np.array([2.0, k]))
    assert len(st.pairs) == 3


def test_strong_wolfe_point():
    def phi(a):
        return (a - 2.0) ** 2, 2 * (a - 2.0), a
    a, f, _, ok, _ = strong_wolfe(phi, 4.0, -4.0, 1.0)
    assert ok
    assert f <= 4.0 + 1e-4 * a * -4.0 and abs(2 * (a - 2)) <= 0.9 * 4.0


@pytest.fixture(scope="module")
def small_job():
    from faceobf.synthetic import synthetic_face
    img = synthetic_face(56, 56, 2)
    grid = make_grid(56, 56, 7, 7)
    return img, grid, init_parameters(grid, 2), BuiltinEmbedder()


def test_disabled_energies_return_p0(small_job):
    img, grid, p0, ext = small_job
    best, hist = optimize(img, grid, p0, [ext], energies=())
    assert best == p0 and len(hist) == 1 and hist[0].total == 0.0


def test_iterates_feasible(small_job):
    img, grid, p0, ext = small_job
    obj = Objective(img, grid, p0, [ext])
    idx = obj.index
    seen = []

    def fun(v):
        f, g = obj.value_and_grad(v)
        return f, g, None
    lbfgs_minimize(fun, obj.x0(), idx.lower, idx.upper,
                   callback=lambda it, x, f, g, info: seen.append(x.copy()))
    assert len(seen) > 1
    for v in seen:
        assert np.all(v >= idx.lower) and np.all(v <= idx.upper)


def test_optimize_properties(small_job):
    img, grid, p0, ext = small_job
    obj = Objective(img, grid, p0, [ext])
    best, hist = optimize(img, grid, p0, [ext], objective=obj)
    idx = obj.index
    v = flatten(best, idx)[0]
    assert np.all(v >= idx.lower) and np.all(v <= idx.upper)
    totals = [h.total for h in hist]
    running = np.minimum.accumulate(totals)
    assert np.all(np.diff(running) <= 0)
    assert obj.value(v) == pytest.approx(running[-1], rel=1e-12)
    for fam in FIXED_FAMILIES:
        assert np.array_equal(getattr(best, fam), getattr(p0, fam))
    assert min(h.md for h in hist) < hist[0].md


def test_optimize_deterministic(small_job):
    img, grid, p0, ext = small_job
    cfg = LbfgsConfig(max_iters=5)
    a, ha = optimize(img, grid, p0, [ext], cfg)
    b, hb = optimize(img, grid, p0, [ext], cfg)
    assert a == b
    assert [h.to_dict() for h in ha] == [h.to_dict() for h in hb]
    assert np.array_equal(forward(img, grid, a).i_out, forward(img, grid, b).i_out)
