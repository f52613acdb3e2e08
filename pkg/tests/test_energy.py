import numpy as np
import pytest

from faceobf.energy import (color_hinge, color_hinge_grad, energy_c, energy_c_grad, energy_md,
                            energy_total, energy_u, energy_u_grad, feature_terms,
                            uniform_hinge, uniform_hinge_grad)
from faceobf.params import ParameterSet


def saturated(m=2, n=2):
    p = ParameterSet.neutral(m, n)
    return p.replace(theta4=np.full((m - 1, n - 1, 2), 0.3),
                     theta7=np.full((m, n, 3), 0.5),
                     theta8=np.full((m, n, 3), 1.1))


def test_energy_u_examples():
    p = saturated()
    assert energy_u(p) == 0.0
    t7 = p.theta7.copy()
    t7[1, 0, 2] = 0.04
    assert energy_u(p.replace(theta7=t7)) == pytest.approx(0.06, abs=1e-15)
    assert energy_u(p.replace(theta5=np.zeros((2, 2, 3)))) == 0.0


@pytest.mark.parametrize("theta,grad", [(0.04, -1.0), (-0.04, 1.0), (0.0, 0.0),
                                        (0.1, 0.0), (-0.1, 0.0), (0.2, 0.0)])
def test_uniform_grad_branches(theta, grad):
    assert uniform_hinge_grad(np.array([theta]), 0.1)[0] == grad


@pytest.mark.parametrize("theta,e,g", [(1.0, 0.0, 0.0), (1.02, 0.03, -1.0), (1.08, 0.0, 0.0),
                                       (0.98, 0.98 - 1 / 1.05, 1.0), (1.05, 0.0, 0.0),
                                       (1 / 1.05, 0.0, 0.0), (0.93, 0.0, 0.0)])
def test_color_examples(theta, e, g):
    assert color_hinge(np.array([theta]), 1.05)[0] == pytest.approx(e, abs=1e-15)
    assert color_hinge_grad(np.array([theta]), 1.05)[0] == g


def test_energy_grads_by_family():
    p = saturated()
    t7 = p.theta7.copy()
    t7[0, 0, 0] = -0.02
    gu = energy_u_grad(p.replace(theta7=t7))
    assert gu["theta7"][0, 0, 0] == 1.0 and np.count_nonzero(gu["theta7"]) == 1
    assert not np.any(gu["theta5"])
    t8 = p.theta8.copy()
    t8[1, 1, 1] = 1.01
    q = p.replace(theta8=t8)
    assert energy_c(q) == pytest.approx(0.04, abs=1e-15)
    assert energy_c_grad(q)["theta8"][1, 1, 1] == -1.0


def test_feature_terms():
    f = np.array([0.3, -0.4, 0.5])
    d, s, gd, gs = feature_terms(f, f)
    assert d == 0 and s == pytest.approx(0, abs=1e-15) and not gd.any()
    d, s, _, _ = feature_terms(2 * f, f)
    assert s == pytest.approx(0.0, abs=1e-15) and d == pytest.approx(np.linalg.norm(f))
    d, s, _, gs = feature_terms(np.zeros(3), f)
    assert s == 1.0 and not gs.any()


def test_cosine_scale_invariant(rng):
    a, b = rng.normal(size=10), rng.normal(size=10)
    s = feature_terms(a, b)[1]
    assert feature_terms(3.7 * a, b)[1] == pytest.approx(s, abs=1e-14)
    assert feature_terms(a, 0.2 * b)[1] == pytest.approx(s, abs=1e-14)


def test_feature_gradients_fd(rng):
    a, b = rng.normal(size=6), rng.normal(size=6)
    _, _, gd, gs = feature_terms(a, b)
    h = 1e-6
    for i in range(6):
        e = np.zeros(6)
        e[i] = h
        fp, fm = feature_terms(a + e, b), feature_terms(a - e, b)
        assert gd[i] == pytest.approx((fp[0] - fm[0]) / (2 * h), abs=1e-8)
        assert gs[i] == pytest.approx((fp[1] - fm[1]) / (2 * h), abs=1e-8)


def test_energy_md_additive(embedder, img56, rng):
    other = np.clip(img56 + 0.1 * rng.normal(size=img56.shape), 0, 1)
    f_in = embedder.extract(img56)
    d1, s1, _ = energy_md([embedder], other, [f_in])
    d2, s2, _ = energy_md([embedder, embedder], other, [f_in, f_in])
    assert d2 == pytest.approx(2 * d1) and s2 == pytest.approx(2 * s1)
    assert energy_md([embedder], img56, [f_in])[:2] == (0.0, pytest.approx(0.0, abs=1e-15))
    dw, sw, _ = energy_md([embedder], other, [f_in], weights=[0.5])
    assert dw == pytest.approx(0.5 * d1)


def test_energy_total():
    r = energy_total(0.1, 0.2, 0.3, 0.4)
    assert r.total == pytest.approx(1.0, abs=1e-12)
    r = energy_total(0.1, 0.2, 0.3, 0.4, enabled=("D",))
    assert r.total == 0.3 and r.e_u == 0.0 and r.enabled == ("D",)
    assert energy_total(0.1, 0.2, 0.3, 0.4, enabled=()).total == 0.0
    assert r.to_dict()["enabled"] == ["D"]
