"""Interaction-function registry."""

import math

import numpy as np
import pytest
from scipy import integrate

from matern_thinning import make_interaction, registry_ids
from matern_thinning.interactions import CUTOFF_THRESHOLD


def test_registry_lists_all_families():
    ids = registry_ids()
    for required in ("hardcore", "strauss", "example1", "example2",
                     "softshell", "marksum_hardcore", "fc", "constant"):
        assert required in ids
    with pytest.raises(ValueError, match="unknown interaction"):
        make_interaction("nope")


@pytest.mark.parametrize("id,params,marked", [
    ("hardcore", {"R": 1.2}, False),
    ("strauss", {"f0": 0.4, "R": 0.8}, False),
    ("example1", {"a": 0.5, "R": 1.0}, False),
    ("example2", {"a": 2.0}, False),
    ("softshell", {"R": 0.6, "a": 6.3, "b": 0.4}, False),
    ("marksum_hardcore", {}, True),
    ("fc", {"c": 20.0}, True),
    ("constant", {"p": 0.5}, False),
])
def test_values_in_unit_interval(id, params, marked):
    f = make_interaction(id, **params)
    assert f.marked is marked
    r = np.linspace(0.0, 8.0, 400)
    vals = f(r, 0.3, 0.5) if marked else f(r)
    assert np.all(vals >= 0.0) and np.all(vals <= 1.0)


def test_marked_symmetry():
    for f in (make_interaction("marksum_hardcore"), make_interaction("fc", c=5.0)):
        r = np.linspace(0.0, 3.0, 50)
        assert np.array_equal(f(r, 0.2, 0.9), f(r, 0.9, 0.2))


def test_cutoffs_bound_the_tail():
    cases = [(make_interaction("hardcore", R=1.5), None),
             (make_interaction("example1", a=0.5, R=1.0), None),
             (make_interaction("example2", a=2.0), None),
             (make_interaction("softshell", R=0.6, a=6.3, b=0.4), None),
             (make_interaction("fc", c=20.0), (0.3, 0.4))]
    for f, marks in cases:
        c = f.cutoff(*(marks or ()))
        assert math.isfinite(c) and c > 0
        r_past = np.linspace(c * 1.0001, c * 3, 50)
        vals = f(r_past, *marks) if marks else f(r_past)
        assert np.all(vals <= CUTOFF_THRESHOLD * 1.01)


def test_constant_has_infinite_cutoff():
    f = make_interaction("constant", p=0.5)
    assert math.isinf(f.cutoff())
    assert float(f(np.array([1e9]))[0]) == 0.5


def test_closed_tail_integrals_match_quadrature():
    def quad_tail(sl, d):
        return integrate.quad(lambda r: float(sl(np.array([r]))[0]) * r ** (d - 1),
                              0.0, sl.cutoff, limit=200,
                              points=[b for b in sl.breakpoints if b < sl.cutoff]
                              or None, epsabs=1e-14, epsrel=1e-12)[0]

    hc = make_interaction("hardcore", R=1.3)
    for d in (1, 2, 3):
        assert hc.closed_tail_integral(d) == pytest.approx(1.3 ** d / d, rel=1e-14)
        assert quad_tail(hc.slice(), d) == pytest.approx(1.3 ** d / d, rel=1e-10)

    st = make_interaction("strauss", f0=0.4, R=0.8)
    assert st.closed_tail_integral(2) == pytest.approx(0.4 * 0.32, rel=1e-14)

    # the soft/hard-core blend integrates to R^2/2 in the plane for every a
    for a in (0.0, 0.3, 0.9):
        x1 = make_interaction("example1", a=a, R=1.0)
        assert x1.closed_tail_integral(2) == pytest.approx(0.5, rel=1e-12)
        assert quad_tail(x1.slice(), 2) == pytest.approx(0.5, rel=1e-8)

    ms = make_interaction("marksum_hardcore")
    assert ms.closed_tail_integral(3, 0.2, 0.3) == pytest.approx(0.5 ** 3 / 3)

    # the aggregative family has no closed tail; in the plane the
    # quadrature value is exactly 1/2 for every a
    for a in (0.5, 2.0, 8.0):
        x2 = make_interaction("example2", a=a)
        assert x2.closed_tail_integral(2) is None
        assert quad_tail(x2.slice(), 2) == pytest.approx(0.5, rel=1e-9)


def test_example1_domain_and_hardcore_limit():
    with pytest.raises(ValueError, match="a in \\[0, R\\]"):
        make_interaction("example1", a=1.5, R=1.0)
    limit = make_interaction("example1", a=1.0, R=1.0)
    hard = make_interaction("hardcore", R=1.0)
    r = np.linspace(0.0, 2.0, 101)
    assert np.array_equal(limit(r), hard(r))


def test_example1_continuity_at_a():
    f = make_interaction("example1", a=0.6, R=1.0)
    assert float(f(np.array([0.6]))[0]) == pytest.approx(1.0)
    assert float(f(np.array([0.6 + 1e-12]))[0]) == pytest.approx(1.0, abs=1e-10)


def test_example2_shape():
    f = make_interaction("example2", a=2.0)
    assert float(f(np.array([0.0]))[0]) == 0.0
    peak = float(f(np.array([1.0]))[0])   # r = sqrt(a/2)
    assert peak == pytest.approx(math.exp(-1.0), rel=1e-12)


def test_fc_continuity_and_tail():
    f = make_interaction("fc", c=10.0)
    m, n = 0.2, 0.3
    assert float(f(np.array([0.5]), m, n)[0]) == pytest.approx(1.0)
    assert float(f(np.array([0.6]), m, n)[0]) == pytest.approx(math.exp(-1.0))


def test_parameter_validation():
    with pytest.raises(ValueError):
        make_interaction("hardcore", R=0.0)
    with pytest.raises(ValueError):
        make_interaction("strauss", f0=1.0, R=1.0)
    with pytest.raises(ValueError):
        make_interaction("softshell", R=1.0, a=0.5, b=1.0)
    with pytest.raises(ValueError):
        make_interaction("constant", p=0.0)


def test_slice_freezes_marks():
    f = make_interaction("marksum_hardcore")
    sl = f.slice(0.2, 0.3)
    assert sl.cutoff == pytest.approx(0.5)
    assert float(sl(np.array([0.49]))[0]) == 1.0
    assert float(sl(np.array([0.51]))[0]) == 0.0
    with pytest.raises(ValueError, match="requires marks"):
        f.slice()
