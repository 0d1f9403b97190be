import math
from fractions import Fraction

import numpy as np
import pytest

from kpsm.kgraph import Kind, KGraph, wedge
from kpsm.weights import (
    TWO_PI,
    PropagatorKind,
    RawGraph,
    SingularConfiguration,
    Weight,
    angle,
    exact_weight,
    mc_weight,
    propagator_form,
    propagator_identity_residuals,
    weight_table,
)

QUADRANT = [PropagatorKind.S1, PropagatorKind.S2, PropagatorKind.A1, PropagatorKind.A2]


def test_identity_residuals_are_tiny():
    res = propagator_identity_residuals(1000, seed=9)
    assert all(v < 1e-12 for k, v in res.items() if k != "a1-chain-rule")
    assert res["a1-chain-rule"] < 1e-9


def test_kontsevich_angle_at_the_boundary():
    # arguments are (head, tail); a tail on the real axis gives angle zero
    assert abs(angle("kontsevich", 1j, 2 + 0j)) < 1e-15
    assert abs(angle("kontsevich", 2 + 0j, 1j)) > 0.5
    assert abs(angle("kontsevich", 0.3 + 0.5j, 0.3 + 0.5j + 1e-3j)) > 0


def test_singular_points_raise():
    with pytest.raises(SingularConfiguration):
        angle("kontsevich", 1j, 1j)
    with pytest.raises(SingularConfiguration):
        angle("s1", -1 + 1j, 1j)


@pytest.mark.parametrize("kind", [PropagatorKind.KONTSEVICH] + QUADRANT)
def test_form_is_closed_on_small_loops(kind):
    rng = np.random.default_rng(4)
    for _ in range(20):
        u = complex(*rng.uniform(0.5, 2.0, 2))
        v = complex(*rng.uniform(0.5, 2.0, 2))
        if abs(u - v) < 0.3:
            continue
        for moving in (0, 1):
            circ = 0.0
            n, rad = 400, 0.05
            for k in range(n):
                t = TWO_PI * k / n
                z = (u if moving == 0 else v) + rad * complex(math.cos(t), math.sin(t))
                dz = rad * complex(-math.sin(t), math.cos(t)) * TWO_PI / n
                a, b = (z, v) if moving == 0 else (u, z)
                p = propagator_form(kind, a, b)
                dre, dim_ = (p[0], p[1]) if moving == 0 else (p[2], p[3])
                circ += dre * dz.real + dim_ * dz.imag
            assert abs(circ) < 1e-6


def test_wedge_estimate():
    w = mc_weight(wedge(), "kontsevich", 2 * 10**5, seed=1)
    assert abs(w.mean - 0.5) < 4 * w.stderr


def test_seed_determinism():
    a = mc_weight(wedge(), "kontsevich", 50_000, seed=42)
    b = mc_weight(wedge(), "kontsevich", 50_000, seed=42)
    c = mc_weight(wedge(), "kontsevich", 50_000, seed=43)
    assert (a.mean, a.stderr) == (b.mean, b.stderr)
    assert a.mean != c.mean


def test_stderr_scales_with_sample_count():
    target = 1 / math.sqrt(2)
    # smooth integrand: every seed
    for seed in range(10):
        r = mc_weight(wedge(), "kontsevich", 40_000, seed).stderr / mc_weight(wedge(), "kontsevich", 20_000, seed).stderr
        assert target / 1.2 <= r <= target * 1.2
    # singular order-2 integrand: the sample variance is heavy tailed, so average over seeds
    g = KGraph((Kind.GROUND_F,) * 2, (Kind.PI, Kind.PI), ((0, 3), (0, 1)))
    ratios = [mc_weight(g, "kontsevich", 40_000, s).stderr / mc_weight(g, "kontsevich", 20_000, s).stderr
              for s in range(10)]
    assert target / 1.2 <= sum(ratios) / len(ratios) <= target * 1.2


def test_too_few_samples():
    with pytest.raises(ValueError):
        mc_weight(wedge(), "kontsevich", 100)


def test_exact_table_and_signs():
    assert exact_weight(wedge()) == Fraction(1, 2)
    assert exact_weight(wedge().reverse(0)) == Fraction(-1, 2)
    table = weight_table(2)
    assert len(table) >= 8
    assert all(isinstance(v, Fraction) for v in table.values())


def test_weight_record_roundtrip():
    w = Weight("2;0;P:0,1", Fraction(1, 2), 0.501, 0.001, 10**6, 3)
    assert Weight.from_json(w.to_json()) == w
    assert w.consistent()
    assert not Weight("g", Fraction(0), 0.1, 0.01).consistent()


def test_raw_graph_ground_edges():
    g = RawGraph(1, [(0,)], ground_edges=[(0, 1)])
    assert str(g) == "1;raw;0;from-ground=0>1"
    with pytest.raises(ValueError):
        RawGraph(1, [(0,)], ground_edges=[(0, 0)])


def test_equal_condition_kernels_vanish_while_mixed_does_not():
    from kpsm.bfv_ops import c2_corner_graphs

    g = c2_corner_graphs()["two-pi-one-ground"]
    for kind in ("a1", "a2"):
        w = mc_weight(g, kind, 20_000, seed=2)
        assert abs(w.mean) <= 3 * w.stderr + 1e-12
    mixed = mc_weight(g, "s1", 20_000, seed=2)
    assert abs(mixed.mean) > 5 * mixed.stderr
