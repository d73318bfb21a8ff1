import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surflin.functional import (
    Assembler, EnergyBreakdown, IncompatibleLoadError, LoadConfig, LoadSpec, VariantTag,
    compatibility_scan, energy, energy_gradient, equilibrate, is_equilibrated,
    load_value, quadratic_hessian, rigid_load_values,
)
from surflin.grid import DisplacementField, GridConfig, build_space
from surflin.material import MaterialSpec
from surflin.solve import fd_check
from surflin.tensor import rotation2

ALL_TAGS = [VariantTag(f, r) for f in "GFI" for r in ("nonlinear", "linearized")]


def dilation(space):
    return DisplacementField(space, space.greville)


def tensile(space, s):
    return LoadSpec.from_affine(space, traction={"left": [(-s, 0, 0), (0, 0, 0)],
                                                 "right": [(s, 0, 0), (0, 0, 0)]})


def test_load_value_examples(unit_space):
    L = LoadSpec.from_affine(unit_space, body=[(1, 0, 0), (0, 0, 0)])
    one = unit_space.interpolate(lambda x: np.stack([np.ones(len(x)), np.zeros(len(x))], 1))
    assert load_value(L, unit_space.zeros()) == 0.0
    assert load_value(L, one) == pytest.approx(1.0, abs=1e-14)


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
def test_load_value_linear(alpha, beta, seed):
    space = build_space(GridConfig(nx=4, ny=4))
    rng = np.random.default_rng(seed)
    L = LoadSpec.from_affine(space, body=[(0.3, 1, -2), (0.1, 0, 0.5)],
                             traction={"top": [(1, 1, 0), (0, 0, 2)]})
    f = DisplacementField(space, rng.standard_normal(space.shape))
    g = DisplacementField(space, rng.standard_normal(space.shape))
    lhs = load_value(L, alpha * f + beta * g)
    rhs = alpha * load_value(L, f) + beta * load_value(L, g)
    assert lhs == pytest.approx(rhs, abs=1e-10 * (1 + abs(lhs)))


def test_equilibrate_constant_body_vanishes(unit_space):
    L = equilibrate(LoadSpec.from_affine(unit_space, body=[(1, 0, 0), (0, 0, 0)]), unit_space)
    np.testing.assert_allclose(L.body, 0.0, atol=1e-13)
    assert L.equilibrated and is_equilibrated(L, unit_space)


def test_equilibrate_pure_moment_vanishes(unit_space):
    # b = W (x - c) with c the centroid (0.5, 0.5)
    L = LoadSpec.from_affine(unit_space, body=[(0.5, 0, -1), (-0.5, 1, 0)])
    np.testing.assert_allclose(equilibrate(L, unit_space).body, 0.0, atol=1e-13)


def test_equilibrate_idempotent_and_keeps_traction(unit_space):
    rng = np.random.default_rng(0)
    t = unit_space.table
    L = LoadSpec(rng.standard_normal((len(t.interior.w), 2)), rng.standard_normal((len(t.boundary.w), 2)))
    L1 = equilibrate(L, unit_space)
    L2 = equilibrate(L1, unit_space)
    np.testing.assert_allclose(L2.body, L1.body, atol=1e-12)
    np.testing.assert_array_equal(L1.traction, L.traction)
    np.testing.assert_allclose(rigid_load_values(L1, unit_space), 0.0, atol=1e-12)


def test_compatibility_examples(unit_space):
    ok = compatibility_scan(tensile(unit_space, 1.0), unit_space)
    assert ok.is_compatible and ok.a == pytest.approx(1.0) and ok.s0_angles == (0.0,)
    assert not ok.full_circle and ok.max_g <= 1e-12
    bad = compatibility_scan(tensile(unit_space, -1.0), unit_space)
    assert not bad.is_compatible and bad.max_g == pytest.approx(2.0)
    zero = compatibility_scan(LoadSpec.zero(unit_space), unit_space)
    assert zero.is_compatible and zero.full_circle
    assert "full-circle" in zero.describe()


def test_compatibility_pure_moment_is_incompatible(unit_space):
    # a = 0, b_perp = 1 (not equilibrated): g(theta) = sin(theta) is positive somewhere
    L = LoadSpec.from_affine(unit_space, body=[(0, 0, 0), (0, 2, 0)])
    scan = compatibility_scan(L, unit_space)
    assert scan.b_perp == pytest.approx(2 / 3)
    assert not scan.is_compatible


def test_variant_tag_validation():
    with pytest.raises(ValueError):
        VariantTag("I", "limit")
    with pytest.raises(ValueError):
        VariantTag("X", "nonlinear")
    with pytest.raises(ValueError):
        VariantTag("G", "frozen")


def test_nonlinear_needs_eps(unit_space, material):
    with pytest.raises(ValueError):
        Assembler(unit_space, material, LoadSpec.zero(unit_space), VariantTag("G", "nonlinear"))


@pytest.mark.parametrize("tag", ALL_TAGS + [VariantTag("G", "limit"), VariantTag("F", "limit")], ids=str)
def test_zero_field_zero_energy_and_gradient(unit_space, material, tag):
    L = LoadSpec.zero(unit_space)
    e = energy(unit_space.zeros(), L, material, tag, 0.1)
    assert (e.bulk, e.hyper, e.surface, e.load, e.total) == (0.0, 0.0, 0.0, 0.0, 0.0)
    np.testing.assert_array_equal(energy_gradient(unit_space.zeros(), L, material, tag, 0.1), 0.0)


def test_dilation_benchmark(unit_space, material):
    L = LoadSpec.zero(unit_space)
    f = dilation(unit_space)
    g = energy(f, L, material, VariantTag("G", "linearized"))
    assert g.bulk == pytest.approx(4.0, rel=1e-13)
    assert g.surface == pytest.approx(4.0, rel=1e-13)
    assert g.hyper == pytest.approx(0.0, abs=1e-20)
    assert energy(f, L, material, VariantTag("F", "linearized")).surface == pytest.approx(16.0, rel=1e-13)
    assert energy(f, L, material, VariantTag("I", "linearized")).surface == pytest.approx(4.0, rel=1e-13)


@pytest.mark.parametrize("eps", [0.5, 0.1, 0.01])
def test_nonlinear_dilation(unit_space, material, eps):
    # cof(I + eps I) n = (1 + eps) n, so the rescaled surface density is exactly 1
    e = energy(dilation(unit_space), LoadSpec.zero(unit_space), material, VariantTag("G", "nonlinear"), eps)
    s = 1 + eps
    bulk = 0.5 * (2 * (s**2 - 1) / 2) ** 2 + 2 * ((s**2 - 1) / 2) ** 2
    assert e.bulk == pytest.approx(bulk / eps**2, rel=1e-12)
    assert e.surface == pytest.approx(4.0, rel=1e-12)


def test_total_identity(unit_space, material):
    rng = np.random.default_rng(2)
    L = tensile(unit_space, 0.1)
    for tag in ALL_TAGS:
        e = energy(DisplacementField(unit_space, 0.2 * rng.standard_normal(unit_space.shape)),
                   L, material, tag, 0.2)
        assert e.total == pytest.approx(e.bulk + e.hyper - e.load + e.surface, rel=1e-12)
        assert isinstance(e, EnergyBreakdown)


def test_rigid_modes_cost_nothing_linearized(unit_space, material):
    L = LoadSpec.zero(unit_space)
    W = np.array([[0.0, -0.7], [0.7, 0.0]])
    f = unit_space.interpolate(lambda x: x @ W.T + np.array([0.3, -1.2]))
    for fam in "GF":
        e = energy(f, L, material, VariantTag(fam, "linearized"))
        assert max(abs(e.bulk), abs(e.hyper), abs(e.surface)) <= 1e-12 * 4


@pytest.mark.parametrize("q", [2.0, 1.0, 1.5])
@pytest.mark.parametrize("tag", ALL_TAGS, ids=str)
def test_gradient_matches_finite_differences(tag, q):
    space = build_space(GridConfig(nx=5, ny=5, dirichlet_edges=("bottom",)))
    m = MaterialSpec(lam=0.8, mu=1.1, kappa=0.5, gamma=0.7, p=max(2.0, 2 * q / (q + 1)), q=q)
    L = LoadSpec.from_affine(space, body=[(0.05, 0, 0), (0, 0.02, 0)], traction={"right": [(0.1, 0, 0), (0, 0, 0)]})
    A = Assembler(space, m, L, tag, 0.15)
    c = 0.3 * np.random.default_rng(int(10 * q)).standard_normal(space.shape)
    assert fd_check(DisplacementField(space, c), A.objective, A.gradient, n=30) <= 1e-6
    assert not A.gradient(c)[~space.free_mask].any()


def test_limit_gradient_and_theta(unit_space, material):
    L = equilibrate(tensile(unit_space, 0.05), unit_space)
    A = Assembler(unit_space, material, L, VariantTag("G", "limit"))
    c = 0.2 * np.random.default_rng(9).standard_normal(unit_space.shape)
    assert fd_check(c, A.objective, A.gradient) <= 1e-6
    e = A.energy(c)
    assert e.load == pytest.approx(load_value(L, DisplacementField(unit_space, c)), rel=1e-13)
    assert A.last_theta == 0.0


def test_limit_full_circle_maximizes_rotated_load(unit_space, material):
    # b = (x2 - 1/2, x1 - 1/2) is equilibrated with L(x) = 0, so every rotation is admissible
    L = LoadSpec.from_affine(unit_space, body=[(-0.5, 0, 1), (-0.5, 1, 0)])
    assert is_equilibrated(L, unit_space)
    A = Assembler(unit_space, material, L, VariantTag("F", "limit"))
    assert A.scan.full_circle
    f = unit_space.interpolate(lambda x: np.stack([x[:, 0] ** 2, x[:, 1] ** 3], 1))
    Jf = unit_space.interpolate(lambda x: np.stack([-x[:, 1] ** 3, x[:, 0] ** 2], 1))
    l1, l2 = load_value(L, f), load_value(L, Jf)
    assert abs(l2) > 1e-3
    e = A.energy(f.coeffs)
    assert e.load == pytest.approx(np.hypot(l1, l2), rel=1e-12)
    assert A.last_theta == pytest.approx(np.arctan2(l2, l1), abs=1e-10)


def test_limit_refuses_incompatible(unit_space, material):
    with pytest.raises(IncompatibleLoadError) as info:
        Assembler(unit_space, material, tensile(unit_space, -0.05), VariantTag("G", "limit"))
    assert info.value.scan.max_g > 0
    assert "max over rotations" in str(info.value)


@pytest.mark.parametrize("fam", "GF")
def test_nonlinear_frame_indifference(unit_space, material, fam):
    eps, R = 0.2, rotation2(0.4)
    L = LoadSpec.zero(unit_space)
    v = unit_space.interpolate(lambda x: np.stack([np.sin(x[:, 0]) * x[:, 1], 0.5 * x[:, 0] ** 2], 1))
    # v_R = (R (x + eps v) - x) / eps on coefficients (the identity map has Greville coefficients)
    X = unit_space.greville
    cR = (np.einsum("ij,j...->i...", R, X + eps * v.coeffs) - X) / eps
    e0 = energy(v, L, material, VariantTag(fam, "nonlinear"), eps)
    e1 = energy(DisplacementField(unit_space, cR), L, material, VariantTag(fam, "nonlinear"), eps)
    assert e1.bulk == pytest.approx(e0.bulk, rel=1e-11)
    assert e1.hyper == pytest.approx(e0.hyper, rel=1e-11)
    assert e1.surface == pytest.approx(e0.surface, rel=1e-10, abs=1e-14)


def test_family_I_not_frame_indifferent(unit_space, material):
    eps, R = 0.2, rotation2(0.4)
    L = LoadSpec.zero(unit_space)
    X = unit_space.greville
    cR = (np.einsum("ij,j...->i...", R, X) - X) / eps
    e = energy(DisplacementField(unit_space, cR), L, material, VariantTag("I", "nonlinear"), eps)
    assert e.surface > 1.0


def test_quadratic_hessian_reproduces_linearized_energy(unit_space, material):
    c = np.random.default_rng(4).standard_normal(unit_space.shape)
    K = quadratic_hessian(unit_space, material)
    e = energy(DisplacementField(unit_space, c), LoadSpec.zero(unit_space), material, VariantTag("G", "linearized"))
    assert 0.5 * c.ravel() @ (K @ c.ravel()) == pytest.approx(e.total, rel=1e-11)


def test_threads_do_not_change_bits(material):
    space = build_space(GridConfig(nx=12, ny=12, dirichlet_edges=("left",)))
    L = LoadSpec.from_affine(space, body=[(0.05, 0, 0), (0, 0.02, 0)])
    c = np.random.default_rng(1).standard_normal(space.shape)
    out = []
    for threads in (1, 4):
        A = Assembler(space, material, L, VariantTag("G", "nonlinear"), 0.1, threads)
        out.append(A.value_and_grad(c))
        A.close()
    assert out[0][0] == out[1][0]
    assert np.array_equal(out[0][1], out[1][1])


def test_load_config_build_and_validation(unit_space):
    cfg = LoadConfig(body=((1, 0, 0), (0, 0, 0)), traction={"right": ((1, 0, 0), (0, 0, 0))}, equilibrate=True)
    assert cfg.traction[0][0] == "right"
    L = cfg.build(unit_space)
    assert is_equilibrated(L, unit_space)
    with pytest.raises(ValueError):
        LoadConfig(traction={"middle": ((0, 0, 0), (0, 0, 0))})
    with pytest.raises(ValueError):
        LoadConfig(body=((0, 0),))


def test_kinks_counted_for_q1(unit_space):
    m = MaterialSpec(q=1.0)
    A = Assembler(unit_space, m, LoadSpec.zero(unit_space), VariantTag("G", "linearized"))
    e, g = A.value_and_grad(np.zeros(unit_space.shape))
    assert A.last_kinks == len(unit_space.table.boundary.w)
    assert e.surface == 0.0 and not g.any()
