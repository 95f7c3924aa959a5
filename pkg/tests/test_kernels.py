import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multiteach.errors import InputError
from multiteach.kernels import (
    Grid,
    KernelAtom,
    KernelSpec,
    SampledFunction,
    VectorValuedFunction,
    apply_atom,
    disagreement,
    eval_functional,
    eval_functional_gradient,
    kernel_eval,
)

finite = st.floats(-50, 50, allow_nan=False)


def rbf_oracle(x, y, b):
    # written out independently of KernelSpec
    return math.exp(-sum(((a - c) / b) ** 2 for a, c in zip(x, y)))


def test_kernel_identity_point():
    assert kernel_eval(KernelSpec(), 0.0, 0.0) == 1.0


def test_kernel_one_dim_value():
    assert kernel_eval(KernelSpec(2.0), 0.0, 2.0) == pytest.approx(math.exp(-1), abs=1e-12)
    assert kernel_eval(KernelSpec(2.0), 0.0, 2.0) == pytest.approx(0.367879, abs=1e-6)


def test_kernel_two_dim_value():
    assert kernel_eval(KernelSpec(2.0), (0, 0), (2, 2)) == pytest.approx(0.135335, abs=1e-6)


def test_kernel_rejects_dimension_mismatch():
    with pytest.raises(InputError):
        kernel_eval(KernelSpec(), (0.0, 1.0), (0.0,))


def test_kernel_rejects_bad_divisor():
    with pytest.raises(InputError):
        KernelSpec(0.0)
    with pytest.raises(InputError):
        KernelSpec(float("nan"))


@given(st.lists(finite, min_size=2, max_size=2), st.lists(finite, min_size=2, max_size=2),
       st.floats(0.1, 10))
def test_kernel_symmetric_bounded_and_matches_oracle(x, y, b):
    spec = KernelSpec(b)
    k = kernel_eval(spec, x, y)
    assert k == kernel_eval(spec, y, x)
    assert 0.0 <= k <= 1.0
    assert k == pytest.approx(rbf_oracle(x, y, b), rel=1e-12, abs=1e-300)


def test_kernel_column_matches_pointwise():
    g = Grid.image(3, 4)
    spec = KernelSpec.in_pixels(2.0, g)
    col = spec.column(g, g.point(5))
    for j in range(g.size):
        assert col[j] == pytest.approx(kernel_eval(spec, g.point(5), g.point(j)), rel=1e-14)


def test_in_pixels_scales_by_spacing():
    g = Grid.image(32, 32)
    spec = KernelSpec.in_pixels(2.0, g)
    # two pixel steps apart gives exp(-1)
    assert kernel_eval(spec, g.point(0), g.point(2)) == pytest.approx(math.exp(-1), rel=1e-12)


def test_grid_validation():
    with pytest.raises(InputError):
        Grid(np.array([[0.0], [0.0]]))
    with pytest.raises(InputError):
        Grid(np.array([[0.0], [np.nan]]))
    g = Grid.linspace(0, 2, 3)
    assert g.index_of(1.0) == 1
    with pytest.raises(InputError):
        g.index_of(0.5)


def test_image_grid_is_row_major():
    g = Grid.image(2, 3)
    assert g.shape == (2, 3)
    np.testing.assert_allclose(g.point(4), [1 / 2, 1 / 2])  # row 1, col 1
    np.testing.assert_allclose(g.point(2), [0.0, 1.0])


def test_sampled_function_validation():
    g = Grid.linspace(0, 1, 3)
    with pytest.raises(InputError):
        SampledFunction(g, [0.0, 1.0])
    with pytest.raises(InputError):
        SampledFunction(g, [0.0, np.inf, 1.0])


def line(values, grid=None):
    grid = grid or Grid.linspace(0, len(values) - 1, len(values))
    return SampledFunction(grid, np.asarray(values, dtype=float))


def test_eval_functional_examples():
    g = Grid.linspace(0, 3, 4)
    x = g.coords[:, 0]
    assert eval_functional(VectorValuedFunction((SampledFunction(g, x),)), [2.0]) == 2.0
    vf = VectorValuedFunction.on_grid(g, [x, 2 * x])
    assert eval_functional(vf, [1.0, 3.0]) == 7.0
    zero = VectorValuedFunction.on_grid(g, np.zeros((3, 4)))
    assert eval_functional(zero, [0.0, 1.0, 3.0]) == 0.0


def test_eval_functional_rejects_off_grid():
    vf = VectorValuedFunction((line([0, 1, 2]),))
    with pytest.raises(InputError):
        eval_functional(vf, [0.5])


def test_eval_functional_gradient_atoms():
    atoms = eval_functional_gradient([0.0, 1.0])
    assert [a.learner_index for a in atoms] == [0, 1]
    assert [a.center for a in atoms] == [(0.0,), (1.0,)]
    assert all(a.coefficient == 1.0 for a in atoms)


def test_atom_pairs_with_functional():
    g = Grid.linspace(-1, 1, 3)
    f = SampledFunction(g, np.zeros(3))
    (atom,) = eval_functional_gradient([0.0])
    out = apply_atom(f, atom, KernelSpec(), -1.0)
    assert out(0.0) == 1.0  # K(x, x) = 1


def test_apply_atom_example():
    g = Grid.linspace(-1, 1, 3)
    f = SampledFunction(g, np.zeros(3))
    out = apply_atom(f, KernelAtom(0, (0.0,), 2.0), KernelSpec(2.0), 0.5)
    assert out(0.0) == pytest.approx(-1.0, abs=1e-15)
    assert out(1.0) == pytest.approx(-math.exp(-0.25), abs=1e-12)
    assert out(1.0) == pytest.approx(-0.778801, abs=1e-6)
    assert out(-1.0) == out(1.0)


def test_apply_atom_zero_step_or_coefficient():
    f = line([1.0, -2.0, 3.0])
    assert np.array_equal(apply_atom(f, KernelAtom(0, (1.0,), 5.0), KernelSpec(), 0.0).values, f.values)
    assert np.array_equal(apply_atom(f, KernelAtom(0, (1.0,), 0.0), KernelSpec(), 0.3).values, f.values)


def test_apply_atom_off_grid_center_is_allowed():
    out = apply_atom(line([0, 0, 0]), KernelAtom(0, (0.5,), 1.0), KernelSpec(1.0), 1.0)
    assert out(0.0) == pytest.approx(-math.exp(-0.25)) and out(1.0) == out(0.0)


def test_apply_atom_rejects_nonfinite_step():
    with pytest.raises(InputError):
        apply_atom(line([0, 0, 0]), KernelAtom(0, (1.0,), 1.0), KernelSpec(), float("inf"))


def test_apply_atom_does_not_mutate():
    f = line([0.0, 0.0, 0.0])
    apply_atom(f, KernelAtom(0, (1.0,), 1.0), KernelSpec(), 1.0)
    assert not f.values.any()


def test_disagreement_examples():
    g = Grid.linspace(0, 1, 5)
    a = VectorValuedFunction.on_grid(g, np.zeros((2, 5)))
    assert disagreement(a, a) == 0.0
    c = 0.7
    b = VectorValuedFunction.on_grid(g, np.full((2, 5), c))
    assert disagreement(a, b) == pytest.approx(c / math.sqrt(10), rel=1e-14)
    one = Grid(np.array([[0.0]]))
    assert disagreement(
        VectorValuedFunction((SampledFunction(one, [0.0]),)),
        VectorValuedFunction((SampledFunction(one, [3.0]),)),
    ) == pytest.approx(3.0)


def test_disagreement_matches_formula():
    rng = np.random.default_rng(0)
    g = Grid.linspace(0, 1, 7)
    F, T = rng.normal(size=(3, 7)), rng.normal(size=(3, 7))
    expected = math.sqrt(sum((F[i, j] - T[i, j]) ** 2 for i in range(3) for j in range(7))) / 21
    got = disagreement(VectorValuedFunction.on_grid(g, F), VectorValuedFunction.on_grid(g, T))
    assert got == pytest.approx(expected, rel=1e-13)


def test_disagreement_rejects_mismatch():
    a = VectorValuedFunction((line([0, 1, 2]),))
    b = VectorValuedFunction((line([0, 1, 2]), line([0, 1, 2])))
    with pytest.raises(InputError):
        disagreement(a, b)
    c = VectorValuedFunction((line([0, 1, 2], Grid.linspace(0, 1, 3)),))
    with pytest.raises(InputError):
        disagreement(a, c)


arrays = st.lists(st.floats(-10, 10, allow_nan=False), min_size=4, max_size=4)


@given(arrays, arrays, arrays)
def test_disagreement_is_a_metric(x, y, z):
    g = Grid.linspace(0, 1, 4)
    f = [VectorValuedFunction.on_grid(g, [v]) for v in (x, y, z)]
    dxy, dyx = disagreement(f[0], f[1]), disagreement(f[1], f[0])
    assert dxy == dyx >= 0
    assert disagreement(f[0], f[0]) == 0
    assert disagreement(f[0], f[2]) <= dxy + disagreement(f[1], f[2]) + 1e-12
