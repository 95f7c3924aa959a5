import math
import warnings

import numpy as np
import pytest

from multiteach.communication import CommPolicy
from multiteach.engine import (
    LossSpec,
    SamplingDistribution,
    StepSizes,
    TeachingConfig,
    TeachingExample,
    TeachingRound,
    descent_diagnostic,
    functional_gradient,
    iteration_bound,
    iterations_to_threshold,
    learner_rng,
    learner_update,
    loss_value_and_grad,
    multi_loss,
    run_sequential,
    run_teaching,
    select_gft,
    select_gft_indices,
    select_rft,
    teacher_examples,
)
from multiteach.errors import InputError
from multiteach.kernels import Grid, KernelSpec, SampledFunction, VectorValuedFunction
from multiteach import targets as tg


def central_diff(fn, x, h=1e-6):
    return (fn(x + h) - fn(x - h)) / (2 * h)


def vec(grid, *rows):
    return VectorValuedFunction.on_grid(grid, np.array(rows, dtype=float))


# --- loss --------------------------------------------------------------------


@pytest.mark.parametrize("pred,y,loss,grad", [(1, 1, 0, 0), (3, 1, 4, 4), (0.5, 1, 0.25, -1)])
def test_loss_value_and_grad_examples(pred, y, loss, grad):
    assert loss_value_and_grad(pred, y) == pytest.approx((loss, grad))
    fd = central_diff(lambda p: (y - p) ** 2, pred)
    assert loss_value_and_grad(pred, y)[1] == pytest.approx(fd, abs=1e-6)


def test_multi_loss_examples():
    g = Grid.linspace(0, 1, 2)
    f = vec(g, [1.0, 0.0], [0.0, 0.0])
    exact = (TeachingExample(0, 0.0, 1.0), TeachingExample(1, 1.0, 0.0))
    assert multi_loss(f, exact) == 0.0
    ex = (TeachingExample(0, 0.0, 0.0), TeachingExample(1, 1.0, 2.0))
    assert multi_loss(f, ex) == 5.0
    f2 = vec(g, [7.0, 0.0], [1.0, 0.0])
    z = (TeachingExample(0, 0.0, 0.0), TeachingExample(1, 0.0, 0.0))
    assert multi_loss(f2, z, weights=(0, 1)) == 1.0


def test_multi_loss_wrong_count():
    g = Grid.linspace(0, 1, 2)
    with pytest.raises(InputError):
        multi_loss(vec(g, [0, 0]), ())


# --- gradient ----------------------------------------------------------------


def test_gradient_zero_at_stationary_example():
    g = Grid.linspace(0, 1, 3)
    f = vec(g, [0.0, 1.0, 2.0], [3.0, 4.0, 5.0])
    atoms = functional_gradient(f, teacher_examples(f, [(0.5,), (1.0,)]))
    assert [a.coefficient for a in atoms] == [0.0, 0.0]


def test_gradient_single_learner_coefficient():
    g = Grid.linspace(0, 1, 3)
    f = vec(g, [0.0, 0.5, 0.0])
    (atom,) = functional_gradient(f, (TeachingExample(0, 0.5, 1.0),))
    assert atom.coefficient == -1.0 and atom.center == (0.5,)


def test_gradient_matches_directional_finite_difference():
    # d/dh L(f + h K_x*) at h=0 equals coefficient * K(x*, x*) = coefficient
    g = Grid.linspace(0, 1, 5)
    spec = KernelSpec()
    f = vec(g, [0.2, 0.5, -1.0, 0.1, 0.0])
    ex = (TeachingExample(0, 0.5, 1.0),)
    (atom,) = functional_gradient(f, ex)
    k = spec.column(g, (0.5,))

    def loss(h):
        return multi_loss(VectorValuedFunction.on_grid(g, [f[0].values + h * k]), ex)

    assert atom.coefficient == pytest.approx(central_diff(loss, 0.0), rel=1e-6)


def test_gradient_is_componentwise():
    g = Grid.linspace(0, 1, 3)
    ex = (TeachingExample(0, 0.0, 1.0), TeachingExample(1, 1.0, -1.0))
    a = functional_gradient(vec(g, [0, 0, 0], [0, 0, 0]), ex)
    b = functional_gradient(vec(g, [0, 0, 0], [0, 5, 0]), ex)  # learner 1 changes off its example
    assert a[0] == b[0] and a[1] == b[1]
    c = functional_gradient(vec(g, [0, 0, 0], [0, 0, 3]), ex)
    assert c[0] == a[0] and c[1] != a[1]


# --- selection ---------------------------------------------------------------


def test_select_gft_examples():
    g = Grid.linspace(0, 2, 3)
    target = vec(g, [0.0, 0.0, 0.0])
    assert select_gft_indices(vec(g, [0.1, -0.9, 0.5]), target) == [1]
    assert select_gft_indices(vec(g, [0.3, -0.3, 0.3]), target) == [0]
    assert select_gft(target, target) == [(0.0,)]


def test_select_rft_single_point_and_determinism():
    one = Grid(np.array([[4.0]]))
    for seed in range(5):
        assert select_rft(SamplingDistribution(), [one], seed) == [(4.0,)]
    g = Grid.linspace(-10, 10, 256)
    a = select_rft(SamplingDistribution(), [g, g], 3)
    assert a == select_rft(SamplingDistribution(), [g, g], 3)


def test_select_rft_continues_stream():
    g = Grid.linspace(-10, 10, 256)
    rngs = [learner_rng(1, 0)]
    draws = [select_rft(SamplingDistribution(), [g], rngs)[0] for _ in range(20)]
    assert len(set(draws)) > 1


def test_gaussian_sampling_mean_monte_carlo():
    g = Grid.linspace(-10, 10, 256)
    dist = SamplingDistribution.gaussian(-7.0, 1.0)
    rng = np.random.default_rng(0)
    xs = [g.point(dist.draw_index(g, 0, rng))[0] for _ in range(10_000)]
    assert abs(np.mean(xs) + 7.0) < 0.1


def test_gaussian_sampling_stays_in_box():
    g = Grid.linspace(-1, 1, 11)
    dist = SamplingDistribution.gaussian(50.0, 0.1)
    rng = np.random.default_rng(0)
    assert dist.draw_index(g, 0, rng) == 10


def test_learner_rng_independent_of_d():
    a = learner_rng(5, 2).integers(1000, size=10)
    b = learner_rng(5, 2).integers(1000, size=10)
    c = learner_rng(5, 1).integers(1000, size=10)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


# --- one round ---------------------------------------------------------------


def test_learner_update_hand_rolled_step():
    g = Grid.linspace(0, 1, 2)
    f0, fs = vec(g, [0.0, 0.0]), vec(g, [1.0, 1.0])
    pts = select_gft(f0, fs)
    assert pts == [(0.0,)]
    rnd = TeachingRound(teacher_examples(fs, pts), StepSizes((0.25,)))
    f1 = learner_update(f0, rnd, KernelSpec(2.0))
    assert f1[0](0.0) == pytest.approx(0.5, abs=1e-15)
    assert f1[0](1.0) == pytest.approx(0.5 * math.exp(-0.25), abs=1e-12)
    assert f1[0](1.0) == pytest.approx(0.389400, abs=1e-6)


def test_learner_update_no_change_cases():
    g = Grid.linspace(0, 1, 3)
    f = vec(g, [0.0, 1.0, 2.0])
    ex = teacher_examples(f, [(0.5,)])
    out = learner_update(f, TeachingRound(ex, StepSizes((0.1,))))
    assert np.array_equal(out.stack(), f.stack())
    ex2 = (TeachingExample(0, 0.5, 7.0),)
    out2 = learner_update(f, TeachingRound(ex2, StepSizes((0.0,)), np.eye(1)))
    assert np.array_equal(out2.stack(), f.stack())


def test_learner_update_applies_matrix_first():
    g = Grid.linspace(0, 1, 3)
    f = vec(g, [1.0, 1.0, 1.0], [2.0, 2.0, 2.0])
    swap = np.array([[0.0, 1.0], [1.0, 0.0]])
    ex = (TeachingExample(0, 0.0, 2.0), TeachingExample(1, 0.0, 1.0))
    out = learner_update(f, TeachingRound(ex, StepSizes((0.1, 0.1)), swap))
    np.testing.assert_array_equal(out.stack(), [[2.0] * 3, [1.0] * 3])


def test_round_validation():
    with pytest.raises(InputError):
        TeachingRound((TeachingExample(1, 0.0, 0.0),), StepSizes((0.1,)))
    with pytest.raises(InputError):
        TeachingRound((TeachingExample(0, 0.0, 0.0),), StepSizes((0.1, 0.2)))
    with pytest.raises(InputError):
        StepSizes((-0.1,))


def test_step_size_guard_warns():
    with pytest.warns(UserWarning):
        assert not StepSizes((0.3,)).check_descent()
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert StepSizes((0.25, 0.1)).check_descent()


def test_descent_diagnostic_examples():
    g = Grid.linspace(0, 1, 2)
    fs = vec(g, [1.0, 1.0])
    assert descent_diagnostic(vec(g, [3.0, 1.0]), fs, 0.0, 0) == 16.0
    assert descent_diagnostic(vec(g, [3.0, 1.0]), fs, 1.0, 0) == 0.0
    assert descent_diagnostic(vec(g, [2.0, 1.0]), fs, 0.0, 0) == 4.0


def test_iteration_bound_examples():
    assert iteration_bound(8, 2, 0.25, 0.1) == pytest.approx(320)
    assert iteration_bound(0, 3, 0.1, 0.1) == 0
    assert iteration_bound(8, 4, 0.25, 0.1) == pytest.approx(iteration_bound(8, 2, 0.25, 0.1) / 2)
    with pytest.raises(InputError):
        iteration_bound(1, 0, 0.1, 0.1)


# --- the loop ----------------------------------------------------------------


def test_run_stops_immediately_at_target():
    g = Grid.linspace(0, 1, 4)
    fs = vec(g, [1.0, 2.0, 3.0, 4.0])
    run = run_teaching(TeachingConfig(), fs, fs)
    assert run.trace == [] and run.converged and run.final_disagreement == 0.0


def test_selected_residual_contracts_by_one_minus_two_eta():
    # K(x*, x*) = 1, so the residual at the selected point shrinks by 1 - 2 eta
    g = Grid.linspace(0, 1, 2)
    eta = 0.25
    cfg = TeachingConfig(max_iter=40, etas=eta, epsilon=1e-12)
    run = run_teaching(cfg, vec(g, [1.0, 1.0]), vec(g, [0.0, 0.0]))
    assert run.trace[0].selected == (0,)
    for rec in run.trace:
        assert rec.ex_loss_post == pytest.approx((1 - 2 * eta) ** 2 * rec.ex_loss_pre, rel=1e-12)
    for prev, rec in zip(run.trace, run.trace[1:]):
        if rec.selected == prev.selected:
            assert rec.residuals[0] == pytest.approx(0.5 * prev.residuals[0], rel=1e-12)


def test_gft_contraction_factor_every_iteration():
    img = tg.bundled_image("gray_a32.pgm").gray()
    target = VectorValuedFunction((img,))
    init = tg.zero_init(target.grids)
    eta = 0.1
    cfg = TeachingConfig(max_iter=200, etas=eta, kernel=KernelSpec.in_pixels(2.0, img.grid))
    run = run_teaching(cfg, target, init)
    for rec in run.trace:
        assert rec.ex_loss_post == pytest.approx((1 - 2 * eta) ** 2 * rec.ex_loss_pre, rel=1e-12)


def test_loop_runs_while_t_at_most_max_iter():
    g = Grid.linspace(0, 1, 8)
    run = run_teaching(TeachingConfig(max_iter=5, epsilon=1e-12), vec(g, np.ones(8)), vec(g, np.zeros(8)))
    assert [r.iteration for r in run.trace] == list(range(6))
    assert not run.converged


def test_trace_records_state_before_update():
    g = Grid.linspace(0, 1, 8)
    fs, f0 = vec(g, np.ones(8)), vec(g, np.zeros(8))
    run = run_teaching(TeachingConfig(max_iter=3, epsilon=1e-12), fs, f0)
    assert run.trace[0].disagreement == pytest.approx(math.sqrt(8) / 8)
    assert run.trace[0].loss == pytest.approx(1.0)
    assert run.trace[1].loss == pytest.approx(run.trace[0].loss_next)


def test_rft_is_deterministic_and_independent_of_d():
    g = Grid.linspace(-10, 10, 64)
    fs = vec(g, tg.gaussian_pdf(g.coords[:, 0], 0, 5), np.sin(g.coords[:, 0]))
    f0 = tg.zero_init(fs.grids)
    cfg = TeachingConfig(max_iter=300, epsilon=1e-9, seed=4)
    a = run_teaching(cfg, fs, f0, "rft")
    b = run_teaching(cfg, fs, f0, "rft")
    assert [r.selected for r in a.trace] == [r.selected for r in b.trace]
    solo = run_teaching(cfg, VectorValuedFunction((fs[1],)), VectorValuedFunction((f0[1],)), "rft", learner_ids=[1])
    assert [r.selected[0] for r in solo.trace] == [r.selected[1] for r in a.trace]
    np.testing.assert_array_equal(solo.final[0].values, a.final[1].values)


def test_sequential_matches_vanilla_componentwise():
    g = Grid.linspace(-2, 2, 32)
    x = g.coords[:, 0]
    fs = vec(g, np.sin(x), np.cos(x), x / 2)
    f0 = tg.zero_init(fs.grids)
    cfg = TeachingConfig(max_iter=400, epsilon=1e-3, stop_rule="every")
    van = run_teaching(cfg, fs, f0)
    seq = run_sequential(cfg, fs, f0)
    per = [run_teaching(cfg, VectorValuedFunction((fs[k],)), VectorValuedFunction((f0[k],))) for k in range(3)]
    assert seq.iterations == sum(r.iterations for r in per)
    assert van.iterations == max(r.iterations for r in per)
    for k in range(3):
        np.testing.assert_array_equal(seq.final[k].values, per[k].final[0].values)


def test_sequential_marks_idle_learners():
    g = Grid.linspace(0, 1, 4)
    fs = vec(g, np.ones(4), np.ones(4))
    seq = run_sequential(TeachingConfig(max_iter=2, epsilon=1e-12), fs, tg.zero_init(fs.grids))
    assert seq.trace[0].selected[1] == -1 and seq.trace[-1].selected[0] == -1
    assert [r.iteration for r in seq.trace] == list(range(6))


def test_snapshots_record_states():
    g = Grid.linspace(0, 1, 8)
    fs, f0 = vec(g, np.ones(8), np.ones(8)), vec(g, np.zeros(8), np.zeros(8))
    cfg = TeachingConfig(max_iter=4, epsilon=1e-12)
    run = run_teaching(cfg, fs, f0, snapshots=[0, 2, 99])
    assert set(run.snapshots) == {0, 2, 99}
    np.testing.assert_array_equal(run.snapshots[0].stack(), f0.stack())
    np.testing.assert_array_equal(run.snapshots[99].stack(), run.final.stack())
    seq = run_sequential(cfg, fs, f0, snapshots=[0, 5, 7, 99])
    # global iteration 7 is the second learner's second update; first learner is done
    np.testing.assert_array_equal(seq.snapshots[7][0].values, seq.final[0].values)
    np.testing.assert_array_equal(seq.snapshots[5][1].values, f0[1].values)
    np.testing.assert_array_equal(seq.snapshots[5][0].values, seq.final[0].values)
    np.testing.assert_array_equal(seq.snapshots[99].stack(), seq.final.stack())


def test_divergent_steps_abort():
    g = Grid.linspace(0, 1, 2)
    run = run_teaching(TeachingConfig(max_iter=5000, etas=10.0, epsilon=1e-12), vec(g, [1.0, 1.0]), vec(g, [0.0, 0.0]))
    assert run.aborted and not run.converged
    assert run.trace[-1].status == "nonfinite"


def test_communication_needs_shared_grid():
    fs = VectorValuedFunction(
        (SampledFunction(Grid.linspace(0, 1, 3), np.ones(3)), SampledFunction(Grid.linspace(0, 2, 3), np.ones(3)))
    )
    with pytest.raises(InputError):
        run_teaching(TeachingConfig(), fs, tg.zero_init(fs.grids), comm_policy=CommPolicy())


def test_iterations_to_threshold():
    g = Grid.linspace(0, 1, 8)
    run = run_teaching(TeachingConfig(max_iter=500, epsilon=1e-3), vec(g, np.ones(8)), vec(g, np.zeros(8)))
    t = iterations_to_threshold(run, 1e-2)
    assert run.trace[t].disagreement <= 1e-2 < run.trace[t - 1].disagreement
    assert iterations_to_threshold(run, 1e-30) is None


def test_weighted_loss():
    g = Grid.linspace(0, 1, 4)
    fs, f0 = vec(g, np.ones(4), np.ones(4)), tg.zero_init([g, g])
    run = run_teaching(TeachingConfig(max_iter=3, loss=LossSpec(weights=(0.0, 1.0)), epsilon=1e-12), fs, f0)
    assert run.trace[0].loss == pytest.approx(0.5)
    # zero weight freezes learner 0
    np.testing.assert_array_equal(run.final[0].values, np.zeros(4))
