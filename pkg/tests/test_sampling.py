import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nucomplete import matcore
from nucomplete.errors import DegenerateInputError, DimensionError, DomainError
from nucomplete.sampling import (
    ObservationSet,
    SamplingEstimate,
    counting_matrix,
    draw_observations,
    estimate_pmlsvt,
    estimate_rank1,
    pmlsvt_counts,
    poisson_cost,
    select_pmlsvt,
)


def obs_at(shape, cells):
    return ObservationSet.from_triples(shape, [(r, c, 0.0) for r, c in cells])


def check_estimate(est: SamplingEstimate):
    assert np.all(est.p_hat >= 0)
    assert est.p_hat.sum() == pytest.approx(1, abs=1e-9)
    assert est.row_margins.sum() == pytest.approx(1, abs=1e-9)
    assert est.col_margins.sum() == pytest.approx(1, abs=1e-9)
    np.testing.assert_allclose(est.row_margins, est.p_hat.sum(axis=1), atol=1e-9)
    np.testing.assert_allclose(est.col_margins, est.p_hat.sum(axis=0), atol=1e-9)


def test_observation_set_validation():
    with pytest.raises(DimensionError):
        ObservationSet(2, 2, [2], [0], [1.0])
    with pytest.raises(DimensionError):
        ObservationSet(2, 2, [0, 1], [0], [1.0])
    with pytest.raises(DomainError):
        ObservationSet(2, 2, [0], [0], [np.inf])


def test_observation_csv_round_trip():
    obs = ObservationSet(3, 4, [0, 2, 2], [3, 1, 1], [0.1, -2.5, 1e-17])
    back = ObservationSet.from_csv(obs.to_csv(), shape=(3, 4))
    assert back.shape == (3, 4)
    for a in ("rows", "cols", "values"):
        assert np.array_equal(getattr(back, a), getattr(obs, a))


def test_counting_matrix_examples():
    np.testing.assert_array_equal(counting_matrix(obs_at((2, 2), [(0, 0), (0, 0), (1, 1)])), [[2, 0], [0, 1]])
    m = counting_matrix(obs_at((3, 3), [(0, 0)] * 7))
    assert m[0, 0] == 7 and m.sum() == 7
    with pytest.raises(DegenerateInputError):
        counting_matrix(obs_at((2, 2), []))


def test_rank1_example():
    est = estimate_rank1(obs_at((2, 2), [(0, 0), (0, 0), (0, 1), (1, 0)]))
    np.testing.assert_allclose(est.row_margins, [0.75, 0.25])
    np.testing.assert_allclose(est.col_margins, [0.75, 0.25])
    np.testing.assert_allclose(est.p_hat, [[9 / 16, 3 / 16], [3 / 16, 1 / 16]])
    check_estimate(est)


def test_rank1_single_entry_and_uniform():
    est = estimate_rank1(obs_at((3, 2), [(1, 1)] * 5))
    expected = np.zeros((3, 2))
    expected[1, 1] = 1
    np.testing.assert_array_equal(est.p_hat, expected)
    est = estimate_rank1(obs_at((2, 3), list(itertools.product(range(2), range(3))) * 2))
    np.testing.assert_allclose(est.p_hat, np.full((2, 3), 1 / 6))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 4)), min_size=1, max_size=40), st.randoms())
def test_rank1_order_invariant(cells, rnd):
    shuffled = list(cells)
    rnd.shuffle(shuffled)
    a, b = estimate_rank1(obs_at((4, 5), cells)), estimate_rank1(obs_at((4, 5), shuffled))
    np.testing.assert_array_equal(a.p_hat, b.p_hat)
    check_estimate(a)
    assert matcore.numerical_rank(a.p_hat) <= 1


@pytest.mark.parametrize("m, lam", [(5.0, 0.5), (1.0, 2.0), (40.0, 3.0)])
def test_pmlsvt_scalar_closed_form(m, lam):
    # -m log x + x + lam x  is minimised at  x = m / (1 + lam)
    [(x, _, _)] = pmlsvt_counts(np.array([[m]]), [lam], project=False, tol=1e-14, max_iter=5000)
    assert x[0, 0] == pytest.approx(m / (1 + lam), abs=1e-6)
    [est] = estimate_pmlsvt(obs_at((1, 1), [(0, 0)] * int(m)), [lam])
    assert est.p_hat[0, 0] == pytest.approx(1.0)


def test_pmlsvt_stationary_at_counts_when_unpenalised():
    m = np.array([[3.0, 1.0], [2.0, 4.0]])
    [(x, trace, k)] = pmlsvt_counts(m, [0.0])
    np.testing.assert_allclose(x, m, atol=1e-12)
    cells = [(j, kk) for j in range(2) for kk in range(2) for _ in range(int(m[j, kk]))]
    [est] = estimate_pmlsvt(obs_at((2, 2), cells), [0.0])
    np.testing.assert_allclose(est.p_hat, m / m.sum(), atol=1e-12)


def test_pmlsvt_zero_row_against_grid_search():
    m = np.array([[3.0, 1.0], [0.0, 0.0]])
    lam, n = 0.5, m.sum()
    # brute force over nonnegative 2x2 matrices with total n
    grid = np.linspace(0, n, 81)
    best, best_x = np.inf, None
    for a, b, c in itertools.product(grid, grid, grid):
        rest = n - a - b - c
        if rest < 0:
            continue
        x = np.array([[a, b], [c, rest]])
        val = poisson_cost(x, m) + lam * matcore.nuclear_norm(x)
        if val < best:
            best, best_x = val, x
    [(x, _, _)] = pmlsvt_counts(m, [lam], tol=1e-12, max_iter=5000)
    assert best_x[1].sum() < best_x[0].sum()
    assert x[1].sum() < x[0].sum()
    [est] = estimate_pmlsvt(obs_at((2, 2), [(0, 0)] * 3 + [(0, 1)]), [lam])
    assert est.row_margins[1] < est.row_margins[0]
    check_estimate(est)


def test_pmlsvt_objective_monotone():
    rng = np.random.default_rng(0)
    p = rng.random((6, 5)) ** 2
    p /= p.sum()
    obs = draw_observations(p, np.zeros_like(p), 2000, 0.0, 1)
    for est in estimate_pmlsvt(obs):
        tr = np.asarray(est.objective_trace)
        assert np.all(np.diff(tr) <= 1e-9 * np.abs(tr[:-1]))
        check_estimate(est)


def test_pmlsvt_errors():
    with pytest.raises(DegenerateInputError):
        pmlsvt_counts(np.zeros((2, 2)), [1.0])
    with pytest.raises(DomainError):
        pmlsvt_counts(np.ones((2, 2)), [1.0], eta=1.0)


def test_non_product_sampling_recovered_by_pmlsvt():
    p_star = np.array([[0.2, 0.3], [0.3, 0.2]])
    err_r1, err_pm = [], []
    for seed in range(10):
        obs = draw_observations(p_star, np.zeros((2, 2)), 10 ** 5, 0.0, seed)
        err_r1.append(np.linalg.norm(estimate_rank1(obs).p_hat - p_star))
        err_pm.append(np.linalg.norm(select_pmlsvt(obs, seed=seed).p_hat - p_star))
    # rank-1 can only reach the uniform product
    assert np.mean(err_r1) == pytest.approx(0.1, abs=0.01)
    assert np.mean(err_pm) < np.mean(err_r1)


def test_draw_observations_contract():
    b = np.arange(6.0).reshape(2, 3)
    p = np.full((2, 3), 1 / 6)
    obs = draw_observations(p, b, 500, 0.0, 3)
    assert len(obs) == 500
    np.testing.assert_array_equal(obs.values, b[obs.rows, obs.cols])
    again = draw_observations(p, b, 500, 0.0, 3)
    assert np.array_equal(obs.rows, again.rows) and np.array_equal(obs.cols, again.cols)
    one = np.zeros((2, 3))
    one[1, 2] = 1
    obs = draw_observations(one, b, 50, 1.0, 0)
    assert np.all(obs.rows == 1) and np.all(obs.cols == 2)
    with pytest.raises(DomainError):
        draw_observations([[1.5, -0.5]], [[0.0, 0.0]], 3, 0.0, 0)
    with pytest.raises(DomainError):
        draw_observations([[0.5, 0.4]], [[0.0, 0.0]], 3, 0.0, 0)


def test_draw_observations_frequencies():
    obs = draw_observations(np.full((2, 2), 0.25), np.zeros((2, 2)), 10 ** 6, 0.0, 11)
    freq = counting_matrix(obs) / 10 ** 6
    assert np.max(np.abs(freq - 0.25)) < 0.01


def test_draw_observations_noise_scale():
    obs = draw_observations(np.full((2, 2), 0.25), np.zeros((2, 2)), 20000, 2.0, 5)
    assert np.std(obs.values) == pytest.approx(2.0, rel=0.05)
