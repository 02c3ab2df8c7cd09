import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from windbo.benchmarks import AckleyConfig, ackley
from windbo.kriging import (Dataset, DuplicateSampleError, KrigingConfig, KrigingError, concentrated_log_likelihood,
                            fit)
from windbo.sampling import DesignSpace, standard_lhs


def dense_ok_predict(X, y, x, theta, p, nugget, lower, upper):
    """Ordinary Kriging written out with plain dense solves."""
    U = (X - lower) / (upper - lower)
    u = (x - lower) / (upper - lower)
    n = len(y)
    R = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            R[i, j] = np.exp(-np.sum(theta * np.abs(U[i] - U[j]) ** p))
    R += nugget * np.eye(n)
    r = np.array([np.exp(-np.sum(theta * np.abs(U[i] - u) ** p)) for i in range(n)])
    one = np.ones(n)
    Ri1 = np.linalg.solve(R, one)
    Riy = np.linalg.solve(R, y)
    beta = one @ Riy / (one @ Ri1)
    res = y - beta
    s2 = res @ np.linalg.solve(R, res) / n
    mean = beta + r @ np.linalg.solve(R, res)
    Rir = np.linalg.solve(R, r)
    var = s2 * (1 - r @ Rir + (1 - one @ Rir) ** 2 / (one @ Ri1))
    return mean, var


def toy_1d():
    X = np.array([[0.0], [0.15], [0.4], [0.55], [0.8], [1.0]])
    y = np.sin(6 * X[:, 0]) + 0.3 * X[:, 0]
    return Dataset(X, y), DesignSpace([0.0], [1.0])


def test_matches_dense_oracle_1d():
    data, space = toy_1d()
    model = fit(data, space, theta0=[8.0], optimize=False)
    for x in np.linspace(-0.05, 1.05, 23):
        m, v = model.predict([x])
        mo, vo = dense_ok_predict(data.X, data.y, np.array([x]), model.theta, model.p, model.nugget,
                                  space.lower, space.upper)
        assert abs(m - mo) <= 1e-10
        assert abs(v - vo) <= 1e-10


def test_ackley_4d_interpolation():
    cfg = AckleyConfig(d=4)
    space = cfg.space()
    X = standard_lhs(space, 50, seed=0).points
    y = ackley(X, cfg)
    model = fit(Dataset(X, y), space, seed=0)
    mean, var = model.predict_batch(X)
    assert np.max(np.abs(mean - y)) <= 1e-6 * np.ptp(y)
    assert np.max(var) <= 1e-6 * model.sigma2


def test_likelihood_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    U = rng.random((30, 4))
    y = np.sin(3 * U.sum(axis=1))
    y = (y - y.mean()) / y.std()
    theta = np.array([0.5, 2.0, 7.0, 1.3])
    _, grad = concentrated_log_likelihood(U, y, theta, 2.0, gradient=True)
    h = 1e-6
    for k in range(4):
        e = np.zeros(4)
        e[k] = h
        up = concentrated_log_likelihood(U, y, theta * np.exp(e), 2.0)
        dn = concentrated_log_likelihood(U, y, theta * np.exp(-e), 2.0)
        assert grad[k] == pytest.approx((up - dn) / (2 * h), rel=1e-4, abs=1e-6)


def test_general_power_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    U = rng.random((20, 3))
    y = np.cos(4 * U[:, 0]) + U[:, 1]
    y = (y - y.mean()) / y.std()
    cfg = KrigingConfig(optimize_p=True)
    theta, p = np.array([1.0, 3.0, 0.7]), 1.6
    _, grad = concentrated_log_likelihood(U, y, theta, p, cfg, gradient=True)
    h = 1e-6
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (concentrated_log_likelihood(U, y, theta * np.exp(e), p)
              - concentrated_log_likelihood(U, y, theta * np.exp(-e), p)) / (2 * h)
        assert grad[k] == pytest.approx(fd, rel=1e-4, abs=1e-6)
    fdp = (concentrated_log_likelihood(U, y, theta, p + h) - concentrated_log_likelihood(U, y, theta, p - h)) / (2 * h)
    assert grad[3] == pytest.approx(fdp, rel=1e-4, abs=1e-6)


def test_warm_start_never_lowers_likelihood():
    cfg = AckleyConfig(d=3)
    space = cfg.space()
    X = standard_lhs(space, 25, seed=4).points
    data = Dataset(X, ackley(X, cfg))
    theta0 = [0.3, 5.0, 40.0]
    fixed = fit(data, space, theta0=theta0, optimize=False)
    tuned = fit(data, space, KrigingConfig(n_starts=0), theta0=theta0)
    assert tuned.log_likelihood >= fixed.log_likelihood


def test_duplicate_rows_rejected():
    data, space = toy_1d()
    X = np.vstack([data.X, data.X[2]])
    with pytest.raises(DuplicateSampleError):
        fit(Dataset(X, np.append(data.y, 0.0)), space)


def test_dimension_mismatch_on_predict():
    data, space = toy_1d()
    model = fit(data, space, theta0=[5.0], optimize=False)
    with pytest.raises(KrigingError):
        model.predict([0.1, 0.2])


def test_too_few_samples():
    with pytest.raises(KrigingError):
        fit(Dataset(np.array([[0.5]]), np.array([1.0])), DesignSpace([0.0], [1.0]))


def test_batch_rows_bitwise_equal_single_calls():
    cfg = AckleyConfig(d=4)
    space = cfg.space()
    X = standard_lhs(space, 40, seed=2).points
    model = fit(Dataset(X, ackley(X, cfg)), space, seed=0)
    P = standard_lhs(space, 17, seed=9).points
    mean, var = model.predict_batch(P)
    for i, x in enumerate(P):
        m, v = model.predict(x)
        assert m == mean[i] and v == var[i]


@settings(max_examples=15, deadline=None)
@given(a=st.floats(0.1, 50.0), b=st.floats(-100.0, 100.0))
def test_affine_output_equivariance(a, b):
    data, space = toy_1d()
    base = fit(data, space, theta0=[8.0], optimize=False)
    scaled = fit(Dataset(data.X, a * data.y + b), space, theta0=[8.0], optimize=False)
    x = np.array([0.27])
    m0, v0 = base.predict(x)
    m1, v1 = scaled.predict(x)
    assert m1 == pytest.approx(a * m0 + b, rel=1e-9, abs=1e-9 * (abs(b) + a))
    assert v1 == pytest.approx(a * a * v0, rel=1e-7, abs=1e-12)


def test_input_translation_invariance():
    data, space = toy_1d()
    shifted = DesignSpace(space.lower + 10.0, space.upper + 10.0)
    m0 = fit(data, space, theta0=[8.0], optimize=False)
    m1 = fit(Dataset(data.X + 10.0, data.y), shifted, theta0=[8.0], optimize=False)
    a, va = m0.predict([0.33])
    b, vb = m1.predict([10.33])
    assert a == pytest.approx(b, abs=1e-9)
    assert va == pytest.approx(vb, abs=1e-9)


def test_dump_is_full_precision():
    data, space = toy_1d()
    model = fit(data, space, theta0=[8.0], optimize=False)
    lines = dict(line.split(" ", 1) for line in model.dump().splitlines() if not line.startswith("sample"))
    assert float(lines["beta"]) == model.beta
    assert float(lines["sigma2"]) == model.sigma2
    assert float(lines["theta"]) == model.theta[0]


def test_fit_is_deterministic_under_seed():
    cfg = AckleyConfig(d=2)
    space = cfg.space()
    X = standard_lhs(space, 15, seed=5).points
    data = Dataset(X, ackley(X, cfg))
    a = fit(data, space, seed=3)
    b = fit(data, space, seed=3)
    assert np.array_equal(a.theta, b.theta)
    assert a.log_likelihood == b.log_likelihood
