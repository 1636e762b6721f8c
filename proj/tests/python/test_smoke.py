"""Smoke tests for the python bindings (run via ctest with PYTHONPATH set)."""

import numpy as np

import dmlplr


def test_generate_shapes():
    ds = dmlplr.generate(n=500, p_covariates=6, theta_true=[0.4], seed=3)
    assert ds.n == 500
    assert ds.covariates.shape == (500, 6)
    assert ds.treatments.shape == (500, 1)
    assert set(np.unique(ds.treatments)) <= {0.0, 1.0}


def test_estimate_recovers_a_linear_effect():
    ds = dmlplr.generate(n=1500, p_covariates=6, theta_true=[0.5],
                         g_shape="linear", m_shape="linear",
                         confounding_strength=0.1, seed=11)
    fits = dmlplr.estimate(ds, learner_g="ols", learner_m="ols",
                           folds=5, reps=1, algorithm="dml2", seed=1)
    assert len(fits) == 1
    fit = fits[0]
    assert abs(fit.theta - 0.5) < 4 * fit.std_error
    assert fit.std_error > 0
    assert 0.0 <= fit.p_value <= 1.0


def test_estimate_is_deterministic():
    ds = dmlplr.generate(n=400, p_covariates=5, seed=21)
    a = dmlplr.estimate(ds, learner_g="ols", learner_m="ols", seed=2)[0]
    b = dmlplr.estimate(ds, learner_g="ols", learner_m="ols", seed=2)[0]
    assert a.theta == b.theta
    assert a.std_error == b.std_error


def test_fwl_equality():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(200, 4))
    D = 0.5 * X[:, 0] + rng.normal(size=200)
    Y = 0.7 * D + X[:, 1] - X[:, 3] + rng.normal(size=200)
    direct, partialled = dmlplr.fwl_check(X, D, Y)
    assert abs(direct - partialled) < 1e-8


def test_adjustments():
    assert np.allclose(dmlplr.holm(np.array([0.01, 0.04])), [0.02, 0.04])
    assert np.allclose(dmlplr.bonferroni(np.array([0.004] * 10)), [0.04] * 10)

    ds = dmlplr.generate(n=1200, p_covariates=5,
                         theta_true=[0.0, 0.25, 0.5],
                         mechanism="mutually-exclusive-categorical",
                         g_shape="linear", m_shape="linear",
                         confounding_strength=0.2, seed=31)
    adj = dmlplr.adjust(ds, learner_g="ols", learner_m="ols", folds=4,
                        bootstrap=500, alpha=0.05, seed=5)
    assert len(adj.labels) == 3
    assert np.all(adj.raw_p <= adj.holm_p + 1e-12)
    assert np.all(adj.holm_p <= adj.bonf_p + 1e-12)
    assert adj.joint_ci.shape == (3, 2)
    assert np.all(adj.joint_ci[:, 0] <= adj.joint_ci[:, 1])


def main():
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    for test in tests:
        test()
        print(f"ok {test.__name__}")
    print(f"{len(tests)} smoke tests passed (dmlplr {dmlplr.__version__})")


if __name__ == "__main__":
    main()
