import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from loglinear import (
    ContingencyTable,
    ConvergenceError,
    Factor,
    FitOptions,
    FitResult,
    ModelSpec,
    RankDeficientError,
    build_design,
    closed_form_fit,
    enumerate_lattice,
    fit,
    full_log_likelihood,
)
from loglinear.design import DesignMatrix
from loglinear.irls import closed_form_class, poisson_deviance
from conftest import fit_model
from oracles import fd_gradient, fd_hessian, ipf, loglik
from reference_values import BASELINES, HOMOGENEOUS, LATTICE_LABELS, SELECTION_A7, SELECTION_B12

FACTORS = ("年齡", "性別", "縣市")
LATTICE = enumerate_lattice(FACTORS)

# chains of strictly nested lattice models, by index into LATTICE
NESTING = [
    (0, 1, 5, 7, 8), (0, 1, 6, 7, 8), (0, 2, 4, 7, 8),
    (0, 2, 5, 7, 8), (0, 3, 4, 7, 8), (0, 3, 6, 7, 8),
]


def random_tables(n, seed=20210611):
    rng = np.random.default_rng(seed)
    factors = [Factor("年齡", ("a", "b")), Factor("性別", ("u", "v", "w")), Factor("縣市", ("p", "q", "r", "s"))]
    return [ContingencyTable(factors, rng.integers(1, 501, size=(2, 3, 4))) for _ in range(n)]


def closed_form_specs():
    return [s for s in LATTICE if closed_form_class(s) is not None]


class TestClosedForms:
    def test_classes(self):
        kinds = [closed_form_class(s) for s in LATTICE]
        assert kinds == ["mutual", "joint", "joint", "joint",
                         "conditional", "conditional", "conditional", None, None]

    def test_a7_mutual_deviance(self, table_a7):
        mu = closed_form_fit(table_a7, LATTICE[0])
        assert poisson_deviance(table_a7.counts, mu) == pytest.approx(486.2946, abs=5e-4)

    def test_a7_conditional_deviance(self, table_a7):
        spec = ModelSpec.parse("年齡+性別+縣市+年齡*縣市+性別*縣市")
        mu = closed_form_fit(table_a7, spec)
        assert poisson_deviance(table_a7.counts, mu) == pytest.approx(121.3771, abs=5e-4)

    def test_equal_counts_fit_exactly(self):
        f = [Factor(n, ("1", "2")) for n in FACTORS]
        t = ContingencyTable(f, np.full((2, 2, 2), 9))
        for spec in closed_form_specs():
            assert_allclose(closed_form_fit(t, spec), 9.0, rtol=1e-14)

    def test_zero_conditioning_margin(self):
        f = [Factor(n, ("1", "2")) for n in FACTORS]
        v = np.ones((2, 2, 2))
        v[:, :, 1] = 0
        spec = ModelSpec.parse("年齡+性別+縣市+年齡*縣市+性別*縣市")
        with pytest.raises(ValueError, match="zero"):
            closed_form_fit(ContingencyTable(f, v), spec)

    def test_no_closed_form(self, table_a7):
        with pytest.raises(ValueError):
            closed_form_fit(table_a7, ModelSpec.parse(HOMOGENEOUS))

    def test_agree_with_ipf(self, table_a7):
        for spec in closed_form_specs():
            mu = ipf(table_a7.values, spec.terms, table_a7.names).ravel()
            assert_allclose(closed_form_fit(table_a7, spec), mu, rtol=1e-9)


class TestIRLSAgainstOracles:
    def test_a7_closed_forms(self, table_a7):
        for spec in closed_form_specs():
            r = fit_model(table_a7, spec.label)
            assert_allclose(r.fitted_means, closed_form_fit(table_a7, spec), rtol=1e-8)

    @pytest.mark.parametrize("index", range(50))
    def test_random_tables(self, index):
        table = random_tables(50)[index]
        for spec in closed_form_specs():
            r = fit(table, build_design(table, spec))
            assert_allclose(r.fitted_means, closed_form_fit(table, spec), rtol=1e-8)

    @pytest.mark.parametrize("scheme", ["A7", "B12"])
    def test_homogeneous_matches_ipf(self, scheme, model1, model2):
        r = model1 if scheme == "A7" else model2
        t = r.fitted_table()
        mu = ipf(r.observed.reshape(t.shape), ModelSpec.parse(HOMOGENEOUS).terms, t.names).ravel()
        assert_allclose(r.fitted_means, mu, rtol=1e-8)

    def test_random_homogeneous_matches_ipf(self):
        for table in random_tables(10, seed=7):
            spec = LATTICE[7]
            r = fit(table, build_design(table, spec))
            mu = ipf(table.values, spec.terms, table.names).ravel()
            assert_allclose(r.fitted_means, mu, rtol=1e-8)


@pytest.fixture(scope="module")
def fits(table_a7, table_b12):
    return {
        (scheme, i): fit_model(t, spec.label)
        for scheme, t in (("A7", table_a7), ("B12", table_b12))
        for i, spec in enumerate(LATTICE)
    }


class TestLattice:
    def test_score_equations(self, fits):
        for r in fits.values():
            assert r.converged
            assert np.max(np.abs(r.score())) <= 1e-6

    def test_sufficient_statistics(self, fits):
        for r in fits.values():
            t = r.fitted_table()
            obs = r.observed.reshape(t.shape)
            for term in r.design.spec.terms:
                axes = tuple(i for i, n in enumerate(t.names) if n not in term)
                assert_allclose(t.values.sum(axis=axes), obs.sum(axis=axes), atol=1e-6)

    def test_fitted_means_are_exp_eta(self, fits):
        for r in fits.values():
            assert_allclose(r.fitted_means, np.exp(r.design.matrix @ r.coefficients), rtol=1e-12)

    def test_total_preserved(self, fits):
        for r in fits.values():
            assert r.fitted_means.sum() == pytest.approx(r.observed.sum(), rel=1e-6)

    def test_covariance_positive_definite(self, fits):
        for r in fits.values():
            assert_allclose(r.covariance, r.covariance.T)
            assert np.linalg.eigvalsh(r.covariance).min() > 0

    @pytest.mark.parametrize("scheme", ["A7", "B12"])
    def test_deviance_monotone_along_chains(self, fits, scheme):
        for chain in NESTING:
            devs = [fits[scheme, i].deviance for i in chain]
            assert all(a >= b - 1e-9 for a, b in zip(devs, devs[1:])), chain

    @pytest.mark.parametrize("scheme", ["A7", "B12"])
    def test_reference_deviances(self, fits, scheme):
        ref = SELECTION_A7 if scheme == "A7" else SELECTION_B12
        for i, (_, dev, df) in enumerate(ref):
            r = fits[scheme, i]
            assert r.df_resid == df
            if (scheme, i) != ("B12", 5):  # reference value carries a digit typo
                assert r.deviance == pytest.approx(dev, abs=5e-4)

    def test_b12_listed_bic_implies_computed_deviance(self, fits):
        # BIC_m - BIC_sat = D_m + (p_m - C) ln C, so each listed BIC pins its deviance
        bic_sat = SELECTION_B12[8][0]
        implied = [b - bic_sat + df * np.log(72) for b, _, df in SELECTION_B12]
        assert implied[5] == pytest.approx(fits["B12", 5].deviance, abs=5e-4)
        assert implied[5] == pytest.approx(179.4662, abs=5e-4)
        for i in range(8):
            assert implied[i] == pytest.approx(fits["B12", i].deviance, abs=1e-3)

    def test_saturated_exact(self, fits):
        for scheme in ("A7", "B12"):
            r = fits[scheme, 8]
            assert r.deviance == 0.0
            assert np.array_equal(r.fitted_means, r.observed)


class TestKnownValues:
    def test_model1_leading_coefficients(self, model1):
        assert model1.coefficient("Intercept") == pytest.approx(2.8483, abs=5e-5)
        assert model1.coefficient("年齡 30-59") == pytest.approx(0.6411, abs=5e-5)
        assert model1.coefficient("年齡 60+") == pytest.approx(0.4467, abs=5e-5)

    def test_main_effects_product_form(self, table_a7):
        r = fit_model(table_a7, LATTICE_LABELS[0])
        v = table_a7.values.astype(float)
        n = v.sum()
        expected = v.sum((1, 2))[:, None, None] * v.sum((0, 2))[None, :, None] * v.sum((0, 1))[None, None, :] / n**2
        assert_allclose(r.fitted_means, expected.ravel(), rtol=1e-10)
        assert r.deviance == pytest.approx(486.2946, abs=5e-4)

    def test_saturated_log_likelihood_a7(self, table_a7):
        y = table_a7.counts.astype(float)
        assert -2 * full_log_likelihood(table_a7, y) == pytest.approx(386.6376 - 42 * np.log(42), abs=5e-4)
        assert -2 * full_log_likelihood(table_a7, y) == pytest.approx(229.656, abs=1e-3)

    def test_saturated_log_likelihood_b12(self, table_b12):
        y = table_b12.counts.astype(float)
        assert -2 * full_log_likelihood(table_b12, y) == pytest.approx(687.4141 - 72 * np.log(72), abs=5e-4)
        assert -2 * full_log_likelihood(table_b12, y) == pytest.approx(379.494, abs=1e-3)

    def test_single_cell(self):
        assert full_log_likelihood(np.array([1]), [1.0]) == pytest.approx(-1.0, abs=1e-15)

    def test_loglik_matches_direct_sum(self, model1):
        y = model1.observed
        X = model1.design.matrix
        assert model1.full_log_likelihood == pytest.approx(loglik(y, X, model1.coefficients), rel=1e-12)

    def test_zero_mean_with_positive_count(self):
        with pytest.raises(ValueError):
            full_log_likelihood(np.array([1, 0]), [0.0, 1.0])
        with pytest.raises(ValueError):
            full_log_likelihood(np.array([1]), [-1.0])
        assert full_log_likelihood(np.array([0]), [0.0]) == 0.0


class TestDerivatives:
    def test_gradient_at_estimate(self, model1):
        X, y, beta = model1.design.matrix, model1.observed, model1.coefficients
        g = fd_gradient(y, X, beta, h=1e-5)
        scale = np.abs(X.T @ y)
        assert np.all(np.abs(g - model1.score()) <= 1e-3 * scale)

    @pytest.mark.parametrize("seed", range(3))
    def test_gradient_away_from_estimate(self, model1, seed):
        X, y = model1.design.matrix, model1.observed
        beta = model1.coefficients + np.random.default_rng(seed).normal(scale=0.02, size=model1.n_params)
        analytic = X.T @ (y - np.exp(X @ beta))
        assert_allclose(fd_gradient(y, X, beta, h=1e-5), analytic, rtol=1e-3, atol=1e-3)

    def test_covariance_is_inverse_hessian(self, table_a7):
        r = fit_model(table_a7, "年齡+性別+縣市+年齡*性別")
        H = fd_hessian(r.observed, r.design.matrix, r.coefficients)
        info = np.linalg.inv(r.covariance)
        assert_allclose(-H, info, rtol=1e-3, atol=1e-6 * np.abs(info).max())


class TestFailures:
    def test_rank_deficient(self, table_a7):
        d = build_design(table_a7, LATTICE[0], BASELINES)
        dup = np.hstack([d.matrix, d.matrix[:, :1]])
        bad = DesignMatrix(dup, d.columns + d.columns[:1], d.spec, d.baselines, d.factors)
        with pytest.raises(RankDeficientError):
            fit(table_a7, bad)

    def test_max_iter(self, table_a7):
        d = build_design(table_a7, ModelSpec.parse(HOMOGENEOUS), BASELINES)
        with pytest.raises(ConvergenceError):
            fit(table_a7, d, FitOptions(max_iter=1))

    def test_saturated_zero_count(self):
        f = [Factor(n, ("1", "2")) for n in FACTORS]
        v = np.full((2, 2, 2), 3)
        v[1, 1, 1] = 0
        t = ContingencyTable(f, v)
        with pytest.raises(ValueError, match="positive"):
            fit(t, build_design(t, LATTICE[-1]))

    def test_zero_cell_allowed_below_saturation(self):
        f = [Factor(n, ("1", "2")) for n in FACTORS]
        v = np.full((2, 2, 2), 3)
        v[1, 1, 1] = 0
        t = ContingencyTable(f, v)
        r = fit(t, build_design(t, LATTICE[7]))
        assert r.converged
        assert np.max(np.abs(r.score())) <= 1e-6

    def test_row_mismatch(self, table_a7, table_b12):
        with pytest.raises(ValueError):
            fit(table_b12, build_design(table_a7, LATTICE[0], BASELINES))


class TestSerialization:
    def test_json_round_trip(self, model2):
        back = FitResult.from_json(model2.to_json(), design=model2.design)
        assert back.labels == model2.labels
        assert_allclose(back.coefficients, model2.coefficients, rtol=0, atol=0)
        assert_allclose(back.covariance, model2.covariance, rtol=0, atol=0)
        assert back.deviance == model2.deviance
        assert json.loads(model2.to_json())["model"] == HOMOGENEOUS

    def test_refit_from_emitted_table(self, model1, table_a7):
        again = ContingencyTable.from_json(table_a7.to_json())
        r = fit_model(again, HOMOGENEOUS)
        assert np.array_equal(again.counts, table_a7.counts)
        assert_allclose(r.coefficients, model1.coefficients, rtol=0, atol=1e-10)
