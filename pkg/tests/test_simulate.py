"""Data generation and the Monte Carlo size/power engine."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest

from polybreak.simulate import (
    ChangeModel,
    ErrorModel,
    SimConfig,
    generate,
    mean_function,
    run_power,
    run_size,
    scatter_dump,
)


@pytest.fixture(scope="module")
def null_linear() -> ChangeModel:
    return ChangeModel((1.0, 1.0))


class TestChangeModel:
    def test_null_has_no_break(self, null_linear: ChangeModel) -> None:
        assert not null_linear.has_change
        assert null_linear.break_index(100) is None
        assert null_linear.p == 1

    def test_fractional_break(self) -> None:
        m = ChangeModel((1, 1), (0, 0), k_star_fraction=0.2)
        assert m.break_index(50) == 10
        assert m.break_index(200) == 40

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(beta0=(1, 1), beta_a=(1, 1), k_star=5),
            dict(beta0=(1, 1), beta_a=(0,), k_star=5),
            dict(beta0=(1, 1), beta_a=(0, 0)),
            dict(beta0=(1, 1), beta_a=(0, 0), k_star=5, k_star_fraction=0.5),
            dict(beta0=(1, 1), k_star=5),
            dict(beta0=()),
        ],
    )
    def test_invalid(self, kwargs) -> None:
        with pytest.raises(ValueError):
            ChangeModel(**kwargs)

    @pytest.mark.parametrize("k", [0, 50])
    def test_break_outside_sample(self, k: int) -> None:
        with pytest.raises(ValueError):
            ChangeModel((1, 1), (0, 0), k_star=k).break_index(50)


class TestErrorModel:
    def test_zero_variance_forbidden(self) -> None:
        with pytest.raises(ValueError):
            ErrorModel(sigma=0.0)

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(kind="ar1", phi=1.0),
            dict(kind="garch11", a=0.5, b=0.5),
            dict(kind="iid_student_t", nu=2.0),
            dict(kind="cauchy"),
        ],
    )
    def test_invalid(self, kwargs) -> None:
        with pytest.raises(ValueError):
            ErrorModel(**kwargs)

    @pytest.mark.parametrize(
        "model",
        [
            ErrorModel(sigma=2.0, standardize=True),
            ErrorModel("iid_student_t", nu=6.0, standardize=True),
            ErrorModel("ar1", phi=0.5, standardize=True),
            ErrorModel("garch11", omega=0.2, a=0.1, b=0.7, standardize=True),
        ],
        ids=["normal", "student_t", "ar1", "garch11"],
    )
    def test_standardised_unit_variance(self, model: ErrorModel) -> None:
        e = model.draw(200_000, np.random.default_rng(3))
        assert e.var() == pytest.approx(1.0, abs=0.05)

    def test_student_t_scaled_to_sigma(self) -> None:
        e = ErrorModel("iid_student_t", sigma=3.0, nu=8.0).draw(200_000, np.random.default_rng(4))
        assert e.var() == pytest.approx(9.0, rel=0.05)

    def test_ar1_lag_one_correlation(self) -> None:
        e = ErrorModel("ar1", phi=0.6).draw(100_000, np.random.default_rng(5))
        assert np.corrcoef(e[:-1], e[1:])[0, 1] == pytest.approx(0.6, abs=0.02)


class TestGenerate:
    def test_reproducible_first_values(self, null_linear: ChangeModel) -> None:
        y = generate(50, null_linear, seed=7).y
        assert y[:3].tolist() == [1.0212301533574826, 1.33874553750847, 0.7858621446377825]
        np.testing.assert_array_equal(generate(50, null_linear, seed=7).y, y)

    def test_different_seeds_differ(self, null_linear: ChangeModel) -> None:
        assert not np.array_equal(generate(50, null_linear, seed=1).y, generate(50, null_linear, seed=2).y)

    def test_linear_power_model_mean(self) -> None:
        n = 100
        model = ChangeModel((1, 1), (0, 0), k_star_fraction=0.5)
        mu = mean_function(n, model)
        u = np.arange(1, n + 1) / n
        np.testing.assert_allclose(mu[:50], 1 + u[:50])
        np.testing.assert_array_equal(mu[50:], 0.0)

    def test_quadratic_power_model_mean(self) -> None:
        n = 50
        model = ChangeModel((1, 0, 2), (0, 0, 0), k_star_fraction=0.2)
        mu = mean_function(n, model)
        u = np.arange(1, n + 1) / n
        np.testing.assert_allclose(mu[:10], 1 + 2 * u[:10] ** 2)
        np.testing.assert_array_equal(mu[10:], 0.0)

    def test_residual_is_error_draw(self, null_linear: ChangeModel) -> None:
        n = 60
        y = generate(n, null_linear, seed=np.random.default_rng(9)).y
        e = np.random.default_rng(9).standard_normal(n)
        np.testing.assert_allclose(y - mean_function(n, null_linear), e, atol=1e-15)


class TestScatter:
    def test_regime_switch(self) -> None:
        model = ChangeModel((1, 1), (0, 0), k_star=40)
        dump = scatter_dump(generate(200, model, seed=1), model)
        rows = dump["rows"]
        assert len(rows) == 200
        assert dump["columns"] == ["u", "y", "regime"]
        regimes = [r[2] for r in rows]
        assert regimes[:40] == [0] * 40 and regimes[40:] == [1] * 160
        assert rows[40][0] == pytest.approx(41 / 200)
        assert dump["k_star"] == 40 and dump["p"] == 1

    def test_null_single_regime(self, null_linear: ChangeModel) -> None:
        dump = scatter_dump(generate(30, null_linear, seed=1), null_linear)
        assert {r[2] for r in dump["rows"]} == {0}
        assert dump["k_star"] is None

    def test_serialisable(self, null_linear: ChangeModel) -> None:
        json.dumps(scatter_dump(generate(30, null_linear, seed=1), null_linear))


def _size_config(**kw) -> SimConfig:
    base = dict(reps=100, n_list=(30, 60), change=ChangeModel((1, 1)), gamma=0.0, seed=3)
    base.update(kw)
    return SimConfig(**base)


class TestSimConfig:
    def test_alpha_validation(self) -> None:
        with pytest.raises(ValueError):
            _size_config(alphas=(0.0,))

    def test_n_too_short(self) -> None:
        with pytest.raises(ValueError):
            _size_config(n_list=(7,))

    def test_break_outside_n(self) -> None:
        with pytest.raises(ValueError):
            SimConfig(reps=10, n_list=(30,), change=ChangeModel((1, 1), (0, 0), k_star=40), gamma=0)

    def test_workers_not_in_echo(self) -> None:
        assert "workers" not in _size_config(workers=3).to_dict()


class TestRunSize:
    def test_cells_and_errors(self) -> None:
        rep = run_size(_size_config())
        assert rep.kind == "size" and rep.seed == 3
        assert len(rep.cells) == 4
        for c in rep.cells:
            assert 0 <= c.rate_pct <= 100
            assert c.valid + c.degenerate == c.reps == 100
            assert c.degenerate == 0
            r = c.rejections / c.valid
            assert c.rate_pct == pytest.approx(100 * r)
            assert c.se_pct == pytest.approx(100 * math.sqrt(r * (1 - r) / c.valid))
            assert c.k_hat_mean is None

    def test_smaller_alpha_rejects_less(self) -> None:
        rep = run_size(_size_config())
        for n in (30, 60):
            assert rep.cell(n, 0.05).rejections <= rep.cell(n, 0.10).rejections

    def test_alpha_near_one_rejects_everything(self) -> None:
        rep = run_size(_size_config(alphas=(1 - 1e-12,), reps=50))
        assert all(c.rate_pct == 100.0 for c in rep.cells)

    def test_bit_reproducible_across_workers(self) -> None:
        a = run_size(_size_config()).to_json()
        b = run_size(_size_config()).to_json()
        c = run_size(_size_config(workers=4)).to_json()
        assert a == b == c
        assert run_size(_size_config()).to_tsv() == run_size(_size_config(workers=3)).to_tsv()

    def test_requires_null_model(self) -> None:
        with pytest.raises(ValueError):
            run_size(_size_config(change=ChangeModel((1, 1), (0, 0), k_star_fraction=0.5)))

    def test_correlated_errors_recorded_not_asserted(self) -> None:
        iid = run_size(_size_config(reps=200))
        ar = run_size(_size_config(reps=200, errors=ErrorModel("ar1", phi=0.3)))
        assert ar.config["errors"]["kind"] == "ar1"
        # positive autocorrelation mimics breaks; only the direction is checked
        assert ar.cell(60, 0.05).rate_pct >= iid.cell(60, 0.05).rate_pct


class TestRunPower:
    def test_khat_summary(self) -> None:
        cfg = SimConfig(
            reps=100, n_list=(100,), change=ChangeModel((1, 1), (0, 0), k_star_fraction=0.5),
            gamma=0.0, seed=1,
        )
        rep = run_power(cfg)
        c = rep.cell(100, 0.05)
        assert c.k_star == 50
        assert abs(c.k_hat_median - 50) <= 5
        assert 40 <= c.k_hat_mean <= 60

    def test_requires_change(self) -> None:
        with pytest.raises(ValueError):
            run_power(_size_config())
