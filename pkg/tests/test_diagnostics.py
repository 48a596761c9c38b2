import csv
import json
import math

import numpy as np
import pytest

from oracles import hinge_grad, unlabeled_grad
from tsgs3vm.data import SemiDataset
from tsgs3vm.diagnostics import (
    MAX_SUPPORT,
    SERIES_HEADER,
    KernelTwin,
    gap_estimate,
    objective_value,
    rkhs_grad_norm,
    run_diagnostics,
    theory_constants,
    twin_step,
    write_series_csv,
    write_summary_json,
)
from tsgs3vm.errors import ConfigError, ResourceError
from tsgs3vm.loss import UnlabeledLoss
from tsgs3vm.model import Model, predict_scores
from tsgs3vm.rf import KernelSpec, exact_rbf
from tsgs3vm.trainer import Constant, TheoremRate, TrainConfig

SHG = UnlabeledLoss("shg")


def decaying_cfg(**kw):
    base = dict(C=1.0, C_star=1.0, sigma=0.5, schedule=TheoremRate(1.0), T=16, m=8,
                batch_labeled=1, batch_unlabeled=1, loss=UnlabeledLoss("sshg"))
    base.update(kw)
    return TrainConfig(**base)


class TestConstants:
    def test_d_value(self):
        c = theory_constants(decaying_cfg(loss=SHG, T=64))
        assert c.M == 2.0 and c.kappa == 1.0 and c.phi == 2.0
        assert c.D == pytest.approx(4 * (1 + math.sqrt(2)) ** 2)
        assert c.D == pytest.approx(23.3137, abs=1e-4)
        assert c.gap_bound == pytest.approx(2.914, abs=1e-3)
        assert c.norm_bound == 2.0

    def test_supervised_only(self):
        c = theory_constants(decaying_cfg(C=3.0, C_star=0.0))
        assert c.M == 3.0 and c.M_prime == 3.0

    def test_da_uses_derivative_bound(self):
        c = theory_constants(decaying_cfg(loss=UnlabeledLoss("da")))
        assert c.M == pytest.approx(1 + math.sqrt(10) * math.exp(-0.5))

    def test_constant_schedule_has_no_gap_bound(self):
        c = theory_constants(decaying_cfg(schedule=Constant(10.0)))
        assert c.D is None and c.gap_bound is None and c.grad_bound(1.0, 1.0) is None

    def test_grad_bound_formula(self):
        c = theory_constants(decaying_cfg(T=16))
        E = 3.0 + 2.0**2 * 2.0 * (1 + math.sqrt(2))
        F = 2 * 2.0**2 * 0.5
        assert c.grad_bound(3.0, 0.5) == pytest.approx(E / 2 + F / 8)

    def test_unresolved(self):
        with pytest.raises(ConfigError):
            theory_constants(TrainConfig())


class TestTwin:
    def test_first_step_oracle(self):
        # h_1 = -gamma (C l'(0, y) k(x_l, .) + C* u'(0) k(x_u, .)) with u'(0) = 0
        data = SemiDataset([[0.0, 1.0]], [1.0], [[1.0, 0.0]])
        twin = KernelTwin.over_pools(data, 0.5)
        twin_step(twin, 0.5, [0], [1.0], [0.0], [0], [0.0], 2.0, 1.0, SHG, 1)
        np.testing.assert_allclose(twin.weights, [1.0, 0.0])
        x = np.array([0.3, 0.3])
        assert twin(x[None])[0] == pytest.approx(exact_rbf([0.0, 1.0], x, KernelSpec(0.5)))

    def test_closed_form_constant_step(self):
        # constant derivatives: weight of the only labeled point is 1 - (1 - gamma)^t
        data = SemiDataset([[0.0]], [1.0], [[5.0]])
        twin = KernelTwin.over_pools(data, 1.0)
        gamma = 0.2
        for t in range(1, 6):
            twin_step(twin, gamma, [0], [1.0], [0.0], [0], [5.0], 1.0, 1.0, SHG, 1)
            assert twin.weights[0] == pytest.approx(1 - (1 - gamma) ** t)
            assert twin.weights[1] == 0.0

    def test_repeated_index_accumulates(self):
        data = SemiDataset([[0.0], [1.0]], [1.0, -1.0], [[2.0]])
        twin = KernelTwin.over_pools(data, 1.0)
        twin_step(twin, 0.5, [0, 0], [1.0, 1.0], [0.0, 0.0], [0], [0.0], 1.0, 0.0, SHG, 2)
        np.testing.assert_allclose(twin.weights, [0.5, 0.0, 0.0])

    def test_norm_matches_pairwise_sum(self, rng):
        S = rng.normal(size=(6, 2))
        w = rng.normal(size=6)
        twin = KernelTwin(S, 0.7, w)
        brute = sum(w[i] * w[j] * exact_rbf(S[i], S[j], KernelSpec(0.7)) for i in range(6) for j in range(6))
        assert twin.norm() ** 2 == pytest.approx(brute, abs=1e-10)

    def test_support_cap(self):
        with pytest.raises(ResourceError) as exc:
            KernelTwin(np.zeros((MAX_SUPPORT + 1, 1)), 1.0)
        assert exc.value.exit_code == 6


class TestObjective:
    def test_zero_function(self, small_data):
        model = Model(0, 4, small_data.d, 1.0)
        assert objective_value(model, small_data, 2.0, 3.0, SHG) == pytest.approx(5.0)

    def test_regulariser_only(self, rng):
        data = SemiDataset(rng.normal(size=(3, 2)), [1, -1, 1], rng.normal(size=(4, 2)))
        coef = rng.normal(size=(2, 5))
        model = Model(1, 5, 2, 1.0, coefficients=coef)
        assert objective_value(model, data, 0.0, 0.0, SHG) == pytest.approx(0.5 * np.sum(coef**2))

    def test_brute_force(self, rng):
        data = SemiDataset(rng.normal(size=(4, 2)), [1, -1, 1, -1], rng.normal(size=(5, 2)))
        twin = KernelTwin.over_pools(data, 0.5)
        twin.weights = rng.normal(size=9)
        spec = KernelSpec(0.5)

        def h(x):
            return sum(w * exact_rbf(s, x, spec) for w, s in zip(twin.weights, twin.support))

        sq = sum(twin.weights[i] * h(twin.support[i]) for i in range(9))
        hl = np.mean([max(0.0, 1 - y * h(x)) for x, y in zip(data.X_l, data.y_l)])
        hu = np.mean([max(0.0, 1 - abs(h(x))) for x in data.X_u])
        expected = 0.5 * sq + 2.0 * hl + 0.7 * hu
        assert objective_value(twin, data, 2.0, 0.7, SHG) == pytest.approx(expected, abs=1e-9)


class TestGradNorm:
    def test_regulariser_only(self):
        data = SemiDataset([[0.0]], [1.0], [[3.0]])
        twin = KernelTwin.over_pools(data, 1.0)
        twin.weights = np.array([1.5, 0.0])
        assert rkhs_grad_norm(twin, data, 0.0, 0.0, SHG) == pytest.approx(2.25)

    def test_against_pairwise_oracle(self, rng):
        data = SemiDataset(rng.normal(size=(3, 2)), [1, -1, 1], rng.normal(size=(4, 2)))
        twin = KernelTwin.over_pools(data, 0.8)
        twin.weights = rng.normal(size=7) * 0.3
        loss = UnlabeledLoss("sshg")
        spec = KernelSpec(0.8)
        h = twin.values_on_support()
        coef = twin.weights.copy()
        for i in range(3):
            coef[i] += 1.2 / 3 * hinge_grad(h[i], data.y_l[i])
        for j in range(4):
            coef[3 + j] += 0.4 / 4 * unlabeled_grad("sshg", h[3 + j])
        S = twin.support
        brute = sum(coef[a] * coef[b] * exact_rbf(S[a], S[b], spec) for a in range(7) for b in range(7))
        assert rkhs_grad_norm(twin, data, 1.2, 0.4, loss) == pytest.approx(brute, abs=1e-10)

    def test_wrong_support(self):
        data = SemiDataset([[0.0]], [1.0], [[3.0]])
        with pytest.raises(ConfigError):
            rkhs_grad_norm(KernelTwin([[0.0]], 1.0), data, 1.0, 1.0, SHG)


class TestRun:
    def test_first_row_and_first_gap(self, small_data):
        run = run_diagnostics(decaying_cfg(T=4), small_data, small_data.X_u[:10])
        assert [r["iteration"] for r in run.rows] == [0, 1, 2, 3, 4]
        assert run.rows[0]["gap2"] == 0.0 and run.rows[0]["gamma"] is None
        # zero function: hinge is 1 and the squared SHG is 1/2
        assert run.rows[0]["objective"] == pytest.approx(1.0 * 1.0 + 1.0 * 0.5)

    def test_probe_scores_match_model(self, small_data):
        probes = small_data.X_u[:7]
        run = run_diagnostics(decaying_cfg(T=6), small_data, probes)
        np.testing.assert_allclose(run.probe_scores, predict_scores(run.model, probes), rtol=0, atol=1e-12)

    def test_coupling_matters(self, small_data):
        cfg = decaying_cfg(T=12, batch_labeled=4, batch_unlabeled=4, sigma=0.3, schedule=TheoremRate(2.0))
        a = run_diagnostics(cfg, small_data, small_data.X_u[:10], coupling="f")
        b = run_diagnostics(cfg, small_data, small_data.X_u[:10], coupling="h")
        assert any(ra["h_norm"] != rb["h_norm"] for ra, rb in zip(a.rows, b.rows))

    def test_norm_bound_and_checks(self, small_data):
        run = run_diagnostics(decaying_cfg(T=16), small_data, small_data.X_u[:10], lipschitz=1.0)
        assert run.norm_violations == 0
        assert set(run.checks) == {"norm_bound", "gap_bound", "grad_bound"}
        assert all(r["h_norm"] <= run.constants.norm_bound for r in run.rows)

    def test_bad_coupling(self, small_data):
        with pytest.raises(ConfigError):
            run_diagnostics(decaying_cfg(), small_data, small_data.X_u[:3], coupling="x")

    def test_outputs(self, small_data, tmp_path):
        run = run_diagnostics(decaying_cfg(T=3), small_data, small_data.X_u[:5])
        write_series_csv(tmp_path / "s.csv", run)
        write_summary_json(tmp_path / "s.json", run)
        with open(tmp_path / "s.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == SERIES_HEADER and len(rows) == 5
        summary = json.loads((tmp_path / "s.json").read_text())
        assert summary["constants"]["T"] == 3 and summary["norm_violations"] == 0


def test_gap_estimate():
    assert gap_estimate([1.0, 2.0], [1.0, 0.0]) == 2.0
