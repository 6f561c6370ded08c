import json
from dataclasses import replace

import numpy as np
import pytest

from cyclepgd.attack import (
    CYCLE_DETECT,
    EARLY_SUCCESS,
    NAIVE,
    AttackConfig,
    AttackOutcome,
    run_pgd_cd,
)
from cyclepgd.harness import (
    ReportFormatError,
    evaluate_clean,
    evaluate_robust,
    generate_synthetic_dataset,
    iteration_stats,
    lower_median,
    read_report,
    reduction_sweep,
    verify_cycle_soundness,
    verify_equivalence,
    write_report,
)
from cyclepgd.models import LinearSoftmaxClassifier, MlpClassifier


def _constant_model(d, m=2):
    # always predicts class 0; zero input gradient everywhere
    b = np.zeros(m)
    b[0] = 1.0
    return LinearSoftmaxClassifier(n_classes=m).set_weights(np.zeros((m, d)), b)


class TestEvaluateClean:
    def test_constant_model_balanced_set(self, blobs2):
        acc, mask = evaluate_clean(_constant_model(blobs2.dim), blobs2)
        assert acc == 50.0
        assert len(mask) == len(blobs2)
        assert mask.sum() == len(blobs2) // 2

    def test_perfect_model(self, blobs16, mlp16):
        acc, mask = evaluate_clean(mlp16, blobs16)
        assert acc == 100.0
        assert mask.all()


class TestIterationStats:
    def _outcome(self, tricked, iters):
        return AttackOutcome(
            status="tricked" if tricked else "budget_exhausted",
            iterations_used=iters,
            final_delta=np.zeros(1),
        )

    def test_small_example(self):
        outcomes = [self._outcome(True, k) for k in (1, 2, 3)]
        stats = iteration_stats(outcomes)
        assert stats.tricked.mean == 2.0 and stats.tricked.median == 2.0
        assert stats.untricked is None
        assert stats.overall.count == 3

    def test_partition(self):
        outcomes = [self._outcome(True, 2), self._outcome(False, 10), self._outcome(False, 20)]
        stats = iteration_stats(outcomes)
        assert stats.tricked.count + stats.untricked.count == stats.overall.count

    def test_lower_median_even_count(self):
        assert lower_median([1, 2, 3, 4]) == 2.0
        assert lower_median([4, 3]) == 3.0

    def test_clean_misclassified_excluded(self):
        outcomes = [
            self._outcome(True, 5),
            AttackOutcome(status="clean_misclassified", iterations_used=0, final_delta=np.zeros(1)),
        ]
        stats = iteration_stats(outcomes)
        assert stats.overall.count == 1

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            iteration_stats([])


class TestEvaluateRobust:
    def test_constant_model_never_tricked(self, blobs2):
        model = _constant_model(blobs2.dim)
        cfg = AttackConfig(eps=0.3, t_iter=50, seed=1)
        report = evaluate_robust(model, blobs2, cfg)
        for mode in (NAIVE, EARLY_SUCCESS, CYCLE_DETECT):
            assert report.modes[mode]["robust_accuracy"] == report.clean_accuracy
            assert report.modes[mode]["n_tricked"] == 0
        # zero gradient: delta never leaves the origin, cycle at iteration 2
        cd = report.modes[CYCLE_DETECT]
        assert cd["total_iterations"] == 2 * report.n_clean_correct
        assert report.modes[NAIVE]["total_iterations"] == 50 * report.n_clean_correct

    def test_mode_equivalence_on_trained_mlp(self, blobs16, mlp16, cfg16):
        report = evaluate_robust(mlp16, blobs16, replace(cfg16, t_iter=400))
        naive, es, cd = (report.modes[m] for m in (NAIVE, EARLY_SUCCESS, CYCLE_DETECT))
        assert cd["robust_accuracy"] == es["robust_accuracy"] == naive["robust_accuracy"]
        assert cd["total_iterations"] <= es["total_iterations"] <= naive["total_iterations"]
        assert report.reduction_percent is not None and report.reduction_percent > 0

    def test_undefended_model_collapses(self, blobs2, linear2):
        cfg = AttackConfig(eps=0.4, t_iter=200, seed=2)
        report = evaluate_robust(linear2, blobs2, cfg, modes=(EARLY_SUCCESS, CYCLE_DETECT))
        cd = report.modes[CYCLE_DETECT]
        assert cd["robust_accuracy"] <= 5.0
        assert cd["iteration_stats"]["tricked"]["median"] <= 10

    def test_total_is_sum_of_rows(self, blobs16, mlp16, cfg16):
        report = evaluate_robust(mlp16, blobs16, cfg16, modes=(CYCLE_DETECT,))
        rows = report.modes[CYCLE_DETECT]["per_image"]
        assert report.modes[CYCLE_DETECT]["total_iterations"] == sum(r["iterations"] for r in rows)
        assert len(rows) == len(blobs16)

    def test_robust_at_most_clean(self, blobs16, mlp16, cfg16):
        report = evaluate_robust(mlp16, blobs16, cfg16, modes=(CYCLE_DETECT,))
        assert report.modes[CYCLE_DETECT]["robust_accuracy"] <= report.clean_accuracy

    def test_per_image_error_recorded_not_raised(self, blobs2):
        class FlakyModel(LinearSoftmaxClassifier):
            def eval_grad_and_label(self, x_adv, y):
                if self._poison is not None and abs(float(x_adv[0]) - self._poison) < 1e-12:
                    raise RuntimeError("injected failure")
                return super().eval_grad_and_label(x_adv, y)

        model = FlakyModel(n_classes=2, n_steps=50)
        model._poison = None
        model.fit(blobs2.X, blobs2.y)
        _, mask = evaluate_clean(model, blobs2)
        victim = int(np.flatnonzero(mask)[0])
        model._poison = float(blobs2.X[victim, 0])

        cfg = AttackConfig(eps=0.2, t_iter=20, seed=0)
        report = evaluate_robust(model, blobs2, cfg, modes=(CYCLE_DETECT,))
        rows = report.modes[CYCLE_DETECT]["per_image"]
        assert rows[victim]["status"] == "error"
        assert "injected failure" in rows[victim]["error"]
        assert report.modes[CYCLE_DETECT]["n_errors"] == 1


class TestReductionSweep:
    def test_budget_one_zero_reduction(self, blobs16, mlp16, cfg16):
        curve = reduction_sweep(mlp16, blobs16, [1], cfg16)
        assert curve[0]["reduction_percent"] == 0.0
        assert curve[0]["naive_iterations"] == curve[0]["cycle_detect_iterations"]

    def test_monotone_on_fast_cycling_fixture(self, blobs16, mlp16, cfg16):
        # every untricked image cycles within 100 iterations on this fixture
        curve = reduction_sweep(mlp16, blobs16, [100, 250, 500], cfg16)
        reductions = [p["reduction_percent"] for p in curve]
        assert reductions == sorted(reductions)
        assert len(curve) == 3

    def test_rejects_bad_budgets(self, blobs16, mlp16, cfg16):
        for budgets in ([], [0, 5], [100, 10]):
            with pytest.raises(ValueError):
                reduction_sweep(mlp16, blobs16, budgets, cfg16)


class TestSyntheticData:
    def test_deterministic(self):
        a = generate_synthetic_dataset("blobs", 50, 8, 3, seed=123)
        b = generate_synthetic_dataset("blobs", 50, 8, 3, seed=123)
        assert a.X.tobytes() == b.X.tobytes()
        assert np.array_equal(a.y, b.y)

    def test_seed_changes_data(self):
        a = generate_synthetic_dataset("blobs", 50, 8, 3, seed=1)
        b = generate_synthetic_dataset("blobs", 50, 8, 3, seed=2)
        assert a.X.tobytes() != b.X.tobytes()

    @pytest.mark.parametrize("kind", ["blobs", "rings"])
    def test_ranges_and_balance(self, kind):
        ds = generate_synthetic_dataset(kind, 101, 6, 4, seed=9)
        assert ds.X.min() >= 0.0 and ds.X.max() <= 1.0
        counts = np.bincount(ds.y, minlength=4)
        assert counts.max() - counts.min() <= 1
        assert ds.y.max() < 4

    def test_blobs_trainable(self, blobs16, mlp16):
        assert mlp16.score(blobs16.X, blobs16.y) >= 0.95

    def test_rings_trainable(self):
        ds = generate_synthetic_dataset("rings", 300, 2, 2, seed=4)
        model = MlpClassifier(n_classes=2, hidden=24, activation="tanh",
                              n_steps=2000, learning_rate=0.3, seed=0)
        model.fit(ds.X, ds.y)
        assert model.score(ds.X, ds.y) >= 0.9

    def test_rejects_bad_params(self):
        with pytest.raises(ValueError):
            generate_synthetic_dataset("moons", 10, 2, 2, seed=0)
        with pytest.raises(ValueError):
            generate_synthetic_dataset("blobs", 0, 2, 2, seed=0)


@pytest.fixture(scope="module")
def report(blobs16, mlp16):
    cfg = AttackConfig(eps=0.06, t_iter=200, seed=5)
    return evaluate_robust(mlp16, blobs16, cfg,
                           modes=(NAIVE, EARLY_SUCCESS, CYCLE_DETECT))


class TestReportIO:

    def test_roundtrip_counts_exact(self, tmp_path, report):
        path = tmp_path / "report.json"
        write_report(report, path)
        loaded = read_report(path)
        assert loaded.n_images == report.n_images
        assert loaded.n_clean_correct == report.n_clean_correct
        for mode in report.modes:
            assert loaded.modes[mode]["total_iterations"] == report.modes[mode]["total_iterations"]
            assert loaded.modes[mode]["n_tricked"] == report.modes[mode]["n_tricked"]

    def test_reduction_recomputable(self, report):
        naive = report.modes[NAIVE]["total_iterations"]
        cd = report.modes[CYCLE_DETECT]["total_iterations"]
        assert report.reduction_percent == 100.0 * (1.0 - cd / naive)

    def test_unknown_schema_rejected(self, tmp_path, report):
        path = tmp_path / "report.json"
        write_report(report, path)
        doc = json.loads(path.read_text())
        doc["schema_version"] = 42
        path.write_text(json.dumps(doc))
        with pytest.raises(ReportFormatError):
            read_report(path)

    def test_malformed_rejected(self, tmp_path):
        path = tmp_path / "report.json"
        path.write_text("{not json")
        with pytest.raises(ReportFormatError):
            read_report(path)

    def test_missing_field_rejected(self, tmp_path, report):
        path = tmp_path / "report.json"
        write_report(report, path)
        doc = json.loads(path.read_text())
        del doc["modes"]
        path.write_text(json.dumps(doc))
        with pytest.raises(ReportFormatError):
            read_report(path)


class TestVerifyHelpers:
    def test_equivalence_clean_pass(self, blobs16, mlp16, cfg16):
        summary = verify_equivalence(mlp16, blobs16, replace(cfg16, t_iter=300))
        assert summary["n_checked"] == 160
        assert summary["n_mismatches"] == 0
        assert len(summary["cycle_outcomes"]) > 0

    def test_cycle_soundness_pass(self, blobs16, mlp16, cfg16):
        cfg = replace(cfg16, t_iter=300)
        checked = 0
        for i in range(len(blobs16)):
            out = run_pgd_cd(mlp16, blobs16.image(i), int(blobs16.y[i]), cfg.for_image(i))
            if out.status != "cycle_detected":
                continue
            ok, detail = verify_cycle_soundness(
                mlp16, blobs16.image(i), int(blobs16.y[i]), cfg.for_image(i), out
            )
            assert ok, detail
            checked += 1
            if checked >= 5:
                break
        assert checked >= 3

    def test_cycle_soundness_rejects_non_cycle(self, blobs16, mlp16, cfg16):
        out = AttackOutcome(status="tricked", iterations_used=3, final_delta=np.zeros(16))
        ok, detail = verify_cycle_soundness(mlp16, blobs16.image(0), 0, cfg16, out)
        assert not ok
