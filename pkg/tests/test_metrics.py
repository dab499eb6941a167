import numpy as np
import pytest

from oodkit import (
    DomainError,
    ShapeError,
    accuracy,
    auroc,
    confusion_matrix,
    evaluate,
    fpr_at_tpr,
    save_report,
)


def auroc_oracle(id_scores, ood_scores):
    """O(n*m) pairwise count: wins + half-ties over all pairs."""
    total = 0.0
    for a in id_scores:
        for b in ood_scores:
            if a > b:
                total += 1.0
            elif a == b:
                total += 0.5
    return total / (len(id_scores) * len(ood_scores))


class TestAccuracy:
    def test_two_of_three(self):
        assert accuracy([0, 1, 1], [0, 1, 0]) == pytest.approx(2 / 3)

    def test_identical(self):
        assert accuracy([1, 2, 0], [1, 2, 0]) == 1.0

    def test_disjoint(self):
        assert accuracy([1, 1, 1], [0, 0, 0]) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            accuracy([0, 1], [0])

    def test_empty(self):
        with pytest.raises(DomainError):
            accuracy([], [])


class TestAuroc:
    def test_perfect_separation(self):
        assert auroc([2.0, 3.0], [0.0, 1.0]) == 1.0

    def test_all_ties(self):
        assert auroc([1.0, 1.0, 1.0], [1.0, 1.0]) == 0.5

    def test_interleaved(self):
        assert auroc([1.0, 3.0], [2.0]) == 0.5

    def test_empty_side(self):
        with pytest.raises(DomainError):
            auroc([], [1.0])

    def test_matches_pairwise_oracle(self):
        rng = np.random.default_rng(40)
        for _ in range(200):
            n = int(rng.integers(1, 30))
            m = int(rng.integers(1, 30))
            # Integer grid forces plenty of ties.
            a = rng.integers(0, 6, size=n).astype(np.float64)
            b = rng.integers(0, 6, size=m).astype(np.float64)
            assert auroc(a, b) == pytest.approx(auroc_oracle(a, b), abs=1e-12)

    def test_complement_symmetry_tie_free(self):
        rng = np.random.default_rng(41)
        for _ in range(50):
            pool = rng.permutation(40).astype(np.float64)
            a, b = pool[:25], pool[25:]
            assert auroc(a, b) + auroc(b, a) == pytest.approx(1.0, abs=1e-12)

    def test_invariant_under_increasing_transform(self):
        rng = np.random.default_rng(42)
        a = rng.standard_normal(30)
        b = rng.standard_normal(20) - 0.5
        base = auroc(a, b)
        for transform in (lambda x: 3 * x + 2, np.exp, lambda x: x**3):
            assert auroc(transform(a), transform(b)) == pytest.approx(base, abs=1e-12)


class TestFprAtTpr:
    def test_easy_ood(self):
        fpr = fpr_at_tpr(np.arange(1.0, 101.0), [0.5], 0.95)
        assert fpr == 0.0

    def test_ood_above_id(self):
        assert fpr_at_tpr([1.0, 2.0], [5.0, 6.0], 0.95) == 1.0

    def test_full_tpr_keeps_everything(self):
        # k = 0 at target 1.0, so the threshold falls to -inf and every OOD
        # score passes.
        assert fpr_at_tpr([1.0, 2.0], [1.5], 1.0) == 1.0

    def test_threshold_rule_matches_calibrate(self):
        # target 0.95 over 1..100 puts the threshold at the 5th smallest.
        id_scores = np.arange(1.0, 101.0)
        assert fpr_at_tpr(id_scores, [5.0], 0.95) == 0.0
        assert fpr_at_tpr(id_scores, [5.5], 0.95) == 1.0

    def test_non_decreasing_in_target(self):
        # Raising the TPR target lowers the threshold, letting more OOD pass.
        rng = np.random.default_rng(43)
        a = rng.standard_normal(60) + 1
        b = rng.standard_normal(40)
        targets = np.linspace(0.05, 1.0, 20)
        fprs = [fpr_at_tpr(a, b, t) for t in targets]
        assert all(y >= x for x, y in zip(fprs, fprs[1:]))

    def test_empty_side(self):
        with pytest.raises(DomainError):
            fpr_at_tpr([1.0], [], 0.95)


class TestConfusionMatrix:
    def test_row_sums_are_class_counts(self):
        rng = np.random.default_rng(44)
        truth = rng.integers(0, 4, size=100)
        pred = rng.integers(0, 4, size=100)
        confusion = confusion_matrix(pred, truth, n_classes=4)
        assert np.array_equal(confusion.sum(axis=1), np.bincount(truth, minlength=4))

    def test_trace_over_total_is_accuracy(self):
        rng = np.random.default_rng(45)
        truth = rng.integers(0, 3, size=60)
        pred = rng.integers(0, 3, size=60)
        confusion = confusion_matrix(pred, truth)
        assert np.trace(confusion) / confusion.sum() == pytest.approx(
            accuracy(pred, truth)
        )

    def test_explicit_counts(self):
        confusion = confusion_matrix([0, 1, 1], [0, 1, 0], n_classes=2)
        assert np.array_equal(confusion, [[1, 1], [0, 1]])


class TestEvalReport:
    def test_report_with_ood(self, tmp_path):
        rng = np.random.default_rng(46)
        truth = rng.integers(0, 3, size=50)
        pred = truth.copy()
        id_scores = rng.standard_normal(50) + 4
        ood_scores = rng.standard_normal(30)
        report = evaluate(pred, truth, id_scores, ood_scores, tpr_target=0.95)
        assert report.accuracy == 1.0
        assert report.auroc > 0.9
        assert report.n_id == 50 and report.n_ood == 30
        save_report(report, tmp_path / "report.txt", tmp_path / "confusion.csv")
        text = (tmp_path / "report.txt").read_text()
        for key in ("accuracy=", "auroc=", "fpr_at_tpr=", "tpr_target=", "n_id=", "n_ood="):
            assert key in text
        confusion_lines = (tmp_path / "confusion.csv").read_text().splitlines()
        assert confusion_lines[0] == "pred0,pred1,pred2"
        assert len(confusion_lines) == 4

    def test_report_without_ood(self, tmp_path):
        report = evaluate([0, 1], [0, 1])
        assert report.auroc is None
        save_report(report, tmp_path / "report.txt", tmp_path / "confusion.csv")
        assert "auroc=nan" in (tmp_path / "report.txt").read_text()
