import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from labelaug.errors import ValidationError
from labelaug.metrics import (EvalReport, PredictionRecord, calibration_errors,
                              corruption_errors, error_rate, prediction_records)


def oracle_calibration(records, bins, mode):
    """Independent brute-force binning: plain python loops and sums."""
    n = len(records)
    if mode == "equal_count":
        order = sorted(range(n), key=lambda i: (records[i].confidence, i))
        base, extra = divmod(n, bins)
        groups, start = [], 0
        for b in range(bins):
            size = base + (1 if b < extra else 0)
            groups.append(order[start:start + size])
            start += size
    else:
        groups = [[] for _ in range(bins)]
        for i, r in enumerate(records):
            b = min(int(r.confidence * bins), bins - 1)
            groups[b].append(i)
    ece = 0.0
    rms = 0.0
    for group in groups:
        if not group:
            continue
        acc = sum(1.0 for i in group if records[i].predicted == records[i].true) / len(group)
        conf = sum(records[i].confidence for i in group) / len(group)
        weight = len(group) / n
        ece += weight * abs(acc - conf)
        rms += weight * (acc - conf) ** 2
    return ece, rms ** 0.5


def random_records(rng, n):
    recs = []
    for _ in range(n):
        conf = float(rng.uniform(1e-6, 1.0))
        pred = int(rng.integers(0, 5))
        true = pred if rng.uniform() < conf else int(rng.integers(0, 5))
        recs.append(PredictionRecord(conf, pred, true))
    return recs


class TestErrorRate:
    def test_all_correct(self):
        assert error_rate([1, 2, 3], [1, 2, 3]) == 0.0

    def test_all_wrong(self):
        assert error_rate([1, 2, 3], [0, 0, 0]) == 100.0

    def test_seven_of_ten(self):
        preds = [0] * 10
        truth = [0] * 7 + [1] * 3
        assert error_rate(preds, truth) == 30.0

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            error_rate([], [])

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            error_rate([1], [1, 2])


class TestCorruptionErrors:
    def test_fixture_mean_is_30(self):
        ce, mce = corruption_errors({"gaussian_noise": [10, 20, 30, 40, 50]})
        assert ce["gaussian_noise"] == 30.0
        assert mce == 30.0

    def test_single_corruption_mce_equals_ce(self):
        ce, mce = corruption_errors({"contrast": [1, 2, 3, 4, 5]})
        assert mce == ce["contrast"]

    def test_randomized_against_mean_oracle(self, rng):
        for _ in range(200):
            k = int(rng.integers(1, 8))
            table = {f"c{i}": list(rng.uniform(0, 100, 5)) for i in range(k)}
            ce, mce = corruption_errors(table)
            for cid, errs in table.items():
                assert abs(ce[cid] - np.mean(errs)) < 1e-12
            assert abs(mce - np.mean([ce[c] for c in table])) < 1e-12

    def test_missing_severity_rejected(self):
        with pytest.raises(ValidationError, match="severities"):
            corruption_errors({"contrast": [1, 2, 3, 4]})

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            corruption_errors({})


class TestCalibration:
    def test_perfectly_calibrated_is_zero(self):
        # one bin whose confidence equals its empirical accuracy
        recs = [PredictionRecord(0.8, 0, 0)] * 8 + [PredictionRecord(0.8, 0, 1)] * 2
        ece, rms = calibration_errors(recs, bins=1)
        assert ece == pytest.approx(0.0, abs=1e-12)
        assert rms == pytest.approx(0.0, abs=1e-12)

    def test_single_bin_arithmetic(self):
        recs = [PredictionRecord(0.9, 0, 0 if i < 5 else 1) for i in range(10)]
        ece, rms = calibration_errors(recs, bins=1)
        assert ece == pytest.approx(0.4, abs=1e-12)
        assert rms == pytest.approx(0.4, abs=1e-12)

    def test_equal_count_matches_oracle(self, rng):
        for trial in range(300):
            n = int(rng.integers(20, 200))
            bins = int(rng.integers(1, 16))
            recs = random_records(rng, max(n, bins))
            got = calibration_errors(recs, bins, "equal_count")
            want = oracle_calibration(recs, bins, "equal_count")
            assert abs(got[0] - want[0]) < 1e-12
            assert abs(got[1] - want[1]) < 1e-12

    def test_equal_width_matches_oracle(self, rng):
        for trial in range(200):
            recs = random_records(rng, int(rng.integers(5, 150)))
            bins = int(rng.integers(1, 20))
            got = calibration_errors(recs, bins, "equal_width")
            want = oracle_calibration(recs, bins, "equal_width")
            assert abs(got[0] - want[0]) < 1e-12
            assert abs(got[1] - want[1]) < 1e-12

    def test_rms_at_least_ece(self, rng):
        for _ in range(200):
            recs = random_records(rng, int(rng.integers(10, 100)))
            ece, rms = calibration_errors(recs, bins=7)
            assert rms >= ece - 1e-12

    def test_permutation_invariant(self, rng):
        recs = random_records(rng, 100)
        base = calibration_errors(recs, 10)
        for _ in range(5):
            perm = list(rng.permutation(len(recs)))
            shuffled = [recs[i] for i in perm]
            got = calibration_errors(shuffled, 10)
            assert got[0] == pytest.approx(base[0], abs=1e-12)
            assert got[1] == pytest.approx(base[1], abs=1e-12)

    def test_more_bins_than_records_rejected_in_equal_count(self):
        recs = [PredictionRecord(0.5, 0, 0)] * 3
        with pytest.raises(ValidationError, match="bins <= n"):
            calibration_errors(recs, bins=4, mode="equal_count")
        calibration_errors(recs, bins=4, mode="equal_width")  # fine: empty bins are 0

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            calibration_errors([], 5)

    def test_confidence_range_validated(self):
        with pytest.raises(ValidationError):
            PredictionRecord(0.0, 0, 0)
        with pytest.raises(ValidationError):
            PredictionRecord(1.2, 0, 0)

    def test_records_from_probs(self):
        probs = np.array([[0.7, 0.3], [0.2, 0.8]])
        recs = prediction_records(probs, np.array([0, 1]), np.array([0, 0]))
        assert recs[0].confidence == pytest.approx(0.7)
        assert recs[1].true == 0 and recs[1].predicted == 1


class TestEvalReport:
    def make_report(self):
        ce, mce = corruption_errors({"contrast": [1, 2, 3, 4, 5],
                                     "brightness": [2, 4, 6, 8, 10]})
        return EvalReport(
            run_id="abc123", clean_error=12.5, ece=4.2, rms=6.1,
            corruption_severity_errors={"contrast": [1, 2, 3, 4, 5],
                                        "brightness": [2, 4, 6, 8, 10]},
            corruption_ce=ce, mce=mce,
            attack_errors={"fgsm@0.03": 55.0, "pgd@0.3": 88.25},
        )

    def test_json_round_trip(self):
        report = self.make_report()
        again = EvalReport.from_json(report.to_json())
        assert again.to_json() == report.to_json()

    def test_json_is_canonical(self):
        report = self.make_report()
        keys = list(json.loads(report.to_json()))
        assert keys[0] == "schema_version"
        assert report.to_json() == self.make_report().to_json()

    def test_mce_must_match_mean(self):
        with pytest.raises(ValidationError, match="mean"):
            EvalReport(run_id="x", clean_error=1.0, ece=1.0, rms=1.0,
                       corruption_ce={"contrast": 10.0}, mce=11.0)

    def test_rates_validated(self):
        with pytest.raises(ValidationError):
            EvalReport(run_id="x", clean_error=123.0, ece=1.0, rms=2.0)

    def test_csv_row(self):
        text = self.make_report().to_csv_row()
        lines = text.splitlines()
        assert len(lines) == 2
        header = lines[0].split(",")
        values = lines[1].split(",")
        assert header[:5] == ["run_id", "clean_error", "mce", "ece", "rms"]
        assert len(header) == len(values)

    def test_metric_rows_order(self):
        rows = [name for name, _ in self.make_report().metric_rows()]
        assert rows == ["clean_error", "mce", "ece", "rms", "fgsm@0.03", "pgd@0.3"]


@given(st.lists(st.tuples(st.floats(0.01, 1.0), st.booleans()), min_size=1, max_size=80),
       st.integers(1, 10))
@settings(max_examples=120, deadline=None)
def test_rms_dominates_ece_property(pairs, bins):
    recs = [PredictionRecord(conf, 0, 0 if ok else 1) for conf, ok in pairs]
    bins = min(bins, len(recs))
    ece, rms = calibration_errors(recs, bins)
    assert rms >= ece - 1e-12
