"""Bundled pretrained-model table: internal consistency and correlation."""
import pytest

from cmic.table1 import PRETRAINED_MODEL_TABLE, consistency_report


def _row(name):
    for row in PRETRAINED_MODEL_TABLE:
        if row[0] == name:
            return row
    raise KeyError(name)


class TestBundledTable:
    def test_eighteen_rows(self):
        assert len(PRETRAINED_MODEL_TABLE) == 18
        assert len({r[0] for r in PRETRAINED_MODEL_TABLE}) == 18

    def test_resnet18_ratio(self):
        _, c, g, v, _ = _row("ResNet18")
        assert c / g == pytest.approx(v, abs=5e-4)
        assert c / g == pytest.approx(0.101, abs=5e-4)

    def test_efficientnet_b3_ratio(self):
        _, c, g, v, _ = _row("EfficientNet-B3")
        assert c / g == pytest.approx(v, abs=5e-4)
        assert c / g == pytest.approx(0.067, abs=5e-4)

    def test_every_row_within_a_milli(self):
        # the published ncmi column was not consistently rounded from the
        # published cmi/gamma columns; 1e-3 is the actual envelope
        report = consistency_report()
        assert report.max_discrepancy < 1e-3
        for row in report.rows:
            assert row.ncmi_recomputed == pytest.approx(row.ncmi_published, abs=1e-3)


class TestCorrelation:
    def test_published_column(self):
        report = consistency_report()
        assert report.pearson_published == pytest.approx(0.9929, abs=0.01)

    def test_recomputed_column(self):
        report = consistency_report()
        assert report.pearson_recomputed == pytest.approx(0.9929, abs=0.01)

    def test_report_is_deterministic(self):
        a, b = consistency_report(), consistency_report()
        assert a.max_discrepancy == b.max_discrepancy
        assert a.pearson_published == b.pearson_published
