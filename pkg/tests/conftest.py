import logging
from datetime import datetime, timedelta

import numpy as np
import pytest

from potassium_anfis import pipeline
from potassium_anfis.pipeline import EcgRecord, Label, LabRecord


@pytest.fixture(autouse=True)
def _quiet_logs(caplog):
    caplog.set_level(logging.ERROR)


def make_ecg(pid, ts, **overrides):
    base = dict(
        rr_ms=800.0, pr_ms=160.0, qrs_ms=95.0, qt_ms=390.0, qtc_ms=440.0,
        p_axis_deg=50.0, qrs_axis_deg=40.0, t_axis_deg=45.0, acci=3,
    )
    base.update(overrides)
    return EcgRecord(pid, ts, **base)


def clinical_like_tables(seed=11):
    """42 patients (10/27/5) where T axis, QTc and ACCI shift with the class.

    T axis carries the strongest class signal, QTc and ACCI weaker ones, and
    the remaining six features are pure noise.
    """
    rng = np.random.default_rng(seed)
    t0 = datetime(2015, 3, 1, 9, 0, 0)
    classes = [(Label.HYPO, 10, 3.2, 10.0, 460.0, 5), (Label.NORMAL, 27, 4.2, 45.0, 440.0, 3),
            (Label.HYPER, 5, 5.6, 85.0, 455.0, 6)]
    ecgs, labs = [], []
    i = 0
    for label, count, k_mid, t_mid, qtc_mid, acci_mid in classes:
        for _ in range(count):
            pid = f"S{i:02d}"
            lab_t = t0 + timedelta(days=i)
            k = round(float(np.clip(rng.normal(k_mid, 0.1), *{
                Label.HYPO: (3.0, 3.4), Label.NORMAL: (3.6, 4.9), Label.HYPER: (5.1, 6.2)}[label])), 1)
            labs.append(LabRecord(pid, lab_t, k))
            ecgs.append(make_ecg(
                pid, lab_t + timedelta(seconds=int(rng.integers(-250, 250))),
                rr_ms=float(round(rng.normal(800, 100))),
                pr_ms=float(round(rng.normal(160, 20))),
                qrs_ms=float(round(rng.normal(95, 10))),
                qt_ms=float(round(rng.normal(390, 30))),
                qtc_ms=float(round(rng.normal(qtc_mid, 12))),
                p_axis_deg=float(round(rng.normal(50, 20))),
                qrs_axis_deg=float(round(rng.normal(40, 30))),
                t_axis_deg=float(round(rng.normal(t_mid, 12))),
                acci=int(max(0, round(rng.normal(acci_mid, 1.5)))),
            ))
            i += 1
    return ecgs, labs


@pytest.fixture
def clinical_cohort():
    ecgs, labs = clinical_like_tables()
    return pipeline.join_cohort(ecgs, labs)


@pytest.fixture(scope="session")
def synthetic_tables():
    return pipeline.generate_synthetic()


@pytest.fixture(scope="session")
def synthetic_cohort(synthetic_tables):
    return pipeline.join_cohort(*synthetic_tables)


@pytest.fixture
def synthetic_csvs(tmp_path, synthetic_tables):
    ecgs, labs = synthetic_tables
    ecg_path = tmp_path / "ecg.csv"
    lab_path = tmp_path / "labs.csv"
    ecg_path.write_text(pipeline.ecg_csv_text(ecgs))
    lab_path.write_text(pipeline.lab_csv_text(labs))
    return ecg_path, lab_path


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
