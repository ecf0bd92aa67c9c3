import pytest

from llg1d import verify
from llg1d.errors import InvalidArgument


def test_quick_suite_passes(tmp_path):
    lines = []
    results = verify.run_checks("quick", tmpdir=str(tmp_path), report=lines.append)
    assert results and all(r.passed for r in results)
    assert all(r.level == "quick" for r in results)
    assert all(line.startswith("[PASS] ") for line in lines)
    assert sum(r.seconds for r in results) < 10.0


def test_unknown_level_rejected():
    with pytest.raises(InvalidArgument):
        verify.run_checks("medium")


def test_crashing_check_is_reported_as_failure(monkeypatch):
    def broken(ctx):
        raise RuntimeError("boom")

    monkeypatch.setattr(verify, "_CHECKS", [("broken", "quick", broken)])
    (res,) = verify.run_checks("quick", report=None)
    assert not res.passed and "boom" in res.detail


@pytest.mark.slow
def test_zeroed_correction_fails_weak_check():
    ctx = verify.Context(zero_ito_correction=True, weak_paths=2000)
    passed, detail, _ = verify.check_weak_equivalence(ctx)
    assert not passed, detail


def test_determinism_study(tmp_path):
    s = verify.determinism_study(str(tmp_path))
    assert s["path_identical"] and s["ensemble_identical"]


def test_harmonic_identity_study_orders():
    s = verify.harmonic_identity_study()
    assert s["uniform_residual"] == 0.0
    assert all(1.8 <= o <= 2.2 for o in s["orders"])
