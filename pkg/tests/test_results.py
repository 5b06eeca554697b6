import json

from sselab.numerics.observables import ObservableSeries
from sselab.services.montecarlo import StrongErrorTable
from sselab.services.results import (
    RunManifest,
    format_number,
    git_describe,
    utc_now,
    write_manifest,
    write_strong_error_csv,
    write_trace_csv,
)


def test_numbers_round_trip():
    for value in (0.1, 1 / 3, 2.0 ** -11, 1e-300, 123456789.123456789):
        assert float(format_number(value)) == value


def test_strong_error_csv(tmp_path):
    table = StrongErrorTable(scheme="SEXP", step_sizes=[0.25, 0.125], rms_errors=[0.2, 0.1],
                             std_errs=[0.01, 0.005])
    path = write_strong_error_csv(table, tmp_path / "nested" / "strong_error_SEXP.csv")
    assert path.read_text() == "k,rms_error,std_err\n0.25,0.20000000000000001,0.01\n" \
                               "0.125,0.10000000000000001,0.0050000000000000001\n"


def test_trace_csv(tmp_path):
    series = ObservableSeries(observable_name="mass", times=[0.0, 0.5], values=[0.0, 1.5],
                              std_errs=[0.0, 0.25], theory=[0.0, 1.0])
    lines = write_trace_csv(series, tmp_path / "trace.csv").read_text().splitlines()
    assert lines == ["time,mean,std_err,theory", "0,0,0,0", "0.5,1.5,0.25,1"]


def test_manifest(tmp_path):
    manifest = RunManifest(git_describe=git_describe(), master_seed=7, config={"samples": 10},
                           started_at=utc_now())
    manifest.outputs.append("scalar_moments.csv")
    data = json.loads(write_manifest(manifest, tmp_path).read_text())
    assert data["master_seed"] == 7
    assert data["config"] == {"samples": 10}
    assert data["outputs"] == ["scalar_moments.csv"]
    assert isinstance(data["git_describe"], str) and data["git_describe"]
