# tests/test_output.py
import json
import math

import numpy as np
import pytest

from exceptions import ConfigurationError
from models import Estimate, RegimeStatus
from utils.output import build_document, emit, read_document_config, render_json, sanitize


def test_sanitize_handles_non_finite_and_numpy_values():
    data = {"a": math.inf, "b": -math.inf, "c": math.nan, 2: np.float64(0.5), "e": np.arange(3),
            "f": RegimeStatus.UNKNOWN, "g": Estimate.exact(1.0)}
    clean = sanitize(data)
    assert clean["a"] == "Infinity" and clean["b"] == "-Infinity" and clean["c"] == "NaN"
    assert clean["2"] == 0.5
    assert clean["e"] == [0, 1, 2]
    assert clean["f"] == "unknown"
    assert clean["g"]["ci_low"] == 1.0
    json.dumps(clean, allow_nan=False)


def test_documents_render_deterministically():
    first = build_document("regime", {"seed": 1, "d": 3}, {"T0": math.inf}, "1.0", "0.1.0")
    second = build_document("regime", {"d": 3, "seed": 1}, {"T0": math.inf}, "1.0", "0.1.0")
    assert render_json(first) == render_json(second)
    assert first["metadata"]["seed"] == 1


def test_config_round_trips_through_json_and_csv(tmp_path):
    config = {"kernel": "riesz", "alpha": 1.0, "d": 2, "seed": 7}
    document = build_document("alpha", config, [{"n": 1, "mean": 0.2}], "1.0", "0.1.0")
    json_path, csv_path = tmp_path / "out.json", tmp_path / "out.csv"
    emit(document, [{"n": 1, "mean": 0.2}], "json", str(json_path))
    emit(document, [{"n": 1, "mean": 0.2}], "csv", str(csv_path))
    assert read_document_config(str(json_path)) == config
    assert read_document_config(str(csv_path)) == config
    assert csv_path.read_text().splitlines()[2] == "n,mean"


def test_plain_json_config_is_read_as_is(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"kernel": "heat", "alpha": 1.0}))
    assert read_document_config(str(path)) == {"kernel": "heat", "alpha": 1.0}


def test_bad_config_files(tmp_path):
    with pytest.raises(ConfigurationError):
        read_document_config(str(tmp_path / "missing.json"))
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigurationError):
        read_document_config(str(broken))
    listing = tmp_path / "list.json"
    listing.write_text("[1, 2]")
    with pytest.raises(ConfigurationError):
        read_document_config(str(listing))


def test_reports_cannot_be_written_as_csv():
    document = build_document("regime", {}, {"status": "exists"}, "1.0", "0.1.0")
    with pytest.raises(ConfigurationError):
        emit(document, None, "csv", None)
