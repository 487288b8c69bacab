import json
from importlib import resources
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hygrospec.bench_cases import (
    BUILTIN_CASES,
    CaseConfig,
    ParseError,
    VALIDATION_U0,
    build_problem,
    builtin_case,
    convergence_sweep,
    ingest_measurements,
    load_schema,
    rain_peak_physical,
    read_csv_table,
    run_spectral,
    sweep_workers,
    validate_config,
    write_csv_table,
)
from hygrospec.materials import saturation_pressure
from hygrospec.postproc import compute_errors
from hygrospec.problem import ConfigurationError

DOCS_SCHEMA = Path(__file__).resolve().parents[1] / "docs" / "case_config.schema.json"


def constant_case(horizon_s=36000.0):
    """Single layer with constant coefficients and a curved initial profile."""
    d = builtin_case("case1").to_dict()
    d["name"] = "constant"
    d["layers"] = [{"length_m": 0.1, "material": {
        "c_M": {"poly": [20.0]}, "c_T": {"poly": [30.0]}, "k_M": {"poly": [1.0]},
        "k_T": {"poly": [1.0]}, "k_TM": {"poly": [0.1]},
    }}]
    d["boundaries"]["left"]["ambient"] = {"constant": {"T_K": 298.0, "P_v_Pa": 1400.0}}
    d["boundaries"]["right"]["ambient"] = {"constant": {"T_K": 290.0, "P_v_Pa": 900.0}}
    d["initial"] = {"polynomial": {"u": [1.0, 0.02, -0.03], "v": [1.0, 0.3, -0.5, 0.2]}}
    d["horizon_s"] = horizon_s
    return CaseConfig.from_dict(d)


def write(tmp_path, text, name="m.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestBuiltins:
    def test_case1(self, case1_cfg):
        b = case1_cfg.data["boundaries"]
        assert b["left"]["h_M_s_per_m"] == 2e-7
        assert b["right"]["h_M_s_per_m"] == 3e-8
        assert case1_cfg.total_length == pytest.approx(0.1)
        assert case1_cfg.output_times().size == 1681

    def test_case2_rain_peak(self, case2_cfg):
        assert rain_peak_physical(case2_cfg) == pytest.approx(1.53e-4, rel=0.01)
        assert rain_peak_physical(case2_cfg, "right") == 0.0

    def test_validation_initial(self, validation_cfg):
        p = build_problem(validation_cfg)
        assert float(p.u0(0.0)) == pytest.approx(1.015)
        assert VALIDATION_U0[0] == 1.015
        assert validation_cfg.total_length == pytest.approx(0.16)

    def test_case1_initial_vapour_pressure(self, case1_problem):
        assert float(case1_problem.v0(0.5)) == pytest.approx(1160.0 / 1166.9)

    def test_unknown(self):
        with pytest.raises(ConfigurationError):
            builtin_case("case9")

    @pytest.mark.parametrize("name", sorted(BUILTIN_CASES))
    def test_schema_valid_and_roundtrip(self, name, tmp_path):
        cfg = builtin_case(name)
        validate_config(cfg.data)
        cfg.save(tmp_path / "c.json")
        back = CaseConfig.load(tmp_path / "c.json")
        assert back.data == cfg.data
        assert back.to_json() == cfg.to_json()

    def test_docs_schema_matches_packaged(self):
        packaged = json.loads(resources.files("hygrospec").joinpath("case_config.schema.json").read_text())
        assert json.loads(DOCS_SCHEMA.read_text()) == packaged == load_schema()


class TestValidation:
    def _data(self):
        return builtin_case("case1").to_dict()

    def test_missing_field(self):
        d = self._data()
        del d["layers"]
        with pytest.raises(ConfigurationError):
            CaseConfig.from_dict(d)

    def test_unknown_material(self):
        d = self._data()
        d["layers"][0]["material"] = "granite"
        with pytest.raises(ConfigurationError, match="granite"):
            CaseConfig.from_dict(d)

    def test_negative_length(self):
        d = self._data()
        d["layers"][0]["length_m"] = -0.1
        with pytest.raises(ConfigurationError):
            CaseConfig.from_dict(d)

    def test_robin_needs_coefficients(self):
        d = self._data()
        del d["boundaries"]["left"]["h_M_s_per_m"]
        with pytest.raises(ConfigurationError):
            CaseConfig.from_dict(d)

    def test_bad_json(self, tmp_path):
        with pytest.raises(ConfigurationError):
            CaseConfig.load(write(tmp_path, "{not json", "c.json"))
        with pytest.raises(ConfigurationError):
            CaseConfig.load(tmp_path / "absent.json")

    def test_overrides(self, case1_cfg):
        cfg = case1_cfg.with_overrides(spectral={"modes": 6})
        assert cfg.data["spectral"]["modes"] == 6
        assert case1_cfg.data["spectral"]["modes"] == 10


class TestIngestion:
    def test_interpolation(self, tmp_path):
        p = write(tmp_path, "time_s,value,position_m\n0,297.15,0.04\n3600,297.65,0.04\n")
        (s,) = ingest_measurements(p)
        assert s(1800.0) == pytest.approx(297.40)
        assert s.position_m == 0.04
        with pytest.raises(ValueError):
            s(7200.0)

    def test_empty(self, tmp_path):
        with pytest.raises(ParseError):
            ingest_measurements(write(tmp_path, ""))
        with pytest.raises(ParseError):
            ingest_measurements(write(tmp_path, "time_s,value,position_m\n"))

    def test_relative_humidity_range(self, tmp_path):
        p = write(tmp_path, "time_s,value,position_m\n0,0.5,0.0\n60,1.2,0.0\n")
        with pytest.raises(ParseError) as info:
            ingest_measurements(p, quantity="relative_humidity")
        assert info.value.line == 3

    def test_non_monotone_time(self, tmp_path):
        p = write(tmp_path, "time_s,value,position_m\n0,1,0.04\n60,2,0.04\n30,3,0.04\n")
        with pytest.raises(ParseError) as info:
            ingest_measurements(p)
        assert info.value.line == 4
        assert ":4:" in str(info.value)

    def test_missing_column(self, tmp_path):
        with pytest.raises(ParseError, match="position_m"):
            ingest_measurements(write(tmp_path, "time_s,value\n0,1\n"))

    def test_non_finite(self, tmp_path):
        with pytest.raises(ParseError) as info:
            ingest_measurements(write(tmp_path, "time_s,value,position_m\n0,nan,0.04\n"))
        assert info.value.line == 2

    def test_non_numeric(self, tmp_path):
        with pytest.raises(ParseError):
            ingest_measurements(write(tmp_path, "time_s,value,position_m\n0,warm,0.04\n"))

    def test_several_positions_with_uncertainty(self, tmp_path):
        text = "time_s,value,position_m,uncertainty\n0,1,0.08,0.3\n0,2,0.04,0.3\n60,3,0.08,0.3\n60,4,0.04,0.3\n"
        series = ingest_measurements(write(tmp_path, text))
        assert [s.position_m for s in series] == [0.04, 0.08]
        np.testing.assert_array_equal(series[0].values, [2, 4])
        np.testing.assert_array_equal(series[1].uncertainty, [0.3, 0.3])

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=2, max_size=30))
    def test_write_read_roundtrip(self, vals):
        import tempfile

        with tempfile.TemporaryDirectory() as d:
            p = Path(d) / "t.csv"
            t = np.arange(len(vals), dtype=float) * 60.0
            write_csv_table(p, {"time_s": t, "value": np.array(vals), "position_m": np.zeros(len(vals))},
                            fmt="%.17g")
            (s,) = ingest_measurements(p)
            np.testing.assert_array_equal(s.values, vals)
            back = read_csv_table(p)
            np.testing.assert_array_equal(back["time_s"], t)


class TestTabulatedForcing:
    def test_dirichlet_from_files(self, tmp_path):
        t = np.array([0.0, 36000.0])
        write_csv_table(tmp_path / "T.csv", {"time_s": t, "value": [293.15, 295.0], "position_m": [0.0, 0.0]})
        write_csv_table(tmp_path / "H.csv", {"time_s": t, "value": [0.5, 0.6], "position_m": [0.0, 0.0]})
        d = constant_case().to_dict()
        tab = {"tabulated": {"temperature_csv": "T.csv", "humidity_csv": "H.csv",
                             "humidity_quantity": "relative_humidity"}}
        d["boundaries"]["left"] = {"kind": "dirichlet", "ambient": tab, "rain": None}
        cfg = CaseConfig.from_dict(d, base_dir=tmp_path)
        p = build_problem(cfg)
        u, v = p.left.ambient(5.0)
        # humidity is converted to vapour pressure at the sample instants, then interpolated
        P_v = 0.5 * (0.5 * saturation_pressure(293.15) + 0.6 * saturation_pressure(295.0))
        assert u * 293.15 == pytest.approx(293.15 + 0.5 * 1.85)
        assert v * 1166.9 == pytest.approx(P_v, rel=1e-12)


class TestSweep:
    def test_self_comparison_is_zero(self):
        cfg = constant_case()
        ref = run_spectral(cfg, modes=6).fields
        (row,) = convergence_sweep(cfg, [6], reference=ref, workers=1)
        assert (row.eps_inf_u, row.eps_inf_v) == (0.0, 0.0)
        assert row.status == "ok"

    def test_failures_are_recorded(self):
        cfg = constant_case()
        ref = run_spectral(cfg, modes=6).fields
        rows = convergence_sweep(cfg, [5, 1], reference=ref, workers=1)
        assert [r.N for r in rows] == [1, 5]
        assert rows[0].status.startswith("failed") and np.isnan(rows[0].eps_inf_u)
        assert rows[1].status == "ok"

    def test_monotone_until_plateau(self):
        # uniform start at the ambient state keeps the data compatible, so convergence is spectral
        d = constant_case(horizon_s=48 * 3600.0).to_dict()
        d["boundaries"]["left"]["ambient"] = {"builtin": "case1_left"}
        d["boundaries"]["right"]["ambient"] = {"builtin": "case1_right"}
        d["initial"] = {"uniform": {"T_K": 293.15, "P_v_Pa": 1166.9}}
        cfg = CaseConfig.from_dict(d)
        ref = run_spectral(cfg, modes=20, rtol=1e-10, atol=1e-10).fields
        rows = convergence_sweep(cfg, [3, 4, 5, 6, 7, 8], reference=ref, workers=2)
        for f in ("eps_inf_u", "eps_inf_v"):
            errs = [getattr(r, f) for r in rows]
            plateau = errs[-1]
            assert errs[0] > 100 * plateau
            for ea, eb in zip(errs, errs[1:]):
                assert eb <= ea or max(ea, eb) <= 2 * plateau, errs
        # the plateau is set by the integrator: tighter tolerances lower it
        tight = run_spectral(cfg, modes=8, rtol=1e-8, atol=1e-8).fields
        assert compute_errors(tight, ref).eps_inf["v"] < 0.1 * rows[-1].eps_inf_v

    def test_workers_from_environment(self, monkeypatch):
        monkeypatch.setenv("HYGROSPEC_THREADS", "3")
        assert sweep_workers() == 3
        monkeypatch.setenv("HYGROSPEC_THREADS", "many")
        assert sweep_workers() == 1
