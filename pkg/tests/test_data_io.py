import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from charge_eq.curves import make_curve
from charge_eq.data_io import (
    ExportError,
    RateSampleSet,
    SampleFormatError,
    export_curve,
    export_solution,
    fit_rate_curve,
    fmt,
    hat_basis,
    load_charging_form,
    load_rate_curve,
    load_samples,
    monotone_projection,
    reference_curve,
    solution_to_dict,
    synthetic_samples,
    write_samples,
)
from charge_eq.equilibrium import solve_endogenous, solve_exogenous, solve_heterogeneous
from charge_eq.model import ClosedFormChargingTime, DomainError, RateChargingTime, RateCurve

from conftest import random_rate_curve

LINE = RateCurve(((0.0, 2.0), (1.0, 1.0)))


# --- ingestion ---------------------------------------------------------------

def test_load_two_rows(tmp_path):
    path = tmp_path / "car.csv"
    path.write_text("0.0,150\n1.0,50")
    s = load_samples(path)
    assert s.samples == ((0.0, 150.0), (1.0, 50.0))
    assert s.vehicle_label == "car"


def test_load_header_comments_and_label(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("# measured on a cold day\nsoc,power_kw\n0.1,120\n\n0.9,40\n")
    s = load_samples(path, label="Model X")
    assert s.vehicle_label == "Model X"
    assert len(s.samples) == 2


def test_load_header_only(tmp_path):
    path = tmp_path / "h.csv"
    path.write_text("soc,power_kw\n")
    with pytest.raises(DomainError, match="at least 2"):
        load_samples(path)


def test_load_zero_power(tmp_path):
    path = tmp_path / "z.csv"
    path.write_text("0.0,150\n0.5,0\n1.0,50\n")
    with pytest.raises(DomainError, match="positive"):
        load_samples(path)


def test_load_soc_out_of_range(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text("0.0,150\n1.2,50\n")
    with pytest.raises(DomainError, match=r"\[0, 1\]"):
        load_samples(path)


@pytest.mark.parametrize("bad,lineno", [
    ("0.0,150\n0.5,abc\n1.0,50\n", 2),
    ("0.0,150\n1.0,50\n0.5\n", 3),
    ("# c\n0.0,150\n0.5,1,2\n", 3),
    ("0.0,150\n0.5,nan\n", 2),
])
def test_load_malformed_row_names_line(tmp_path, bad, lineno):
    path = tmp_path / "m.csv"
    path.write_text(bad)
    with pytest.raises(SampleFormatError, match=f"m.csv:{lineno}:"):
        load_samples(path)


def test_load_missing_file(tmp_path):
    with pytest.raises(ExportError, match="nope.csv"):
        load_samples(tmp_path / "nope.csv")


def test_samples_round_trip(tmp_path):
    s = synthetic_samples(LINE, 30, 0.01, seed=5, label="line")
    write_samples(s, tmp_path / "s.csv")
    back = load_samples(tmp_path / "s.csv", label="line")
    np.testing.assert_allclose(back.soc, s.soc, rtol=1e-11)
    np.testing.assert_allclose(back.power, s.power, rtol=1e-11)


# --- fitting -----------------------------------------------------------------

def test_hat_basis_partition_of_unity():
    knots = np.linspace(0, 1, 7)
    soc = np.random.default_rng(0).uniform(0, 1, 100)
    basis = hat_basis(np.append(soc, [0.0, 1.0]), knots)
    np.testing.assert_allclose(basis.sum(axis=1), 1.0)
    np.testing.assert_allclose(basis @ knots, np.append(soc, [0.0, 1.0]), atol=1e-15)


def test_fit_exact_line():
    soc = np.linspace(0, 1, 33)
    s = RateSampleSet("line", tuple(zip(soc, 2 - soc)))
    curve = fit_rate_curve(s, n_knots=5)
    assert curve.soc.tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert np.max(np.abs(curve.power - (2 - curve.soc))) < 1e-12


def test_fit_monotone_step_unchanged():
    # step at a knot, sampled only at knots, so the raw fit is the step itself
    knots = np.linspace(0, 1, 11)
    power = np.where(knots < 0.55, 2.0, 1.0)
    s = RateSampleSet("step", tuple(zip(knots, power)))
    raw = fit_rate_curve(s, 11, enforce_monotone=False)
    mono = fit_rate_curve(s, 11, enforce_monotone=True)
    np.testing.assert_allclose(mono.power, raw.power, atol=1e-12)
    assert np.all(np.diff(mono.power) <= 0)


@pytest.mark.parametrize("seed", range(10))
def test_fit_noisy_line_within_noise(seed):
    s = synthetic_samples(LINE, 200, noise=0.05, seed=seed)
    curve = fit_rate_curve(s, n_knots=11)
    assert np.max(np.abs(curve.power - (2 - curve.soc))) <= 0.05
    assert curve.is_non_increasing


def test_fit_fills_empty_bins():
    s = RateSampleSet("gap", ((0.0, 2.0), (0.05, 1.95), (0.95, 1.05), (1.0, 1.0)))
    curve = fit_rate_curve(s, n_knots=21)
    np.testing.assert_allclose(curve.power, 2 - curve.soc, atol=1e-12)


def test_fit_rejects_bad_knots():
    with pytest.raises(DomainError):
        fit_rate_curve(synthetic_samples(LINE, 10), n_knots=1)


def test_fit_idempotent():
    rng = np.random.default_rng(11)
    for _ in range(10):
        truth = random_rate_curve(rng)
        noise = 0.1 * truth.power.min()
        s = synthetic_samples(truth, 300, noise, seed=int(rng.integers(1 << 30)))
        first = fit_rate_curve(s, 21)
        dense = synthetic_samples(first, 2000, 0.0, seed=1)
        second = fit_rate_curve(dense, 21)
        np.testing.assert_allclose(second.power, first.power, atol=1e-9)


def test_fit_reference_shapes_are_monotone():
    for i, name in enumerate(("audi_like", "ford_like", "tesla_like")):
        s = synthetic_samples(reference_curve(name), 400, 0.03, seed=i)
        assert fit_rate_curve(s).is_non_increasing


def _pava_oracle(values, weights):
    n = len(values)
    cons = [{"type": "ineq", "fun": lambda x, i=i: x[i] - x[i + 1]} for i in range(n - 1)]
    res = minimize(lambda x: np.sum(weights * (x - values) ** 2), np.full(n, values.mean()),
                   constraints=cons, method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
    return res.x


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.1, 5.0), min_size=2, max_size=12),
       st.lists(st.floats(0.1, 3.0), min_size=12, max_size=12))
def test_monotone_projection_is_optimal(values, weights):
    v = np.array(values)
    w = np.array(weights[:len(values)])
    proj = monotone_projection(v, w)
    assert np.all(np.diff(proj) <= 1e-12)
    oracle = _pava_oracle(v, w)
    cost = lambda x: float(np.sum(w * (x - v) ** 2))
    assert cost(proj) <= cost(oracle) + 1e-9


# --- serialisation -----------------------------------------------------------

def test_export_curve_three_points(tmp_path, params_exo, flat):
    curve = make_curve(flat, params_exo, 7 / 24)
    export_curve(curve, tmp_path / "c.csv", n=3)
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "r,y"
    assert len(lines) == 4
    r, y = map(float, lines[1].split(","))
    assert r == 0.2 and y == pytest.approx(7 / 24, abs=1e-10)


def test_export_solution_json_keys(tmp_path, params_exo, quadratic):
    sol = solve_exogenous(quadratic, params_exo)
    export_solution(sol, params_exo, tmp_path / "s.json")
    data = json.loads((tmp_path / "s.json").read_text())
    assert {"model", "z", "alpha", "classes", "params", "diagnostics"} <= set(data)
    assert data["z"] == pytest.approx(0.316176, abs=1e-6)
    assert set(data["params"]) == {"c", "tau", "r_t", "w_a_x", "w_b_x", "epsilon"}
    assert set(data["classes"][0]) >= {"label", "z", "beta", "indifferent_in_r"}


def test_heterogeneous_json_has_no_top_level_z(params_endo):
    fs = [ClosedFormChargingTime("affine"), ClosedFormChargingTime("cubic")]
    sol = solve_heterogeneous(list(zip(fs, [0.5, 0.5])), params_endo, ["a", "b"])
    data = solution_to_dict(sol, params_endo)
    assert "z" not in data
    assert [c["label"] for c in data["classes"]] == ["a", "b"]


def test_export_solution_csv(tmp_path, params_endo, flat):
    export_solution(solve_endogenous(flat, params_endo), params_endo, tmp_path / "s.csv", "csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "label,z,beta,weight,indifferent_in_r"
    assert lines[1].endswith(",1,true")


def test_rate_curve_round_trip(tmp_path):
    rng = np.random.default_rng(12)
    for i in range(10):
        curve = random_rate_curve(rng)
        export_curve(curve, tmp_path / f"r{i}.json", format="json")
        back = load_rate_curve(tmp_path / f"r{i}.json")
        for (s0, p0), (s1, p1) in zip(curve.knots, back.knots):
            assert fmt(s0) == fmt(s1) and fmt(p0) == fmt(p1)
        # a second trip is exact
        export_curve(back, tmp_path / "again.json", format="json")
        assert load_rate_curve(tmp_path / "again.json").knots == back.knots


def test_charging_form_round_trip(tmp_path, params_exo):
    for f in (ClosedFormChargingTime("cubic", [2.0]),
              RateChargingTime(reference_curve("ford_like"), 0.5, params_exo.r_t)):
        export_curve(f, tmp_path / "f.json", format="json")
        back = load_charging_form(tmp_path / "f.json", params_exo)
        r = np.linspace(0, 1, 11)
        np.testing.assert_allclose(back(r), f(r), rtol=1e-11)


def test_export_is_byte_deterministic(tmp_path, params_exo, quadratic):
    for i in range(2):
        sol = solve_exogenous(quadratic, params_exo)
        export_solution(sol, params_exo, tmp_path / f"s{i}.json")
        export_curve(sol.curves[0], tmp_path / f"c{i}.csv")
    assert (tmp_path / "s0.json").read_bytes() == (tmp_path / "s1.json").read_bytes()
    assert (tmp_path / "c0.csv").read_bytes() == (tmp_path / "c1.csv").read_bytes()


def test_export_errors(tmp_path, params_exo, flat):
    with pytest.raises(ExportError, match="missing"):
        export_curve([(0.0, 1.0)], tmp_path / "missing" / "c.csv")
    with pytest.raises(ValueError):
        export_curve([(0.0, 1.0)], tmp_path / "c.txt", format="xml")
    (tmp_path / "bad.json").write_text("{\n  oops")
    with pytest.raises(SampleFormatError, match="bad.json:2"):
        load_rate_curve(tmp_path / "bad.json")
