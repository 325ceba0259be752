use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module(code: &str) {
    Python::attach(|py| {
        let module = pyo3::wrap_pymodule!(edgebatch_py::edgebatch_module)(py);
        let locals = PyDict::new(py);
        locals.set_item("eb", module).unwrap();
        let code = std::ffi::CString::new(code).unwrap();
        if let Err(e) = py.run(&code, None, Some(&locals)) {
            e.print(py);
            panic!("python snippet failed");
        }
    });
}

#[test]
fn grey_model_round_trips_through_python() {
    with_module(
        r#"
m = eb.GreyModel.fit([1.0, 2.0, 4.0, 8.0])
assert abs(m.alpha + 2.0 / 3.0) < 1e-12, m.alpha
assert eb.fit_predict([1.0, 2.0, 4.0, 8.0], 1) == [m.predict(5)]
assert 14.0 < m.predict(5) < 18.0
assert eb.fit_predict([5.0] * 6, 2) == [5.0, 5.0]
try:
    eb.GreyModel.fit([1.0, -1.0, 2.0, 3.0])
    raise AssertionError("negative input accepted")
except ValueError:
    pass
"#,
    );
}

#[test]
fn controller_matches_the_rust_api() {
    with_module(
        r#"
f = eb.FuzzyController()
assert f.infer(0.0, 0.0) == 0
assert abs(sum(f.fuzzify(0.05)) - 1.0) < 1e-12
assert f.rules[0][0] == -2 and f.rules[4][4] == 2
assert f.adjust_interval(400, -2) == 400
assert f.adjust_interval(2000, 1) == 2200
"#,
    );
}

#[test]
fn presets_run_and_report() {
    with_module(
        r#"
assert "exp1" in eb.PRESETS
s = eb.run_preset("exp1")
assert s["mode"] == "adaptive"
assert s["converged_interval_ms"] == 1600
assert eb.run_preset("exp1") == s
try:
    eb.run_preset("exp9")
    raise AssertionError("unknown preset accepted")
except ValueError:
    pass
"#,
    );
}
