//! Closed-form Lindstedt coefficients against an independent expansion
//! (fixtures/lindstedt_oracle.py, frozen in fixtures/lindstedt_reference.json).

use qvel_core::amplitude::{lindstedt_coefficients, second_order_amplitude};
use qvel_core::spectral::{delta_cr, omega_cr};
use qvel_core::SystemParams;
use serde_json::Value;

const REL_TOL: f64 = 1e-9;

fn cases() -> Vec<Value> {
    let text = include_str!("fixtures/lindstedt_reference.json");
    serde_json::from_str::<Value>(text)
        .unwrap()
        .as_array()
        .unwrap()
        .clone()
}

fn close(label: &str, got: f64, want: f64) {
    let scale = want.abs().max(1e-12);
    assert!(
        (got - want).abs() <= REL_TOL * scale,
        "{label}: got {got}, oracle {want}"
    );
}

#[test]
fn appendix_formulas_match_oracle() {
    let rows = cases();
    assert!(rows.len() >= 5);
    for row in rows {
        let f = |k: &str| row[k].as_f64().unwrap();
        let p = SystemParams::new(f("lambda"), f("mu"), f("theta"), 2, f("delta"), 0.0).unwrap();
        close("omega0", omega_cr(&p).unwrap(), f("w0"));
        close("delta0", delta_cr(&p, 0).unwrap(), f("D0"));
        let c = lindstedt_coefficients(&p, f("delay")).unwrap();
        close("A", c.a, f("A"));
        close("omega1", c.omega1, f("w1"));
        close("a1", c.a1, f("a1"));
        close("a2", c.a2, f("a2"));
        close("a3", c.a3, f("a3"));
        close("a4", c.a4, f("a4"));
        let est = second_order_amplitude(&p, f("delay")).unwrap();
        close("omega corrected", est.omega_corrected, f("w0") + f("w1"));
    }
}
