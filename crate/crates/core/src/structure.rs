//! Structural guarantees the equilibrium search relies on, checked
//! numerically without solving anything.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::follower::h_matrix;
use crate::leader::{build_t, build_w_b, GeneratorParams};
use crate::linalg::{self, SINGULAR_CONDITION};
use crate::network::{PowerNetwork, ValidationReport, STRUCTURE_TOL};

/// A group of checks standing for one structural property.
#[derive(Debug, Clone, Serialize)]
pub struct StructuralCheck {
    pub property: &'static str,
    pub report: ValidationReport,
}

impl StructuralCheck {
    pub fn passed(&self) -> bool {
        !self.report.checks.is_empty() && self.report.all_passed()
    }

    pub fn max_residual(&self) -> f64 {
        self.report
            .checks
            .iter()
            .filter(|c| !c.tolerance.is_nan())
            .map(|c| c.residual)
            .fold(0.0, |a: f64, r| if r.is_nan() { r } else { a.max(r) })
    }
}

pub const S_PROPERTIES: &str = "S symmetric, non-negative, positive diagonal";
pub const H_INVERTIBLE: &str = "H invertible";
pub const T1_PROPERTIES: &str = "T1 positive diagonal and invertible";
pub const W_INVERTIBLE: &str = "W invertible";
pub const D_INVERTIBLE: &str = "D invertible";

/// `‖A·X − I‖max / (‖A‖∞‖X‖∞)` for the computed inverse `X`: of order
/// machine epsilon whenever `A` is numerically invertible.
pub fn relative_inverse_residual(a: &DMatrix<f64>, inv: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let r = (a * inv - DMatrix::<f64>::identity(n, n)).amax();
    let scale = row_norm(a) * row_norm(inv);
    if scale > 0.0 {
        r / scale
    } else {
        f64::INFINITY
    }
}

fn row_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn push_invertible(report: &mut ValidationReport, name: &str, a: &DMatrix<f64>) {
    let cond = linalg::condition_number(a);
    report.push_bool(&format!("cond({name})"), cond, cond <= SINGULAR_CONDITION);
    let residual = match a.clone().lu().try_inverse() {
        Some(inv) => relative_inverse_residual(a, &inv),
        None => f64::INFINITY,
    };
    report.push(
        &format!("{name}·{name}^-1 = I (relative)"),
        residual,
        STRUCTURE_TOL,
    );
}

/// Runs the five structural checks. Failures are reported, not raised; a
/// check that cannot be evaluated because an earlier one failed is reported
/// as failed with an infinite residual.
pub fn structural_checks(net: &PowerNetwork, gens: &[GeneratorParams]) -> Vec<StructuralCheck> {
    let n = net.n();
    let s = net.s();
    let s_scale = s.amax().max(f64::MIN_POSITIVE);

    let mut s_props = ValidationReport::default();
    s_props.push("S symmetric", linalg::asymmetry(s) / s_scale, STRUCTURE_TOL);
    let most_negative = s.iter().fold(0.0_f64, |m, &x| m.max(-x));
    s_props.push("S entrywise non-negative", most_negative / s_scale, STRUCTURE_TOL);
    let min_diag = (0..n).map(|i| s[(i, i)]).fold(f64::INFINITY, f64::min);
    s_props.push_bool("min s_ii > 0", min_diag, min_diag > 0.0);

    let mut h = ValidationReport::default();
    push_invertible(&mut h, "H", &h_matrix(net));

    let mut t1 = ValidationReport::default();
    let mut w_report = ValidationReport::default();
    let mut d_report = ValidationReport::default();
    match build_t(net) {
        Ok(t) => {
            let min = (0..t.t1.nrows())
                .map(|j| t.t1[(j, j)])
                .fold(f64::INFINITY, f64::min);
            t1.push_bool("min T1_jj > 0", min, min > 0.0);
            push_invertible(&mut t1, "T1", &t.t1);
            let g = net.n_g();
            match build_w_b(net, gens, &t, DVector::zeros(g)) {
                Ok(sys) => {
                    push_invertible(&mut w_report, "W", &sys.w);
                    let min_pivot = sys.d.diagonal().iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
                    d_report.push_bool("min |D_ii| > 0", min_pivot, min_pivot > 0.0);
                    let residual = match sys
                        .d
                        .clone()
                        .solve_lower_triangular(&DMatrix::identity(3 * g, 3 * g))
                    {
                        Some(inv) => relative_inverse_residual(&sys.d, &inv),
                        None => f64::INFINITY,
                    };
                    d_report.push("D·D^-1 = I (relative)", residual, STRUCTURE_TOL);
                }
                Err(e) => {
                    w_report.push(&format!("W not assembled: {e}"), f64::INFINITY, STRUCTURE_TOL);
                    d_report.push("D not assembled", f64::INFINITY, STRUCTURE_TOL);
                }
            }
        }
        Err(e) => {
            t1.push(&format!("T1 not assembled: {e}"), f64::INFINITY, STRUCTURE_TOL);
            w_report.push("W not assembled", f64::INFINITY, STRUCTURE_TOL);
            d_report.push("D not assembled", f64::INFINITY, STRUCTURE_TOL);
        }
    }

    vec![
        StructuralCheck { property: S_PROPERTIES, report: s_props },
        StructuralCheck { property: H_INVERTIBLE, report: h },
        StructuralCheck { property: T1_PROPERTIES, report: t1 },
        StructuralCheck { property: W_INVERTIBLE, report: w_report },
        StructuralCheck { property: D_INVERTIBLE, report: d_report },
    ]
}
