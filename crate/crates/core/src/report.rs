//! Human-readable summaries of identified models and value functions.

use std::fmt::Write as _;

use crate::basis::{BasisSet, BasisTerm};
use crate::sysid::ModelCoefficients;
use crate::trace::EpisodeTrace;
use crate::valuegrad::ValueParams;

fn push_term(out: &mut String, coef: f64, name: &str) {
    let sign = if coef < 0.0 { '-' } else { '+' };
    if out.is_empty() {
        let _ = write!(out, "{}{:.3}", if coef < 0.0 { "-" } else { "" }, coef.abs());
    } else {
        let _ = write!(out, " {sign} {:.3}", coef.abs());
    }
    if !name.is_empty() {
        let _ = write!(out, "{name}");
    }
}

fn term_name(term: &BasisTerm) -> String {
    match term {
        BasisTerm::Constant => String::new(),
        t => t.to_string(),
    }
}

/// One line per state, e.g. `dx2/dt = -1.000x2 - 19.600sin(x1) + 40.000u`.
/// Terms appear in basis order, drift block first.
pub fn format_model(model: &ModelCoefficients, basis: &BasisSet) -> String {
    let mut text = String::new();
    let m = model.input_dim();
    for i in 0..model.state_dim() {
        let mut rhs = String::new();
        for (k, term) in basis.terms().iter().enumerate() {
            let c = model.w[(i, k)];
            if c != 0.0 {
                push_term(&mut rhs, c, &term_name(term));
            }
        }
        for (j, wj) in model.w_inputs.iter().enumerate() {
            let input = if m == 1 { "u".to_string() } else { format!("u{}", j + 1) };
            for (k, term) in basis.terms().iter().enumerate() {
                let c = wj[(i, k)];
                if c != 0.0 {
                    let name = term_name(term);
                    let label = if name.is_empty() { input.clone() } else { format!("{name}*{input}") };
                    push_term(&mut rhs, c, &label);
                }
            }
        }
        if rhs.is_empty() {
            rhs.push('0');
        }
        let _ = writeln!(text, "dx{}/dt = {rhs}", i + 1);
    }
    text
}

/// `V(x) = Σ_{i<=j} c_ij φ_i φ_j` with coefficients below `cutoff` omitted.
pub fn format_value(params: &ValueParams, basis: &BasisSet, cutoff: f64) -> String {
    let terms = basis.terms();
    let mut rhs = String::new();
    for i in 0..terms.len() {
        for j in i..terms.len() {
            let c = if i == j { params.p[(i, i)] } else { 2.0 * params.p[(i, j)] };
            if c.abs() < cutoff {
                continue;
            }
            let (a, b) = (term_name(&terms[i]), term_name(&terms[j]));
            let name = match (a.is_empty(), b.is_empty()) {
                (true, true) => String::new(),
                (true, false) => b,
                (false, true) => a,
                _ if i == j => format!("({a})^2"),
                _ => format!("{b}*{a}"),
            };
            push_term(&mut rhs, c, &name);
        }
    }
    if rhs.is_empty() {
        rhs.push('0');
    }
    format!("V(x) = {rhs}\n")
}

pub fn episode_summary(label: &str, seed: u64, trace: &EpisodeTrace) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "benchmark: {label}");
    let _ = writeln!(s, "seed: {seed}");
    let _ = writeln!(s, "termination: {}", trace.termination);
    if let Some(d) = &trace.diagnostic {
        let _ = writeln!(s, "diagnostic: {d}");
    }
    let _ = writeln!(s, "duration_s: {}", trace.duration());
    let _ = writeln!(s, "final_error_inf: {:.6e}", trace.final_error());
    let _ = writeln!(s, "total_cost: {:.6e}", trace.total_cost());
    let _ = writeln!(s, "database_size: {}", trace.database_len);
    let _ = writeln!(s, "basis: {}", trace.basis);
    let _ = writeln!(s);
    let _ = writeln!(s, "identified model:");
    s.push_str(&format_model(&trace.model, &trace.basis));
    let _ = writeln!(s);
    let _ = writeln!(s, "value function:");
    s.push_str(&format_value(&trace.final_p, &trace.basis, 5e-4));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pendulum_model_layout() {
        let basis = BasisSet::parse("1,x,sin(x)", 2).unwrap();
        let mut model = ModelCoefficients::zeros(2, 1, 5);
        model.w[(0, 1)] = -1.0;
        model.w[(1, 1)] = -1.0;
        model.w[(1, 3)] = -19.6;
        model.w_inputs[0][(1, 2)] = 40.0;
        let text = format_model(&model, &basis);
        assert_eq!(
            text,
            "dx1/dt = -1.000x2\ndx2/dt = -1.000x2 - 19.600sin(x1) + 40.000u\n"
        );
    }

    #[test]
    fn value_layout() {
        let basis = BasisSet::parse("1,x,sin(x)", 2).unwrap();
        let mut params = ValueParams::zeros(5, 0.0);
        params.p[(0, 0)] = 1.974;
        params.p[(0, 3)] = -1.1;
        params.p[(3, 0)] = -1.1;
        params.p[(3, 3)] = 1.548;
        let text = format_value(&params, &basis, 5e-4);
        assert_eq!(text, "V(x) = 1.974(x1)^2 - 2.200sin(x1)*x1 + 1.548(sin(x1))^2\n");
    }
}
