//! Plain-text protocol trace export.
//!
//! ```text
//! branches 4
//! total_probability 1.00000000000000e0
//!
//! branch 0
//! path 0.1
//! probability 2.50000000000000e-1
//! consumed (P1, P2) 1
//! state {"dims":[2],"labels":["P2"],"amplitudes":[[1.0,0.0],[0.0,0.0]]}
//! ```
//!
//! Probabilities carry 15 significant digits; states use the JSON state
//! format with full precision.

use std::fmt::Write;

use locc_core::protocol::ProtocolTrace;

use crate::format::state_to_json;

/// `x` in scientific notation with 15 significant digits.
pub fn sig15(x: f64) -> String {
    format!("{x:.14e}")
}

pub fn format_path(path: &[usize]) -> String {
    if path.is_empty() {
        return "-".into();
    }
    path.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(".")
}

pub fn export_trace(trace: &ProtocolTrace) -> String {
    let mut out = String::new();
    writeln!(out, "branches {}", trace.branches.len()).unwrap();
    writeln!(out, "total_probability {}", sig15(trace.total_probability())).unwrap();
    for (i, b) in trace.branches.iter().enumerate() {
        writeln!(out).unwrap();
        writeln!(out, "branch {i}").unwrap();
        writeln!(out, "path {}", format_path(&b.path)).unwrap();
        writeln!(out, "probability {}", sig15(b.probability)).unwrap();
        for (pair, n) in &b.resources.consumed {
            writeln!(out, "consumed {pair} {n}").unwrap();
        }
        for (pair, n) in &b.resources.produced {
            writeln!(out, "produced {pair} {n}").unwrap();
        }
        writeln!(out, "state {}", state_to_json(&b.state)).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifteen_significant_digits() {
        assert_eq!(sig15(0.25), "2.50000000000000e-1");
        assert_eq!(sig15(1.0 / 3.0), "3.33333333333333e-1");
        assert_eq!(format_path(&[]), "-");
        assert_eq!(format_path(&[0, 3]), "0.3");
    }
}
