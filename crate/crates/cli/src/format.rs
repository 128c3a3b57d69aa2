//! JSON state files.
//!
//! ```json
//! {"dims": [2, 2], "labels": ["P1", "P2"], "amplitudes": [[0.7071067811865476, 0], [0, 0], [0, 0], [0.7071067811865476, 0]]}
//! ```
//!
//! Amplitudes are row-major over `dims` with party 1 as the most significant
//! digit. `labels` is optional and defaults to `P1..Pm`. Party numbers in
//! user-facing syntax (cuts, reports) are 1-based.

use std::fs;
use std::path::Path;

use locc_core::{PartySystem, PureState, C64, EPS_NORM};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateFile {
    dims: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
    amplitudes: Vec<[f64; 2]>,
}

#[derive(Clone, Copy, Debug)]
pub struct LoadOptions {
    pub renormalize: bool,
    pub tol_norm: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { renormalize: false, tol_norm: EPS_NORM }
    }
}

pub fn parse_state(text: &str, opts: LoadOptions) -> Result<PureState, CliError> {
    let file: StateFile = serde_json::from_str(text).map_err(|e| CliError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let system = match file.labels {
        Some(labels) => PartySystem::with_labels(file.dims, labels)?,
        None => PartySystem::new(file.dims)?,
    };
    let amps: Vec<C64> = file.amplitudes.iter().map(|&[re, im]| C64::new(re, im)).collect();
    if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
        return Err(CliError::Input("amplitudes must be finite".into()));
    }
    let state = if opts.renormalize {
        PureState::normalized(system, amps)?
    } else {
        PureState::with_norm_tolerance(system, amps, opts.tol_norm)?
    };
    Ok(state)
}

pub fn read_state(path: &Path, opts: LoadOptions) -> Result<PureState, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_state(&text, opts).map_err(|e| e.in_file(path))
}

/// One-line JSON; floats use shortest round-trip formatting, so reading the
/// output back reproduces the amplitudes bit for bit.
pub fn state_to_json(state: &PureState) -> String {
    let file = StateFile {
        dims: state.system().dims().to_vec(),
        labels: Some(state.system().labels().to_vec()),
        amplitudes: state.amplitudes().iter().map(|a| [a.re, a.im]).collect(),
    };
    serde_json::to_string(&file).expect("state serializes")
}

pub fn write_state(path: &Path, state: &PureState) -> Result<(), CliError> {
    fs::write(path, state_to_json(state) + "\n").map_err(|e| CliError::Io { path: path.display().to_string(), message: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_default_to_party_numbers() {
        let s = parse_state(r#"{"dims":[2],"amplitudes":[[1,0],[0,0]]}"#, LoadOptions::default()).unwrap();
        assert_eq!(s.system().labels(), &["P1".to_string()]);
    }

    #[test]
    fn unnormalized_input_needs_the_flag() {
        let text = r#"{"dims":[2],"amplitudes":[[1,0],[1,0]]}"#;
        assert!(parse_state(text, LoadOptions::default()).is_err());
        let s = parse_state(text, LoadOptions { renormalize: true, ..LoadOptions::default() }).unwrap();
        assert!((s.amplitudes()[1].re - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn syntax_errors_carry_a_location() {
        match parse_state("{\"dims\": [2],\n \"amplitudes\": [[1, 0], [0 0]]}", LoadOptions::default()) {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_length_is_rejected() {
        assert!(parse_state(r#"{"dims":[2,2],"amplitudes":[[1,0]]}"#, LoadOptions::default()).is_err());
    }
}
