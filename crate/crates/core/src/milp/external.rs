//! External-solver backend over the MPS contract.
//!
//! The backend command is invoked as `cmd <model.mps> <solution.out>`
//! and must write a solution file of the form
//!
//! ```text
//! objective <value>
//! var <name> <value>
//! ...
//! ```
//!
//! Variable names are the MPS (possibly mangled) names; columns absent
//! from the solution file default to zero.

use super::branch_bound::{MipSolution, MipStatus, TracePoint};
use super::model::MilpModel;
use super::mps::write_mps;
use super::MilpError;
use std::process::Command;

pub fn solve_external(model: &MilpModel, backend_command: &str) -> Result<MipSolution, MilpError> {
    model.validate()?;
    let mut parts = backend_command.split_whitespace();
    let program = parts
        .next()
        .ok_or_else(|| MilpError::BackendFailure("empty backend command".into()))?;
    let extra_args: Vec<&str> = parts.collect();

    let dir = std::env::temp_dir().join(format!(
        "sded-ext-{}-{}",
        std::process::id(),
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or(0)
    ));
    std::fs::create_dir_all(&dir)?;
    let mps_path = dir.join("model.mps");
    let out_path = dir.join("solution.out");
    let doc = write_mps(model, &mps_path)?;

    let output = Command::new(program)
        .args(&extra_args)
        .arg(&mps_path)
        .arg(&out_path)
        .output()
        .map_err(|e| MilpError::BackendFailure(format!("failed to launch {program}: {e}")))?;
    if !output.status.success() {
        return Err(MilpError::BackendFailure(format!(
            "{program} exited with {}: {}",
            output.status,
            String::from_utf8_lossy(&output.stderr)
        )));
    }

    let text = std::fs::read_to_string(&out_path)
        .map_err(|e| MilpError::BackendFailure(format!("backend wrote no solution file: {e}")))?;
    let _ = std::fs::remove_dir_all(&dir);

    let mut name_to_col = std::collections::HashMap::new();
    for (j, name) in doc.var_names.iter().enumerate() {
        name_to_col.insert(name.as_str(), j);
    }

    let mut objective: Option<f64> = None;
    let mut x = vec![0.0; model.n_vars()];
    for (lineno, line) in text.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] => {}
            ["objective", v] => {
                objective = Some(v.parse().map_err(|_| {
                    MilpError::BackendFailure(format!("bad objective on line {}", lineno + 1))
                })?);
            }
            ["var", name, v] => {
                let value: f64 = v.parse().map_err(|_| {
                    MilpError::BackendFailure(format!("bad value on line {}", lineno + 1))
                })?;
                if let Some(&j) = name_to_col.get(name) {
                    x[j] = value;
                }
            }
            _ => {
                return Err(MilpError::BackendFailure(format!(
                    "unparsable solution line {}: {line:?}",
                    lineno + 1
                )))
            }
        }
    }

    let objective =
        objective.ok_or_else(|| MilpError::BackendFailure("no objective line".into()))?;
    Ok(MipSolution {
        status: MipStatus::Optimal,
        x,
        objective,
        bound: objective,
        gap: 0.0,
        nodes: 0,
        trace: Vec::<TracePoint>::new(),
    })
}
