//! Artifact I/O: equilibrium CSV export, solve summaries, reference
//! trajectory ingestion, and the on-disk search-box document.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bilevel::{ParamBox, SearchConfig};
use crate::equilibrium::EquilibriumResult;
use crate::error::{Error, Result};
use crate::mass::MassTrajectory;
use crate::network::NUM_LINKS;
use crate::scenario::Scenario;

pub const CSV_HEADER: &str = "t,rho_e1,rho_e2,rho_e3,rho_e4,rho_e5,z_p1,z_p2,z_p3,lambda,V0";

/// Renders the equilibrium trajectory as CSV, one row per grid node.
/// Values are printed with full precision so repeated runs are
/// byte-identical.
pub fn equilibrium_csv(result: &EquilibriumResult, scenario: &Scenario) -> String {
    let grid = scenario.grid;
    let mut out = String::with_capacity(64 * grid.len());
    out.push_str(CSV_HEADER);
    out.push('\n');
    for k in 0..grid.len() {
        let rho = result.rho.at(k);
        let z = result.preferences.at(k);
        let row = [
            grid.node(k),
            rho[0],
            rho[1],
            rho[2],
            rho[3],
            rho[4],
            z[0],
            z[1],
            z[2],
            scenario.lambda.value_at(k),
            result.field.origin_value.value_at(k),
        ];
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format!("{v:.16e}"));
        }
        out.push('\n');
    }
    out
}

/// Machine-readable outcome of one solve.
#[derive(Debug, Serialize, Deserialize)]
pub struct SolveSummary {
    pub converged: bool,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub tie_count: usize,
    pub degenerate_nodes: usize,
}

pub fn solve_summary(result: &EquilibriumResult) -> SolveSummary {
    SolveSummary {
        converged: result.converged,
        iterations: result.iterations,
        residual_history: result.residual_history.clone(),
        tie_count: result.ties.len(),
        degenerate_nodes: result.preferences.degenerate_nodes().len(),
    }
}

/// Reads an equilibrium CSV back as a reference mass trajectory on the
/// scenario's grid. Only the `rho_*` columns are used; the row count must
/// match the grid exactly.
pub fn read_reference_csv(path: impl AsRef<Path>, scenario: &Scenario) -> Result<MassTrajectory> {
    let text = std::fs::read_to_string(path)?;
    parse_reference_csv(&text, scenario)
}

pub fn parse_reference_csv(text: &str, scenario: &Scenario) -> Result<MassTrajectory> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("reference CSV is empty".into()))?;
    if header.trim() != CSV_HEADER {
        return Err(Error::Parse(format!(
            "reference CSV header mismatch: expected `{CSV_HEADER}`, got `{}`",
            header.trim()
        )));
    }
    let mut rho = Vec::with_capacity(scenario.grid.len());
    for (row, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(Error::Parse(format!(
                "reference CSV row {} has {} fields, expected 11",
                row + 1,
                fields.len()
            )));
        }
        let mut parsed = [0.0; NUM_LINKS];
        for (i, slot) in parsed.iter_mut().enumerate() {
            *slot = fields[i + 1].trim().parse::<f64>().map_err(|e| {
                Error::Parse(format!("reference CSV row {}: {e}", row + 1))
            })?;
        }
        rho.push(parsed);
    }
    if rho.len() != scenario.grid.len() {
        return Err(Error::Validation {
            rule: format!(
                "reference trajectory has {} rows but the scenario grid has {} nodes",
                rho.len(),
                scenario.grid.len()
            ),
        });
    }
    MassTrajectory::new(scenario.grid, rho)
}

/// On-disk search box: parameter bounds plus the evaluation budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamBoxFile {
    pub alpha_prime_lower: [f64; NUM_LINKS],
    pub alpha_prime_upper: [f64; NUM_LINKS],
    pub alpha_second_lower: [f64; NUM_LINKS],
    pub alpha_second_upper: [f64; NUM_LINKS],
    pub budget: usize,
    pub method: crate::bilevel::SearchMethod,
}

impl ParamBoxFile {
    pub fn bounds(&self) -> ParamBox {
        ParamBox {
            alpha_prime_lower: self.alpha_prime_lower,
            alpha_prime_upper: self.alpha_prime_upper,
            alpha_second_lower: self.alpha_second_lower,
            alpha_second_upper: self.alpha_second_upper,
        }
    }

    pub fn search(&self) -> SearchConfig {
        SearchConfig {
            budget: self.budget,
            method: self.method,
        }
    }
}

pub fn read_param_box(path: impl AsRef<Path>) -> Result<ParamBoxFile> {
    let text = std::fs::read_to_string(path)?;
    let file: ParamBoxFile =
        serde_json::from_str(&text).map_err(|e| Error::Schema(e.to_string()))?;
    file.bounds().validate()?;
    Ok(file)
}

/// Index entry for one sweep member.
#[derive(Debug, Serialize, Deserialize)]
pub struct SweepEntry {
    pub beta: f64,
    pub csv: String,
    pub converged: bool,
    pub iterations: usize,
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    if let Some(parent) = path.as_ref().parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    write_text(path, &format!("{text}\n"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::find_equilibrium;

    #[test]
    fn csv_shape_and_roundtrip() {
        let scenario = Scenario::unit_symmetric(50);
        let result = find_equilibrium(&scenario).unwrap();
        let csv = equilibrium_csv(&result, &scenario);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 1 + scenario.grid.len());

        let back = parse_reference_csv(&csv, &scenario).unwrap();
        assert_eq!(back.samples(), result.rho.samples());
    }

    #[test]
    fn csv_is_deterministic() {
        let scenario = Scenario::unit_symmetric(50);
        let a = equilibrium_csv(&find_equilibrium(&scenario).unwrap(), &scenario);
        let b = equilibrium_csv(&find_equilibrium(&scenario).unwrap(), &scenario);
        assert_eq!(a.as_bytes(), b.as_bytes());
    }

    #[test]
    fn bad_header_rejected() {
        let scenario = Scenario::unit_symmetric(10);
        assert!(matches!(
            parse_reference_csv("nope\n1,2,3\n", &scenario),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn wrong_row_count_rejected() {
        let scenario = Scenario::unit_symmetric(50);
        let result = find_equilibrium(&scenario).unwrap();
        let csv = equilibrium_csv(&result, &scenario);
        let truncated: String = csv.lines().take(10).map(|l| format!("{l}\n")).collect();
        assert!(matches!(
            parse_reference_csv(&truncated, &scenario),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn param_box_document_parses() {
        let doc = serde_json::json!({
            "alpha_prime_lower": [0.0, 0.0, 0.0, 0.0, 0.0],
            "alpha_prime_upper": [0.1, 0.1, 0.0, 0.0, 0.0],
            "alpha_second_lower": [0.0, 0.0, 0.0, 0.0, 0.0],
            "alpha_second_upper": [0.0, 0.0, 0.0, 0.0, 0.0],
            "budget": 40,
            "method": "pattern"
        });
        let file: ParamBoxFile = serde_json::from_value(doc).unwrap();
        assert_eq!(file.search().budget, 40);
        file.bounds().validate().unwrap();
    }
}
