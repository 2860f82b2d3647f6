//! Deterministic report rendering: fixed sort order, probabilities printed
//! with 12 significant digits in the text formats, and a versioned JSON
//! schema whose emit → parse → emit cycle is byte-identical.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Table,
    Json,
    Csv,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(Self::Table),
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown format \"{other}\" (expected table, json, or csv)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub outcome: Vec<String>,
    pub probability: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evolution_probability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difference: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub name: String,
    pub consistent: bool,
    pub max_off_diagonal: f64,
    pub probabilities: Vec<DistributionRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuiltinRow {
    pub quantity: String,
    pub formula: f64,
    pub simulated: f64,
    pub difference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReportResult {
    Distribution {
        rows: Vec<DistributionRow>,
        total_probability: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_engine_difference: Option<f64>,
    },
    Probability {
        outcome: Vec<String>,
        probability: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        evolution_probability: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        difference: Option<f64>,
    },
    Histories {
        families: Vec<FamilyReport>,
    },
    Builtin {
        name: String,
        rows: Vec<BuiltinRow>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format_version: u32,
    pub engine: String,
    pub tolerance: f64,
    pub result: ReportResult,
}

/// 12 significant digits, scientific.
fn sig(p: f64) -> String {
    format!("{p:.11e}")
}

/// Render a report in the requested format. Output is deterministic: rows
/// arrive pre-sorted and numbers are formatted with fixed precision.
pub fn emit(report: &Report, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => {
            let mut text = serde_json::to_string_pretty(report).expect("report serializes");
            text.push('\n');
            text
        }
        OutputFormat::Table => emit_table(report),
        OutputFormat::Csv => emit_csv(report),
    }
}

fn emit_table(report: &Report) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "engine: {}   tolerance: {:.1e}\n",
        report.engine, report.tolerance
    ));
    match &report.result {
        ReportResult::Distribution {
            rows,
            total_probability,
            max_engine_difference,
        } => {
            let label_width = rows
                .iter()
                .map(|r| r.outcome.join(",").len())
                .chain(std::iter::once("outcome".len()))
                .max()
                .unwrap_or(7)
                .max(7);
            let has_evolution = rows.iter().any(|r| r.evolution_probability.is_some());
            let mut header = format!("{:label_width$}  {:>18}", "outcome", "probability");
            if has_evolution {
                header.push_str(&format!("  {:>18}  {:>12}", "evolution", "difference"));
            }
            out.push_str(&header);
            out.push('\n');
            for row in rows {
                let mut line = format!(
                    "{:label_width$}  {:>18}",
                    row.outcome.join(","),
                    sig(row.probability)
                );
                if let (Some(e), Some(d)) = (row.evolution_probability, row.difference) {
                    line.push_str(&format!("  {:>18}  {:>12.3e}", sig(e), d));
                }
                out.push_str(&line);
                out.push('\n');
            }
            if !rows.is_empty() {
                out.push_str(&format!(
                    "{:label_width$}  {:>18}\n",
                    "total",
                    sig(*total_probability)
                ));
            }
            if let Some(diff) = max_engine_difference {
                out.push_str(&format!("max engine difference: {diff:.3e}\n"));
            }
        }
        ReportResult::Probability {
            outcome,
            probability,
            evolution_probability,
            difference,
        } => {
            out.push_str(&format!(
                "P({}) = {}\n",
                outcome.join(","),
                sig(*probability)
            ));
            if let (Some(e), Some(d)) = (evolution_probability, difference) {
                out.push_str(&format!("evolution engine: {}\n", sig(*e)));
                out.push_str(&format!("difference: {d:.3e}\n"));
            }
        }
        ReportResult::Histories { families } => {
            for family in families {
                out.push_str(&format!(
                    "family: {}   consistent: {}   max off-diagonal: {:.3e}\n",
                    family.name, family.consistent, family.max_off_diagonal
                ));
                let label_width = family
                    .probabilities
                    .iter()
                    .map(|r| r.outcome.join(",").len())
                    .chain(std::iter::once("outcome".len()))
                    .max()
                    .unwrap_or(7)
                    .max(7);
                out.push_str(&format!(
                    "  {:label_width$}  {:>18}\n",
                    "outcome", "probability"
                ));
                for row in &family.probabilities {
                    out.push_str(&format!(
                        "  {:label_width$}  {:>18}\n",
                        row.outcome.join(","),
                        sig(row.probability)
                    ));
                }
            }
        }
        ReportResult::Builtin { name, rows } => {
            out.push_str(&format!("builtin: {name}\n"));
            let label_width = rows
                .iter()
                .map(|r| r.quantity.len())
                .chain(std::iter::once("quantity".len()))
                .max()
                .unwrap_or(8)
                .max(8);
            out.push_str(&format!(
                "{:label_width$}  {:>18}  {:>18}  {:>12}\n",
                "quantity", "formula", "simulated", "difference"
            ));
            for row in rows {
                out.push_str(&format!(
                    "{:label_width$}  {:>18}  {:>18}  {:>12.3e}\n",
                    row.quantity,
                    sig(row.formula),
                    sig(row.simulated),
                    row.difference
                ));
            }
        }
    }
    out
}

fn emit_csv(report: &Report) -> String {
    let mut out = String::new();
    match &report.result {
        ReportResult::Distribution { rows, .. } => {
            let has_evolution = rows.iter().any(|r| r.evolution_probability.is_some());
            let outcome_cols = rows.first().map(|r| r.outcome.len()).unwrap_or(1);
            let mut header: Vec<String> =
                (1..=outcome_cols).map(|i| format!("outcome_{i}")).collect();
            header.push("probability".to_string());
            if has_evolution {
                header.push("evolution_probability".to_string());
                header.push("difference".to_string());
            }
            out.push_str(&header.join(","));
            out.push('\n');
            for row in rows {
                let mut fields: Vec<String> = row.outcome.clone();
                fields.push(sig(row.probability));
                if let (Some(e), Some(d)) = (row.evolution_probability, row.difference) {
                    fields.push(sig(e));
                    fields.push(format!("{d:.3e}"));
                }
                out.push_str(&fields.join(","));
                out.push('\n');
            }
        }
        ReportResult::Probability {
            outcome,
            probability,
            evolution_probability,
            difference,
        } => {
            let mut header: Vec<String> =
                (1..=outcome.len()).map(|i| format!("outcome_{i}")).collect();
            header.push("probability".to_string());
            if evolution_probability.is_some() {
                header.push("evolution_probability".to_string());
                header.push("difference".to_string());
            }
            out.push_str(&header.join(","));
            out.push('\n');
            let mut fields = outcome.clone();
            fields.push(sig(*probability));
            if let (Some(e), Some(d)) = (evolution_probability, difference) {
                fields.push(sig(*e));
                fields.push(format!("{d:.3e}"));
            }
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        ReportResult::Histories { families } => {
            out.push_str("family,consistent,max_off_diagonal,outcome,probability\n");
            for family in families {
                for row in &family.probabilities {
                    out.push_str(&format!(
                        "{},{},{:.3e},{},{}\n",
                        family.name,
                        family.consistent,
                        family.max_off_diagonal,
                        row.outcome.join("|"),
                        sig(row.probability)
                    ));
                }
            }
        }
        ReportResult::Builtin { name, rows } => {
            out.push_str("builtin,quantity,formula,simulated,difference\n");
            for row in rows {
                out.push_str(&format!(
                    "{},{},{},{},{:.3e}\n",
                    name,
                    row.quantity,
                    sig(row.formula),
                    sig(row.simulated),
                    row.difference
                ));
            }
        }
    }
    out
}
