use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use urban_causal::effects::{significance_matrix, AteResult};
use urban_causal::prediction::Summary;
use urban_causal::CausalGraph;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub edge: String,
    pub confounder: String,
    pub rel_diff_before: f64,
    pub rel_diff_after: f64,
}

pub fn read_balance_csv(path: &Path) -> Result<Vec<BalanceRow>, CliError> {
    let mut rdr = csv::Reader::from_path(path)?;
    Ok(rdr.deserialize().collect::<Result<_, _>>()?)
}

fn fraction_label(f: Option<f64>) -> String {
    f.map_or_else(|| "all".to_string(), |f| f.to_string())
}

/// Mean and spread of every summary cell as CSV.
pub fn write_prediction_grid<W: Write>(summary: &Summary, writer: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "outcome", "strategy", "predictor", "train_fraction", "n", "rmse_mean", "rmse_std", "mae_mean", "mae_std",
    ])?;
    for e in &summary.entries {
        w.write_record([
            e.outcome.clone(),
            e.strategy.to_string(),
            e.predictor.to_string(),
            fraction_label(e.train_fraction),
            e.n.to_string(),
            e.rmse_mean.to_string(),
            e.rmse_std.to_string(),
            e.mae_mean.to_string(),
            e.mae_std.to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(())
}

fn table_row(cells: &[String]) -> String {
    format!("| {} |\n", cells.join(" | "))
}

fn header(cells: &[&str]) -> String {
    let owned: Vec<String> = cells.iter().map(|s| s.to_string()).collect();
    table_row(&owned) + &table_row(&vec!["---".to_string(); cells.len()])
}

pub fn render_markdown(
    graph: &CausalGraph,
    bic: f64,
    effects: &[AteResult],
    balance: Option<&[BalanceRow]>,
    summary: Option<&Summary>,
) -> Result<String, CliError> {
    let names = graph.names();
    let mut s = String::from("# Run summary\n\n");
    let _ = writeln!(s, "{} factors, {} edges, BIC {:.4}.\n", names.len(), graph.edge_count(), bic);

    s.push_str("## Causal order\n\n");
    s += &header(&["Level", "Factors"]);
    for (k, level) in graph.causal_order_names()?.iter().enumerate() {
        s += &table_row(&[k.to_string(), level.join(", ")]);
    }

    s.push_str("\n## Edge effects\n\n");
    if effects.is_empty() {
        s.push_str("No edges.\n");
    } else {
        s += &header(&["Cause", "Effect", "ATE", "p-value", "Pairs", "Confounded", "Significant"]);
        for r in effects {
            s += &table_row(&[
                r.treatment.clone(),
                r.outcome.clone(),
                format!("{:.4}", r.ate),
                format!("{:.3e}", r.p_value),
                r.n_pairs.to_string(),
                r.confounded.to_string(),
                r.significant.to_string(),
            ]);
        }
    }

    s.push_str("\n## Significance matrix\n\nRows are causes, columns effects; `+` and `-` mark significant positive and negative effects.\n\n");
    let m = significance_matrix(names, effects);
    let mut cols = vec![""];
    cols.extend(names.iter().map(String::as_str));
    s += &header(&cols);
    for (i, name) in names.iter().enumerate() {
        let mut row = vec![name.clone()];
        row.extend((0..names.len()).map(|j| match m[(i, j)] {
            1 => "+".to_string(),
            -1 => "-".to_string(),
            _ => ".".to_string(),
        }));
        s += &table_row(&row);
    }

    s.push_str("\n## Confounder balance\n\n");
    match balance {
        Some(rows) if !rows.is_empty() => {
            s += &header(&["Edge", "Confounder", "Before", "After"]);
            for b in rows {
                s += &table_row(&[
                    b.edge.clone(),
                    b.confounder.clone(),
                    format!("{:.4}", b.rel_diff_before),
                    format!("{:.4}", b.rel_diff_after),
                ]);
            }
        }
        Some(_) => s.push_str("No confounded edges.\n"),
        None => s.push_str("Not computed.\n"),
    }

    s.push_str("\n## Prediction\n\n");
    match summary {
        Some(sum) => {
            let mut fractions: Vec<f64> = sum.entries.iter().filter_map(|e| e.train_fraction).collect();
            fractions.sort_by(f64::total_cmp);
            fractions.dedup();
            let mut cols = vec!["Outcome".to_string(), "Strategy".into(), "Predictor".into()];
            cols.extend(fractions.iter().map(|f| format!("RMSE @ {f}")));
            cols.push("RMSE overall".into());
            cols.push("MAE overall".into());
            s += &table_row(&cols);
            s += &table_row(&vec!["---".to_string(); cols.len()]);
            for overall in sum.entries.iter().filter(|e| e.train_fraction.is_none()) {
                let mut row = vec![overall.outcome.clone(), overall.strategy.to_string(), overall.predictor.to_string()];
                for f in &fractions {
                    let cell = sum.entries.iter().find(|e| {
                        e.train_fraction == Some(*f)
                            && e.outcome == overall.outcome
                            && e.strategy == overall.strategy
                            && e.predictor == overall.predictor
                    });
                    row.push(cell.map_or_else(String::new, |e| format!("{:.4} ± {:.4}", e.rmse_mean, e.rmse_std)));
                }
                row.push(format!("{:.4} ± {:.4}", overall.rmse_mean, overall.rmse_std));
                row.push(format!("{:.4} ± {:.4}", overall.mae_mean, overall.mae_std));
                s += &table_row(&row);
            }
        }
        None => s.push_str("Not run.\n"),
    }
    Ok(s)
}
