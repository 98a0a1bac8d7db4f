//! Summary tables from sweep rows.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::Serialize;

use super::sweep::SweepRow;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportCell {
    #[serde(rename = "type")]
    pub ty: String,
    pub n_f: usize,
    /// Smallest K whose seed-averaged zeta reaches the target, or without a
    /// target the smallest K at which every seed succeeded.
    pub min_k: Option<usize>,
    pub best_zeta_db: Option<f64>,
    pub best_zeta_k: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub target_zeta_db: Option<f64>,
    pub cells: Vec<ReportCell>,
}

/// Groups rows by (type, n_f) and K, averaging zeta (in dB) over the seeds
/// that succeeded.
pub fn summarize(rows: &[SweepRow], target_zeta_db: Option<f64>) -> Report {
    let mut groups: BTreeMap<(String, usize), BTreeMap<usize, Vec<&SweepRow>>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.ty.clone(), r.n_f))
            .or_default()
            .entry(r.k)
            .or_default()
            .push(r);
    }
    let cells = groups
        .into_iter()
        .map(|((ty, n_f), by_k)| {
            let mut min_k = None;
            let mut best: Option<(f64, usize)> = None;
            for (&k, rs) in &by_k {
                let zetas: Vec<f64> = rs.iter().filter(|r| r.is_ok()).filter_map(|r| r.zeta_db).collect();
                let all_ok = rs.iter().all(|r| r.is_ok());
                let mean = (!zetas.is_empty()).then(|| zetas.iter().sum::<f64>() / zetas.len() as f64);
                if let Some(m) = mean {
                    if best.is_none_or(|(b, _)| m > b) {
                        best = Some((m, k));
                    }
                }
                let reached = match target_zeta_db {
                    Some(t) => mean.is_some_and(|m| m >= t),
                    None => all_ok,
                };
                if reached && min_k.is_none() {
                    min_k = Some(k);
                }
            }
            ReportCell {
                ty,
                n_f,
                min_k,
                best_zeta_db: best.map(|b| b.0),
                best_zeta_k: best.map(|b| b.1),
            }
        })
        .collect();
    Report {
        target_zeta_db,
        cells,
    }
}

/// Two plain-text tables (types by feed counts): minimum K and best zeta.
pub fn render(report: &Report) -> String {
    let mut types: Vec<&str> = report.cells.iter().map(|c| c.ty.as_str()).collect();
    types.sort();
    types.dedup();
    let mut n_fs: Vec<usize> = report.cells.iter().map(|c| c.n_f).collect();
    n_fs.sort();
    n_fs.dedup();
    let lookup = |ty: &str, n_f: usize| report.cells.iter().find(|c| c.ty == ty && c.n_f == n_f);

    let mut out = String::new();
    let title = match report.target_zeta_db {
        Some(t) => format!("minimum K reaching zeta >= {t:.1} dB"),
        None => "minimum K at which every seed succeeded".to_string(),
    };
    let tables: [(&str, Box<dyn Fn(&ReportCell) -> String>); 2] = [
        (&title, Box::new(|c: &ReportCell| c.min_k.map_or("-".into(), |k| k.to_string()))),
        (
            "best zeta [dB] (at K)",
            Box::new(|c: &ReportCell| match (c.best_zeta_db, c.best_zeta_k) {
                (Some(z), Some(k)) => format!("{z:.2} ({k})"),
                _ => "-".into(),
            }),
        ),
    ];
    for (i, (name, cell)) in tables.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "{name}");
        let _ = write!(out, "{:<10}", "type");
        for n_f in &n_fs {
            let _ = write!(out, "{:>16}", format!("N_F={n_f}"));
        }
        out.push('\n');
        for ty in &types {
            let _ = write!(out, "{ty:<10}");
            for &n_f in &n_fs {
                let text = lookup(ty, n_f).map_or("".into(), |c| cell(c));
                let _ = write!(out, "{text:>16}");
            }
            out.push('\n');
        }
    }
    out
}
