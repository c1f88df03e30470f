//! Best-fixed selection over a sweep table.

use std::io::{Read, Write};

use misalign_core::control::{select_best_fixed, BestFixed, FixedRunSummary};
use misalign_core::ControllerKind;

use crate::error::{HarnessError, Result};
use crate::sweep::SweepTable;

/// Successful fixed-lambda rows in the core summary form.
pub fn fixed_summaries(table: &SweepTable) -> Vec<FixedRunSummary> {
    table
        .rows()
        .iter()
        .filter(|r| r.is_ok() && r.policy == ControllerKind::Fixed)
        .map(|r| FixedRunSummary {
            beta: r.beta,
            lambda: r.lambda,
            seed: r.seed,
            final_val_accuracy: r.val_accuracy.expect("ok row"),
            final_test_accuracy: r.test_accuracy.expect("ok row"),
            final_gap: r.gap.expect("ok row"),
            final_w1: r.w1.expect("ok row"),
        })
        .collect()
}

/// Cells of the fixed grid (betas x lambdas x seeds seen in the table) that
/// have no successful row.
pub fn missing_cells(table: &SweepTable) -> Vec<String> {
    let fixed: Vec<_> = table.rows().iter().filter(|r| r.policy == ControllerKind::Fixed).collect();
    let mut betas: Vec<f64> = fixed.iter().map(|r| r.beta).collect();
    betas.dedup();
    let lambdas = table.fixed_lambdas();
    let mut seeds: Vec<u64> = fixed.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let mut missing = Vec::new();
    for &beta in &betas {
        for &lambda in &lambdas {
            for &seed in &seeds {
                let row = fixed.iter().find(|r| r.beta == beta && r.lambda == lambda && r.seed == seed);
                match row {
                    Some(r) if r.is_ok() => {}
                    Some(_) => missing.push(format!("beta={beta} lambda={lambda} seed={seed} (failed)")),
                    None => missing.push(format!("beta={beta} lambda={lambda} seed={seed}")),
                }
            }
        }
    }
    missing
}

/// Per beta in the table, the validation-selected lambda and its oracle
/// gap. Refuses incomplete grids so every lambda is judged on equal seeds.
pub fn select(table: &SweepTable) -> Result<Vec<BestFixed>> {
    let missing = missing_cells(table);
    if !missing.is_empty() {
        return Err(HarnessError::MissingCells(missing));
    }
    let betas: Vec<f64> = {
        let mut b: Vec<f64> =
            table.rows().iter().filter(|r| r.policy == ControllerKind::Fixed).map(|r| r.beta).collect();
        b.dedup();
        b
    };
    if betas.is_empty() {
        return Err(HarnessError::Usage("table has no fixed-lambda rows".into()));
    }
    Ok(select_best_fixed(&fixed_summaries(table), &betas)?)
}

pub fn write_selections<W: Write>(selections: &[BestFixed], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for s in selections {
        out.serialize(s)?;
    }
    out.flush().map_err(|e| HarnessError::io("<csv>", e))?;
    Ok(())
}

pub fn read_selections<R: Read>(r: R) -> Result<Vec<BestFixed>> {
    Ok(csv::Reader::from_reader(r).deserialize().collect::<std::result::Result<Vec<BestFixed>, _>>()?)
}
