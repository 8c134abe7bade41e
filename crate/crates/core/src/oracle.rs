//! Brute-force reference computations used to check the fast paths.

use crate::detect::{mean_rate_of, CostModel, DetectorParams};
use crate::{Error, Result};

/// Largest number of level paths [`oracle_viterbi`] will enumerate.
pub const MAX_ENUMERATED_PATHS: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub struct OraclePath {
    pub cost: f64,
    pub path: Vec<usize>,
}

/// Minimum path cost over every level sequence in `0..=top_level`, by
/// exhaustive depth-first enumeration. Prefix costs are accumulated in
/// the same order as [`CostModel::path_cost`], so the result is exact.
pub fn oracle_viterbi(values: &[f64], params: &DetectorParams, top_level: usize) -> Result<OraclePath> {
    params.validate()?;
    if values.is_empty() {
        return Err(Error::arg("series must have at least one bin"));
    }
    let space = ((top_level + 1) as f64).powi(values.len() as i32);
    if space > MAX_ENUMERATED_PATHS {
        return Err(Error::arg(format!(
            "{space:.3e} level paths exceeds the enumeration limit of {MAX_ENUMERATED_PATHS:.0e}"
        )));
    }
    let base_rate = mean_rate_of(values)?;
    let model = CostModel::new(base_rate, params, values.len(), top_level);
    let mut best = OraclePath {
        cost: f64::INFINITY,
        path: Vec::new(),
    };
    let mut prefix = Vec::with_capacity(values.len());
    for level in 0..=top_level {
        prefix.push(level);
        walk(&model, values, model.emission(level, values[0]), &mut prefix, &mut best);
        prefix.pop();
    }
    Ok(best)
}

fn walk(model: &CostModel, values: &[f64], cost: f64, prefix: &mut Vec<usize>, best: &mut OraclePath) {
    let t = prefix.len();
    if t == values.len() {
        if cost < best.cost {
            best.cost = cost;
            best.path.clone_from(prefix);
        }
        return;
    }
    let last = prefix[t - 1];
    for level in 0..=model.top_level() {
        let next = cost + model.transition(last, level);
        let next = next + model.emission(level, values[t]);
        prefix.push(level);
        walk(model, values, next, prefix, best);
        prefix.pop();
    }
}

/// Mann-Whitney AUC: the fraction of (endogenous, exogenous) pairs where the
/// endogenous value is smaller, ties counting one half.
pub fn oracle_auc(endo: &[f64], exo: &[f64]) -> Result<f64> {
    if endo.is_empty() || exo.is_empty() {
        return Err(Error::RocUndefined("oracle needs both classes".into()));
    }
    let mut twice_wins: u64 = 0;
    for a in endo {
        for b in exo {
            twice_wins += match a.partial_cmp(b) {
                Some(std::cmp::Ordering::Less) => 2,
                Some(std::cmp::Ordering::Equal) => 1,
                _ => 0,
            };
        }
    }
    Ok(twice_wins as f64 / (2 * endo.len() * exo.len()) as f64)
}
