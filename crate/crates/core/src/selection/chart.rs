use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::store::ModelStore;

use super::infer::{infer, ordered_selection};
use super::simplify::{simplify_variables, SimplifyConfig};
use super::{SelectionError, Variable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub x: String,
    pub color: Option<String>,
    pub model: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub x_variable: Option<Variable>,
    pub color_variable: Option<Variable>,
    pub metric: String,
    pub bars: Vec<Bar>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementGroup {
    /// Variable name → the value every member shares.
    pub fixed: BTreeMap<String, String>,
    pub free: Vec<Variable>,
    pub member_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonResult {
    Chart(ChartSpec),
    Refinement(Vec<RefinementGroup>),
}

pub fn build_comparison(
    store: &ModelStore,
    selection: &BTreeSet<String>,
    metric: &str,
    config: &SimplifyConfig,
) -> Result<ComparisonResult, SelectionError> {
    store
        .metric(metric)
        .map_err(|_| SelectionError::UnknownMetric(metric.to_string()))?;
    let ids = ordered_selection(store, selection)?;
    let inference = infer(store, selection)?;
    let vars = simplify_variables(&inference.variables, &inference.slots, config);
    if vars.len() <= 2 {
        return Ok(ComparisonResult::Chart(chart(store, &ids, vars, metric)));
    }
    Ok(ComparisonResult::Refinement(refine(&ids, &vars)))
}

fn chart(store: &ModelStore, ids: &[String], mut vars: Vec<Variable>, metric: &str) -> ChartSpec {
    // x gets the variable with more distinct values, then the simpler kind.
    vars.sort_by(|a, b| {
        b.values
            .len()
            .cmp(&a.values.len())
            .then(a.kind.weight().cmp(&b.kind.weight()))
    });
    let mut it = vars.into_iter();
    let x_var = it.next();
    let color_var = it.next();

    let value_rank = |v: &Option<Variable>, id: &str| -> usize {
        v.as_ref()
            .and_then(|var| var.values.iter().position(|x| *x == var.assignment[id]))
            .unwrap_or(0)
    };
    let mut members: Vec<&String> = ids.iter().collect();
    members.sort_by_key(|id| (value_rank(&x_var, id), value_rank(&color_var, id), store.position(id)));

    let mut bars: Vec<Bar> = Vec::with_capacity(members.len());
    let mut taken: BTreeSet<(String, Option<String>)> = BTreeSet::new();
    for id in members {
        let Some(value) = store.metric_value(id, metric) else {
            continue;
        };
        let mut x = match &x_var {
            Some(v) => v.assignment[id.as_str()].clone(),
            None => id.clone(),
        };
        let color = color_var.as_ref().map(|v| v.assignment[id.as_str()].clone());
        // Models with identical op paths cannot be told apart by any variable.
        if !taken.insert((x.clone(), color.clone())) {
            x = format!("{x} ({id})");
            taken.insert((x.clone(), color.clone()));
        }
        bars.push(Bar {
            x,
            color,
            model: id.clone(),
            value,
        });
    }
    ChartSpec {
        x_variable: x_var,
        color_variable: color_var,
        metric: metric.to_string(),
        bars,
    }
}

/// For every pair of variables, groups the selection by the values of all
/// other variables. Groups with fewer than two members are dropped, as are
/// repeats of an already listed member set.
fn refine(ids: &[String], vars: &[Variable]) -> Vec<RefinementGroup> {
    let mut out = Vec::new();
    let mut seen: BTreeSet<Vec<String>> = BTreeSet::new();
    for i in 0..vars.len() {
        for j in i + 1..vars.len() {
            let others: Vec<&Variable> = vars
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != i && *k != j)
                .map(|(_, v)| v)
                .collect();
            let mut groups: BTreeMap<Vec<&str>, Vec<String>> = BTreeMap::new();
            for id in ids {
                let key: Vec<&str> = others.iter().map(|v| v.assignment[id].as_str()).collect();
                groups.entry(key).or_default().push(id.clone());
            }
            for (key, members) in groups {
                if members.len() < 2 || !seen.insert(members.clone()) {
                    continue;
                }
                let fixed = others
                    .iter()
                    .zip(key)
                    .map(|(v, val)| (v.name.clone(), val.to_string()))
                    .collect();
                let free = [&vars[i], &vars[j]]
                    .iter()
                    .filter_map(|v| v.restrict(&members))
                    .collect();
                out.push(RefinementGroup {
                    fixed,
                    free,
                    member_ids: members,
                });
            }
        }
    }
    out
}
