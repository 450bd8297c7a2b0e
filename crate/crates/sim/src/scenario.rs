//! Scenario trees and fixture emission.
//!
//! A scenario trains a base network, then applies a tree of operations to
//! it. Subtrees hanging off the root are independent and run through
//! [`Exec`]; every step is seeded from the scenario seed and its position
//! in the plan, so results do not depend on the execution mode.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use indexmap::IndexMap;
use lineage_core::behavior::ModelOutputs;
use lineage_core::layers::ModelLayers;
use lineage_core::store::{Encoding, ExperimentDocument, MetricSpec, ModelRecord, Objective, SCHEMA_VERSION};
use lineage_core::Exec;
use serde::Serialize;

use crate::data::{DataConfig, RareGroup, SynthDataset};
use crate::eval::{evaluate_model, layer_summaries, model_outputs, tidy, SimMetrics};
use crate::net::{train_mlp, DenseNet, TrainConfig};
use crate::ops::SimOperation;
use crate::SimError;

pub const BASE_ID: &str = "base";
/// Upper bound on the activation sample.
pub const ACTIVATION_SAMPLE: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    UserStudy,
    Repair,
    BiasAudit,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::UserStudy, Scenario::Repair, Scenario::BiasAudit];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::UserStudy => "user_study",
            Scenario::Repair => "repair",
            Scenario::BiasAudit => "bias_audit",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s.replace('-', "_"))
            .ok_or_else(|| SimError::InvalidParameter(format!("unknown scenario {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub id: String,
    pub parent: String,
    pub op: SimOperation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub data: DataConfig,
    pub train: TrainConfig,
    /// Topologically ordered: parents come before children.
    pub steps: Vec<Step>,
}

/// Sparsity in percent for ids, e.g. 0.95 → "95".
fn pct(s: f64) -> String {
    format!("{}", (s * 100.0).round() as u32)
}

pub const REPAIR_LAYER: &str = "fc2";

pub fn plan(scenario: Scenario, seed: u64) -> Plan {
    let train = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    let step = |id: String, parent: &str, op: SimOperation| Step {
        id,
        parent: parent.to_string(),
        op,
    };
    match scenario {
        Scenario::UserStudy => {
            let mut steps = vec![step("q8".into(), BASE_ID, SimOperation::Quantize { bits: 8 })];
            let mut pruned = Vec::new();
            for s in [0.1, 0.3, 0.5, 0.7, 0.9] {
                let id = format!("p{}", pct(s));
                steps.push(step(id.clone(), BASE_ID, SimOperation::PruneGlobal { sparsity: s }));
                pruned.push(id);
            }
            let layer_id = format!("pl-{REPAIR_LAYER}-90");
            steps.push(step(
                layer_id.clone(),
                BASE_ID,
                SimOperation::PruneLayer {
                    sparsities: BTreeMap::from([(REPAIR_LAYER.to_string(), 0.9)]),
                },
            ));
            pruned.push(layer_id);
            for p in &pruned {
                steps.push(step(format!("{p}-ft"), p, SimOperation::Finetune { steps: 100, lr: 0.05 }));
                steps.push(step(format!("{p}-cal"), p, SimOperation::Calibrate { sample_size: 128 }));
            }
            Plan {
                data: user_study_data(),
                train,
                steps,
            }
        }
        Scenario::Repair => {
            let mut steps = Vec::new();
            for s in [0.5, 0.7, 0.8, 0.9, 0.95] {
                let id = format!("p{}", pct(s));
                steps.push(step(id.clone(), BASE_ID, SimOperation::PruneGlobal { sparsity: s }));
                steps.push(step(
                    format!("{id}-restore"),
                    &id,
                    SimOperation::Restore {
                        paths: vec![REPAIR_LAYER.to_string()],
                    },
                ));
            }
            Plan {
                data: DataConfig::default(),
                train,
                steps,
            }
        }
        Scenario::BiasAudit => {
            let steps = [0.1, 0.3, 0.5, 0.7, 0.9, 0.95, 0.99]
                .into_iter()
                .map(|s| step(format!("p{}", pct(s)), BASE_ID, SimOperation::PruneGlobal { sparsity: s }))
                .collect();
            Plan {
                data: bias_data(),
                train: TrainConfig {
                    hidden: BIAS_AUDIT_HIDDEN,
                    ..train
                },
                steps,
            }
        }
    }
}

/// Noisier blobs than the default so the heavier variants fall below the
/// base accuracy by a visible margin.
fn user_study_data() -> DataConfig {
    DataConfig {
        sigma: 0.6,
        ..DataConfig::default()
    }
}

/// Wide enough that 1% of the weights still carries the common classes.
pub const BIAS_AUDIT_HIDDEN: usize = 256;

/// The rare centers sit further out than the common ones, so the base
/// network serves them well with small weights that magnitude pruning
/// removes first.
fn bias_data() -> DataConfig {
    DataConfig {
        train_size: 2000,
        test_size: 2000,
        rare: Some(RareGroup {
            fraction: 0.1,
            radius: 3.0,
            axis_offset: 4,
        }),
        ..DataConfig::default()
    }
}

#[derive(Debug, Clone)]
pub struct ModelResult {
    pub id: String,
    pub parent: Option<String>,
    pub op: Option<SimOperation>,
    pub net: DenseNet,
    pub metrics: SimMetrics,
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub scenario: Scenario,
    pub seed: u64,
    pub data: SynthDataset,
    /// Base first, then plan order.
    pub models: Vec<ModelResult>,
    pub train_losses: Vec<f64>,
}

impl ScenarioRun {
    pub fn model(&self, id: &str) -> Option<&ModelResult> {
        self.models.iter().find(|m| m.id == id)
    }
}

pub fn run_scenario(scenario: Scenario, seed: u64, exec: Exec) -> Result<ScenarioRun, SimError> {
    let plan = plan(scenario, seed);
    let data = SynthDataset::generate(plan.data.clone(), seed);
    let (base, train_losses) = train_mlp(&data, &plan.train)?;

    // Branches: the subtrees under each child of the root.
    let mut branch_of: IndexMap<&str, usize> = IndexMap::new();
    let mut branches: Vec<Vec<usize>> = Vec::new();
    for (i, s) in plan.steps.iter().enumerate() {
        let b = if s.parent == BASE_ID {
            branches.push(Vec::new());
            branches.len() - 1
        } else {
            *branch_of
                .get(s.parent.as_str())
                .ok_or_else(|| SimError::InvalidParameter(format!("step {} precedes its parent", s.id)))?
        };
        branch_of.insert(&s.id, b);
        branches[b].push(i);
    }

    let nets = exec.try_map(&branches, |members| -> Result<Vec<(usize, DenseNet)>, SimError> {
        let mut done: BTreeMap<&str, DenseNet> = BTreeMap::new();
        let mut out = Vec::with_capacity(members.len());
        for &i in members {
            let s = &plan.steps[i];
            let parent = if s.parent == BASE_ID { &base } else { &done[s.parent.as_str()] };
            let net = s.op.apply(parent, &base, &data, seed.wrapping_add(1 + i as u64))?;
            done.insert(&s.id, net.clone());
            out.push((i, net));
        }
        Ok(out)
    })?;
    let mut by_step: Vec<Option<DenseNet>> = vec![None; plan.steps.len()];
    for (i, net) in nets.into_iter().flatten() {
        by_step[i] = Some(net);
    }

    let mut entries: Vec<(String, Option<String>, Option<SimOperation>, DenseNet)> =
        vec![(BASE_ID.to_string(), None, None, base.clone())];
    for (s, net) in plan.steps.iter().zip(by_step) {
        entries.push((
            s.id.clone(),
            Some(s.parent.clone()),
            Some(s.op.clone()),
            net.expect("every step ran"),
        ));
    }
    let metrics = exec.try_map(&entries, |e| evaluate_model(&e.3, &data))?;
    let models = entries
        .into_iter()
        .zip(metrics)
        .map(|((id, parent, op, net), metrics)| ModelResult {
            id,
            parent,
            op,
            net,
            metrics,
        })
        .collect();
    Ok(ScenarioRun {
        scenario,
        seed,
        data,
        models,
        train_losses,
    })
}

pub fn metric_specs() -> Vec<MetricSpec> {
    let spec = |name: &str, unit: &str, objective, enc| MetricSpec {
        name: name.to_string(),
        unit: unit.to_string(),
        objective,
        default_encoding: enc,
    };
    vec![
        spec("accuracy", "", Objective::Maximize, Some(Encoding::Color)),
        spec("size", "bytes", Objective::Minimize, Some(Encoding::Size)),
        spec("sparsity", "", Objective::Maximize, None),
        spec("latency", "mults", Objective::Minimize, None),
    ]
}

pub fn experiment_document(run: &ScenarioRun) -> ExperimentDocument {
    let models = run
        .models
        .iter()
        .map(|m| ModelRecord {
            id: m.id.clone(),
            parent: m.parent.clone(),
            operation: m.op.as_ref().map(SimOperation::to_operation),
            metrics: IndexMap::from([
                ("accuracy".to_string(), tidy(m.metrics.accuracy)),
                ("size".to_string(), tidy(m.metrics.size)),
                ("sparsity".to_string(), tidy(m.metrics.sparsity)),
                ("latency".to_string(), tidy(m.metrics.latency)),
            ]),
            tags: vec![run.scenario.name().to_string()],
        })
        .collect();
    ExperimentDocument {
        schema_version: SCHEMA_VERSION,
        metrics: metric_specs(),
        models,
    }
}

/// Per-model outputs and layer summaries, in model order.
pub fn model_files(run: &ScenarioRun, exec: Exec) -> Result<Vec<(ModelOutputs, ModelLayers)>, SimError> {
    let sample = run.data.sample_test(ACTIVATION_SAMPLE, run.seed ^ 0x5eed);
    exec.try_map(&run.models, |m| {
        Ok((
            model_outputs(&m.id, &m.net, &run.data)?,
            layer_summaries(&m.id, &m.net, &run.data, &sample)?,
        ))
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), SimError> {
    let mut text = serde_json::to_string_pretty(value).expect("fixture types serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))
}

/// Runs `scenario` and writes `experiments.json`, `dataset.json`,
/// `outputs/<model>.json` and `layers/<model>.json` under `out_dir`.
pub fn emit_fixtures(scenario: Scenario, seed: u64, out_dir: &Path, exec: Exec) -> Result<Vec<PathBuf>, SimError> {
    let run = run_scenario(scenario, seed, exec)?;
    let io = |e: std::io::Error| SimError::Io(format!("{}: {e}", out_dir.display()));
    fs::create_dir_all(out_dir.join("outputs")).map_err(io)?;
    fs::create_dir_all(out_dir.join("layers")).map_err(io)?;

    let mut written = Vec::new();
    let path = out_dir.join("experiments.json");
    write_json(&path, &experiment_document(&run))?;
    written.push(path);
    let path = out_dir.join("dataset.json");
    write_json(&path, &run.data.to_records())?;
    written.push(path);
    for (outputs, layers) in model_files(&run, exec)? {
        let path = out_dir.join("outputs").join(format!("{}.json", outputs.model));
        write_json(&path, &outputs)?;
        written.push(path);
        let path = out_dir.join("layers").join(format!("{}.json", layers.model));
        write_json(&path, &layers)?;
        written.push(path);
    }
    Ok(written)
}
