//! Task-stream construction for the three continual-learning scenarios.
//!
//! ITL: one output head per task, task identity known at test time.
//! IDL: one fixed head shared by every task; the input distribution shifts.
//! ICL: one head that grows with each task's classes; predictions range
//! over every class seen so far and task identity is never available.

use rand::seq::SliceRandom;

use crate::data::LabeledDataset;
use crate::error::{CwError, Result};
use crate::rng::derive_rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Itl,
    Idl,
    Icl,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Itl => "itl",
            Scenario::Idl => "idl",
            Scenario::Icl => "icl",
        }
    }

    pub fn parse(s: &str) -> Result<Scenario> {
        match s {
            "itl" => Ok(Scenario::Itl),
            "idl" => Ok(Scenario::Idl),
            "icl" => Ok(Scenario::Icl),
            other => Err(CwError::Config(format!("unknown scenario '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadPolicy {
    MultiHead,
    SingleFixed,
    SingleGrowing,
}

/// One task: its datasets, the global classes it covers, and the
/// global-to-local label map applied to its stored labels.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub classes: Vec<usize>,
    /// (global, local) pairs; identity when labels are kept global.
    pub label_map: Vec<(usize, usize)>,
}

/// Ordered tasks plus the scenario that dictates head handling.
#[derive(Debug, Clone)]
pub struct TaskStream {
    pub tasks: Vec<TaskData>,
    pub scenario: Scenario,
    /// Logit width of one head (2 for split pairs, 10 for permuted).
    pub units_per_task: usize,
    pub input_dim: usize,
}

impl TaskStream {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn head_policy(&self) -> HeadPolicy {
        match self.scenario {
            Scenario::Itl => HeadPolicy::MultiHead,
            Scenario::Idl => HeadPolicy::SingleFixed,
            Scenario::Icl => HeadPolicy::SingleGrowing,
        }
    }

    pub fn task_identity_at_test(&self) -> bool {
        self.scenario == Scenario::Itl
    }
}

/// Which head to use for a task, over how many logit units, and whether
/// the evaluator may use task identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadDirective {
    pub head_index: usize,
    pub active_units: usize,
    pub task_identity_at_test: bool,
}

/// Head routing for `task` once `seen_tasks` tasks are complete (for
/// training task j, seen_tasks = j + 1; for evaluation at checkpoint c,
/// seen_tasks = c + 1).
pub fn resolve_head(stream: &TaskStream, task: usize, seen_tasks: usize) -> Result<HeadDirective> {
    if task >= stream.len() || seen_tasks > stream.len() || task >= seen_tasks {
        return Err(CwError::Sequencing(format!(
            "task {task} with {seen_tasks} seen of {}",
            stream.len()
        )));
    }
    Ok(match stream.scenario {
        Scenario::Itl => HeadDirective {
            head_index: task,
            active_units: stream.units_per_task,
            task_identity_at_test: true,
        },
        Scenario::Idl => HeadDirective {
            head_index: 0,
            active_units: stream.units_per_task,
            task_identity_at_test: false,
        },
        Scenario::Icl => HeadDirective {
            head_index: 0,
            active_units: stream.units_per_task * seen_tasks,
            task_identity_at_test: false,
        },
    })
}

fn remap(
    ds: &LabeledDataset,
    map: &[(usize, usize)],
    classes_here: usize,
) -> Result<LabeledDataset> {
    let labels: Vec<usize> = ds
        .labels
        .iter()
        .map(|l| {
            map.iter()
                .find(|(g, _)| g == l)
                .map(|&(_, loc)| loc)
                .ok_or_else(|| CwError::Data(format!("label {l} missing from map")))
        })
        .collect::<Result<_>>()?;
    LabeledDataset::new(
        ds.images.clone(),
        labels,
        classes_here,
        ds.provenance.clone(),
    )
}

fn filter_classes(ds: &LabeledDataset, classes: &[usize]) -> LabeledDataset {
    let idx: Vec<usize> = ds
        .labels
        .iter()
        .enumerate()
        .filter(|(_, l)| classes.contains(l))
        .map(|(i, _)| i)
        .collect();
    ds.select(&idx)
}

/// Partition a base dataset into class-pair tasks.
///
/// ITL and IDL remap each pair to local labels {0, 1}; ICL keeps global
/// class indices so the growing head can score every class seen.
pub fn build_split_tasks(
    train: &LabeledDataset,
    test: &LabeledDataset,
    pairs: &[(usize, usize)],
    scenario: Scenario,
) -> Result<TaskStream> {
    if pairs.is_empty() {
        return Err(CwError::Config("no class pairs".into()));
    }
    let mut tasks = Vec::with_capacity(pairs.len());
    for &(a, b) in pairs {
        for class in [a, b] {
            if !train.labels.contains(&class) {
                return Err(CwError::Data(format!(
                    "class {class} missing from train set"
                )));
            }
            if !test.labels.contains(&class) {
                return Err(CwError::Data(format!(
                    "class {class} missing from test set"
                )));
            }
        }
        let classes = vec![a, b];
        let tr = filter_classes(train, &classes);
        let te = filter_classes(test, &classes);
        let (tr, te, label_map) = match scenario {
            Scenario::Icl => {
                let map = vec![(a, a), (b, b)];
                let classes_total = train.num_classes;
                (
                    remap(&tr, &map, classes_total)?,
                    remap(&te, &map, classes_total)?,
                    map,
                )
            }
            _ => {
                let map = vec![(a, 0), (b, 1)];
                (remap(&tr, &map, 2)?, remap(&te, &map, 2)?, map)
            }
        };
        tasks.push(TaskData {
            train: tr,
            test: te,
            classes,
            label_map,
        });
    }
    Ok(TaskStream {
        tasks,
        scenario,
        units_per_task: 2,
        input_dim: train.dim(),
    })
}

/// Standard consecutive-digit pairs (0,1)(2,3)(4,5)(6,7)(8,9).
pub fn consecutive_pairs(num_classes: usize) -> Vec<(usize, usize)> {
    (0..num_classes / 2).map(|i| (2 * i, 2 * i + 1)).collect()
}

/// One task per fixed pixel permutation; task 1 is the identity, later
/// permutations are seeded-random bijections. All tasks share the full
/// label set and a single head.
pub fn build_permuted_tasks(
    train: &LabeledDataset,
    test: &LabeledDataset,
    n_tasks: usize,
    seed: u64,
) -> Result<TaskStream> {
    if n_tasks == 0 {
        return Err(CwError::Config("permuted stream needs n_tasks >= 1".into()));
    }
    let dim = train.dim();
    let mut tasks = Vec::with_capacity(n_tasks);
    let classes: Vec<usize> = (0..train.num_classes).collect();
    let label_map: Vec<(usize, usize)> = classes.iter().map(|&c| (c, c)).collect();
    for k in 0..n_tasks {
        let perm: Vec<usize> = if k == 0 {
            (0..dim).collect()
        } else {
            let mut p: Vec<usize> = (0..dim).collect();
            p.shuffle(&mut derive_rng(seed, &format!("pixel-permutation-{k}")));
            p
        };
        tasks.push(TaskData {
            train: permute_pixels(train, &perm)?,
            test: permute_pixels(test, &perm)?,
            classes: classes.clone(),
            label_map: label_map.clone(),
        });
    }
    Ok(TaskStream {
        tasks,
        scenario: Scenario::Idl,
        units_per_task: train.num_classes,
        input_dim: dim,
    })
}

fn permute_pixels(ds: &LabeledDataset, perm: &[usize]) -> Result<LabeledDataset> {
    let (n, d) = (ds.len(), ds.dim());
    debug_assert_eq!(perm.len(), d);
    let mut values = vec![0.0; n * d];
    for i in 0..n {
        let row = ds.images.row(i);
        let out = &mut values[i * d..(i + 1) * d];
        for (k, &src) in perm.iter().enumerate() {
            out[k] = row[src];
        }
    }
    LabeledDataset::new(
        Tensor::new(vec![n, d], values)?,
        ds.labels.clone(),
        ds.num_classes,
        ds.provenance.clone(),
    )
}
