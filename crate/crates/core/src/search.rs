//! Random hyperparameter search over one fold.

use std::cmp::Ordering;
use std::sync::Mutex;

use rayon::prelude::*;

use crate::config::{HparamSpace, TrainConfig};
use crate::corpus::{ConceptInventory, MentionRecord};
use crate::encoder::MentionEncoder;
use crate::trainer::{train_fold, TrainError, TrainReport};

/// One sampled config and how training on it went.
#[derive(Debug)]
pub struct Trial {
    pub index: usize,
    pub config: TrainConfig,
    pub outcome: Result<TrainReport, TrainError>,
}

impl Trial {
    /// Best validation accuracy, if the trial finished.
    pub fn val_accuracy(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|r| r.best_val_accuracy)
    }

    /// Mean per-mention training loss at the best epoch.
    pub fn loss(&self) -> Option<f64> {
        let report = self.outcome.as_ref().ok()?;
        report
            .best()
            .map(|e| e.train_loss / report.n_train.max(1) as f64)
    }
}

#[derive(Debug)]
pub struct SearchOutcome {
    /// Trials ranked best first.
    pub trials: Vec<Trial>,
}

impl SearchOutcome {
    /// Config of the top-ranked trial that finished.
    pub fn best(&self) -> Option<&TrainConfig> {
        self.trials
            .iter()
            .find(|t| t.outcome.is_ok())
            .map(|t| &t.config)
    }

    /// Tab-separated trial log in ranking order.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("rank\ttrial\tval_accuracy\tloss\tstatus\tconfig\n");
        for (rank, t) in self.trials.iter().enumerate() {
            let cfg = t.config.to_config_string().trim_end().replace('\n', "; ");
            let (acc, loss, status) = match &t.outcome {
                Ok(_) => (
                    format!("{:.4}", t.val_accuracy().unwrap_or(f64::NAN)),
                    format!("{:.6}", t.loss().unwrap_or(f64::NAN)),
                    "ok".to_string(),
                ),
                Err(e) => ("-".into(), "-".into(), format!("failed: {e}")),
            };
            out.push_str(&format!(
                "{}\t{}\t{acc}\t{loss}\t{status}\t{cfg}\n",
                rank + 1,
                t.index
            ));
        }
        out
    }
}

/// Ranking: higher validation accuracy, then lower loss, then earlier trial.
/// Failed trials go last.
fn compare(a: &Trial, b: &Trial) -> Ordering {
    match (a.val_accuracy(), b.val_accuracy()) {
        (Some(x), Some(y)) => y
            .total_cmp(&x)
            .then_with(|| {
                let la = a.loss().unwrap_or(f64::INFINITY);
                let lb = b.loss().unwrap_or(f64::INFINITY);
                la.total_cmp(&lb)
            })
            .then(a.index.cmp(&b.index)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.index.cmp(&b.index),
    }
}

/// Trains one model per sampled config, in parallel, and ranks them.
///
/// `factory` builds a fresh encoder for each trial. A failing trial is kept
/// in the log and ranked last; it does not stop the others.
pub fn random_search<E, F>(
    space: &HparamSpace,
    records: &[MentionRecord],
    fold: usize,
    factory: F,
    inventory: &ConceptInventory,
) -> Result<SearchOutcome, TrainError>
where
    E: MentionEncoder + Clone,
    F: Fn(&[MentionRecord], &TrainConfig) -> Result<E, TrainError> + Sync,
{
    let configs = space.sample_configs()?;
    let log = Mutex::new(Vec::with_capacity(configs.len()));
    configs
        .into_par_iter()
        .enumerate()
        .for_each(|(index, config)| {
            let outcome = factory(records, &config)
                .and_then(|enc| train_fold(records, fold, &config, enc, inventory))
                .map(|(_, report)| report);
            log.lock().expect("trial log lock").push(Trial {
                index,
                config,
                outcome,
            });
        });
    let mut trials = log.into_inner().expect("trial log lock");
    trials.sort_by(compare);
    Ok(SearchOutcome { trials })
}
