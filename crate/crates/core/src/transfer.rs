//! Knowledge transfer from source filters into a target filter.
//!
//! Each source hands over its current state-predictor box. The target keeps
//! the joint intersection of its own predictor with every source box; if that
//! intersection is empty the transfer is rejected as a whole and the target
//! continues with its own predictor. The conditioned predictor then goes
//! through the target's ordinary data and time updates.

use std::io;

use nalgebra::DVector;

use crate::filter::{
    check_inputs, EmptyPolicy, FilterError, FilterRun, FilterState, LsuModel, UosFilter,
};
use crate::geometry::{self, GeometryError, Orthotope};

/// A source's predictor box at the step it is offered to the target.
#[derive(Debug, Clone, PartialEq)]
pub struct SourcePredictor {
    pub source_id: String,
    pub time_index: usize,
    pub support: Orthotope,
}

impl SourcePredictor {
    /// Flat record `source_id, t, lower[..], upper[..]`.
    pub fn to_record(&self) -> Vec<String> {
        let mut rec = vec![self.source_id.clone(), self.time_index.to_string()];
        rec.extend(self.support.lower().iter().map(f64::to_string));
        rec.extend(self.support.upper().iter().map(f64::to_string));
        rec
    }

    pub fn from_record(rec: &[&str]) -> Result<Self, TraceError> {
        if rec.len() < 4 || !rec.len().is_multiple_of(2) {
            return Err(TraceError::Malformed(format!(
                "expected source_id, t and an even number of bounds, got {} fields",
                rec.len()
            )));
        }
        let time_index = rec[1]
            .trim()
            .parse()
            .map_err(|e| TraceError::Malformed(format!("time index {:?}: {e}", rec[1])))?;
        let bounds: Vec<f64> = rec[2..]
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| TraceError::Malformed(format!("bound {s:?}: {e}")))
            })
            .collect::<Result<_, _>>()?;
        let n = bounds.len() / 2;
        let support = Orthotope::from_slices(&bounds[..n], &bounds[n..])?;
        Ok(Self {
            source_id: rec[0].to_string(),
            time_index,
            support,
        })
    }

    /// Header matching [`to_record`](Self::to_record) for a `dim`-dimensional state.
    pub fn header(dim: usize) -> Vec<String> {
        let mut h = vec!["source_id".to_string(), "t".to_string()];
        h.extend((1..=dim).map(|i| format!("lower_{i}")));
        h.extend((1..=dim).map(|i| format!("upper_{i}")));
        h
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("malformed trace record: {0}")]
    Malformed(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Writes predictor records as CSV with a header row.
pub fn write_trace<W: io::Write>(writer: W, records: &[SourcePredictor]) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(writer);
    let dim = records.first().map_or(0, |r| r.support.dim());
    w.write_record(SourcePredictor::header(dim))?;
    for r in records {
        w.write_record(r.to_record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: io::Read>(reader: R) -> Result<Vec<SourcePredictor>, TraceError> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let fields: Vec<&str> = rec.iter().collect();
        out.push(SourcePredictor::from_record(&fields)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferOutcome {
    pub target_predictor: Orthotope,
    pub conditioned_predictor: Orthotope,
    /// One flag per source, in the order given.
    pub accepted: Vec<bool>,
    pub fallback_used: bool,
    /// Sources whose box alone misses the target predictor.
    pub disjoint_sources: Vec<usize>,
}

pub fn transfer_step(
    target_predictor: &Orthotope,
    sources: &[SourcePredictor],
) -> Result<TransferOutcome, GeometryError> {
    let boxes = std::iter::once(target_predictor).chain(sources.iter().map(|s| &s.support));
    let joint = geometry::intersect_many(boxes)?;
    match joint {
        Some(conditioned) => Ok(TransferOutcome {
            target_predictor: target_predictor.clone(),
            conditioned_predictor: conditioned,
            accepted: vec![true; sources.len()],
            fallback_used: false,
            disjoint_sources: Vec::new(),
        }),
        None => {
            let mut disjoint = Vec::new();
            for (i, s) in sources.iter().enumerate() {
                if geometry::intersect(target_predictor, &s.support)?.is_none() {
                    disjoint.push(i);
                }
            }
            Ok(TransferOutcome {
                target_predictor: target_predictor.clone(),
                conditioned_predictor: target_predictor.clone(),
                accepted: vec![false; sources.len()],
                fallback_used: true,
                disjoint_sources: disjoint,
            })
        }
    }
}

/// Checks the all-or-nothing contract of a transfer outcome.
pub fn all_or_nothing_semantics_check(outcome: &TransferOutcome, sources: &[SourcePredictor]) -> bool {
    if outcome.fallback_used {
        outcome.conditioned_predictor == outcome.target_predictor
            && outcome.accepted.iter().all(|a| !a)
    } else {
        outcome.accepted.len() == sources.len()
            && outcome.accepted.iter().all(|&a| a)
            && outcome.conditioned_predictor.is_subset_of(&outcome.target_predictor)
            && sources
                .iter()
                .all(|s| outcome.conditioned_predictor.is_subset_of(&s.support))
    }
}

/// One source task: its own model, prior and observations.
#[derive(Debug, Clone, Copy)]
pub struct SourceTask<'a> {
    pub model: &'a LsuModel,
    pub prior: &'a Orthotope,
    pub observations: &'a [DVector<f64>],
}

#[derive(Debug, Clone, PartialEq)]
pub struct BtlRun {
    pub target: FilterRun,
    pub sources: Vec<FilterRun>,
    /// Transfer at each step, aligned with `target.states`.
    pub transfers: Vec<TransferOutcome>,
    pub empty_transfers: usize,
}

/// Target filter conditioned at every step on the predictors of all sources.
///
/// Per step: sources publish their predictors, the target intersects, then
/// every task runs its local data update and, except at the last step, its
/// time update. Sources never see the target. `inputs` drives all tasks.
pub fn run_btl(
    target_model: &LsuModel,
    target_prior: Orthotope,
    target_observations: &[DVector<f64>],
    sources: &[SourceTask<'_>],
    inputs: &[DVector<f64>],
    policy: EmptyPolicy,
) -> Result<BtlRun, FilterError> {
    let horizon = target_observations.len();
    check_inputs(horizon, inputs)?;
    for s in sources {
        if s.observations.len() != horizon {
            return Err(FilterError::Length {
                what: "source observations",
                expected: horizon,
                found: s.observations.len(),
            });
        }
        if s.model.state_dim() != target_model.state_dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: target_model.state_dim(),
                found: s.model.state_dim(),
            }
            .into());
        }
    }
    let mut target = UosFilter::new(target_model.state(), target_prior)?;
    let mut source_filters = sources
        .iter()
        .map(|s| UosFilter::new(s.model.state(), s.prior.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let mut target_states = Vec::with_capacity(horizon);
    let mut source_states: Vec<Vec<FilterState>> =
        (0..sources.len()).map(|_| Vec::with_capacity(horizon)).collect();
    let mut source_empty = vec![0; sources.len()];
    let mut transfers = Vec::with_capacity(horizon);
    let mut target_empty = 0;
    let mut empty_transfers = 0;

    for t in 0..horizon {
        let step = t + 1;
        let offered: Vec<SourcePredictor> = source_filters
            .iter()
            .enumerate()
            .map(|(i, f)| SourcePredictor {
                source_id: format!("source-{}", i + 1),
                time_index: step,
                support: f.predictor().clone(),
            })
            .collect();
        let outcome = transfer_step(target.predictor(), &offered)
            .map_err(|e| FilterError::from(e).at(step))?;
        empty_transfers += usize::from(outcome.fallback_used);
        target.set_predictor(outcome.conditioned_predictor.clone());
        transfers.push(outcome);

        let y = &target_observations[t];
        let (tstate, skips) = target.assimilate(&[(y, target_model.channel())], policy)?;
        target_empty += skips;

        let mut posts = Vec::with_capacity(sources.len());
        for (i, (f, s)) in source_filters.iter().zip(sources).enumerate() {
            let (st, skips) = f.assimilate(&[(&s.observations[t], s.model.channel())], policy)?;
            source_empty[i] += skips;
            posts.push(st);
        }

        if step < horizon {
            target.advance(&tstate.posterior, &inputs[t])?;
            for (f, st) in source_filters.iter_mut().zip(&posts) {
                f.advance(&st.posterior, &inputs[t])?;
            }
        }
        target_states.push(tstate);
        for (acc, st) in source_states.iter_mut().zip(posts) {
            acc.push(st);
        }
    }

    Ok(BtlRun {
        target: FilterRun {
            states: target_states,
            empty_data_updates: target_empty,
        },
        sources: source_states
            .into_iter()
            .zip(source_empty)
            .map(|(states, empty)| FilterRun {
                states,
                empty_data_updates: empty,
            })
            .collect(),
        transfers,
        empty_transfers,
    })
}
