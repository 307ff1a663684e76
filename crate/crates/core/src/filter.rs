//! The isolated bounded-noise filter whose densities stay uniform on boxes.
//!
//! A data update intersects the predictor box with the observation strips and
//! circumscribes the result by its tightest box; a time update pushes the
//! posterior box through the dynamics with interval arithmetic and inflates it
//! by the state-noise half-width.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::{self, GeometryError, Orthotope, StripSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{what}: expected {expected}, got {found}")]
    Shape {
        what: &'static str,
        expected: String,
        found: String,
    },
    #[error("{what} half-width entry {index} must be non-negative and finite, got {value}")]
    HalfWidth {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("{what} contains a non-finite entry")]
    NonFinite { what: &'static str },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("empty data update")]
    EmptyDataUpdate,
    #[error("run aborted at step {step}: {source}")]
    Aborted {
        step: usize,
        #[source]
        source: Box<FilterError>,
    },
    #[error("{what} has length {found}, expected {expected}")]
    Length {
        what: &'static str,
        expected: usize,
        found: usize,
    },
}

impl FilterError {
    pub(crate) fn at(self, step: usize) -> Self {
        match self {
            e @ FilterError::Aborted { .. } => e,
            e => FilterError::Aborted {
                step,
                source: Box::new(e),
            },
        }
    }

    /// True when the run stopped because a data update came out empty.
    pub fn is_empty_update(&self) -> bool {
        match self {
            FilterError::EmptyDataUpdate => true,
            FilterError::Aborted { source, .. } => source.is_empty_update(),
            _ => false,
        }
    }
}

/// What to do when the observation strips miss the predictor box entirely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmptyPolicy {
    /// Keep the predictor as the posterior and flag the step.
    #[default]
    Skip,
    /// Abort the run.
    DiscardRun,
}

fn finite(m: &DMatrix<f64>, what: &'static str) -> Result<(), ModelError> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ModelError::NonFinite { what })
    }
}

fn halfwidths(v: &DVector<f64>, what: &'static str) -> Result<(), ModelError> {
    match v.iter().enumerate().find(|(_, x)| !(x.is_finite() && **x >= 0.0)) {
        Some((index, &value)) => Err(ModelError::HalfWidth { what, index, value }),
        None => Ok(()),
    }
}

/// State evolution `x' = A x + B u + w`, `|w| <= w̄` componentwise.
#[derive(Debug, Clone, PartialEq)]
pub struct StateModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    noise: DVector<f64>,
}

impl StateModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, noise: DVector<f64>) -> Result<Self, ModelError> {
        let n = a.nrows();
        if a.ncols() != n || n == 0 {
            return Err(ModelError::Shape {
                what: "state matrix",
                expected: "square, non-empty".into(),
                found: format!("{}x{}", a.nrows(), a.ncols()),
            });
        }
        if b.nrows() != n {
            return Err(ModelError::Shape {
                what: "input matrix rows",
                expected: n.to_string(),
                found: b.nrows().to_string(),
            });
        }
        if noise.len() != n {
            return Err(ModelError::Shape {
                what: "state noise half-width",
                expected: n.to_string(),
                found: noise.len().to_string(),
            });
        }
        finite(&a, "state matrix")?;
        finite(&b, "input matrix")?;
        halfwidths(&noise, "state noise")?;
        Ok(Self { a, b, noise })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn noise(&self) -> &DVector<f64> {
        &self.noise
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Same input gain and noise, different transition matrix.
    pub fn with_transition(&self, a: DMatrix<f64>) -> Result<Self, ModelError> {
        Self::new(a, self.b.clone(), self.noise.clone())
    }
}

/// Observation channel `y = C x + v`, `|v| <= v̄` componentwise.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    c: DMatrix<f64>,
    noise: DVector<f64>,
}

impl ChannelModel {
    pub fn new(c: DMatrix<f64>, noise: DVector<f64>) -> Result<Self, ModelError> {
        if c.nrows() == 0 || c.ncols() == 0 {
            return Err(ModelError::Shape {
                what: "observation matrix",
                expected: "non-empty".into(),
                found: format!("{}x{}", c.nrows(), c.ncols()),
            });
        }
        if noise.len() != c.nrows() {
            return Err(ModelError::Shape {
                what: "observation noise half-width",
                expected: c.nrows().to_string(),
                found: noise.len().to_string(),
            });
        }
        finite(&c, "observation matrix")?;
        halfwidths(&noise, "observation noise")?;
        Ok(Self { c, noise })
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn noise(&self) -> &DVector<f64> {
        &self.noise
    }

    pub fn obs_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.c.ncols()
    }
}

/// A complete single-channel model.
#[derive(Debug, Clone, PartialEq)]
pub struct LsuModel {
    state: StateModel,
    channel: ChannelModel,
}

impl LsuModel {
    pub fn new(state: StateModel, channel: ChannelModel) -> Result<Self, ModelError> {
        if channel.state_dim() != state.state_dim() {
            return Err(ModelError::Shape {
                what: "observation matrix columns",
                expected: state.state_dim().to_string(),
                found: channel.state_dim().to_string(),
            });
        }
        Ok(Self { state, channel })
    }

    pub fn from_parts(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        state_noise: DVector<f64>,
        obs_noise: DVector<f64>,
    ) -> Result<Self, ModelError> {
        Self::new(StateModel::new(a, b, state_noise)?, ChannelModel::new(c, obs_noise)?)
    }

    pub fn state(&self) -> &StateModel {
        &self.state
    }

    pub fn channel(&self) -> &ChannelModel {
        &self.channel
    }

    pub fn state_dim(&self) -> usize {
        self.state.state_dim()
    }
}

/// Predictor and posterior boxes of one filter at one time step (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub time_index: usize,
    pub predictor: Orthotope,
    pub posterior: Orthotope,
    /// The data update found no consistent state and kept the predictor.
    pub skipped: bool,
}

/// Posterior after one data update, with the skip flag raised when the
/// observation was inconsistent with the prior and `EmptyPolicy::Skip` applied.
#[derive(Debug, Clone, PartialEq)]
pub struct DataUpdate {
    pub posterior: Orthotope,
    pub skipped: bool,
}

/// Data update against a single channel.
pub fn channel_update(
    prior: &Orthotope,
    y: &DVector<f64>,
    channel: &ChannelModel,
    policy: EmptyPolicy,
) -> Result<DataUpdate, FilterError> {
    if y.len() != channel.obs_dim() {
        return Err(FilterError::Length {
            what: "observation",
            expected: channel.obs_dim(),
            found: y.len(),
        });
    }
    let strips = StripSet::from_observation(channel.c(), y, channel.noise())?;
    match geometry::bounding_box(prior, &strips)? {
        Some(posterior) => Ok(DataUpdate {
            posterior,
            skipped: false,
        }),
        None => match policy {
            EmptyPolicy::Skip => Ok(DataUpdate {
                posterior: prior.clone(),
                skipped: true,
            }),
            EmptyPolicy::DiscardRun => Err(FilterError::EmptyDataUpdate),
        },
    }
}

pub fn data_update(
    prior: &Orthotope,
    y: &DVector<f64>,
    model: &LsuModel,
    policy: EmptyPolicy,
) -> Result<DataUpdate, FilterError> {
    channel_update(prior, y, model.channel(), policy)
}

/// Interval image of the posterior box under the dynamics, inflated by the
/// state-noise half-width. The input term enters once per coordinate.
pub fn time_update(
    posterior: &Orthotope,
    model: &StateModel,
    u: &DVector<f64>,
) -> Result<Orthotope, FilterError> {
    let n = model.state_dim();
    if posterior.dim() != n {
        return Err(GeometryError::DimensionMismatch {
            expected: n,
            found: posterior.dim(),
        }
        .into());
    }
    if u.len() != model.input_dim() {
        return Err(FilterError::Length {
            what: "input",
            expected: model.input_dim(),
            found: u.len(),
        });
    }
    let a = model.a();
    let drive = model.b() * u;
    let (lo, hi) = (posterior.lower(), posterior.upper());
    let mut lower = DVector::zeros(n);
    let mut upper = DVector::zeros(n);
    for i in 0..n {
        let (mut l, mut h) = (0.0, 0.0);
        for j in 0..n {
            let p = a[(i, j)] * lo[j];
            let q = a[(i, j)] * hi[j];
            l += p.min(q);
            h += p.max(q);
        }
        lower[i] = l + drive[i] - model.noise()[i];
        upper[i] = h + drive[i] + model.noise()[i];
    }
    Ok(Orthotope::new(lower, upper)?)
}

/// One filter carried through time.
#[derive(Debug, Clone)]
pub struct UosFilter<'m> {
    state: &'m StateModel,
    predictor: Orthotope,
    time_index: usize,
}

impl<'m> UosFilter<'m> {
    pub fn new(state: &'m StateModel, prior: Orthotope) -> Result<Self, FilterError> {
        if prior.dim() != state.state_dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: state.state_dim(),
                found: prior.dim(),
            }
            .into());
        }
        Ok(Self {
            state,
            predictor: prior,
            time_index: 1,
        })
    }

    pub fn predictor(&self) -> &Orthotope {
        &self.predictor
    }

    pub fn time_index(&self) -> usize {
        self.time_index
    }

    /// Replaces the predictor, e.g. after conditioning on transferred knowledge.
    pub fn set_predictor(&mut self, predictor: Orthotope) {
        self.predictor = predictor;
    }

    /// Applies the channels in order to the current predictor. Returns the
    /// state record for this step and the number of skipped channel updates.
    pub fn assimilate(
        &self,
        observations: &[(&DVector<f64>, &ChannelModel)],
        policy: EmptyPolicy,
    ) -> Result<(FilterState, usize), FilterError> {
        let mut posterior = self.predictor.clone();
        let mut skips = 0;
        for (y, channel) in observations {
            let upd = channel_update(&posterior, y, channel, policy)
                .map_err(|e| e.at(self.time_index))?;
            skips += usize::from(upd.skipped);
            posterior = upd.posterior;
        }
        Ok((
            FilterState {
                time_index: self.time_index,
                predictor: self.predictor.clone(),
                posterior,
                skipped: skips > 0,
            },
            skips,
        ))
    }

    /// Moves to the next step, predicting from `posterior`.
    pub fn advance(&mut self, posterior: &Orthotope, u: &DVector<f64>) -> Result<(), FilterError> {
        self.predictor =
            time_update(posterior, self.state, u).map_err(|e| e.at(self.time_index))?;
        self.time_index += 1;
        Ok(())
    }
}

/// A completed run of one filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterRun {
    pub states: Vec<FilterState>,
    pub empty_data_updates: usize,
}

impl FilterRun {
    pub fn posteriors(&self) -> impl Iterator<Item = &Orthotope> {
        self.states.iter().map(|s| &s.posterior)
    }
}

pub(crate) fn check_inputs(
    horizon: usize,
    inputs: &[DVector<f64>],
) -> Result<(), FilterError> {
    if horizon == 0 {
        return Err(FilterError::Length {
            what: "observation sequence",
            expected: 1,
            found: 0,
        });
    }
    // The input at the final step is never used.
    if inputs.len() + 1 < horizon {
        return Err(FilterError::Length {
            what: "input sequence",
            expected: horizon - 1,
            found: inputs.len(),
        });
    }
    Ok(())
}

/// Alternates data and time updates from t = 1 and finishes with the data
/// update of the last observation.
pub fn run_isolated(
    model: &LsuModel,
    prior: Orthotope,
    observations: &[DVector<f64>],
    inputs: &[DVector<f64>],
    policy: EmptyPolicy,
) -> Result<FilterRun, FilterError> {
    let horizon = observations.len();
    check_inputs(horizon, inputs)?;
    let mut filter = UosFilter::new(model.state(), prior)?;
    let mut states = Vec::with_capacity(horizon);
    let mut empty = 0;
    for (t, y) in observations.iter().enumerate() {
        let (state, skips) = filter.assimilate(&[(y, model.channel())], policy)?;
        empty += skips;
        if t + 1 < horizon {
            filter.advance(&state.posterior, &inputs[t])?;
        }
        states.push(state);
    }
    Ok(FilterRun {
        states,
        empty_data_updates: empty,
    })
}
