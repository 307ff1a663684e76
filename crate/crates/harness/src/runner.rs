//! Monte Carlo orchestration: one synthetic trajectory set per
//! (ratio, seed) cell, consumed by the isolated target filter, the transfer
//! filter and the complete-modelling filter.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rayon::prelude::*;
use thiserror::Error;
use uos_transfer::bcm::run_bcm;
use uos_transfer::filter::{run_isolated, ChannelModel, FilterError, FilterRun, LsuModel, ModelError, StateModel};
use uos_transfer::geometry::Orthotope;
use uos_transfer::metrics::{self, Method, MetricsError, MetricsRecord, Window};
use uos_transfer::synthesis::{apply_mismatch, simulate_u, simulate_v, MismatchError, RunKey, SynthesisError, Trajectory};
use uos_transfer::transfer::{run_btl, SourceTask};

use crate::config::{ExperimentConfig, SynthesisGraph};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("analysis model: {0}")]
    Mismatch(#[from] MismatchError),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("synthesis: {0}")]
    Synthesis(#[from] SynthesisError),
    #[error("metrics at ratio {ratio}, seed {seed}: {source}")]
    Metrics {
        ratio: f64,
        seed: u64,
        source: MetricsError,
    },
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Models shared by every cell of one grid.
#[derive(Debug, Clone)]
pub struct Setup {
    pub config: ExperimentConfig,
    pub n_sources: usize,
    /// Data-generating state model.
    pub synthetic: StateModel,
    /// Target (and complete-modelling) state model.
    pub target_state: StateModel,
    pub target_channel: ChannelModel,
    pub x1: DVector<f64>,
}

impl Setup {
    pub fn new(config: &ExperimentConfig, n_sources: usize) -> Result<Self, RunError> {
        let sys = config.system.matrices();
        let n = sys.state_dim();
        let w = DVector::from_element(n, config.rho);
        let synthetic = StateModel::new(sys.a.clone(), sys.b.clone(), w.clone())?;
        let target_a = apply_mismatch(&sys.a, &config.mismatch)?;
        let target_state = StateModel::new(target_a, sys.b.clone(), w)?;
        let target_channel = ChannelModel::new(sys.c.clone(), DVector::from_element(sys.obs_dim(), config.r))?;
        Ok(Self {
            config: config.clone(),
            n_sources,
            synthetic,
            target_state,
            target_channel,
            x1: DVector::from_vec(config.initial_state()),
        })
    }

    pub fn window(&self) -> Window {
        Window::new(self.config.t_lo, self.config.horizon)
    }

    fn source_channel(&self, ratio: f64) -> Result<ChannelModel, RunError> {
        Ok(ChannelModel::new(
            self.target_channel.c().clone(),
            self.target_channel.noise() * ratio,
        )?)
    }

    /// Channel 0 is the target, channels 1..=n_sources the sources.
    pub fn trajectory(&self, ratio: f64, seed: u64) -> Result<Trajectory, RunError> {
        let cfg = &self.config;
        let source = self.source_channel(ratio)?;
        let mut channels = Vec::with_capacity(self.n_sources + 1);
        channels.push(self.target_channel.clone());
        channels.extend(std::iter::repeat_n(source, self.n_sources));
        let key = RunKey::new(cfg.master_seed, seed);
        let traj = match cfg.synthesis_graph {
            SynthesisGraph::V => simulate_v(&self.synthetic, &channels, cfg.horizon, &self.x1, &cfg.input_gen, key)?,
            SynthesisGraph::U => simulate_u(
                &self.synthetic,
                cfg.alpha,
                &channels,
                cfg.horizon,
                &self.x1,
                &cfg.input_gen,
                key,
            )?,
        };
        Ok(traj)
    }

    fn prior_around(&self, x: &DVector<f64>) -> Orthotope {
        Orthotope::centered(x, &DVector::from_element(x.len(), self.config.prior_halfwidth))
            .expect("finite prior")
    }
}

/// Outcome of one (ratio, seed) cell.
#[derive(Debug, Clone)]
pub struct CellOutput {
    pub ratio: f64,
    pub seed: u64,
    /// Isolated, transfer, complete modelling.
    pub records: [MetricsRecord; 3],
    /// Trajectory fingerprint seen by each method.
    pub fingerprints: [u64; 3],
    /// `|TNSE(reversed order) - TNSE| / TNSE` for the complete-modelling
    /// filter, when both orders completed.
    pub bcm_order_gap: Option<f64>,
    pub elapsed: [Duration; 3],
}

struct Evaluated {
    posteriors: Vec<Orthotope>,
    empty_data_updates: usize,
}

fn evaluate(run: &FilterRun) -> Evaluated {
    Evaluated {
        posteriors: run.posteriors().cloned().collect(),
        empty_data_updates: run.empty_data_updates,
    }
}

fn record(
    method: Method,
    ratio: f64,
    seed: u64,
    window: Window,
    result: Result<(Evaluated, usize), FilterError>,
    truths: &[DVector<f64>],
    isolated_volumes: Option<&[f64]>,
) -> Result<(MetricsRecord, Option<Vec<f64>>), MetricsError> {
    let (ev, empty_transfers) = match result {
        Ok(v) => v,
        Err(e) => {
            log::debug!("{method} run discarded at ratio {ratio}, seed {seed}: {e}");
            return Ok((MetricsRecord::discarded(method, ratio, seed, window), None));
        }
    };
    let volumes = metrics::volumes(&ev.posteriors);
    let avr = match isolated_volumes {
        Some(iso) => metrics::avr(&volumes, iso, window)?,
        None => f64::NAN,
    };
    let rec = MetricsRecord {
        method,
        ratio,
        seed,
        window,
        tnse: metrics::tnse(&metrics::midpoints(&ev.posteriors), truths, window)?,
        av: metrics::av(&ev.posteriors, window)?,
        avr,
        p_c: metrics::containment(&ev.posteriors, truths, window)?,
        discarded: false,
        empty_data_updates: ev.empty_data_updates,
        empty_transfers,
    };
    Ok((rec, Some(volumes)))
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

pub fn run_cell(setup: &Setup, ratio: f64, seed: u64) -> Result<CellOutput, RunError> {
    let traj = setup.trajectory(ratio, seed)?;
    let cfg = &setup.config;
    let policy = cfg.empty_policy;
    let window = setup.window();
    let truths = &traj.states;
    let metric_err = |source| RunError::Metrics { ratio, seed, source };

    let target_model = LsuModel::new(setup.target_state.clone(), setup.target_channel.clone())?;
    let source_model = LsuModel::new(setup.synthetic.clone(), setup.source_channel(ratio)?)?;
    let target_prior = setup.prior_around(&traj.states[0]);
    let source_x1 = traj.source_states.as_ref().map_or(&traj.states[0], |s| &s[0]);
    let source_prior = setup.prior_around(source_x1);

    let mut fingerprints = [0u64; 3];

    fingerprints[0] = traj.fingerprint();
    let (iso, t_iso) = timed(|| {
        run_isolated(&target_model, target_prior.clone(), &traj.observations[0], &traj.inputs, policy)
            .map(|r| (evaluate(&r), 0))
    });
    let (iso_rec, iso_vol) = record(Method::Isolated, ratio, seed, window, iso, truths, None).map_err(metric_err)?;
    let iso_vol = iso_vol.as_deref();
    let mut iso_rec = iso_rec;
    if !iso_rec.discarded {
        iso_rec.avr = 1.0;
    }

    fingerprints[1] = traj.fingerprint();
    let tasks: Vec<SourceTask<'_>> = traj.observations[1..]
        .iter()
        .map(|obs| SourceTask {
            model: &source_model,
            prior: &source_prior,
            observations: obs,
        })
        .collect();
    let (btl, t_btl) = timed(|| {
        run_btl(&target_model, target_prior.clone(), &traj.observations[0], &tasks, &traj.inputs, policy)
            .map(|r| (evaluate(&r.target), r.empty_transfers))
    });
    let (btl_rec, _) = record(Method::Btl, ratio, seed, window, btl, truths, iso_vol).map_err(metric_err)?;

    fingerprints[2] = traj.fingerprint();
    let mut channels = Vec::with_capacity(traj.observations.len());
    channels.push(setup.target_channel.clone());
    channels.extend(std::iter::repeat_n(source_model.channel().clone(), setup.n_sources));
    let (bcm, t_bcm) = timed(|| {
        run_bcm(&setup.target_state, &channels, target_prior.clone(), &traj.observations, &traj.inputs, policy)
            .map(|r| (evaluate(&r), 0))
    });
    let (bcm_rec, _) = record(Method::Bcm, ratio, seed, window, bcm, truths, iso_vol).map_err(metric_err)?;

    let bcm_order_gap = if bcm_rec.discarded || setup.n_sources == 0 {
        None
    } else {
        let rev_channels: Vec<ChannelModel> = channels.iter().rev().cloned().collect();
        let rev_obs: Vec<Vec<DVector<f64>>> = traj.observations.iter().rev().cloned().collect();
        run_bcm(&setup.target_state, &rev_channels, target_prior, &rev_obs, &traj.inputs, policy)
            .ok()
            .and_then(|r| {
                let est = metrics::midpoints(&r.posteriors().cloned().collect::<Vec<_>>());
                metrics::tnse(&est, truths, window).ok()
            })
            .map(|rev| {
                if bcm_rec.tnse > 0.0 {
                    (rev - bcm_rec.tnse).abs() / bcm_rec.tnse
                } else {
                    (rev - bcm_rec.tnse).abs()
                }
            })
    };

    Ok(CellOutput {
        ratio,
        seed,
        records: [iso_rec, btl_rec, bcm_rec],
        fingerprints,
        bcm_order_gap,
        elapsed: [t_iso, t_btl, t_bcm],
    })
}

/// Per (method, ratio) means over non-discarded seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub ratio: f64,
    pub runs: usize,
    pub discarded: usize,
    pub tnse: f64,
    pub av: f64,
    pub avr: f64,
    pub p_c: f64,
    pub empty_data_updates: usize,
    pub empty_transfers: usize,
}

#[derive(Debug, Clone)]
pub struct ResultsTable {
    pub config: ExperimentConfig,
    pub n_sources: usize,
    /// Sorted by ratio index, then seed, then method.
    pub rows: Vec<MetricsRecord>,
    pub wall_clock: BTreeMap<&'static str, f64>,
    /// Mean relative TNSE change of the complete-modelling filter when the
    /// channel order is reversed, per ratio.
    pub bcm_order_gap: Vec<(f64, f64)>,
    pub paired_runs_verified: bool,
    pub version: &'static str,
}

impl ResultsTable {
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut out = Vec::new();
        for &ratio in &self.config.ratios {
            for method in Method::ALL {
                let cell: Vec<&MetricsRecord> = self
                    .rows
                    .iter()
                    .filter(|r| r.method == method && r.ratio == ratio)
                    .collect();
                let kept: Vec<&&MetricsRecord> = cell.iter().filter(|r| !r.discarded).collect();
                // AVR can be NaN on its own when the paired isolated run was discarded.
                let mean = |f: &dyn Fn(&MetricsRecord) -> f64| {
                    let vals: Vec<f64> = kept.iter().map(|r| f(r)).filter(|v| !v.is_nan()).collect();
                    if vals.is_empty() {
                        f64::NAN
                    } else {
                        vals.iter().sum::<f64>() / vals.len() as f64
                    }
                };
                out.push(SummaryRow {
                    method,
                    ratio,
                    runs: cell.len(),
                    discarded: cell.len() - kept.len(),
                    tnse: mean(&|r| r.tnse),
                    av: mean(&|r| r.av),
                    avr: mean(&|r| r.avr),
                    p_c: mean(&|r| r.p_c),
                    empty_data_updates: cell.iter().map(|r| r.empty_data_updates).sum(),
                    empty_transfers: cell.iter().map(|r| r.empty_transfers).sum(),
                });
            }
        }
        out
    }

    pub fn summary_for(&self, method: Method, ratio: f64) -> Option<SummaryRow> {
        self.summary()
            .into_iter()
            .find(|s| s.method == method && s.ratio == ratio)
    }

    pub fn all_discarded(&self) -> bool {
        self.rows.iter().all(|r| r.discarded)
    }
}

/// Runs every (ratio, seed) cell, on `workers` threads when given.
pub fn run_experiment(
    config: &ExperimentConfig,
    n_sources: usize,
    workers: Option<usize>,
) -> Result<ResultsTable, RunError> {
    let setup = Setup::new(config, n_sources)?;
    let cells: Vec<(usize, f64, u64)> = config
        .ratios
        .iter()
        .enumerate()
        .flat_map(|(i, &r)| (0..config.mc_runs as u64).map(move |s| (i, r, s)))
        .collect();
    let work = || -> Result<Vec<(usize, CellOutput)>, RunError> {
        cells
            .par_iter()
            .map(|&(i, r, s)| run_cell(&setup, r, s).map(|c| (i, c)))
            .collect()
    };
    let mut outputs = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| RunError::Pool(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    outputs.sort_by_key(|(i, c)| (*i, c.seed));

    let mut wall_clock = BTreeMap::new();
    let mut gaps: Vec<Vec<f64>> = vec![Vec::new(); config.ratios.len()];
    let mut paired = true;
    let mut rows = Vec::with_capacity(outputs.len() * 3);
    for (i, cell) in outputs {
        for (m, d) in Method::ALL.iter().zip(cell.elapsed) {
            *wall_clock.entry(m.label()).or_insert(0.0) += d.as_secs_f64();
        }
        paired &= cell.fingerprints.iter().all(|f| *f == cell.fingerprints[0]);
        if let Some(g) = cell.bcm_order_gap {
            gaps[i].push(g);
        }
        rows.extend(cell.records);
    }
    let bcm_order_gap = config
        .ratios
        .iter()
        .zip(&gaps)
        .filter(|(_, g)| !g.is_empty())
        .map(|(&r, g)| (r, g.iter().sum::<f64>() / g.len() as f64))
        .collect();
    Ok(ResultsTable {
        config: config.clone(),
        n_sources,
        rows,
        wall_clock,
        bcm_order_gap,
        paired_runs_verified: paired,
        version: env!("CARGO_PKG_VERSION"),
    })
}
