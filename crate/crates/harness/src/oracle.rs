//! Brute-force references for the orthotopic filter.
//!
//! The grid filter tracks the exact filtering support on a lattice for up to
//! two states. It is an inner approximation: a lattice point is kept only
//! when it satisfies the observation strip and is reachable, through the
//! dynamics and a state-noise value inside its box, from a point kept at the
//! previous step. Every kept point therefore belongs to the exact support.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;
use uos_transfer::filter::{run_isolated, ChannelModel, EmptyPolicy, FilterError, LsuModel, ModelError, StateModel};
use uos_transfer::geometry::{Orthotope, StripSet};
use uos_transfer::synthesis::{simulate_v, system2, InputGen, RunKey, SynthesisError, Trajectory};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("grid oracle supports at most 2 states, got {0}")]
    Dimension(usize),
    #[error("grid pitch must be positive, got {0}")]
    Pitch(f64),
    #[error("grid needs {needed} points at step {step}, limit is {limit}; try a pitch of at least {suggested:.3e}")]
    Memory {
        step: usize,
        needed: usize,
        limit: usize,
        suggested: f64,
    },
    #[error("vertex enumeration supports at most 3 states, got {0}")]
    VertexDimension(usize),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
}

pub const DEFAULT_MAX_POINTS: usize = 2_000_000;

/// Lattice points `k * pitch` kept at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSupport {
    pub pitch: f64,
    pub points: BTreeSet<Vec<i64>>,
}

impl GridSupport {
    pub fn coordinates(&self) -> impl Iterator<Item = DVector<f64>> + '_ {
        self.points
            .iter()
            .map(|k| DVector::from_iterator(k.len(), k.iter().map(|&i| i as f64 * self.pitch)))
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Smallest box around the kept points.
    pub fn hull(&self) -> Option<Orthotope> {
        let mut it = self.coordinates();
        let first = it.next()?;
        let (mut lo, mut hi) = (first.clone(), first);
        for p in it {
            lo = lo.inf(&p);
            hi = hi.sup(&p);
        }
        Orthotope::new(lo, hi).ok()
    }
}

fn in_strip(strips: &StripSet, z: &DVector<f64>) -> bool {
    let cz = strips.coefficients() * z;
    (0..strips.len()).all(|j| strips.lower()[j] <= cz[j] && cz[j] <= strips.upper()[j])
}

fn memory_error(step: usize, needed: usize, limit: usize, pitch: f64, dim: usize) -> OracleError {
    OracleError::Memory {
        step,
        needed,
        limit,
        suggested: pitch * (needed as f64 / limit as f64).powf(1.0 / dim as f64) * 1.01,
    }
}

/// Index ranges covering `[lo, hi]` per axis, padded by one index each side.
fn lattice_ranges(lo: &DVector<f64>, hi: &DVector<f64>, pitch: f64) -> Vec<(i64, i64)> {
    lo.iter()
        .zip(hi.iter())
        .map(|(l, h)| ((l / pitch).ceil() as i64 - 1, (h / pitch).floor() as i64 + 1))
        .collect()
}

fn for_each_lattice(ranges: &[(i64, i64)], mut f: impl FnMut(&[i64])) {
    if ranges.iter().any(|(a, b)| a > b) {
        return;
    }
    let mut k: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    loop {
        f(&k);
        let mut axis = 0;
        loop {
            if axis == k.len() {
                return;
            }
            if k[axis] < ranges[axis].1 {
                k[axis] += 1;
                break;
            }
            k[axis] = ranges[axis].0;
            axis += 1;
        }
    }
}

fn lattice_count(ranges: &[(i64, i64)]) -> usize {
    ranges
        .iter()
        .map(|(a, b)| (b - a + 1).max(0) as usize)
        .fold(1usize, |acc, n| acc.saturating_mul(n))
}

/// Lattice approximation of the exact filtering support at every step.
pub fn oracle_grid_filter(
    model: &LsuModel,
    prior: &Orthotope,
    observations: &[DVector<f64>],
    inputs: &[DVector<f64>],
    pitch: f64,
    max_points: usize,
) -> Result<Vec<GridSupport>, OracleError> {
    let n = model.state_dim();
    if n > 2 {
        return Err(OracleError::Dimension(n));
    }
    if !(pitch.is_finite() && pitch > 0.0) {
        return Err(OracleError::Pitch(pitch));
    }
    let state = model.state();
    let channel = model.channel();
    let point = |k: &[i64]| DVector::from_iterator(n, k.iter().map(|&i| i as f64 * pitch));
    let mut out: Vec<GridSupport> = Vec::with_capacity(observations.len());
    for (t, y) in observations.iter().enumerate() {
        let strips = StripSet::from_observation(channel.c(), y, channel.noise())
            .map_err(|e| OracleError::Filter(e.into()))?;
        let mut kept = BTreeSet::new();
        if t == 0 {
            let ranges = lattice_ranges(prior.lower(), prior.upper(), pitch);
            let needed = lattice_count(&ranges);
            if needed > max_points {
                return Err(memory_error(t + 1, needed, max_points, pitch, n));
            }
            for_each_lattice(&ranges, |k| {
                let z = point(k);
                if prior.lower().iter().zip(z.iter()).all(|(l, x)| l <= x)
                    && prior.upper().iter().zip(z.iter()).all(|(h, x)| x <= h)
                    && in_strip(&strips, &z)
                {
                    kept.insert(k.to_vec());
                }
            });
        } else {
            let prev = &out[t - 1];
            let drive = state.b() * &inputs[t - 1];
            let w = state.noise();
            for z_prev in prev.coordinates() {
                let q = state.a() * &z_prev + &drive;
                let ranges = lattice_ranges(&(&q - w), &(&q + w), pitch);
                for_each_lattice(&ranges, |k| {
                    if kept.contains(k) {
                        return;
                    }
                    let z = point(k);
                    let reachable = (0..n).all(|i| (z[i] - q[i]).abs() <= w[i]);
                    if reachable && in_strip(&strips, &z) {
                        kept.insert(k.to_vec());
                    }
                });
                if kept.len() > max_points {
                    return Err(memory_error(t + 1, kept.len(), max_points, pitch, n));
                }
            }
        }
        out.push(GridSupport { pitch, points: kept });
    }
    Ok(out)
}

/// Steps at which some oracle point falls outside the filter's posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub steps: usize,
    pub violations: Vec<usize>,
    pub min_points: usize,
    pub max_points: usize,
}

pub fn containment_check(
    model: &LsuModel,
    prior: &Orthotope,
    traj: &Trajectory,
    pitch: f64,
    max_points: usize,
) -> Result<OracleReport, OracleError> {
    let grid = oracle_grid_filter(model, prior, &traj.observations[0], &traj.inputs, pitch, max_points)?;
    let run = run_isolated(model, prior.clone(), &traj.observations[0], &traj.inputs, EmptyPolicy::DiscardRun)?;
    let mut violations = Vec::new();
    for (t, (g, post)) in grid.iter().zip(run.posteriors()).enumerate() {
        let ok = g.coordinates().all(|z| {
            (0..z.len()).all(|i| {
                let tol = 1e-9 * (1.0 + z[i].abs());
                post.lower()[i] - tol <= z[i] && z[i] <= post.upper()[i] + tol
            })
        });
        if !ok {
            violations.push(t + 1);
        }
    }
    Ok(OracleReport {
        steps: grid.len(),
        violations,
        min_points: grid.iter().map(GridSupport::len).min().unwrap_or(0),
        max_points: grid.iter().map(GridSupport::len).max().unwrap_or(0),
    })
}

/// A random scalar system with its trajectory, prior and a grid pitch fine
/// enough for the state noise.
#[derive(Debug, Clone)]
pub struct ScalarInstance {
    pub model: LsuModel,
    pub prior: Orthotope,
    pub trajectory: Trajectory,
    pub pitch: f64,
}

pub fn random_scalar_instance(seed: u64, steps: usize) -> Result<ScalarInstance, OracleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = rng.random_range(-1.1..1.1);
    let b = rng.random_range(-1.0..1.0);
    let c = rng.random_range(0.5..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let w = rng.random_range(0.02..0.3);
    let v = rng.random_range(0.05..0.5);
    let model = LsuModel::from_parts(
        DMatrix::from_element(1, 1, a),
        DMatrix::from_element(1, 1, b),
        DMatrix::from_element(1, 1, c),
        DVector::from_element(1, w),
        DVector::from_element(1, v),
    )?;
    let x1 = DVector::from_element(1, rng.random_range(-0.5..0.5));
    let trajectory = simulate_v(
        model.state(),
        std::slice::from_ref(model.channel()),
        steps,
        &x1,
        &InputGen::UniformRandom { lo: -1.0, hi: 1.0, seed },
        RunKey::new(seed, 0),
    )?;
    let prior = Orthotope::centered(&x1, &DVector::from_element(1, 1.0)).expect("finite prior");
    Ok(ScalarInstance {
        model,
        prior,
        trajectory,
        pitch: w / 25.0,
    })
}

/// Instance on the second-order benchmark system with noise levels coarse
/// enough for a two-dimensional grid.
pub fn system2_instance(seed: u64, steps: usize, rho: f64, r: f64) -> Result<ScalarInstance, OracleError> {
    let sys = system2();
    let model = LsuModel::new(
        StateModel::new(sys.a.clone(), sys.b.clone(), DVector::from_element(2, rho))?,
        ChannelModel::new(sys.c.clone(), DVector::from_element(1, r))?,
    )
    ?;
    let x1 = DVector::zeros(2);
    let trajectory = simulate_v(
        model.state(),
        std::slice::from_ref(model.channel()),
        steps,
        &x1,
        &InputGen::UniformRandom { lo: -1.0, hi: 1.0, seed },
        RunKey::new(seed, 0),
    )?;
    let prior = Orthotope::centered(&x1, &DVector::from_element(2, 0.2)).expect("finite prior");
    Ok(ScalarInstance {
        model,
        prior,
        trajectory,
        pitch: rho / 2.0,
    })
}

/// Lower and upper corner of a box.
pub type Bounds = (DVector<f64>, DVector<f64>);

/// Bounding box of `prior ∩ strips` for up to three states, from every
/// vertex of the polytope (intersections of `n` boundary hyperplanes that
/// satisfy all constraints within `tol`).
pub fn vertex_bounding_box(
    prior: &Orthotope,
    strips: &StripSet,
    tol: f64,
) -> Result<Option<Bounds>, OracleError> {
    let n = prior.dim();
    if n > 3 {
        return Err(OracleError::VertexDimension(n));
    }
    let mut planes: Vec<(DVector<f64>, f64)> = Vec::new();
    for k in 0..n {
        let e = DVector::from_fn(n, |i, _| if i == k { 1.0 } else { 0.0 });
        planes.push((e.clone(), prior.lower()[k]));
        planes.push((e, prior.upper()[k]));
    }
    let c = strips.coefficients();
    for j in 0..strips.len() {
        let row = c.row(j).transpose();
        planes.push((row.clone(), strips.lower()[j]));
        planes.push((row, strips.upper()[j]));
    }
    let feasible = |p: &DVector<f64>| {
        (0..n).all(|k| p[k] >= prior.lower()[k] - tol && p[k] <= prior.upper()[k] + tol) && {
            let cp = c * p;
            (0..strips.len()).all(|j| {
                let scale = 1.0 + c.row(j).abs().sum();
                cp[j] >= strips.lower()[j] - tol * scale && cp[j] <= strips.upper()[j] + tol * scale
            })
        }
    };
    let mut lo = DVector::from_element(n, f64::INFINITY);
    let mut hi = DVector::from_element(n, f64::NEG_INFINITY);
    let mut any = false;
    let mut idx: Vec<usize> = (0..n).collect();
    let m = planes.len();
    loop {
        let mat = DMatrix::from_fn(n, n, |r, col| planes[idx[r]].0[col]);
        let rhs = DVector::from_fn(n, |r, _| planes[idx[r]].1);
        let scale = mat.abs().max().max(1.0);
        if mat.determinant().abs() > 1e-12 * scale.powi(n as i32) {
            if let Some(p) = mat.lu().solve(&rhs) {
                if feasible(&p) {
                    any = true;
                    lo = lo.inf(&p);
                    hi = hi.sup(&p);
                }
            }
        }
        // Next n-combination of plane indices.
        let mut i = n;
        loop {
            if i == 0 {
                return Ok(any.then_some((lo, hi)));
            }
            i -= 1;
            if idx[i] < m - n + i {
                idx[i] += 1;
                for j in i + 1..n {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}
