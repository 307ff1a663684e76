//! Synthetic data: benchmark systems, trajectory simulation under a common
//! state (V-shaped) or coupled source/target states (U-shaped), and the
//! transition-matrix perturbations used to build mismatched analysis models.
//!
//! # Random streams
//!
//! Every run is keyed by `(master_seed, run_seed)`. The key feeds a ChaCha8
//! generator and each noise role gets its own stream id
//! `(role << 32) | channel`, so draws do not depend on how many other
//! channels exist, how runs are scheduled, or on half-width values. Noise is
//! drawn as a unit uniform on `[-1, 1]` and scaled by the half-width.

use std::io;

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::filter::{ChannelModel, StateModel};

/// Noise roles, used as the high word of the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamRole {
    /// State noise of the common (V) or source (U) state path.
    StateNoise = 1,
    /// Target-minus-source offset of the U-shaped graph.
    Coupling = 2,
    /// Observation noise; the low word is the channel index.
    Observation = 3,
    /// Random input generator.
    Input = 4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RunKey {
    pub master_seed: u64,
    pub run_seed: u64,
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RunKey {
    pub fn new(master_seed: u64, run_seed: u64) -> Self {
        Self {
            master_seed,
            run_seed,
        }
    }

    fn key_bytes(&self) -> [u8; 32] {
        let mut state = self.master_seed;
        let mut out = [0u8; 32];
        for chunk in out.chunks_exact_mut(8) {
            state ^= splitmix(&mut self.run_seed.clone());
            let word = splitmix(&mut state);
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        out
    }

    pub fn stream(&self, role: StreamRole, channel: u32) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key_bytes());
        rng.set_stream(((role as u64) << 32) | u64::from(channel));
        rng
    }
}

fn draw_box(rng: &mut ChaCha8Rng, halfwidth: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        halfwidth.len(),
        halfwidth.iter().map(|h| h * rng.random_range(-1.0..=1.0)),
    )
}

/// Input sequence generator.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum InputGen {
    #[default]
    Zero,
    /// Constant `amplitude` in every input coordinate from t = 1.
    Step(f64),
    /// Independent uniform draws on `[lo, hi]`. The sequence depends only on
    /// `seed`, so every Monte Carlo run sees the same excitation.
    UniformRandom { lo: f64, hi: f64, seed: u64 },
}

impl InputGen {
    pub fn generate(&self, horizon: usize, input_dim: usize) -> Vec<DVector<f64>> {
        match *self {
            InputGen::Zero => vec![DVector::zeros(input_dim); horizon],
            InputGen::Step(a) => vec![DVector::from_element(input_dim, a); horizon],
            InputGen::UniformRandom { lo, hi, seed } => {
                let mut rng = RunKey::new(seed, 0).stream(StreamRole::Input, 0);
                (0..horizon)
                    .map(|_| {
                        DVector::from_iterator(
                            input_dim,
                            (0..input_dim).map(|_| rng.random_range(lo..=hi)),
                        )
                    })
                    .collect()
            }
        }
    }
}

/// Simulated states, inputs and per-channel observations over `1..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `states[t - 1]` is the true (target) state at step `t`.
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    /// `observations[channel][t - 1]`.
    pub observations: Vec<Vec<DVector<f64>>>,
    /// Source state path of the U-shaped graph.
    pub source_states: Option<Vec<DVector<f64>>>,
    pub seed: u64,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.states.len()
    }

    /// Stable 64-bit fingerprint (FNV-1a over the raw bits of every value).
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |v: f64| {
            for b in v.to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        let seqs = self
            .states
            .iter()
            .chain(&self.inputs)
            .chain(self.observations.iter().flatten())
            .chain(self.source_states.iter().flatten());
        for v in seqs {
            v.iter().copied().for_each(&mut feed);
        }
        feed(f64::from_bits(self.seed));
        h
    }

    /// CSV with columns `t, x_1.., u_1.., y<c>_<j>..` (channels 1-based).
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), SynthesisError> {
        let mut w = csv::Writer::from_writer(writer);
        let nx = self.states.first().map_or(0, |v| v.len());
        let nu = self.inputs.first().map_or(0, |v| v.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=nx).map(|i| format!("x_{i}")));
        header.extend((1..=nu).map(|i| format!("u_{i}")));
        for (c, obs) in self.observations.iter().enumerate() {
            let ny = obs.first().map_or(0, |v| v.len());
            header.extend((1..=ny).map(|j| format!("y{}_{j}", c + 1)));
        }
        w.write_record(&header)?;
        for t in 0..self.horizon() {
            let mut row = vec![(t + 1).to_string()];
            row.extend(self.states[t].iter().map(f64::to_string));
            row.extend(self.inputs[t].iter().map(f64::to_string));
            for obs in &self.observations {
                row.extend(obs[t].iter().map(f64::to_string));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the layout written by [`write_csv`](Self::write_csv). Source
    /// states are not part of the CSV and come back as `None`.
    pub fn read_csv<R: io::Read>(reader: R, seed: u64) -> Result<Self, SynthesisError> {
        let mut r = csv::Reader::from_reader(reader);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header.first().map(String::as_str) != Some("t") {
            return Err(SynthesisError::Csv("first column must be t".into()));
        }
        let nx = header.iter().filter(|h| h.starts_with("x_")).count();
        let nu = header.iter().filter(|h| h.starts_with("u_")).count();
        // Channel index of every y column, in order.
        let mut channel_of = Vec::new();
        for h in &header[1 + nx + nu..] {
            let c: usize = h
                .strip_prefix('y')
                .and_then(|s| s.split('_').next())
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| SynthesisError::Csv(format!("unexpected column {h:?}")))?;
            channel_of.push(c);
        }
        let n_channels = channel_of.iter().copied().max().unwrap_or(0);
        let mut states = Vec::new();
        let mut inputs = Vec::new();
        let mut observations = vec![Vec::new(); n_channels];
        for rec in r.records() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .skip(1)
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| SynthesisError::Csv(e.to_string()))?;
            if vals.len() != header.len() - 1 {
                return Err(SynthesisError::Csv("row length differs from header".into()));
            }
            states.push(DVector::from_column_slice(&vals[..nx]));
            inputs.push(DVector::from_column_slice(&vals[nx..nx + nu]));
            let mut per_channel = vec![Vec::new(); n_channels];
            for (v, &c) in vals[nx + nu..].iter().zip(&channel_of) {
                per_channel[c - 1].push(*v);
            }
            for (dst, v) in observations.iter_mut().zip(per_channel) {
                dst.push(DVector::from_vec(v));
            }
        }
        Ok(Self {
            states,
            inputs,
            observations,
            source_states: None,
            seed,
        })
    }
}

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("horizon must be at least 1")]
    EmptyHorizon,
    #[error("coupling factor alpha must be finite and non-negative, got {0}")]
    Alpha(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("trajectory csv: {0}")]
    Csv(String),
    #[error(transparent)]
    CsvLib(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn check_sim(
    model: &StateModel,
    channels: &[ChannelModel],
    horizon: usize,
    x1: &DVector<f64>,
) -> Result<(), SynthesisError> {
    if horizon == 0 {
        return Err(SynthesisError::EmptyHorizon);
    }
    let n = model.state_dim();
    if x1.len() != n {
        return Err(SynthesisError::Dimension(format!(
            "initial state has length {}, expected {n}",
            x1.len()
        )));
    }
    if let Some(c) = channels.iter().find(|c| c.state_dim() != n) {
        return Err(SynthesisError::Dimension(format!(
            "channel has {} state columns, expected {n}",
            c.state_dim()
        )));
    }
    Ok(())
}

fn state_path(
    model: &StateModel,
    x1: &DVector<f64>,
    inputs: &[DVector<f64>],
    key: &RunKey,
) -> Vec<DVector<f64>> {
    let mut rng = key.stream(StreamRole::StateNoise, 0);
    let mut states = Vec::with_capacity(inputs.len());
    states.push(x1.clone());
    for t in 1..inputs.len() {
        let w = draw_box(&mut rng, model.noise());
        let next = model.a() * &states[t - 1] + model.b() * &inputs[t - 1] + w;
        states.push(next);
    }
    states
}

fn observe(
    channel: &ChannelModel,
    index: usize,
    states: &[DVector<f64>],
    key: &RunKey,
) -> Vec<DVector<f64>> {
    let mut rng = key.stream(StreamRole::Observation, index as u32);
    states
        .iter()
        .map(|x| channel.c() * x + draw_box(&mut rng, channel.noise()))
        .collect()
}

/// One common state path observed through independent channels.
pub fn simulate_v(
    model: &StateModel,
    channels: &[ChannelModel],
    horizon: usize,
    x1: &DVector<f64>,
    input_gen: &InputGen,
    key: RunKey,
) -> Result<Trajectory, SynthesisError> {
    check_sim(model, channels, horizon, x1)?;
    let inputs = input_gen.generate(horizon, model.input_dim());
    let states = state_path(model, x1, &inputs, &key);
    let observations = channels
        .iter()
        .enumerate()
        .map(|(i, c)| observe(c, i, &states, &key))
        .collect();
    Ok(Trajectory {
        states,
        inputs,
        observations,
        source_states: None,
        seed: key.run_seed,
    })
}

/// Source path from the state model; target path is the source path plus an
/// independent offset uniform on `±alpha·w̄`. Channel 0 observes the target
/// state, every other channel observes the source state.
pub fn simulate_u(
    model: &StateModel,
    alpha: f64,
    channels: &[ChannelModel],
    horizon: usize,
    x1: &DVector<f64>,
    input_gen: &InputGen,
    key: RunKey,
) -> Result<Trajectory, SynthesisError> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(SynthesisError::Alpha(alpha));
    }
    check_sim(model, channels, horizon, x1)?;
    let inputs = input_gen.generate(horizon, model.input_dim());
    let source = state_path(model, x1, &inputs, &key);
    let spread = model.noise() * alpha;
    let mut rng = key.stream(StreamRole::Coupling, 0);
    let target: Vec<DVector<f64>> = source
        .iter()
        .map(|xs| xs + draw_box(&mut rng, &spread))
        .collect();
    let observations = channels
        .iter()
        .enumerate()
        .map(|(i, c)| observe(c, i, if i == 0 { &target } else { &source }, &key))
        .collect();
    Ok(Trajectory {
        states: target,
        inputs,
        observations,
        source_states: Some(source),
        seed: key.run_seed,
    })
}

/// Transition, input and observation matrices of a benchmark system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl SystemMatrices {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            a: &self.a * factor,
            ..self.clone()
        }
    }
}

/// Second-order system with a complex-conjugate pole pair.
pub fn system2() -> SystemMatrices {
    SystemMatrices {
        a: DMatrix::from_row_slice(2, 2, &[0.8144, -0.0905, 0.0905, 0.9953]),
        b: DMatrix::from_row_slice(2, 1, &[0.0905, 0.0047]),
        c: DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
    }
}

/// Third-order system with three distinct real poles.
pub fn system3() -> SystemMatrices {
    SystemMatrices {
        a: DMatrix::from_row_slice(3, 3, &[0.4, -0.3, 0.1, -0.4, 0.4, 0.0, 0.3, 0.2, 0.1]),
        b: DMatrix::from_row_slice(3, 1, &[0.1, 0.6, 0.3]),
        c: DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.5, 0.0, 1.0, 0.5]),
    }
}

pub fn builtin_systems() -> (SystemMatrices, SystemMatrices) {
    (system2(), system3())
}

/// How the target's analysis transition matrix departs from the synthetic one.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum MismatchSpec {
    #[default]
    None,
    /// Rotate a complex-conjugate eigenvalue pair by `±phi` radians.
    Rotation(f64),
    /// Scale the whole matrix by `sigma`.
    Dilation(f64),
    /// Scale the eigenvalue at `index` (0-based, eigenvalues ordered by
    /// decreasing modulus, then decreasing real part) by `factor`.
    RadialShift { index: usize, factor: f64 },
    /// State-noise coupling of the U-shaped graph; the matrix is unchanged.
    StateNoise(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MismatchError {
    #[error("transition matrix is not invertible (det = {0})")]
    Singular(f64),
    #[error("rotation needs a complex-conjugate eigenvalue pair, spectrum is real")]
    RealSpectrum,
    #[error("{0}")]
    Unsupported(String),
    #[error("mismatch parameter must be finite and positive, got {0}")]
    Parameter(f64),
    #[error("eigenvalue index {index} out of range for dimension {dim}")]
    Index { index: usize, dim: usize },
    #[error("reconstruction left an imaginary residue of {0}")]
    Residue(f64),
}

/// Builds the analysis transition matrix from the synthetic one.
pub fn apply_mismatch(a: &DMatrix<f64>, spec: &MismatchSpec) -> Result<DMatrix<f64>, MismatchError> {
    match *spec {
        MismatchSpec::None | MismatchSpec::StateNoise(_) => Ok(a.clone()),
        MismatchSpec::Dilation(sigma) => {
            positive(sigma)?;
            Ok(a * sigma)
        }
        MismatchSpec::Rotation(phi) => {
            if !phi.is_finite() {
                return Err(MismatchError::Parameter(phi));
            }
            invertible(a)?;
            rotate_pair(a, phi)
        }
        MismatchSpec::RadialShift { index, factor } => {
            positive(factor)?;
            invertible(a)?;
            radial_shift(a, index, factor)
        }
    }
}

fn positive(v: f64) -> Result<(), MismatchError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(MismatchError::Parameter(v))
    }
}

fn invertible(a: &DMatrix<f64>) -> Result<(), MismatchError> {
    if !a.is_square() {
        return Err(MismatchError::Unsupported("transition matrix must be square".into()));
    }
    let det = a.determinant();
    let scale = a.norm().powi(a.nrows() as i32).max(f64::MIN_POSITIVE);
    if det.abs() <= 1e-12 * scale {
        Err(MismatchError::Singular(det))
    } else {
        Ok(())
    }
}

/// Closed form for a real 2x2 matrix with eigenvalues `m ± i d`:
/// `A = m I + d J` with `J = (A - m I) / d` similar to a quarter turn, so
/// replacing `(m, d)` by the rotated pair gives `m' I + (d'/d)(A - m I)`.
fn rotate_pair(a: &DMatrix<f64>, phi: f64) -> Result<DMatrix<f64>, MismatchError> {
    if a.nrows() != 2 {
        return Err(MismatchError::Unsupported(format!(
            "eigenvalue rotation is implemented for 2x2 matrices, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let m = 0.5 * (a[(0, 0)] + a[(1, 1)]);
    let disc = a.determinant() - m * m;
    if disc <= 0.0 {
        return Err(MismatchError::RealSpectrum);
    }
    let d = disc.sqrt();
    let (s, c) = phi.sin_cos();
    let m_rot = m * c - d * s;
    let d_rot = m * s + d * c;
    let identity = DMatrix::<f64>::identity(2, 2);
    Ok(&identity * m_rot + (a - &identity * m) * (d_rot / d))
}

fn sorted_spectrum(a: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let mut eig: Vec<Complex<f64>> = a.complex_eigenvalues().iter().copied().collect();
    eig.sort_by(|x, y| {
        y.norm()
            .partial_cmp(&x.norm())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(y.re.partial_cmp(&x.re).unwrap_or(std::cmp::Ordering::Equal))
    });
    eig
}

/// Null vector of a (numerically) singular square matrix.
fn null_vector(m: &DMatrix<f64>) -> DVector<f64> {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    v_t.row(k).transpose()
}

fn radial_shift(a: &DMatrix<f64>, index: usize, factor: f64) -> Result<DMatrix<f64>, MismatchError> {
    let n = a.nrows();
    if index >= n {
        return Err(MismatchError::Index { index, dim: n });
    }
    let spectrum = sorted_spectrum(a);
    let lambda = spectrum[index];
    let tol = 1e-10 * lambda.norm().max(1.0);
    if lambda.im.abs() > tol {
        if n == 2 {
            // Scaling both members of the pair scales the whole spectrum.
            return Ok(a * factor);
        }
        return Err(MismatchError::Unsupported(
            "radial shift of a complex pair is implemented for 2x2 matrices only".into(),
        ));
    }
    let lambda = lambda.re;
    if spectrum
        .iter()
        .enumerate()
        .any(|(i, e)| i != index && (e.re - lambda).abs() <= tol && e.im.abs() <= tol)
    {
        return Err(MismatchError::Unsupported(
            "radial shift needs a simple eigenvalue".into(),
        ));
    }
    let shifted = a - DMatrix::<f64>::identity(n, n) * lambda;
    let right = null_vector(&shifted);
    let left = null_vector(&shifted.transpose());
    let pairing = left.dot(&right);
    if pairing.abs() <= 1e-12 {
        return Err(MismatchError::Unsupported("defective eigenvalue".into()));
    }
    // A = Σ λ_k v_k w_k' / (w_k' v_k); only the selected term changes.
    Ok(a + (&right * left.transpose()) * ((factor - 1.0) * lambda / pairing))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;

    /// Eigenvalues of a real 2x2 matrix by the quadratic formula.
    fn eig2(a: &DMatrix<f64>) -> (Complex<f64>, Complex<f64>) {
        let tr = a[(0, 0)] + a[(1, 1)];
        let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
        let disc = Complex::new(tr * tr / 4.0 - det, 0.0).sqrt();
        (tr / 2.0 + disc, tr / 2.0 - disc)
    }

    fn state(sys: &SystemMatrices, rho: f64) -> StateModel {
        StateModel::new(
            sys.a.clone(),
            sys.b.clone(),
            DVector::from_element(sys.state_dim(), rho),
        )
        .unwrap()
    }

    #[test]
    fn builtin_matrices() {
        let (s2, s3) = builtin_systems();
        assert_eq!(s2.a[(0, 0)], 0.8144);
        assert_eq!(s2.a[(0, 1)], -0.0905);
        assert_eq!(s2.c, DMatrix::from_row_slice(1, 2, &[0.0, 1.0]));
        assert_eq!((s3.a.nrows(), s3.b.ncols(), s3.c.nrows()), (3, 1, 2));
        assert_eq!(s3.c.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.5]);
    }

    #[test]
    fn system2_spectrum_is_a_conjugate_pair() {
        let (l1, l2) = eig2(&system2().a);
        assert_abs_diff_eq!(l1.re, 0.90485, epsilon = 1e-12);
        assert_abs_diff_eq!(l1.im.abs(), 0.003008, epsilon = 1e-6);
        assert_abs_diff_eq!(l1.im, -l2.im, epsilon = 1e-15);
    }

    #[test]
    fn zero_rotation_is_identity() {
        let a = system2().a;
        let r = apply_mismatch(&a, &MismatchSpec::Rotation(0.0)).unwrap();
        assert!((r - &a).abs().max() < 1e-12);
    }

    #[test]
    fn rotation_preserves_radii_and_turns_angle() {
        let a = system2().a;
        let r = apply_mismatch(&a, &MismatchSpec::Rotation(0.067)).unwrap();
        let (l, _) = eig2(&a);
        let (m, _) = eig2(&r);
        assert_abs_diff_eq!(l.norm(), m.norm(), epsilon = 1e-9);
        assert_abs_diff_eq!(m.arg().abs() - l.arg().abs(), 0.067, epsilon = 1e-9);
    }

    #[test]
    fn rotation_of_real_spectrum_fails() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.3]);
        assert_eq!(apply_mismatch(&a, &MismatchSpec::Rotation(0.1)), Err(MismatchError::RealSpectrum));
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            apply_mismatch(&singular, &MismatchSpec::Rotation(0.1)),
            Err(MismatchError::Singular(_))
        ));
        assert!(apply_mismatch(&system3().a, &MismatchSpec::Rotation(0.1)).is_err());
    }

    #[test]
    fn dilation_scales_spectrum() {
        let a = system3().a;
        let d = apply_mismatch(&a, &MismatchSpec::Dilation(1.4)).unwrap();
        let before = sorted_spectrum(&a);
        let after = sorted_spectrum(&d);
        for (x, y) in before.iter().zip(&after) {
            assert_abs_diff_eq!(y.norm(), 1.4 * x.norm(), epsilon = 1e-9);
        }
        assert!(apply_mismatch(&a, &MismatchSpec::Dilation(0.0)).is_err());
    }

    #[test]
    fn radial_shift_moves_one_real_eigenvalue() {
        let a = system3().a;
        let before = sorted_spectrum(&a);
        let shifted = apply_mismatch(&a, &MismatchSpec::RadialShift { index: 0, factor: 0.8 }).unwrap();
        // det(A' - mu I) vanishes at the moved eigenvalue and the untouched ones.
        let expected = [before[0].re * 0.8, before[1].re, before[2].re];
        for mu in expected {
            let det = (&shifted - DMatrix::<f64>::identity(3, 3) * mu).determinant();
            assert!(det.abs() < 1e-12, "det at {mu} = {det}");
        }
        let det = (&shifted - DMatrix::<f64>::identity(3, 3) * before[0].re).determinant();
        assert!(det.abs() > 1e-4);
    }

    #[test]
    fn radial_shift_complex_pair_in_2d() {
        let a = system2().a;
        let r = apply_mismatch(&a, &MismatchSpec::RadialShift { index: 0, factor: 1.1 }).unwrap();
        let (l, _) = eig2(&a);
        let (m, _) = eig2(&r);
        assert_abs_diff_eq!(m.norm(), 1.1 * l.norm(), epsilon = 1e-9);
        assert!(apply_mismatch(&a, &MismatchSpec::RadialShift { index: 2, factor: 1.1 }).is_err());
    }

    #[test]
    fn noiseless_static_trajectory() {
        let model = StateModel::new(DMatrix::identity(2, 2), DMatrix::zeros(2, 1), dvector![0.0, 0.0]).unwrap();
        let ch = ChannelModel::new(DMatrix::from_row_slice(1, 2, &[2.0, 3.0]), dvector![0.0]).unwrap();
        let x1 = dvector![1.0, 0.0];
        let traj = simulate_v(&model, &[ch], 10, &x1, &InputGen::Zero, RunKey::new(1, 2)).unwrap();
        assert!(traj.states.iter().all(|x| x == &x1));
        assert!(traj.observations[0].iter().all(|y| y == &dvector![2.0]));
    }

    #[test]
    fn simulation_is_deterministic() {
        let sys = system3();
        let model = state(&sys, 0.1);
        let ch = ChannelModel::new(sys.c.clone(), dvector![0.2, 0.2]).unwrap();
        let run = |seed| {
            simulate_v(&model, &[ch.clone(), ch.clone()], 30, &DVector::zeros(3), &InputGen::Step(1.0), RunKey::new(7, seed))
                .unwrap()
        };
        assert_eq!(run(3), run(3));
        assert_eq!(run(3).fingerprint(), run(3).fingerprint());
        assert_ne!(run(3).fingerprint(), run(4).fingerprint());
    }

    #[test]
    fn channel_draws_do_not_depend_on_other_channels() {
        let sys = system2();
        let model = state(&sys, 0.01);
        let ch = |r: f64| ChannelModel::new(sys.c.clone(), dvector![r]).unwrap();
        let key = RunKey::new(11, 5);
        let one = simulate_v(&model, &[ch(0.1)], 20, &DVector::zeros(2), &InputGen::Zero, key).unwrap();
        let two = simulate_v(&model, &[ch(0.1), ch(5.0)], 20, &DVector::zeros(2), &InputGen::Zero, key).unwrap();
        assert_eq!(one.states, two.states);
        assert_eq!(one.observations[0], two.observations[0]);
    }

    #[test]
    fn u_shape_with_zero_alpha_is_v_shape() {
        let sys = system2();
        let model = state(&sys, 0.01);
        let ch = ChannelModel::new(sys.c.clone(), dvector![0.1]).unwrap();
        let key = RunKey::new(3, 9);
        let u = simulate_u(&model, 0.0, &[ch.clone(), ch.clone()], 25, &DVector::zeros(2), &InputGen::Zero, key).unwrap();
        assert_eq!(Some(&u.states), u.source_states.as_ref());
        let v = simulate_v(&model, &[ch.clone(), ch], 25, &DVector::zeros(2), &InputGen::Zero, key).unwrap();
        assert_eq!(u.states, v.states);
        assert!(simulate_u(&model, -1.0, &[], 5, &DVector::zeros(2), &InputGen::Zero, key).is_err());
    }

    #[test]
    fn u_shape_offset_respects_support() {
        let sys = system3();
        let model = state(&sys, 1e-2);
        let ch = ChannelModel::new(sys.c.clone(), dvector![1e-3, 1e-3]).unwrap();
        let u = simulate_u(&model, 0.4, &[ch.clone(), ch], 400, &DVector::zeros(3), &InputGen::Zero, RunKey::new(1, 1)).unwrap();
        let src = u.source_states.as_ref().unwrap();
        let max = u
            .states
            .iter()
            .zip(src)
            .map(|(x, s)| (x - s).amax())
            .fold(0.0, f64::max);
        assert!(max <= 4e-3);
        assert!(max > 3e-3);
    }

    #[test]
    fn input_generators() {
        assert_eq!(InputGen::Zero.generate(3, 1), vec![dvector![0.0]; 3]);
        assert_eq!(InputGen::Step(2.5).generate(2, 2), vec![dvector![2.5, 2.5]; 2]);
        let g = InputGen::UniformRandom { lo: -1.0, hi: 3.0, seed: 4 };
        let a = g.generate(100, 1);
        assert_eq!(a, g.generate(100, 1));
        assert!(a.iter().all(|u| (-1.0..=3.0).contains(&u[0])));
    }

    #[test]
    fn csv_round_trip() {
        let sys = system3();
        let model = state(&sys, 0.1);
        let ch = ChannelModel::new(sys.c.clone(), dvector![0.2, 0.2]).unwrap();
        let traj = simulate_v(&model, &[ch.clone(), ch], 12, &DVector::zeros(3), &InputGen::Step(0.5), RunKey::new(2, 2)).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x_1,x_2,x_3,u_1,y1_1,y1_2,y2_1,y2_2\n"));
        let back = Trajectory::read_csv(buf.as_slice(), traj.seed).unwrap();
        assert_eq!(back, traj);
    }
}
