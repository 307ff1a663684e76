//! Set operations on orthotopes (axis-aligned boxes) and on boxes cut by
//! strips `a <= C x <= b`.
//!
//! Every filter step in this crate reduces to one of these operations. An
//! empty result is reported as `None`; dimension mismatches are errors.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::lp::{self, LpStatus};

/// Relative slack allowed before two bounds are declared to have crossed.
pub const EMPTY_EPS: f64 = 1e-12;

/// Summed row violation (in scaled units) tolerated by the LP feasibility test.
const LP_FEAS_TOL: f64 = 1e-10;

/// Scaled LP coordinates this close to a prior face snap onto it.
const SNAP_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("orthotope must have at least one dimension")]
    ZeroDimension,
    #[error("lower bound {lower} exceeds upper bound {upper} in coordinate {index}")]
    InvertedBounds { index: usize, lower: f64, upper: f64 },
    #[error("non-finite bound in coordinate {index}")]
    NonFinite { index: usize },
    #[error("strip {index} has lower bound {lower} above upper bound {upper}")]
    InvertedStrip { index: usize, lower: f64, upper: f64 },
    #[error("intersection of an empty list")]
    EmptyList,
    #[error("linear program for coordinate {coordinate} failed: {detail}")]
    LpFailure { coordinate: usize, detail: String },
}

/// Returns true when `lower` exceeds `upper` by more than the emptiness slack.
pub fn crossed(lower: f64, upper: f64) -> bool {
    lower > upper + EMPTY_EPS * upper.abs().max(1.0)
}

/// An axis-aligned box `{x : lower <= x <= upper}`. Zero-width faces are legal.
#[derive(Debug, Clone, PartialEq)]
pub struct Orthotope {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl Orthotope {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self, GeometryError> {
        if lower.len() != upper.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(GeometryError::ZeroDimension);
        }
        for i in 0..lower.len() {
            if !lower[i].is_finite() || !upper[i].is_finite() {
                return Err(GeometryError::NonFinite { index: i });
            }
            if lower[i] > upper[i] {
                return Err(GeometryError::InvertedBounds {
                    index: i,
                    lower: lower[i],
                    upper: upper[i],
                });
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn from_slices(lower: &[f64], upper: &[f64]) -> Result<Self, GeometryError> {
        Self::new(
            DVector::from_column_slice(lower),
            DVector::from_column_slice(upper),
        )
    }

    /// Box `center ± halfwidth` in every coordinate.
    pub fn centered(center: &DVector<f64>, halfwidth: &DVector<f64>) -> Result<Self, GeometryError> {
        check_dim(center.len(), halfwidth.len())?;
        Self::new(center - halfwidth, center + halfwidth)
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self, GeometryError> {
        Self::new(
            DVector::from_element(dim, lo),
            DVector::from_element(dim, hi),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    /// Mean of the uniform density on the box.
    pub fn midpoint(&self) -> DVector<f64> {
        (&self.lower + &self.upper) * 0.5
    }

    pub fn widths(&self) -> DVector<f64> {
        &self.upper - &self.lower
    }

    pub fn volume(&self) -> f64 {
        volume(self)
    }

    /// Componentwise `self ⊆ other`, exact comparison.
    pub fn is_subset_of(&self, other: &Orthotope) -> bool {
        self.dim() == other.dim()
            && (0..self.dim())
                .all(|i| self.lower[i] >= other.lower[i] && self.upper[i] <= other.upper[i])
    }

    /// `self ⊆ other` allowing each face to stick out by `tol`.
    pub fn is_subset_of_within(&self, other: &Orthotope, tol: f64) -> bool {
        self.dim() == other.dim()
            && (0..self.dim()).all(|i| {
                self.lower[i] >= other.lower[i] - tol && self.upper[i] <= other.upper[i] + tol
            })
    }

    /// Builds an orthotope from bounds that may have crossed by less than the
    /// emptiness slack; such coordinates collapse to their midpoint.
    fn from_clamped(mut lower: DVector<f64>, mut upper: DVector<f64>) -> Option<Self> {
        for i in 0..lower.len() {
            if lower[i] > upper[i] {
                if crossed(lower[i], upper[i]) {
                    return None;
                }
                let m = 0.5 * (lower[i] + upper[i]);
                lower[i] = m;
                upper[i] = m;
            }
        }
        Some(Self { lower, upper })
    }
}

/// The strips `lower[j] <= C[j,:] x <= upper[j]`, one per row of `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct StripSet {
    coefficients: DMatrix<f64>,
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl StripSet {
    pub fn new(
        coefficients: DMatrix<f64>,
        lower: DVector<f64>,
        upper: DVector<f64>,
    ) -> Result<Self, GeometryError> {
        check_dim(coefficients.nrows(), lower.len())?;
        check_dim(coefficients.nrows(), upper.len())?;
        for j in 0..lower.len() {
            if lower[j].is_nan() || upper[j].is_nan() || lower[j] > upper[j] {
                return Err(GeometryError::InvertedStrip {
                    index: j,
                    lower: lower[j],
                    upper: upper[j],
                });
            }
        }
        Ok(Self {
            coefficients,
            lower,
            upper,
        })
    }

    /// Strips `y - halfwidth <= C x <= y + halfwidth` induced by one observation.
    pub fn from_observation(
        coefficients: &DMatrix<f64>,
        y: &DVector<f64>,
        halfwidth: &DVector<f64>,
    ) -> Result<Self, GeometryError> {
        check_dim(y.len(), halfwidth.len())?;
        Self::new(coefficients.clone(), y - halfwidth, y + halfwidth)
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.coefficients.ncols()
    }
}

fn check_dim(expected: usize, found: usize) -> Result<(), GeometryError> {
    if expected == found {
        Ok(())
    } else {
        Err(GeometryError::DimensionMismatch { expected, found })
    }
}

pub fn intersect(a: &Orthotope, b: &Orthotope) -> Result<Option<Orthotope>, GeometryError> {
    check_dim(a.dim(), b.dim())?;
    let lower = a.lower.zip_map(&b.lower, f64::max);
    let upper = a.upper.zip_map(&b.upper, f64::min);
    Ok(Orthotope::from_clamped(lower, upper))
}

/// Intersection of all boxes; the result does not depend on their order.
pub fn intersect_many<'a, I>(boxes: I) -> Result<Option<Orthotope>, GeometryError>
where
    I: IntoIterator<Item = &'a Orthotope>,
{
    let mut iter = boxes.into_iter();
    let first = iter.next().ok_or(GeometryError::EmptyList)?;
    let mut lower = first.lower.clone();
    let mut upper = first.upper.clone();
    for b in iter {
        check_dim(first.dim(), b.dim())?;
        lower.zip_apply(&b.lower, |l, r| *l = l.max(r));
        upper.zip_apply(&b.upper, |u, r| *u = u.min(r));
    }
    // Crossing is checked once on the final bounds so that the fold order
    // cannot change which near-degenerate coordinates collapse.
    Ok(Orthotope::from_clamped(lower, upper))
}

pub fn volume(o: &Orthotope) -> f64 {
    o.upper
        .iter()
        .zip(o.lower.iter())
        .map(|(u, l)| u - l)
        .product()
}

/// Closed-box membership.
pub fn contains(o: &Orthotope, x: &DVector<f64>) -> Result<bool, GeometryError> {
    check_dim(o.dim(), x.len())?;
    Ok((0..x.len()).all(|i| o.lower[i] <= x[i] && x[i] <= o.upper[i]))
}

/// Tightest axis-aligned box around `{prior} ∩ {strips}`, or `None` if that
/// polytope is empty.
///
/// Strips with a single non-zero coefficient are folded into the box directly.
/// Strips whose range over the box already lies inside their bounds are
/// dropped. Whatever remains is handed to a small LP: one phase-one solve,
/// then a minimization and a maximization per involved coordinate.
pub fn bounding_box(prior: &Orthotope, strips: &StripSet) -> Result<Option<Orthotope>, GeometryError> {
    let n = prior.dim();
    check_dim(n, strips.state_dim())?;
    let c = &strips.coefficients;
    let mut lower = prior.lower.clone();
    let mut upper = prior.upper.clone();
    let mut general = Vec::new();

    for j in 0..strips.len() {
        let (a, b) = (strips.lower[j], strips.upper[j]);
        let nonzero: Vec<usize> = (0..n).filter(|&k| c[(j, k)] != 0.0).collect();
        match nonzero.as_slice() {
            [] => {
                if crossed(a, 0.0) || crossed(0.0, b) {
                    return Ok(None);
                }
            }
            [k] => {
                let ck = c[(j, *k)];
                let (lo, hi) = if ck > 0.0 { (a / ck, b / ck) } else { (b / ck, a / ck) };
                lower[*k] = lower[*k].max(lo);
                upper[*k] = upper[*k].min(hi);
            }
            _ => general.push(j),
        }
    }
    let Some(mut boxed) = Orthotope::from_clamped(lower, upper) else {
        return Ok(None);
    };
    if general.is_empty() {
        return Ok(Some(boxed));
    }

    // Range of each general row over the current box.
    let mut active = Vec::new();
    for &j in &general {
        let (mut rmin, mut rmax) = (0.0, 0.0);
        for k in 0..n {
            let p = c[(j, k)] * boxed.lower[k];
            let q = c[(j, k)] * boxed.upper[k];
            rmin += p.min(q);
            rmax += p.max(q);
        }
        let (a, b) = (strips.lower[j], strips.upper[j]);
        if crossed(a, rmax) || crossed(rmin, b) {
            return Ok(None);
        }
        if rmin < a || rmax > b {
            active.push(j);
        }
    }
    if active.is_empty() {
        return Ok(Some(boxed));
    }

    // Free coordinates: positive width and touched by an active row.
    let free: Vec<usize> = (0..n)
        .filter(|&k| boxed.upper[k] > boxed.lower[k] && active.iter().any(|&j| c[(j, k)] != 0.0))
        .collect();
    let width: Vec<f64> = free.iter().map(|&k| boxed.upper[k] - boxed.lower[k]).collect();

    // Scaled variables s in [0, 1]: x_k = lower_k + width_k s_k.
    let nf = free.len();
    let mut g: Vec<Vec<f64>> = Vec::with_capacity(nf + 2 * active.len());
    let mut h: Vec<f64> = Vec::with_capacity(nf + 2 * active.len());
    for i in 0..nf {
        let mut row = vec![0.0; nf];
        row[i] = 1.0;
        g.push(row);
        h.push(1.0);
    }
    for &j in &active {
        let offset: f64 = (0..n).map(|k| c[(j, k)] * boxed.lower[k]).sum();
        let coeffs: Vec<f64> = free
            .iter()
            .zip(&width)
            .map(|(&k, w)| c[(j, k)] * w)
            .collect();
        let scale = coeffs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let (a, b) = (strips.lower[j] - offset, strips.upper[j] - offset);
        if scale == 0.0 {
            // Only fixed coordinates remain in this row.
            if crossed(a, 0.0) || crossed(0.0, b) {
                return Ok(None);
            }
            continue;
        }
        g.push(coeffs.iter().map(|v| v / scale).collect());
        h.push(b / scale);
        g.push(coeffs.iter().map(|v| -v / scale).collect());
        h.push(-a / scale);
    }

    let Some(tableau) = lp::phase_one(&g, &h, LP_FEAS_TOL) else {
        return Ok(None);
    };
    let mut objective = vec![0.0; nf];
    for (i, &k) in free.iter().enumerate() {
        objective.iter_mut().for_each(|v| *v = 0.0);
        objective[i] = 1.0;
        let s_max = solve_extreme(&tableau, &objective, k)?;
        objective[i] = -1.0;
        let s_min = -solve_extreme(&tableau, &objective, k)?;
        let s_max = snap(s_max);
        let s_min = snap(s_min).min(s_max);
        let lo = boxed.lower[k];
        let w = width[i];
        boxed.upper[k] = if s_max == 1.0 { boxed.upper[k] } else { lo + w * s_max };
        boxed.lower[k] = if s_min == 0.0 { lo } else { lo + w * s_min };
    }
    Ok(Some(boxed))
}

fn solve_extreme(
    tableau: &lp::FeasibleTableau,
    objective: &[f64],
    coordinate: usize,
) -> Result<f64, GeometryError> {
    match tableau.maximize(objective) {
        LpStatus::Optimal { value, .. } if value.is_finite() => Ok(value),
        LpStatus::Optimal { value, .. } => Err(GeometryError::LpFailure {
            coordinate,
            detail: format!("non-finite optimum {value}"),
        }),
        LpStatus::Unbounded => Err(GeometryError::LpFailure {
            coordinate,
            detail: "reported unbounded over a bounded box".into(),
        }),
    }
}

fn snap(s: f64) -> f64 {
    if s <= SNAP_TOL {
        0.0
    } else if s >= 1.0 - SNAP_TOL {
        1.0
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;

    fn bx(lo: &[f64], hi: &[f64]) -> Orthotope {
        Orthotope::from_slices(lo, hi).unwrap()
    }

    fn unit2() -> Orthotope {
        Orthotope::cube(2, 0.0, 1.0).unwrap()
    }

    fn strips(c: DMatrix<f64>, a: &[f64], b: &[f64]) -> StripSet {
        StripSet::new(c, DVector::from_column_slice(a), DVector::from_column_slice(b)).unwrap()
    }

    #[test]
    fn constructor_rejects_bad_bounds() {
        assert!(matches!(
            Orthotope::from_slices(&[1.0], &[0.0]),
            Err(GeometryError::InvertedBounds { index: 0, .. })
        ));
        assert_eq!(Orthotope::from_slices(&[], &[]), Err(GeometryError::ZeroDimension));
        assert!(Orthotope::from_slices(&[0.0], &[f64::NAN]).is_err());
        assert!(Orthotope::from_slices(&[0.0, 1.0], &[1.0]).is_err());
        assert!(Orthotope::from_slices(&[2.0], &[2.0]).is_ok());
    }

    #[test]
    fn intersect_examples() {
        assert_eq!(intersect(&unit2(), &unit2()).unwrap(), Some(unit2()));
        let far = Orthotope::cube(2, 2.0, 3.0).unwrap();
        assert_eq!(intersect(&unit2(), &far).unwrap(), None);
        let a = bx(&[0.0, 0.0], &[2.0, 2.0]);
        let b = bx(&[1.0, -1.0], &[3.0, 1.0]);
        assert_eq!(intersect(&a, &b).unwrap(), Some(bx(&[1.0, 0.0], &[2.0, 1.0])));
    }

    #[test]
    fn intersect_dimension_mismatch() {
        let a = Orthotope::cube(3, 0.0, 1.0).unwrap();
        assert!(matches!(
            intersect(&a, &unit2()),
            Err(GeometryError::DimensionMismatch { expected: 3, found: 2 })
        ));
    }

    #[test]
    fn touching_boxes_give_zero_width_face() {
        let a = bx(&[0.0], &[1.0]);
        let b = bx(&[1.0], &[2.0]);
        let i = intersect(&a, &b).unwrap().unwrap();
        assert_eq!(i.volume(), 0.0);
        assert_eq!(i.lower()[0], 1.0);
    }

    #[test]
    fn crossing_within_slack_collapses() {
        let a = bx(&[0.0], &[1.0]);
        let b = bx(&[1.0 + 1e-14], &[2.0]);
        let i = intersect(&a, &b).unwrap().unwrap();
        assert_eq!(i.lower()[0], i.upper()[0]);
        let c = bx(&[1.0 + 1e-9], &[2.0]);
        assert_eq!(intersect(&a, &c).unwrap(), None);
    }

    #[test]
    fn intersect_many_examples() {
        let x = bx(&[0.0, -1.0], &[1.0, 2.0]);
        assert_eq!(intersect_many([&x]).unwrap(), Some(x.clone()));
        assert_eq!(intersect_many([&x, &x, &x]).unwrap(), Some(x.clone()));
        let boxes = [bx(&[0.0], &[4.0]), bx(&[1.0], &[5.0]), bx(&[2.0], &[3.0])];
        assert_eq!(intersect_many(&boxes).unwrap(), Some(bx(&[2.0], &[3.0])));
        assert_eq!(
            intersect_many(std::iter::empty::<&Orthotope>()),
            Err(GeometryError::EmptyList)
        );
    }

    #[test]
    fn volume_examples() {
        assert_eq!(volume(&unit2()), 1.0);
        assert_eq!(volume(&bx(&[0.0, 0.0], &[2.0, 3.0])), 6.0);
        assert_eq!(volume(&bx(&[1.0, 0.0], &[1.0, 3.0])), 0.0);
    }

    #[test]
    fn contains_examples() {
        let p = |a: f64, b: f64| DVector::from_vec(vec![a, b]);
        assert!(contains(&unit2(), &p(0.5, 0.5)).unwrap());
        assert!(contains(&unit2(), &p(1.0, 1.0)).unwrap());
        assert!(!contains(&unit2(), &p(1.0001, 0.5)).unwrap());
        assert!(contains(&unit2(), &DVector::from_vec(vec![0.5])).is_err());
    }

    #[test]
    fn bounding_box_inactive_strips() {
        let s = strips(DMatrix::identity(2, 2), &[-10.0, -10.0], &[10.0, 10.0]);
        assert_eq!(bounding_box(&unit2(), &s).unwrap(), Some(unit2()));
    }

    #[test]
    fn bounding_box_diagonal_strip() {
        let s = strips(dmatrix![1.0, 1.0], &[0.4], &[0.6]);
        let b = bounding_box(&unit2(), &s).unwrap().unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(b.lower()[i], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(b.upper()[i], 0.6, epsilon = 1e-12);
        }
    }

    #[test]
    fn bounding_box_disjoint_strip() {
        let s = strips(dmatrix![1.0, 0.0], &[2.0], &[3.0]);
        assert_eq!(bounding_box(&unit2(), &s).unwrap(), None);
    }

    #[test]
    fn bounding_box_negative_axis_coefficient() {
        // -2 x1 in [-1, -0.5]  =>  x1 in [0.25, 0.5]
        let s = strips(dmatrix![0.0, -2.0], &[-1.0], &[-0.5]);
        let b = bounding_box(&unit2(), &s).unwrap().unwrap();
        assert_eq!(b, bx(&[0.0, 0.25], &[1.0, 0.5]));
    }

    #[test]
    fn bounding_box_two_general_strips() {
        // x + y in [0.9, 1.1], x - y in [-0.1, 0.1] on [0,1]^2:
        // a small diamond around (0.5, 0.5) with x, y in [0.4, 0.6].
        let s = strips(dmatrix![1.0, 1.0; 1.0, -1.0], &[0.9, -0.1], &[1.1, 0.1]);
        let b = bounding_box(&unit2(), &s).unwrap().unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(b.lower()[i], 0.4, epsilon = 1e-12);
            assert_abs_diff_eq!(b.upper()[i], 0.6, epsilon = 1e-12);
        }
    }

    #[test]
    fn bounding_box_infeasible_general_strips() {
        // x + y in [0, 0.5] and x + y in [1.5, 2]: each feasible alone.
        let s = strips(dmatrix![1.0, 1.0; 1.0, 1.0], &[0.0, 1.5], &[0.5, 2.0]);
        assert_eq!(bounding_box(&unit2(), &s).unwrap(), None);
    }

    #[test]
    fn bounding_box_with_fixed_coordinate() {
        // x2 fixed at 0.5; x1 + x2 in [0.6, 0.7] gives x1 in [0.1, 0.2].
        let prior = bx(&[0.0, 0.5], &[1.0, 0.5]);
        let s = strips(dmatrix![1.0, 1.0], &[0.6], &[0.7]);
        let b = bounding_box(&prior, &s).unwrap().unwrap();
        assert_abs_diff_eq!(b.lower()[0], 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(b.upper()[0], 0.2, epsilon = 1e-12);
        assert_eq!(b.lower()[1], 0.5);
    }

    #[test]
    fn bounding_box_zero_width_strip() {
        let s = strips(dmatrix![1.0, 1.0], &[1.0], &[1.0]);
        let b = bounding_box(&unit2(), &s).unwrap().unwrap();
        assert_eq!(b, unit2());
        let s = strips(dmatrix![1.0, 1.0], &[2.0], &[2.0]);
        let b = bounding_box(&unit2(), &s).unwrap().unwrap();
        assert_abs_diff_eq!(b.lower()[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn bounding_box_dimension_mismatch() {
        let s = strips(dmatrix![1.0, 1.0, 1.0], &[0.0], &[1.0]);
        assert!(bounding_box(&unit2(), &s).is_err());
    }

    #[test]
    fn strip_set_validation() {
        assert!(StripSet::new(dmatrix![1.0, 0.0], DVector::from_vec(vec![1.0]), DVector::from_vec(vec![0.0])).is_err());
        assert!(StripSet::new(dmatrix![1.0, 0.0], DVector::from_vec(vec![1.0, 2.0]), DVector::from_vec(vec![3.0])).is_err());
    }
}
