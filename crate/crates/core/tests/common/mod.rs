#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use uos_transfer::geometry::{Orthotope, StripSet};

/// Bounding box of `box ∩ strips` in two dimensions by enumerating every
/// intersection of two boundary lines and keeping the feasible ones.
pub fn vertex_bbox_2d(prior: &Orthotope, strips: &StripSet, tol: f64) -> Option<(DVector<f64>, DVector<f64>)> {
    let mut lines: Vec<([f64; 2], f64)> = Vec::new();
    for k in 0..2 {
        let mut e = [0.0; 2];
        e[k] = 1.0;
        lines.push((e, prior.lower()[k]));
        lines.push((e, prior.upper()[k]));
    }
    let c = strips.coefficients();
    for j in 0..strips.len() {
        let row = [c[(j, 0)], c[(j, 1)]];
        lines.push((row, strips.lower()[j]));
        lines.push((row, strips.upper()[j]));
    }
    let feasible = |p: [f64; 2]| {
        (0..2).all(|k| p[k] >= prior.lower()[k] - tol && p[k] <= prior.upper()[k] + tol)
            && (0..strips.len()).all(|j| {
                let v = c[(j, 0)] * p[0] + c[(j, 1)] * p[1];
                let scale = 1.0 + c[(j, 0)].abs() + c[(j, 1)].abs();
                v >= strips.lower()[j] - tol * scale && v <= strips.upper()[j] + tol * scale
            })
    };
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let mut any = false;
    for i in 0..lines.len() {
        for j in i + 1..lines.len() {
            let ([a, b], r) = lines[i];
            let ([c2, d], s) = lines[j];
            let det = a * d - b * c2;
            if det.abs() < 1e-12 {
                continue;
            }
            let p = [(r * d - b * s) / det, (a * s - r * c2) / det];
            if feasible(p) {
                any = true;
                for k in 0..2 {
                    lo[k] = lo[k].min(p[k]);
                    hi[k] = hi[k].max(p[k]);
                }
            }
        }
    }
    any.then(|| (DVector::from_row_slice(&lo), DVector::from_row_slice(&hi)))
}

pub fn arb_box(dim: usize) -> impl Strategy<Value = Orthotope> {
    prop::collection::vec((-5.0f64..5.0, 0.0f64..4.0), dim).prop_map(|v| {
        let lower: Vec<f64> = v.iter().map(|(l, _)| *l).collect();
        let upper: Vec<f64> = v.iter().map(|(l, w)| l + w).collect();
        Orthotope::from_slices(&lower, &upper).unwrap()
    })
}

/// A box together with strips that all pass through a point of the box.
pub fn arb_feasible_instance(dim: usize, max_strips: usize) -> impl Strategy<Value = (Orthotope, StripSet)> {
    (arb_box(dim), 1..=max_strips).prop_flat_map(move |(b, m)| {
        let point = prop::collection::vec(0.0f64..=1.0, dim);
        let rows = prop::collection::vec(-2.0f64..2.0, m * dim);
        let offsets = prop::collection::vec((-1.0f64..=1.0, 0.0f64..1.0), m);
        (Just(b), point, rows, offsets).prop_map(move |(b, t, rows, offsets)| {
            let p = DVector::from_iterator(
                dim,
                (0..dim).map(|k| b.lower()[k] + t[k] * (b.upper()[k] - b.lower()[k])),
            );
            let c = DMatrix::from_row_slice(m, dim, &rows);
            let cp = &c * &p;
            let lo = DVector::from_iterator(m, (0..m).map(|j| cp[j] - offsets[j].1 * (1.0 + offsets[j].0)));
            let hi = DVector::from_iterator(m, (0..m).map(|j| cp[j] + offsets[j].1 * (1.0 - offsets[j].0)));
            (b, StripSet::new(c, lo, hi).unwrap())
        })
    })
}
