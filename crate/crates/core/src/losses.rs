//! Masked squared-error losses over label sets.
//!
//! All losses are unreduced sums over cells; divide by
//! [`unmasked_cells`] for a per-cell mean.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{BinaryMask, LabelSet};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub map_term: f64,
    pub paf_term: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn new(map_term: f64, paf_term: f64) -> Self {
        Self {
            map_term,
            paf_term,
            total: map_term + paf_term,
        }
    }

    /// `(1 − λ)·a + λ·b`, term by term.
    fn mix(a: LossBreakdown, b: LossBreakdown, lambda: f64) -> Self {
        Self::new(
            (1.0 - lambda) * a.map_term + lambda * b.map_term,
            (1.0 - lambda) * a.paf_term + lambda * b.paf_term,
        )
    }
}

pub fn unmasked_cells(mask: &BinaryMask) -> usize {
    mask.values().iter().filter(|v| **v).count()
}

/// `Σ_j Σ_p W(p)(H_j(p) − T_j(p))² + Σ_c Σ_p W(p)‖L_c(p) − T_c(p)‖²`.
pub fn masked_l2(pred: &LabelSet, target: &LabelSet, mask: &BinaryMask) -> Result<LossBreakdown> {
    pred.ensure_compatible(target)?;
    pred.grid().ensure_same(mask.grid(), "mask grid")?;
    let w = mask.values();

    let mut map_term = 0.0;
    for (p, t) in pred.maps.iter().zip(&target.maps) {
        for ((&a, &b), &keep) in p.values().iter().zip(t.values()).zip(w) {
            if keep {
                let d = f64::from(a) - f64::from(b);
                map_term += d * d;
            }
        }
    }
    let mut paf_term = 0.0;
    for (p, t) in pred.pafs.iter().zip(&target.pafs) {
        for ((a, b), &keep) in p.values().iter().zip(t.values()).zip(w) {
            if keep {
                let dx = f64::from(a[0]) - f64::from(b[0]);
                let dy = f64::from(a[1]) - f64::from(b[1]);
                paf_term += dx * dx + dy * dy;
            }
        }
    }
    Ok(LossBreakdown::new(map_term, paf_term))
}

/// Loss against corrected labels, masked by their own mask.
pub fn loss_lc(pred: &LabelSet, corrected: &LabelSet) -> Result<LossBreakdown> {
    masked_l2(pred, corrected, &corrected.mask)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::domain(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    Ok(())
}

/// `(1 − λ)·E(pred, gt) + λ·E(pred, teacher)`; both terms use the gt mask.
pub fn loss_kd(pred: &LabelSet, gt: &LabelSet, teacher: &LabelSet, lambda: f64) -> Result<LossBreakdown> {
    check_lambda(lambda)?;
    let hard = masked_l2(pred, gt, &gt.mask)?;
    let soft = masked_l2(pred, teacher, &gt.mask)?;
    Ok(LossBreakdown::mix(hard, soft, lambda))
}

/// Distillation loss with the hard target replaced by corrected labels.
pub fn loss_kd_lc(pred: &LabelSet, corrected: &LabelSet, teacher: &LabelSet, lambda: f64) -> Result<LossBreakdown> {
    check_lambda(lambda)?;
    let hard = masked_l2(pred, corrected, &corrected.mask)?;
    let soft = masked_l2(pred, teacher, &corrected.mask)?;
    Ok(LossBreakdown::mix(hard, soft, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{GridSpec, ScalarField, VectorField};

    fn grid() -> GridSpec {
        GridSpec::new(3, 2, 8.0).unwrap()
    }

    fn constant(map: f32, paf: [f32; 2]) -> LabelSet {
        LabelSet::new(
            vec![ScalarField::new(grid(), vec![map; 6]).unwrap()],
            vec![VectorField::new(grid(), vec![paf; 6]).unwrap()],
            BinaryMask::ones(grid()),
        )
        .unwrap()
    }

    #[test]
    fn identical_inputs_cost_nothing() {
        let a = constant(0.4, [0.6, 0.0]);
        assert_eq!(masked_l2(&a, &a, &a.mask).unwrap().total, 0.0);
        assert_eq!(loss_lc(&a, &a).unwrap().total, 0.0);
    }

    #[test]
    fn fully_masked_is_zero() {
        let a = constant(0.4, [0.6, 0.0]);
        let b = constant(0.0, [0.0, 1.0]);
        let mask = BinaryMask::new(grid(), vec![false; 6]).unwrap();
        assert_eq!(masked_l2(&a, &b, &mask).unwrap(), LossBreakdown::default());
    }

    #[test]
    fn single_cell_difference() {
        let a = constant(0.0, [0.0, 0.0]);
        let mut b = a.clone();
        b.maps[0].set(1, 1, 0.5);
        let l = masked_l2(&a, &b, &a.mask).unwrap();
        assert_eq!(l, LossBreakdown::new(0.25, 0.0));
    }

    #[test]
    fn kd_endpoints_and_midpoint() {
        let pred = constant(0.2, [0.0, 0.5]);
        let gt = constant(0.6, [1.0, 0.0]);
        let teacher = constant(0.4, [0.0, 0.8]);
        let e_gt = masked_l2(&pred, &gt, &gt.mask).unwrap();
        let e_t = masked_l2(&pred, &teacher, &gt.mask).unwrap();
        assert_eq!(loss_kd(&pred, &gt, &teacher, 0.0).unwrap(), e_gt);
        assert_eq!(loss_kd(&pred, &gt, &teacher, 1.0).unwrap(), e_t);
        let half = loss_kd(&gt, &gt, &teacher, 0.5).unwrap();
        let direct = masked_l2(&gt, &teacher, &gt.mask).unwrap();
        assert!((half.total - 0.5 * direct.total).abs() < 1e-12);
    }

    #[test]
    fn kd_lc_endpoints() {
        let pred = constant(0.2, [0.0, 0.5]);
        let corrected = constant(0.6, [1.0, 0.0]);
        let teacher = constant(0.4, [0.0, 0.8]);
        assert_eq!(
            loss_kd_lc(&pred, &corrected, &teacher, 0.0).unwrap(),
            loss_lc(&pred, &corrected).unwrap()
        );
        let other = constant(0.9, [0.0, -1.0]);
        assert_eq!(
            loss_kd_lc(&pred, &corrected, &teacher, 1.0).unwrap(),
            loss_kd_lc(&pred, &other, &teacher, 1.0).unwrap()
        );
    }

    #[test]
    fn lambda_outside_unit_interval_is_rejected() {
        let a = constant(0.0, [0.0, 0.0]);
        for l in [-0.1, 1.1, f64::NAN] {
            assert!(matches!(loss_kd(&a, &a, &a, l), Err(Error::Domain(_))));
            assert!(matches!(loss_kd_lc(&a, &a, &a, l), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn unmasked_cell_count() {
        let mut m = BinaryMask::ones(grid());
        m.values_mut()[0] = false;
        assert_eq!(unmasked_cells(&m), 5);
    }
}
