//! Reconstruction losses, regularizers, viewpoint-hypothesis loss, and the
//! conditioned mask discriminator.
//!
//! Reduction convention: every pixel loss is a mean over pixels with channels
//! summed per pixel, which keeps the lambda weights resolution-independent.

mod disc;
mod dt;

pub use disc::{
    adversarial_losses, disc_loss, forward_naive, gen_adv_loss, pool_mask, r1_penalty, DiscArch,
    Discriminator, COND_DIM, INPUT_CHANNELS,
};
pub use dt::{distance_transform, DistanceTransform};

use crate::autodiff::Real;
use crate::geometry::VertexField;
use serde::{Deserialize, Serialize};

/// Loss weights; `feat` and `hyp` switch values late in training.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub mask: f64,
    pub image: f64,
    pub feat_early: f64,
    pub feat_late: f64,
    pub def: f64,
    pub art: f64,
    pub hyp_early: f64,
    pub hyp_late: f64,
    pub adv: f64,
    pub dt: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            mask: 10.0,
            image: 1.0,
            feat_early: 10.0,
            feat_late: 1.0,
            def: 10.0,
            art: 0.2,
            hyp_early: 50.0,
            hyp_late: 500.0,
            adv: 0.1,
            dt: 0.1,
        }
    }
}

impl LossWeights {
    pub fn feat(&self, late: bool) -> f64 {
        if late {
            self.feat_late
        } else {
            self.feat_early
        }
    }

    pub fn hyp(&self, late: bool) -> f64 {
        if late {
            self.hyp_late
        } else {
            self.hyp_early
        }
    }
}

/// Smoothed |x|: quadratic within delta of zero so gradient checks are
/// well-defined. `delta = 0` gives hard L1.
pub fn huber<R: Real>(x: R, delta: f64) -> R {
    if delta <= 0.0 {
        return x.abs();
    }
    if x.value().abs() <= delta {
        (x * x).scale(0.5 / delta)
    } else {
        x.abs().add_const(-0.5 * delta)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct L1Opts {
    pub huber_delta: f64,
}

impl Default for L1Opts {
    fn default() -> Self {
        L1Opts { huber_delta: 1e-6 }
    }
}

impl L1Opts {
    pub fn hard() -> Self {
        L1Opts { huber_delta: 0.0 }
    }
}

/// Mask loss: mean (m_hat - m)^2 + lambda_dt * mean |m_hat * dt(m)|.
pub fn mask_loss<R: Real>(
    pred: &[R],
    target: &[f64],
    dt: &[f64],
    lambda_dt: f64,
    opts: L1Opts,
) -> R {
    assert_eq!(pred.len(), target.len());
    assert_eq!(pred.len(), dt.len());
    let n = pred.len() as f64;
    let mut sq = R::lit(0.0);
    let mut l1 = R::lit(0.0);
    for i in 0..pred.len() {
        let d = pred[i].add_const(-target[i]);
        sq = sq + d * d;
        if dt[i] != 0.0 {
            l1 = l1 + huber(pred[i].scale(dt[i]), opts.huber_delta);
        }
    }
    (sq + l1.scale(lambda_dt)).scale(1.0 / n)
}

/// Photometric loss: mean over pixels of m_tilde * sum_c |I_hat_c - I_c| with
/// m_tilde the mask intersection (pred * target).
pub fn image_loss<R: Real>(
    pred: &[R],
    target: &[f64],
    channels: usize,
    pred_mask: &[R],
    target_mask: &[f64],
    opts: L1Opts,
) -> R {
    let npix = pred_mask.len();
    assert_eq!(pred.len(), npix * channels);
    assert_eq!(target.len(), npix * channels);
    assert_eq!(target_mask.len(), npix);
    let mut acc = R::lit(0.0);
    for p in 0..npix {
        if target_mask[p] == 0.0 {
            continue;
        }
        let mt = pred_mask[p].scale(target_mask[p]);
        if mt.value() == 0.0 && pred_mask[p].value() == 0.0 {
            // hard-masked background: nothing to add and no gradient path
            continue;
        }
        let mut chan = R::lit(0.0);
        for c in 0..channels {
            let d = pred[p * channels + c].add_const(-target[p * channels + c]);
            chan = chan + huber(d, opts.huber_delta);
        }
        acc = acc + mt * chan;
    }
    acc.scale(1.0 / npix as f64)
}

/// Feature loss: mean over pixels of (m_tilde)^2 * sum_c (F_hat_c - F_c)^2.
pub fn feature_loss<R: Real>(
    pred: &[R],
    target: &[f64],
    channels: usize,
    pred_mask: &[R],
    target_mask: &[f64],
) -> R {
    let npix = pred_mask.len();
    assert_eq!(pred.len(), npix * channels);
    assert_eq!(target.len(), npix * channels);
    let mut acc = R::lit(0.0);
    for p in 0..npix {
        if target_mask[p] == 0.0 {
            continue;
        }
        let mt = pred_mask[p].scale(target_mask[p]);
        if mt.value() == 0.0 && pred_mask[p].value() == 0.0 {
            continue;
        }
        let mut chan = R::lit(0.0);
        for c in 0..channels {
            let d = pred[p * channels + c].add_const(-target[p * channels + c]);
            chan = chan + d * d;
        }
        acc = acc + mt * mt * chan;
    }
    acc.scale(1.0 / npix as f64)
}

/// Viewpoint-hypothesis loss: (sigma - detach(rec))^2. The reconstruction
/// loss enters as a constant, so only the score receives gradient.
pub fn hyp_loss<R: Real>(sigma: R, rec_loss: R) -> R {
    let d = sigma - rec_loss.detach();
    d * d
}

/// p_k proportional to exp(-sigma_k / tau).
pub fn hypothesis_probs(scores: &[f64; 4], tau: f64) -> [f64; 4] {
    let m = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut e = [0.0; 4];
    let mut sum = 0.0;
    for k in 0..4 {
        e[k] = (-(scores[k] - m) / tau).exp();
        sum += e[k];
    }
    for v in &mut e {
        *v /= sum;
    }
    e
}

/// R_def: mean squared offset norm over vertices.
pub fn def_regularizer<R: Real>(dv: &VertexField<R>) -> R {
    let n = dv.len().max(1);
    let mut acc = R::lit(0.0);
    for i in 0..dv.len() {
        let r = dv.row(i);
        for &x in r {
            acc = acc + x * x;
        }
    }
    acc.scale(1.0 / n as f64)
}

/// Per-iteration loss terms before weighting; absent terms are inactive.
#[derive(Clone, Copy)]
pub struct LossParts<R> {
    pub mask: R,
    pub image: R,
    pub feat: R,
    pub hyp: Option<R>,
    pub adv_gen: Option<R>,
    pub art: Option<R>,
    pub def: Option<R>,
}

/// Total objective: L_rec + lambda_hyp L_hyp + lambda_adv L_adv + R with
/// L_rec = lambda_m L_m + lambda_im L_im + lambda_feat L_feat and
/// R = lambda_art R_art + lambda_def R_def.
pub fn total_loss<R: Real>(parts: &LossParts<R>, w: &LossWeights, late: bool) -> R {
    let mut total = parts.mask.scale(w.mask)
        + parts.image.scale(w.image)
        + parts.feat.scale(w.feat(late));
    if let Some(h) = parts.hyp {
        total = total + h.scale(w.hyp(late));
    }
    if let Some(a) = parts.adv_gen {
        total = total + a.scale(w.adv);
    }
    if let Some(a) = parts.art {
        total = total + a.scale(w.art);
    }
    if let Some(d) = parts.def {
        total = total + d.scale(w.def);
    }
    total
}

/// The weighted reconstruction part alone (what hypothesis scores track).
pub fn rec_loss<R: Real>(mask: R, image: R, feat: R, w: &LossWeights, late: bool) -> R {
    mask.scale(w.mask) + image.scale(w.image) + feat.scale(w.feat(late))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{finite_diff_check, ScalarFn, Tape};
    use crate::harness::rng::Rng;

    #[test]
    fn mask_loss_zero_at_agreement() {
        let m = vec![1.0, 0.0, 1.0, 0.0];
        let d = distance_transform(&m, 2, 2);
        let l: f64 = mask_loss(&m, &m, &d.dist, 1.0, L1Opts::hard());
        assert_eq!(l, 0.0);
    }

    #[test]
    fn mask_loss_hand_example() {
        // pred all ones, target a single pixel at (0,0) on 2x2, lambda_dt = 1
        let target = vec![1.0, 0.0, 0.0, 0.0];
        let pred = vec![1.0; 4];
        let d = distance_transform(&target, 2, 2);
        let l: f64 = mask_loss(&pred, &target, &d.dist, 1.0, L1Opts::hard());
        let expect = 3.0 / 4.0 + (0.0 + 1.0 + 1.0 + 2f64.sqrt()) / 4.0;
        assert!((l - expect).abs() < 1e-12, "{} vs {}", l, expect);
    }

    #[test]
    fn mask_loss_decreases_toward_target() {
        let mut rng = Rng::new(5);
        let target: Vec<f64> = (0..64).map(|_| if rng.uniform() < 0.3 { 1.0 } else { 0.0 }).collect();
        let start: Vec<f64> = (0..64).map(|_| rng.uniform()).collect();
        let d = distance_transform(&target, 8, 8);
        let mut prev = f64::INFINITY;
        for step in 0..=4 {
            let t = step as f64 / 4.0;
            let pred: Vec<f64> = start
                .iter()
                .zip(&target)
                .map(|(s, g)| s * (1.0 - t) + g * t)
                .collect();
            let l: f64 = mask_loss(&pred, &target, &d.dist, 0.1, L1Opts::hard());
            assert!(l < prev + 1e-12, "step {}: {} !< {}", step, l, prev);
            prev = l;
        }
        assert_eq!(prev, 0.0);
    }

    #[test]
    fn image_loss_examples() {
        let npix = 4;
        let full = vec![1.0; npix];
        let img: Vec<f64> = (0..npix * 3).map(|i| i as f64 / 12.0).collect();
        // identical -> 0
        let l: f64 = image_loss(&img, &img, 3, &full, &full, L1Opts::hard());
        assert_eq!(l, 0.0);
        // disjoint masks -> 0 regardless of images
        let other: Vec<f64> = img.iter().map(|x| x + 5.0).collect();
        let pm = vec![1.0, 1.0, 0.0, 0.0];
        let tm = vec![0.0, 0.0, 1.0, 1.0];
        let l: f64 = image_loss(&img, &other, 3, &pm, &tm, L1Opts::hard());
        assert_eq!(l, 0.0);
        // constant offset 0.1 inside a full intersection -> 0.3
        let shifted: Vec<f64> = img.iter().map(|x| x + 0.1).collect();
        let l: f64 = image_loss(&shifted, &img, 3, &full, &full, L1Opts::hard());
        assert!((l - 0.3).abs() < 1e-12);
    }

    #[test]
    fn feature_loss_examples() {
        let npix = 5;
        let full = vec![1.0; npix];
        let f: Vec<f64> = (0..npix * 16).map(|i| (i as f64).sin()).collect();
        let l: f64 = feature_loss(&f, &f, 16, &full, &full);
        assert_eq!(l, 0.0);
        let pm = vec![1.0, 0.0, 1.0, 0.0, 0.0];
        let tm = vec![0.0, 1.0, 0.0, 1.0, 1.0];
        let other: Vec<f64> = f.iter().map(|x| x + 3.0).collect();
        let l: f64 = feature_loss(&f, &other, 16, &pm, &tm);
        assert_eq!(l, 0.0);
        let shifted: Vec<f64> = f.iter().map(|x| x + 0.1).collect();
        let l: f64 = feature_loss(&shifted, &f, 16, &full, &full);
        assert!((l - 0.1 * 0.1 * 16.0).abs() < 1e-9);
    }

    #[test]
    fn hyp_loss_detach_contract() {
        let t = Tape::new();
        let sigma = t.var(0.0);
        let mesh_param = t.var(1.0);
        let rec = mesh_param * mesh_param * t.var(2.0); // rec = 2
        let l = hyp_loss(sigma, rec);
        assert_eq!(l.value(), 4.0);
        let g = t.backward(l);
        assert_eq!(g.wrt(sigma), -4.0);
        assert_eq!(g.wrt(mesh_param), 0.0);
    }

    struct HypOnSigma;
    impl ScalarFn for HypOnSigma {
        fn eval<R: crate::autodiff::Real>(&self, p: &[R]) -> R {
            let rec = p[1] * p[1];
            hyp_loss(p[0], rec)
        }
    }

    #[test]
    fn hyp_loss_fd_check() {
        // d/d(sigma) matches finite differences; the detached branch has an
        // exactly zero analytic gradient (FD would see the value change, which
        // is the point of detach)
        let r = finite_diff_check(&HypOnSigma, &[0.3, 1.4], 1e-5, Some(&[0]));
        assert!(r.max_rel_err < 1e-8, "err {}", r.max_rel_err);
        assert_eq!(r.analytic[1], 0.0);
    }

    #[test]
    fn hypothesis_probs_examples() {
        let p = hypothesis_probs(&[1.0, 1.0, 1.0, 1.0], 0.5);
        for v in p {
            assert!((v - 0.25).abs() < 1e-12);
        }
        let p = hypothesis_probs(&[0.1, 0.2, 0.5, 0.9], 0.01);
        assert!(p[0] > 0.999, "{:?}", p);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn def_regularizer_matches_loop_oracle() {
        use crate::geometry::VertexField;
        let mut f = VertexField::zeros(3, 10);
        assert_eq!(def_regularizer(&f), 0.0);
        for i in 0..10 {
            f.row_mut(i)[0] = 0.1;
        }
        assert!((def_regularizer(&f) - 0.01).abs() < 1e-15);
        let mut rng = Rng::new(8);
        for i in 0..10 {
            for c in 0..3 {
                f.row_mut(i)[c] = rng.normal();
            }
        }
        let mut brute = 0.0;
        for i in 0..10 {
            for c in 0..3 {
                brute += f.row(i)[c] * f.row(i)[c];
            }
        }
        brute /= 10.0;
        assert!((def_regularizer(&f) - brute).abs() < 1e-12);
    }

    #[test]
    fn total_loss_examples() {
        let w = LossWeights::default();
        let zero = LossParts {
            mask: 0.0,
            image: 0.0,
            feat: 0.0,
            hyp: Some(0.0),
            adv_gen: Some(0.0),
            art: Some(0.0),
            def: Some(0.0),
        };
        assert_eq!(total_loss(&zero, &w, false), 0.0);
        let unit = LossParts {
            mask: 1.0,
            image: 1.0,
            feat: 1.0,
            hyp: Some(1.0),
            adv_gen: Some(1.0),
            art: Some(1.0),
            def: Some(1.0),
        };
        let sum = 10.0 + 1.0 + 10.0 + 50.0 + 0.1 + 0.2 + 10.0;
        assert!((total_loss(&unit, &w, false) - sum).abs() < 1e-12);
        // doubling lambda_m adds exactly one extra mask unit contribution
        let mut w2 = w;
        w2.mask *= 2.0;
        assert!((total_loss(&unit, &w2, false) - (sum + 10.0)).abs() < 1e-12);
        // late switch flips feat and hyp weights
        let late_sum = 10.0 + 1.0 + 1.0 + 500.0 + 0.1 + 0.2 + 10.0;
        assert!((total_loss(&unit, &w, true) - late_sum).abs() < 1e-12);
    }

    #[test]
    fn huber_matches_abs_away_from_zero() {
        let d = 1e-6;
        for x in [0.5, -0.3, 1.0, -2.0] {
            assert!((huber(x, d) - (x.abs() - 0.5 * d)).abs() < 1e-15);
        }
        assert_eq!(huber(0.0, d), 0.0);
    }
}
