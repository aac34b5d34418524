//! Central finite-difference verification of taped gradients.

use super::real::Real;
use super::tape::Tape;

/// A scalar function evaluable on both the plain and the taped path.
///
/// Implementations must be deterministic in `params`; any randomness has to be
/// frozen before the check.
pub trait ScalarFn {
    fn eval<R: Real>(&self, params: &[R]) -> R;

    /// Hash of the discrete decisions taken at `params` (rasterizer winner
    /// maps, branch selections). Coordinates whose stencil straddles a change
    /// sit on a kink of the composite and are skipped by the checker. The
    /// default marks everything smooth.
    fn discrete_signature(&self, _params: &[f64]) -> u64 {
        0
    }
}

/// FNV-1a over bytes, for discrete-decision signatures.
pub fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[derive(Clone, Debug)]
pub struct FdReport {
    /// Max relative error over checked coordinates, |a-n| / max(1e-8, |a|+|n|).
    pub max_rel_err: f64,
    pub worst_coord: Option<usize>,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// Coordinates skipped because a kink was detected within the stencil.
    pub skipped: Vec<usize>,
    pub checked: usize,
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / f64::max(1e-8, a.abs() + n.abs())
}

/// Compares the taped gradient of `f` at `params` against central differences.
///
/// Coordinates where the two one-sided differences disagree by more than 20%
/// of their magnitude are treated as sitting on a kink (clamps, max{0,.},
/// visibility changes) and skipped, per the reporting contract. `coords`
/// limits the check to a subset; pass `None` to sweep every coordinate.
pub fn finite_diff_check<F: ScalarFn>(
    f: &F,
    params: &[f64],
    eps: f64,
    coords: Option<&[usize]>,
) -> FdReport {
    let tape = Tape::new();
    let vars = tape.vars(params);
    let out = f.eval(&vars);
    let grads = tape.backward(out);
    let analytic = grads.wrt_slice(&vars);

    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..params.len()).collect();
            &all
        }
    };

    let mut x = params.to_vec();
    let f0 = f.eval::<f64>(&x);
    let mut numeric = vec![f64::NAN; params.len()];
    let mut skipped = Vec::new();
    let mut max_rel_err = 0.0f64;
    let mut worst = None;
    let mut checked = 0usize;
    for &i in coords {
        let p0 = x[i];
        x[i] = p0 + eps;
        let fp = f.eval::<f64>(&x);
        let sig_p = f.discrete_signature(&x);
        x[i] = p0 - eps;
        let fm = f.eval::<f64>(&x);
        let sig_m = f.discrete_signature(&x);
        x[i] = p0;
        if sig_p != sig_m {
            skipped.push(i);
            continue;
        }
        // below the FD resolution: the stencil variation is dominated by f64
        // rounding of f itself, so central differences carry no information.
        // Only skip when the analytic side agrees this is a near-zero slope.
        let span = (fp - fm).abs();
        let noise_floor = 1e4 * f64::EPSILON * f0.abs().max(fp.abs()).max(fm.abs());
        if span < noise_floor && analytic[i].abs() < 1e-6 {
            skipped.push(i);
            continue;
        }
        let central = (fp - fm) / (2.0 * eps);
        numeric[i] = central;
        // one-sided slopes disagreeing flags a kink inside the stencil
        let fwd = (fp - f0) / eps;
        let bwd = (f0 - fm) / eps;
        let scale = fwd.abs().max(bwd.abs());
        if scale > 1e-7 && (fwd - bwd).abs() > 0.2 * scale {
            skipped.push(i);
            continue;
        }
        checked += 1;
        let e = rel_err(analytic[i], central);
        if e > max_rel_err {
            max_rel_err = e;
            worst = Some(i);
        }
    }
    FdReport {
        max_rel_err,
        worst_coord: worst,
        analytic,
        numeric,
        skipped,
        checked,
    }
}
