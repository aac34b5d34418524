//! Mask discriminator: a small strided-convolution stack over a 129-channel
//! input (1 mask channel + 128 broadcast conditioning channels) producing one
//! logit, with the GAN losses and an R1-style gradient penalty.
//!
//! The conditioning plane is spatially constant, so its convolution is
//! evaluated once per distinct padding pattern instead of per pixel; the
//! result is value-identical to the naive 129-channel convolution (unit
//! tested below).

use crate::autodiff::{Real, Var};
use crate::harness::rng::Rng;

pub const COND_DIM: usize = 128;
pub const INPUT_CHANNELS: usize = 1 + COND_DIM;
const LEAK: f64 = 0.2;
const PROB_CLAMP: f64 = 1e-7;

/// Conv stack geometry: kernel 3, stride 2, pad 1 per layer, then a final
/// dense map to one logit.
#[derive(Clone, Debug)]
pub struct DiscArch {
    /// Input mask resolution (square).
    pub resolution: usize,
    /// Output channels per conv layer.
    pub channels: Vec<usize>,
}

impl DiscArch {
    /// Halves the spatial size per layer until it reaches 2.
    pub fn for_resolution(resolution: usize) -> DiscArch {
        assert!(resolution >= 4 && resolution.is_power_of_two());
        let mut channels = Vec::new();
        let mut size = resolution;
        let mut ch = 8;
        while size > 2 {
            channels.push(ch);
            ch = (ch * 2).min(64);
            size /= 2;
        }
        DiscArch {
            resolution,
            channels,
        }
    }

    fn layer_dims(&self) -> Vec<(usize, usize, usize)> {
        // (in_ch, out_ch, out_size)
        let mut dims = Vec::new();
        let mut in_ch = INPUT_CHANNELS;
        let mut size = self.resolution;
        for &oc in &self.channels {
            size /= 2;
            dims.push((in_ch, oc, size));
            in_ch = oc;
        }
        dims
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        for (ic, oc, _) in self.layer_dims() {
            n += oc * ic * 9 + oc;
        }
        let (_, last_oc, last_size) = *self.layer_dims().last().unwrap();
        n += last_oc * last_size * last_size + 1; // dense head
        n
    }
}

/// Discriminator parameters in one flat vector (conv weights, conv biases,
/// dense head, head bias — layer by layer).
#[derive(Clone, Debug)]
pub struct Discriminator {
    pub arch: DiscArch,
    pub params: Vec<f64>,
}

impl Discriminator {
    pub fn zeros(arch: DiscArch) -> Self {
        let n = arch.param_count();
        Discriminator {
            arch,
            params: vec![0.0; n],
        }
    }

    /// He-style init scaled by fan-in; deterministic per seed.
    pub fn init(arch: DiscArch, seed: u64) -> Self {
        let mut rng = Rng::substream(seed, 0xD15C);
        let mut params = Vec::with_capacity(arch.param_count());
        for (ic, oc, _) in arch.layer_dims() {
            let std = (2.0 / (ic as f64 * 9.0)).sqrt();
            for _ in 0..oc * ic * 9 {
                params.push(rng.normal_scaled(std));
            }
            for _ in 0..oc {
                params.push(0.0);
            }
        }
        let (_, last_oc, last_size) = *arch.layer_dims().last().unwrap();
        let n_dense = last_oc * last_size * last_size;
        let std = (1.0 / n_dense as f64).sqrt();
        for _ in 0..n_dense {
            params.push(rng.normal_scaled(std));
        }
        params.push(0.0);
        Discriminator { arch, params }
    }

    /// Forward pass on the caller's scalar type; `params` lets the caller
    /// decide which side is differentiable (lifted parameters for the D step,
    /// constants for the G step). The conditioning embedding must already be
    /// detached by the caller.
    pub fn forward<R: Real>(&self, params: &[R], mask: &[R], cond: &[R]) -> R {
        assert_eq!(params.len(), self.arch.param_count());
        assert_eq!(cond.len(), COND_DIM);
        let res = self.arch.resolution;
        assert_eq!(mask.len(), res * res);

        let mut offset = 0usize;
        let mut act: Vec<R> = mask.to_vec(); // first layer reads mask + cond
        let mut size = res;
        for (li, (ic, oc, out_size)) in self.arch.layer_dims().into_iter().enumerate() {
            let w = &params[offset..offset + oc * ic * 9];
            offset += oc * ic * 9;
            let b = &params[offset..offset + oc];
            offset += oc;
            let mut next = vec![R::lit(0.0); oc * out_size * out_size];
            if li == 0 {
                // mask channel convolved per pixel; conditioning channels are
                // spatially constant and folded per padding pattern
                let cond_sums = first_layer_cond_sums(w, cond, oc);
                for o in 0..oc {
                    let wm = &w[o * ic * 9..o * ic * 9 + 9]; // mask channel taps
                    for oy in 0..out_size {
                        for ox in 0..out_size {
                            let mut acc = conv_tap_sum(&act, size, 0, wm, oy, ox);
                            let pat = pad_pattern(oy, ox, size);
                            acc = acc + cond_sums[o * 9 + pat];
                            acc = acc + b[o];
                            next[(o * out_size + oy) * out_size + ox] = leaky(acc);
                        }
                    }
                }
            } else {
                for o in 0..oc {
                    for oy in 0..out_size {
                        for ox in 0..out_size {
                            let mut acc = b[o];
                            for i in 0..ic {
                                let wt = &w[(o * ic + i) * 9..(o * ic + i) * 9 + 9];
                                acc = acc + conv_tap_sum(&act, size, i, wt, oy, ox);
                            }
                            next[(o * out_size + oy) * out_size + ox] = leaky(acc);
                        }
                    }
                }
            }
            act = next;
            size = out_size;
        }
        // dense head
        let n_dense = act.len();
        let wd = &params[offset..offset + n_dense];
        offset += n_dense;
        let bias = params[offset];
        let mut logit = bias;
        for i in 0..n_dense {
            logit = logit + wd[i] * act[i];
        }
        logit
    }
}

fn leaky<R: Real>(x: R) -> R {
    x.maxr(x.scale(LEAK))
}

/// Sum of kernel taps over one input channel plane at stride 2, pad 1:
/// input position = 2*out + k - 1.
fn conv_tap_sum<R: Real>(act: &[R], size: usize, channel: usize, w: &[R], oy: usize, ox: usize) -> R {
    let plane = channel * size * size;
    let mut acc = R::lit(0.0);
    for ky in 0..3i64 {
        let y = (oy * 2) as i64 + ky - 1;
        if y < 0 || y >= size as i64 {
            continue;
        }
        for kx in 0..3i64 {
            let x = (ox * 2) as i64 + kx - 1;
            if x < 0 || x >= size as i64 {
                continue;
            }
            acc = acc + w[(ky * 3 + kx) as usize] * act[plane + (y as usize) * size + x as usize];
        }
    }
    acc
}

/// Classifies an output pixel by which kernel taps fall outside the padded
/// border (3x3 corner/edge/interior patterns).
fn pad_pattern(oy: usize, ox: usize, in_size: usize) -> usize {
    let r = if oy == 0 {
        0
    } else if oy * 2 + 2 > in_size {
        2
    } else {
        1
    };
    let c = if ox == 0 {
        0
    } else if ox * 2 + 2 > in_size {
        2
    } else {
        1
    };
    r * 3 + c
}

/// Conditioning contribution per (out_channel, pad pattern): the conv of a
/// spatially constant 128-channel plane only depends on which taps are valid.
fn first_layer_cond_sums<R: Real>(w: &[R], cond: &[R], oc: usize) -> Vec<R> {
    let mut sums = vec![R::lit(0.0); oc * 9];
    let ic = INPUT_CHANNELS;
    for o in 0..oc {
        for pat in 0..9usize {
            let (r, c) = (pat / 3, pat % 3);
            let ky_range: &[usize] = match r {
                0 => &[1, 2],
                2 => &[0, 1],
                _ => &[0, 1, 2],
            };
            let kx_range: &[usize] = match c {
                0 => &[1, 2],
                2 => &[0, 1],
                _ => &[0, 1, 2],
            };
            let mut acc = R::lit(0.0);
            for ch in 0..COND_DIM {
                let wt = &w[(o * ic + 1 + ch) * 9..(o * ic + 1 + ch) * 9 + 9];
                let mut tapsum = R::lit(0.0);
                for &ky in ky_range {
                    for &kx in kx_range {
                        tapsum = tapsum + wt[ky * 3 + kx];
                    }
                }
                acc = acc + tapsum * cond[ch];
            }
            sums[o * 9 + pat] = acc;
        }
    }
    sums
}

/// Naive reference: full conv over all 129 channels (test oracle and the
/// definitional form).
pub fn forward_naive<R: Real>(d: &Discriminator, params: &[R], mask: &[R], cond: &[R]) -> R {
    let res = d.arch.resolution;
    // materialize the broadcast input
    let mut input = vec![R::lit(0.0); INPUT_CHANNELS * res * res];
    input[..res * res].copy_from_slice(mask);
    for ch in 0..COND_DIM {
        for p in 0..res * res {
            input[(1 + ch) * res * res + p] = cond[ch];
        }
    }
    let mut offset = 0usize;
    let mut act = input;
    let mut size = res;
    for (ic, oc, out_size) in d.arch.layer_dims() {
        let w = &params[offset..offset + oc * ic * 9];
        offset += oc * ic * 9;
        let b = &params[offset..offset + oc];
        offset += oc;
        let mut next = vec![R::lit(0.0); oc * out_size * out_size];
        for o in 0..oc {
            for oy in 0..out_size {
                for ox in 0..out_size {
                    let mut acc = b[o];
                    for i in 0..ic {
                        let wt = &w[(o * ic + i) * 9..(o * ic + i) * 9 + 9];
                        acc = acc + conv_tap_sum(&act, size, i, wt, oy, ox);
                    }
                    next[(o * out_size + oy) * out_size + ox] = leaky(acc);
                }
            }
        }
        act = next;
        size = out_size;
    }
    let n_dense = act.len();
    let wd = &params[offset..offset + n_dense];
    offset += n_dense;
    let mut logit = params[offset];
    for i in 0..n_dense {
        logit = logit + wd[i] * act[i];
    }
    logit
}

fn log_prob<R: Real>(logit: R) -> R {
    logit.sigmoid().clamp_r(PROB_CLAMP, 1.0 - PROB_CLAMP).ln()
}

fn log_one_minus_prob<R: Real>(logit: R) -> R {
    (R::lit(1.0) - logit.sigmoid())
        .clamp_r(PROB_CLAMP, 1.0 - PROB_CLAMP)
        .ln()
}

/// Discriminator objective (to minimize): -E[log D(real)] - E[log(1-D(fake))]
/// plus the gradient penalty on real masks. Masks enter as constants; only
/// `params` carries gradient.
#[allow(clippy::too_many_arguments)]
pub fn disc_loss<'t>(
    d: &Discriminator,
    params: &[Var<'t>],
    real: &[Vec<f64>],
    fake: &[Vec<f64>],
    cond: &[f64],
    gp_coeff: f64,
    fd_eps: f64,
    rng: &mut Rng,
) -> Var<'t> {
    let cond_c: Vec<Var<'t>> = cond.iter().map(|&c| Var::constant(c)).collect();
    let mut loss = Var::constant(0.0);
    for m in real {
        let mv: Vec<Var<'t>> = m.iter().map(|&x| Var::constant(x)).collect();
        let logit = d.forward(params, &mv, &cond_c);
        loss = loss - log_prob(logit).scale(1.0 / real.len() as f64);
    }
    for m in fake {
        let mv: Vec<Var<'t>> = m.iter().map(|&x| Var::constant(x)).collect();
        let logit = d.forward(params, &mv, &cond_c);
        loss = loss - log_one_minus_prob(logit).scale(1.0 / fake.len() as f64);
    }
    if gp_coeff > 0.0 && !real.is_empty() {
        // lazy R1: one random real sample per step
        let pick = rng.below(real.len());
        loss = loss + r1_penalty(d, params, &real[pick], cond, fd_eps, rng).scale(gp_coeff);
    }
    loss
}

/// Random-direction central-difference estimate of ||grad_M D(M)||^2, built
/// from taped forward passes so its parameter gradient exists (the crate has
/// no second-order derivatives). E_u[(g.u)^2] = ||g||^2 for u ~ N(0, I).
pub fn r1_penalty<'t>(
    d: &Discriminator,
    params: &[Var<'t>],
    mask: &[f64],
    cond: &[f64],
    fd_eps: f64,
    rng: &mut Rng,
) -> Var<'t> {
    let cond_c: Vec<Var<'t>> = cond.iter().map(|&c| Var::constant(c)).collect();
    let u: Vec<f64> = (0..mask.len()).map(|_| rng.normal()).collect();
    let plus: Vec<Var<'t>> = mask
        .iter()
        .zip(&u)
        .map(|(&m, &du)| Var::constant(m + fd_eps * du))
        .collect();
    let minus: Vec<Var<'t>> = mask
        .iter()
        .zip(&u)
        .map(|(&m, &du)| Var::constant(m - fd_eps * du))
        .collect();
    let lp = d.forward(params, &plus, &cond_c);
    let lm = d.forward(params, &minus, &cond_c);
    let slope = (lp - lm).scale(0.5 / fd_eps);
    slope * slope
}

/// Generator-side adversarial term (to minimize): -E[log D(fake)], the
/// non-saturating form. Discriminator parameters enter as constants; the fake
/// masks carry gradient.
pub fn gen_adv_loss<R: Real>(d: &Discriminator, fake_masks: &[Vec<R>], cond: &[R]) -> R {
    let params: Vec<R> = d.params.iter().map(|&p| R::lit(p)).collect();
    let mut loss = R::lit(0.0);
    for m in fake_masks {
        let logit = d.forward(&params, m, cond);
        loss = loss - log_prob(logit).scale(1.0 / fake_masks.len() as f64);
    }
    loss
}

/// Eq.-4 value (ascended by D) and the generator loss, for reporting:
/// L_adv = E[log D(real)] + E[log(1 - D(fake))].
pub fn adversarial_losses(
    d: &Discriminator,
    real: &[Vec<f64>],
    fake: &[Vec<f64>],
    cond: &[f64],
) -> (f64, f64) {
    let params = d.params.clone();
    let mut adv = 0.0;
    for m in real {
        let logit = d.forward::<f64>(&params, m, cond);
        adv += log_prob(logit) / real.len() as f64;
    }
    let mut gen = 0.0;
    for m in fake {
        let logit = d.forward::<f64>(&params, m, cond);
        adv += log_one_minus_prob(logit) / fake.len() as f64;
        gen -= log_prob(logit) / fake.len() as f64;
    }
    (adv, gen)
}

/// Average-pool a mask image down to the discriminator resolution.
pub fn pool_mask<R: Real>(mask: &[R], width: usize, height: usize, out_res: usize) -> Vec<R> {
    assert!(width % out_res == 0 && height % out_res == 0, "resolution must divide image size");
    let fx = width / out_res;
    let fy = height / out_res;
    let inv = 1.0 / (fx * fy) as f64;
    let mut out = vec![R::lit(0.0); out_res * out_res];
    for oy in 0..out_res {
        for ox in 0..out_res {
            let mut acc = R::lit(0.0);
            for dy in 0..fy {
                for dx in 0..fx {
                    acc = acc + mask[(oy * fy + dy) * width + (ox * fx + dx)];
                }
            }
            out[oy * out_res + ox] = acc.scale(inv);
        }
    }
    out
}
