//! Recurrent Q-network: one GRU layer, a tanh dense layer and a linear head
//! with four outputs, trained by backpropagation through time.
//!
//! Parameters live in one flat `f64` array in this order (row-major
//! matrices, gates ordered reset, update, candidate):
//!
//! ```text
//! w_ih  [3H x D]   w_hh  [3H x H]   b_ih [3H]   b_hh [3H]
//! w_d   [F x H]    b_d   [F]
//! w_o   [4 x F]    b_o   [4]
//! ```
//!
//! with D the input width, H the hidden width and F the dense width. The cell
//! follows the usual GRU equations:
//!
//! ```text
//! r  = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
//! z  = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
//! n  = tanh(W_in x + b_in + r * (W_hn h + b_hn))
//! h' = (1 - z) * n + z * h
//! q  = q_scale * (W_o tanh(W_d h' + b_d) + b_o)
//! ```

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::error::{Error, Result};

pub const N_ACTIONS: usize = Action::COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetShape {
    pub input: usize,
    pub hidden: usize,
    pub dense: usize,
    /// Multiplier on the head output, so unit-scale weights can express
    /// returns in the thousands.
    pub q_scale: f64,
}

#[derive(Debug, Clone, Copy)]
struct Offsets {
    w_ih: usize,
    w_hh: usize,
    b_ih: usize,
    b_hh: usize,
    w_d: usize,
    b_d: usize,
    w_o: usize,
    b_o: usize,
    len: usize,
}

impl NetShape {
    fn offsets(&self) -> Offsets {
        let (d, h, f) = (self.input, self.hidden, self.dense);
        let w_ih = 0;
        let w_hh = w_ih + 3 * h * d;
        let b_ih = w_hh + 3 * h * h;
        let b_hh = b_ih + 3 * h;
        let w_d = b_hh + 3 * h;
        let b_d = w_d + f * h;
        let w_o = b_d + f;
        let b_o = w_o + N_ACTIONS * f;
        Offsets {
            w_ih,
            w_hh,
            b_ih,
            b_hh,
            w_d,
            b_d,
            w_o,
            b_o,
            len: b_o + N_ACTIONS,
        }
    }

    pub fn param_count(&self) -> usize {
        self.offsets().len
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    pub shape: NetShape,
    pub params: Vec<f64>,
}

/// Recurrent state carried across laps of one race.
pub type Hidden = Vec<f64>;

/// Intermediate values of one forward step, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    hn: Vec<f64>,
    h: Vec<f64>,
    d: Vec<f64>,
    pub q: [f64; N_ACTIONS],
}

impl StepCache {
    /// Hidden state after this step.
    pub fn hidden(&self) -> &[f64] {
        &self.h
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out += M v` for an `rows x cols` block of `p` starting at `off`.
fn matvec_add(p: &[f64], off: usize, rows: usize, cols: usize, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate().take(rows) {
        let row = &p[off + i * cols..off + (i + 1) * cols];
        *o += row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `g[M] += u v^T` and `out += M^T u` in one pass.
fn outer_and_back(
    p: &[f64],
    g: &mut [f64],
    off: usize,
    u: &[f64],
    v: &[f64],
    out: Option<&mut [f64]>,
) {
    let cols = v.len();
    match out {
        Some(out) => {
            for (i, &ui) in u.iter().enumerate() {
                if ui == 0.0 {
                    continue;
                }
                let base = off + i * cols;
                for j in 0..cols {
                    g[base + j] += ui * v[j];
                    out[j] += p[base + j] * ui;
                }
            }
        }
        None => {
            for (i, &ui) in u.iter().enumerate() {
                if ui == 0.0 {
                    continue;
                }
                let base = off + i * cols;
                for j in 0..cols {
                    g[base + j] += ui * v[j];
                }
            }
        }
    }
}

impl QNetwork {
    pub fn zeros(shape: NetShape) -> Self {
        QNetwork {
            params: vec![0.0; shape.param_count()],
            shape,
        }
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero output bias.
    pub fn init<R: Rng + ?Sized>(shape: NetShape, rng: &mut R) -> Self {
        let mut net = QNetwork::zeros(shape);
        let o = shape.offsets();
        let fill = |p: &mut [f64], fan_in: usize, rng: &mut R| {
            let k = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-k, k).expect("finite bound");
            for w in p {
                *w = dist.sample(rng);
            }
        };
        let h = shape.hidden;
        fill(&mut net.params[o.w_ih..o.w_d], h, rng);
        fill(&mut net.params[o.w_d..o.w_o], h, rng);
        fill(&mut net.params[o.w_o..o.b_o], shape.dense, rng);
        net
    }

    pub fn initial_hidden(&self) -> Hidden {
        vec![0.0; self.shape.hidden]
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.shape.input {
            return Err(Error::DimensionMismatch {
                expected: self.shape.input,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// One step: Q-values for `x` and the next hidden state.
    pub fn forward(&self, x: &[f64], hidden: &[f64]) -> Result<([f64; N_ACTIONS], Hidden)> {
        self.check_input(x)?;
        let c = self.step(x, hidden);
        Ok((c.q, c.h))
    }

    /// Q-values for a whole sequence from a zero hidden state.
    pub fn forward_sequence(&self, xs: &[&[f64]]) -> Result<Vec<[f64; N_ACTIONS]>> {
        let mut h = self.initial_hidden();
        let mut out = Vec::with_capacity(xs.len());
        for x in xs {
            let (q, h2) = self.forward(x, &h)?;
            out.push(q);
            h = h2;
        }
        Ok(out)
    }

    pub fn step(&self, x: &[f64], h_prev: &[f64]) -> StepCache {
        let NetShape {
            hidden: hd,
            dense: f,
            input: d,
            q_scale,
        } = self.shape;
        let p = &self.params;
        let o = self.shape.offsets();
        let mut gi = p[o.b_ih..o.b_ih + 3 * hd].to_vec();
        matvec_add(p, o.w_ih, 3 * hd, d, x, &mut gi);
        let mut gh = p[o.b_hh..o.b_hh + 3 * hd].to_vec();
        matvec_add(p, o.w_hh, 3 * hd, hd, h_prev, &mut gh);
        let mut r = vec![0.0; hd];
        let mut z = vec![0.0; hd];
        let mut n = vec![0.0; hd];
        let mut h = vec![0.0; hd];
        let hn = gh[2 * hd..].to_vec();
        for k in 0..hd {
            r[k] = sigmoid(gi[k] + gh[k]);
            z[k] = sigmoid(gi[hd + k] + gh[hd + k]);
            n[k] = (gi[2 * hd + k] + r[k] * hn[k]).tanh();
            h[k] = (1.0 - z[k]) * n[k] + z[k] * h_prev[k];
        }
        let mut dpre = p[o.b_d..o.b_d + f].to_vec();
        matvec_add(p, o.w_d, f, hd, &h, &mut dpre);
        let dv: Vec<f64> = dpre.iter().map(|v| v.tanh()).collect();
        let mut q = [0.0; N_ACTIONS];
        q.copy_from_slice(&p[o.b_o..o.b_o + N_ACTIONS]);
        matvec_add(p, o.w_o, N_ACTIONS, f, &dv, &mut q);
        for v in &mut q {
            *v *= q_scale;
        }
        StepCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            r,
            z,
            n,
            hn,
            h,
            d: dv,
            q,
        }
    }

    /// Backpropagates `dq[t]` (loss gradient wrt the Q-values of step `t`)
    /// through an unrolled sequence, accumulating into `grad`.
    pub fn backward(&self, caches: &[StepCache], dq: &[[f64; N_ACTIONS]], grad: &mut [f64]) {
        let NetShape {
            hidden: hd,
            dense: f,
            q_scale,
            ..
        } = self.shape;
        let p = &self.params;
        let o = self.shape.offsets();
        let mut dh_next = vec![0.0; hd];
        for (c, dqt) in caches.iter().zip(dq).rev() {
            let mut dh = std::mem::take(&mut dh_next);
            if dqt.iter().any(|&v| v != 0.0) {
                let dq_raw: Vec<f64> = dqt.iter().map(|v| v * q_scale).collect();
                for a in 0..N_ACTIONS {
                    grad[o.b_o + a] += dq_raw[a];
                }
                let mut dd = vec![0.0; f];
                outer_and_back(p, grad, o.w_o, &dq_raw, &c.d, Some(&mut dd));
                let dd_pre: Vec<f64> = dd
                    .iter()
                    .zip(&c.d)
                    .map(|(g, d)| g * (1.0 - d * d))
                    .collect();
                for k in 0..f {
                    grad[o.b_d + k] += dd_pre[k];
                }
                outer_and_back(p, grad, o.w_d, &dd_pre, &c.h, Some(&mut dh));
            }
            // Through the cell.
            let mut dgi = vec![0.0; 3 * hd];
            let mut dgh = vec![0.0; 3 * hd];
            let mut dh_prev = vec![0.0; hd];
            for k in 0..hd {
                let (r, z, n, hp) = (c.r[k], c.z[k], c.n[k], c.h_prev[k]);
                let dn = dh[k] * (1.0 - z);
                let dz = dh[k] * (hp - n);
                dh_prev[k] = dh[k] * z;
                let dn_pre = dn * (1.0 - n * n);
                let dr = dn_pre * c.hn[k];
                dgi[2 * hd + k] = dn_pre;
                dgh[2 * hd + k] = dn_pre * r;
                let dz_pre = dz * z * (1.0 - z);
                let dr_pre = dr * r * (1.0 - r);
                dgi[k] = dr_pre;
                dgh[k] = dr_pre;
                dgi[hd + k] = dz_pre;
                dgh[hd + k] = dz_pre;
            }
            for k in 0..3 * hd {
                grad[o.b_ih + k] += dgi[k];
                grad[o.b_hh + k] += dgh[k];
            }
            outer_and_back(p, grad, o.w_ih, &dgi, &c.x, None);
            outer_and_back(p, grad, o.w_hh, &dgh, &c.h_prev, Some(&mut dh_prev));
            dh_next = dh_prev;
        }
    }

    /// Argmax with ties to the lowest index.
    pub fn greedy(q: &[f64; N_ACTIONS]) -> Action {
        let mut best = 0;
        for a in 1..N_ACTIONS {
            if q[a] > q[best] {
                best = a;
            }
        }
        Action::from_index(best).expect("four actions")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn shape(input: usize, hidden: usize, dense: usize) -> NetShape {
        NetShape {
            input,
            hidden,
            dense,
            q_scale: 1.0,
        }
    }

    #[test]
    fn zero_weights_give_zero_q() {
        let net = QNetwork::zeros(shape(31, 8, 8));
        let (q, h) = net.forward(&[0.3; 31], &net.initial_hidden()).unwrap();
        assert_eq!(q, [0.0; 4]);
        assert_eq!(h.len(), 8);
        assert!(matches!(
            net.forward(&[0.0; 5], &net.initial_hidden()),
            Err(Error::DimensionMismatch {
                expected: 31,
                got: 5
            })
        ));
    }

    #[test]
    fn deterministic() {
        let net = QNetwork::init(shape(31, 16, 16), &mut stream_rng(1, &[]));
        let xs: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 * 0.1; 31]).collect();
        let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        assert_eq!(
            net.forward_sequence(&refs).unwrap(),
            net.forward_sequence(&refs).unwrap()
        );
    }

    /// One hidden unit, one dense unit, hand-set weights; the two-step
    /// recurrence evaluated in closed form.
    #[test]
    fn hand_computed_cell() {
        let mut net = QNetwork::zeros(shape(1, 1, 1));
        // w_ih = [a_r, a_z, a_n], w_hh = [c_r, c_z, c_n], biases, w_d, b_d, w_o, b_o
        let (ar, az, an) = (0.5, -0.3, 0.8);
        let (cr, cz, cn) = (0.2, 0.4, -0.6);
        let (bir, biz, bin) = (0.1, 0.0, -0.1);
        let (bhr, bhz, bhn) = (0.0, 0.2, 0.05);
        let (wd, bd) = (1.5, -0.2);
        let wo = [1.0, -2.0, 0.5, 3.0];
        let bo = [0.1, 0.2, 0.3, 0.4];
        let mut p = vec![ar, az, an, cr, cz, cn, bir, biz, bin, bhr, bhz, bhn, wd, bd];
        p.extend(wo);
        p.extend(bo);
        net.params = p;
        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut h = 0.0f64;
        let mut expect = Vec::new();
        for x in [1.0f64, -0.5] {
            let r = s(ar * x + bir + cr * h + bhr);
            let z = s(az * x + biz + cz * h + bhz);
            let n = (an * x + bin + r * (cn * h + bhn)).tanh();
            h = (1.0 - z) * n + z * h;
            let dv = (wd * h + bd).tanh();
            let q: Vec<f64> = (0..4).map(|a| wo[a] * dv + bo[a]).collect();
            expect.push(q);
        }
        let got = net.forward_sequence(&[&[1.0], &[-0.5]]).unwrap();
        for (g, e) in got.iter().zip(&expect) {
            for a in 0..4 {
                assert!((g[a] - e[a]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn greedy_breaks_ties_low() {
        assert_eq!(QNetwork::greedy(&[1.0, 5.0, 2.0, 0.0]), Action::PitSoft);
        assert_eq!(QNetwork::greedy(&[3.0, 3.0, 0.0, 0.0]), Action::NoPit);
    }
}
