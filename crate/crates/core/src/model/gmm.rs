//! Bivariate Gaussian mixtures over box coordinates.
//!
//! Each head emits `6K` raw values per step laid out as
//! `[π logits | μx | μy | log σx | log σy | ρ pre-tanh]`.
//! Coordinates are standardized: component values `v` become `2(v − 0.5)`
//! and predicate offsets `d` become `2d`, so a unit normal prior is
//! reasonable.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::graph::{log_sum_exp, softmax_in_place};
use crate::nn::{Graph, Tensor, Var};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn standardize(v: f64) -> f64 {
    (v - 0.5) * 2.0
}

pub fn destandardize(z: f64) -> f64 {
    z * 0.5 + 0.5
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gaussian2 {
    pub mu: [f64; 2],
    pub sigma: [f64; 2],
    pub rho: f64,
}

impl Gaussian2 {
    pub fn standard() -> Self {
        Gaussian2 {
            mu: [0.0, 0.0],
            sigma: [1.0, 1.0],
            rho: 0.0,
        }
    }

    pub fn log_density(&self, b: [f64; 2]) -> f64 {
        let one_minus = 1.0 - self.rho * self.rho;
        let dx = (b[0] - self.mu[0]) / self.sigma[0];
        let dy = (b[1] - self.mu[1]) / self.sigma[1];
        let q = dx * dx + dy * dy - 2.0 * self.rho * dx * dy;
        -LN_2PI
            - self.sigma[0].ln()
            - self.sigma[1].ln()
            - 0.5 * one_minus.ln()
            - 0.5 * q / one_minus
    }

    /// KL(self ‖ N(0, I)).
    pub fn kl_to_standard(&self) -> f64 {
        let [sx, sy] = self.sigma;
        let [mx, my] = self.mu;
        0.5 * (sx * sx + sy * sy + mx * mx + my * my - 2.0)
            - sx.ln()
            - sy.ln()
            - 0.5 * (1.0 - self.rho * self.rho).ln()
    }
}

/// One head at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct Mixture2 {
    /// Mixture weights (log space) and components.
    pub log_pi: Vec<f64>,
    pub components: Vec<Gaussian2>,
}

impl Mixture2 {
    pub fn new(pi: &[f64], components: Vec<Gaussian2>) -> Self {
        Mixture2 {
            log_pi: pi.iter().map(|p| p.ln()).collect(),
            components,
        }
    }

    /// Decode a raw `6K` row.
    pub fn from_raw(row: &[f64], k: usize) -> Result<Self> {
        if row.len() != 6 * k || k == 0 {
            return Err(Error::shape("mixture row", &[row.len()], &[6 * k]));
        }
        let logits = &row[..k];
        let lse = log_sum_exp(logits);
        let log_pi = logits.iter().map(|l| l - lse).collect();
        let components = (0..k)
            .map(|i| Gaussian2 {
                mu: [row[k + i], row[2 * k + i]],
                sigma: [row[3 * k + i].exp(), row[4 * k + i].exp()],
                rho: row[5 * k + i].tanh(),
            })
            .collect();
        Ok(Mixture2 { log_pi, components })
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn pi(&self) -> Vec<f64> {
        self.log_pi.iter().map(|l| l.exp()).collect()
    }

    /// `−(1/K) log Σ π_i N(b; θ_i)`.
    pub fn nll(&self, b: [f64; 2]) -> f64 {
        let terms: Vec<f64> = self
            .log_pi
            .iter()
            .zip(&self.components)
            .map(|(lp, c)| lp + c.log_density(b))
            .collect();
        -log_sum_exp(&terms) / self.k() as f64
    }

    /// `Σ_i KL(N(θ_i) ‖ N(0, I))`, unweighted: the prior regularizes every
    /// component's shape and leaves the mixture weights to the likelihood.
    pub fn kl_to_prior(&self) -> f64 {
        self.components.iter().map(Gaussian2::kl_to_standard).sum()
    }

    pub fn mean(&self) -> [f64; 2] {
        let pi = self.pi();
        let mut m = [0.0; 2];
        for (p, c) in pi.iter().zip(&self.components) {
            m[0] += p * c.mu[0];
            m[1] += p * c.mu[1];
        }
        m
    }

    /// Temperature sampling. The mixture weights are sharpened to
    /// `softmax(log π / τ)` and every σ is scaled by τ; `τ = 0` returns the
    /// mean of the most likely component without touching `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, temperature: f64, rng: &mut R) -> [f64; 2] {
        if temperature <= 0.0 {
            let mut best = 0;
            for (i, lp) in self.log_pi.iter().enumerate() {
                if *lp > self.log_pi[best] {
                    best = i;
                }
            }
            return self.components[best].mu;
        }
        let mut w: Vec<f64> = self.log_pi.iter().map(|l| l / temperature).collect();
        softmax_in_place(&mut w);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = w.len() - 1;
        for (i, p) in w.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = i;
                break;
            }
        }
        let c = &self.components[pick];
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        let sx = temperature * c.sigma[0];
        let sy = temperature * c.sigma[1];
        [
            c.mu[0] + sx * z1,
            c.mu[1] + sy * (c.rho * z1 + (1.0 - c.rho * c.rho).sqrt() * z2),
        ]
    }
}

/// Mixture parameters of one decoding step.
#[derive(Clone, Debug, PartialEq)]
pub struct GmmParams {
    pub position: Mixture2,
    pub size: Mixture2,
}

/// Differentiable per-row terms of one head.
pub struct HeadTerms {
    /// `n × 1` negative log-likelihoods (with the 1/K factor).
    pub nll: Var,
    /// `n × 1` summed component KLs to the standard normal.
    pub kl: Var,
}

/// NLL and KL of the rows of a raw head output against standardized
/// targets (`n × 2`).
pub fn head_terms(g: &mut Graph<'_>, raw: Var, targets: &Tensor, k: usize) -> Result<HeadTerms> {
    let (n, c) = g.value(raw).dims();
    if c != 6 * k || targets.dims() != (n, 2) {
        return Err(Error::shape("mixture head", g.shape(raw), targets.shape()));
    }
    let logits = g.slice_cols(raw, 0, k)?;
    let mux = g.slice_cols(raw, k, k)?;
    let muy = g.slice_cols(raw, 2 * k, k)?;
    let lsx = g.slice_cols(raw, 3 * k, k)?;
    let lsy = g.slice_cols(raw, 4 * k, k)?;
    let rr = g.slice_cols(raw, 5 * k, k)?;

    let repeat = |col: usize| {
        let data = (0..n)
            .flat_map(|r| std::iter::repeat_n(targets.get(r, col), k))
            .collect();
        Tensor::matrix(n, k, data).expect("target block")
    };
    let tx = g.constant(repeat(0));
    let ty = g.constant(repeat(1));

    let nlsx = g.scale(lsx, -1.0);
    let inv_sx = g.exp(nlsx);
    let nlsy = g.scale(lsy, -1.0);
    let inv_sy = g.exp(nlsy);
    let ex = g.sub(tx, mux)?;
    let dx = g.mul(ex, inv_sx)?;
    let ey = g.sub(ty, muy)?;
    let dy = g.mul(ey, inv_sy)?;
    let rho = g.tanh(rr);
    // log(1 − ρ²)
    let l1r = g.log_sech2(rr);

    let dx2 = g.square(dx);
    let dy2 = g.square(dy);
    let dxy = g.mul(dx, dy)?;
    let cross = g.mul(rho, dxy)?;
    let cross = g.scale(cross, 2.0);
    let q = g.add(dx2, dy2)?;
    let q = g.sub(q, cross)?;
    let nl1r = g.scale(l1r, -1.0);
    let inv1r = g.exp(nl1r);
    let quad = g.mul(q, inv1r)?;

    // −log N = ln 2π + ln σx + ln σy + ½ ln(1−ρ²) + ½ q/(1−ρ²)
    let half_l1r = g.scale(l1r, 0.5);
    let half_quad = g.scale(quad, 0.5);
    let neg = g.add(lsx, lsy)?;
    let neg = g.add(neg, half_l1r)?;
    let neg = g.add(neg, half_quad)?;
    let neg = g.add_scalar(neg, LN_2PI);
    let log_n = g.scale(neg, -1.0);

    let log_pi = g.log_softmax_rows(logits);
    let joint = g.add(log_pi, log_n)?;
    let lse = g.log_sum_exp_rows(joint);
    let nll = g.scale(lse, -1.0 / k as f64);

    // KL_i = ½(σx² + σy² + μx² + μy² − 2) − ln σx − ln σy − ½ ln(1−ρ²)
    let lsx2 = g.scale(lsx, 2.0);
    let sx2 = g.exp(lsx2);
    let lsy2 = g.scale(lsy, 2.0);
    let sy2 = g.exp(lsy2);
    let mx2 = g.square(mux);
    let my2 = g.square(muy);
    let s = g.add(sx2, sy2)?;
    let s = g.add(s, mx2)?;
    let s = g.add(s, my2)?;
    let s = g.add_scalar(s, -2.0);
    let s = g.scale(s, 0.5);
    let s = g.sub(s, lsx)?;
    let s = g.sub(s, lsy)?;
    let half = g.scale(l1r, 0.5);
    let kl_i = g.sub(s, half)?;
    let kl = g.row_sum(kl_i);
    Ok(HeadTerms { nll, kl })
}

/// π-weighted mean of each row's mixture, `n × 2`, standardized units.
pub fn head_mean(g: &mut Graph<'_>, raw: Var, k: usize) -> Result<Var> {
    let logits = g.slice_cols(raw, 0, k)?;
    let pi = g.softmax_rows(logits);
    let mux = g.slice_cols(raw, k, k)?;
    let muy = g.slice_cols(raw, 2 * k, k)?;
    let wx = g.mul(pi, mux)?;
    let wy = g.mul(pi, muy)?;
    let mx = g.row_sum(wx);
    let my = g.row_sum(wy);
    g.concat_cols(&[mx, my])
}

/// Raw `6K` row encoding the given mixture, inverse of
/// [`Mixture2::from_raw`] up to the softmax shift.
pub fn encode_raw(pi: &[f64], components: &[Gaussian2]) -> Vec<f64> {
    let k = components.len();
    let mut row = vec![0.0; 6 * k];
    for i in 0..k {
        let c = components[i];
        row[i] = pi[i].ln();
        row[k + i] = c.mu[0];
        row[2 * k + i] = c.mu[1];
        row[3 * k + i] = c.sigma[0].ln();
        row[4 * k + i] = c.sigma[1].ln();
        row[5 * k + i] = c.rho.atanh();
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit() -> Mixture2 {
        Mixture2::new(&[1.0], vec![Gaussian2::standard()])
    }

    #[test]
    fn ln_2pi_constant() {
        assert!((LN_2PI - (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn nll_closed_forms() {
        let m = unit();
        assert!((m.nll([0.0, 0.0]) - LN_2PI).abs() < 1e-12);
        assert!((m.nll([1.0, 0.0]) - (LN_2PI + 0.5)).abs() < 1e-12);
        let twin = Mixture2::new(&[0.5, 0.5], vec![Gaussian2::standard(); 2]);
        assert!((twin.nll([0.3, -0.2]) - m.nll([0.3, -0.2]) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn kl_closed_forms() {
        assert_eq!(unit().kl_to_prior(), 0.0);
        let shifted = Mixture2::new(
            &[1.0],
            vec![Gaussian2 {
                mu: [1.0, 0.0],
                ..Gaussian2::standard()
            }],
        );
        assert!((shifted.kl_to_prior() - 0.5).abs() < 1e-12);
        // Components add up regardless of their weights.
        let pair = Mixture2::new(
            &[0.9, 0.1],
            vec![shifted.components[0], Gaussian2::standard()],
        );
        assert!((pair.kl_to_prior() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn graph_terms_match_plain() {
        let comps = vec![
            Gaussian2 {
                mu: [0.2, -0.4],
                sigma: [0.7, 1.3],
                rho: 0.35,
            },
            Gaussian2 {
                mu: [-1.0, 0.5],
                sigma: [0.2, 0.9],
                rho: -0.8,
            },
        ];
        let pi = [0.3, 0.7];
        let row = encode_raw(&pi, &comps);
        let mix = Mixture2::from_raw(&row, 2).unwrap();
        let target = [0.1, 0.25];
        let mut g = Graph::detached();
        let raw = g.constant(Tensor::matrix(1, 12, row).unwrap());
        let t = Tensor::from_rows(&[target]).unwrap();
        let terms = head_terms(&mut g, raw, &t, 2).unwrap();
        assert!((g.value(terms.nll).item() - mix.nll(target)).abs() < 1e-12);
        assert!((g.value(terms.kl).item() - mix.kl_to_prior()).abs() < 1e-12);
        let mean = head_mean(&mut g, raw, 2).unwrap();
        let m = mix.mean();
        assert!((g.value(mean).get(0, 0) - m[0]).abs() < 1e-12);
        assert!((g.value(mean).get(0, 1) - m[1]).abs() < 1e-12);
    }

    #[test]
    fn pi_sums_to_one() {
        let row: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let mix = Mixture2::from_raw(&row, 5).unwrap();
        assert!((mix.pi().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(mix
            .components
            .iter()
            .all(|c| c.sigma[0] > 0.0 && c.rho.abs() < 1.0));
    }

    #[test]
    fn zero_temperature_is_dominant_mean() {
        let comps = vec![
            Gaussian2 {
                mu: [0.1, 0.2],
                ..Gaussian2::standard()
            },
            Gaussian2 {
                mu: [0.9, 0.8],
                ..Gaussian2::standard()
            },
        ];
        let mix = Mixture2::new(&[0.4, 0.6], comps);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(mix.sample(0.0, &mut rng), [0.9, 0.8]);
        let a = mix.sample(1.0, &mut ChaCha8Rng::seed_from_u64(5));
        let b = mix.sample(1.0, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn correlated_sample_moments() {
        let g = Gaussian2 {
            mu: [0.3, -0.2],
            sigma: [0.5, 2.0],
            rho: 0.6,
        };
        let mix = Mixture2::new(&[1.0], vec![g]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let samples: Vec<[f64; 2]> = (0..n).map(|_| mix.sample(1.0, &mut rng)).collect();
        let mean = |d: usize| samples.iter().map(|s| s[d]).sum::<f64>() / n as f64;
        let (mx, my) = (mean(0), mean(1));
        assert!((mx - g.mu[0]).abs() < 4.0 * g.sigma[0] / (n as f64).sqrt());
        assert!((my - g.mu[1]).abs() < 4.0 * g.sigma[1] / (n as f64).sqrt());
        let cov = samples
            .iter()
            .map(|s| (s[0] - mx) * (s[1] - my))
            .sum::<f64>()
            / n as f64;
        let corr = cov / (g.sigma[0] * g.sigma[1]);
        assert!((corr - g.rho).abs() < 0.02, "{corr}");
    }
}
