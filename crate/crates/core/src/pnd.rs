//! Photon-number distributions with certified truncation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dataset::format_number;
use crate::error::{Error, Result};
use crate::fock;
use crate::gaussian::GaussianState;
use crate::hermite::LevelSweep;
use crate::numerics::{ln_binomial, ln_factorial, KahanSum};

/// Default tail target for adaptive cutoffs.
pub const DEFAULT_TAIL_TOL: f64 = 1e-10;
/// Default total-photon cap for two or more modes.
pub const DEFAULT_MULTIMODE_CAP: usize = 60;
/// Default photon cap for a single mode.
pub const DEFAULT_SINGLE_MODE_CAP: usize = 20_000;
/// Largest number of complex recurrence entries held in one photon-number level.
pub const LEVEL_ENTRY_BUDGET: usize = 8_000_000;

/// Largest total photon number whose level fits the entry budget, capped at `cap`.
pub fn memory_cap(num_modes: usize, cap: usize) -> usize {
    let per_node = 1 + num_modes + num_modes * num_modes;
    (1..=cap).take_while(|&n| fock::level_size(num_modes, n).saturating_mul(per_node) <= LEVEL_ENTRY_BUDGET).last().unwrap_or(1)
}

/// Truncated photon-number distribution over outcomes with at most `cutoff` photons in total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pnd {
    num_modes: usize,
    cutoff: usize,
    probs: Vec<f64>,
    tail_bound: f64,
}

impl Pnd {
    /// Builds a distribution from probabilities in total-degree order.
    pub fn from_probs(num_modes: usize, cutoff: usize, probs: Vec<f64>) -> Result<Self> {
        if num_modes == 0 {
            return Err(Error::Dimension("distribution has no modes".into()));
        }
        let expected = fock::level_offset(num_modes, cutoff + 1);
        if probs.len() != expected {
            return Err(Error::Dimension(format!("{} probabilities, expected {expected}", probs.len())));
        }
        let probs: Vec<f64> = probs.into_iter().map(|p| p.clamp(0.0, 1.0)).collect();
        let total: f64 = probs.iter().copied().collect::<KahanSum>().value();
        if total > 1.0 + 1e-12 {
            return Err(Error::Unphysical(format!("probabilities sum to {total}")));
        }
        Ok(Self { num_modes, cutoff, tail_bound: (1.0 - total).max(0.0), probs })
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// Probabilities in total-degree order (see [`crate::fock`]).
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().copied().collect::<KahanSum>().value()
    }

    /// Probability of an outcome; zero beyond the cutoff.
    pub fn get(&self, outcome: &[usize]) -> f64 {
        if outcome.len() != self.num_modes || outcome.iter().sum::<usize>() > self.cutoff {
            return 0.0;
        }
        self.probs[fock::index_of(outcome)]
    }

    /// `(outcome, probability)` pairs in enumeration order.
    pub fn iter(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        (0..=self.cutoff).flat_map(move |n| fock::level(self.num_modes, n)).zip(self.probs.iter().copied())
    }

    /// Probability of each total photon number.
    pub fn total_photon_marginal(&self) -> Vec<f64> {
        (0..=self.cutoff)
            .map(|n| {
                let lo = fock::level_offset(self.num_modes, n);
                let hi = fock::level_offset(self.num_modes, n + 1);
                self.probs[lo..hi].iter().sum()
            })
            .collect()
    }

    /// Mean photon number per mode over the retained outcomes.
    pub fn mean_photons(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.num_modes];
        for (c, p) in self.iter() {
            for (o, &ci) in out.iter_mut().zip(&c) {
                *o += ci as f64 * p;
            }
        }
        out
    }

    /// Same distribution truncated to a smaller cutoff.
    pub fn truncated(&self, cutoff: usize) -> Pnd {
        if cutoff >= self.cutoff {
            return self.clone();
        }
        let n = fock::level_offset(self.num_modes, cutoff + 1);
        Pnd::from_probs(self.num_modes, cutoff, self.probs[..n].to_vec()).expect("prefix of a valid distribution")
    }

    /// CSV with columns `m1..mM,probability`, one row per retained outcome.
    pub fn to_csv(&self) -> String {
        let mut s: String = (1..=self.num_modes).map(|k| format!("m{k},")).collect();
        s.push_str("probability\n");
        for (outcome, p) in self.iter() {
            for n in outcome {
                s.push_str(&format!("{n},"));
            }
            s.push_str(&format_number(p));
            s.push('\n');
        }
        s
    }
}

/// Truncation controls for the distribution engines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PndOptions {
    /// Stop once the omitted mass falls below this value.
    pub tail_tol: f64,
    /// Hard cap on the total photon number; `None` picks a per-mode-count default.
    pub max_cutoff: Option<usize>,
    /// Compute exactly this many photons regardless of the tail.
    pub fixed_cutoff: Option<usize>,
    /// Fail when the cap is reached before the tail target.
    pub strict: bool,
}

impl Default for PndOptions {
    fn default() -> Self {
        Self { tail_tol: DEFAULT_TAIL_TOL, max_cutoff: None, fixed_cutoff: None, strict: true }
    }
}

impl PndOptions {
    pub fn fixed(cutoff: usize) -> Self {
        Self { fixed_cutoff: Some(cutoff), strict: false, ..Self::default() }
    }

    pub fn lenient() -> Self {
        Self { strict: false, ..Self::default() }
    }

    pub fn with_tail(mut self, tol: f64) -> Self {
        self.tail_tol = tol;
        self
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.max_cutoff = Some(cap);
        self
    }

    pub fn cap_for(&self, num_modes: usize) -> usize {
        self.max_cutoff.unwrap_or_else(|| {
            if num_modes == 1 {
                DEFAULT_SINGLE_MODE_CAP
            } else {
                memory_cap(num_modes, DEFAULT_MULTIMODE_CAP)
            }
        })
    }
}

/// Photon-number distribution of any Gaussian state.
pub fn pnd_gaussian(state: &GaussianState, opts: &PndOptions) -> Result<Pnd> {
    state.check_physical()?;
    let m = state.num_modes();
    let mut sweep = LevelSweep::new(state)?;
    let cap = opts.fixed_cutoff.unwrap_or_else(|| opts.cap_for(m));
    let mut probs = Vec::new();
    let mut total = KahanSum::new();
    let mut n = 0;
    loop {
        let level = sweep.next_level();
        for &p in &level {
            total.add(p.max(0.0));
        }
        probs.extend(level);
        let tail = 1.0 - total.value();
        if opts.fixed_cutoff.is_none() && tail < opts.tail_tol {
            break;
        }
        if n >= cap {
            if opts.strict && opts.fixed_cutoff.is_none() {
                return Err(Error::CutoffExhausted { cutoff: cap, tail });
            }
            break;
        }
        n += 1;
    }
    Pnd::from_probs(m, n, probs)
}

fn single_mode(probs: Vec<f64>) -> Pnd {
    let cutoff = probs.len() - 1;
    Pnd::from_probs(1, cutoff, probs).expect("single-mode probabilities are valid")
}

/// Lossless squeezed vacuum: `P(2n) = (2n)! tanh^{2n} ξ / (4^n (n!)² cosh ξ)`.
pub fn pnd_squeezed_vacuum(xi: f64, cutoff: usize) -> Pnd {
    let r = xi.abs();
    let (ln_t, ln_c) = (r.tanh().ln(), r.cosh().ln());
    let probs = (0..=cutoff)
        .map(|m| {
            if m % 2 == 1 {
                0.0
            } else if m == 0 {
                1.0 / r.cosh()
            } else {
                let n = (m / 2) as u64;
                (ln_factorial(2 * n) - 2.0 * ln_factorial(n) - (m as f64) * std::f64::consts::LN_2 + m as f64 * ln_t - ln_c).exp()
            }
        })
        .collect();
    single_mode(probs)
}

/// Thermal occupation and squeezing of the squeezed thermal state equal to a lossy squeezed vacuum.
pub fn lossy_params(xi: f64, eta: f64) -> (f64, f64) {
    let r = xi.abs();
    let s = eta * eta + (1.0 - eta).powi(2) + 2.0 * eta * (1.0 - eta) * (2.0 * r).cosh();
    let mu = (0.5 * s.sqrt() - 0.5).max(0.0);
    let zeta = 0.5 * (eta * (2.0 * r).sinh() / (2.0 * mu + 1.0)).asinh();
    (mu, zeta)
}

fn ln_pow(base_ln: f64, power: usize) -> Option<f64> {
    if power == 0 {
        Some(0.0)
    } else if base_ln == f64::NEG_INFINITY {
        None
    } else {
        Some(power as f64 * base_ln)
    }
}

fn log_sum(logs: &[f64]) -> f64 {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let s: KahanSum = logs.iter().map(|&l| (l - max).exp()).collect();
    max + s.value().ln()
}

/// Lossy squeezed vacuum via the squeezed-thermal closed form with a terminating hypergeometric sum.
pub fn pnd_lossy_squeezed_vacuum(xi: f64, eta: f64, cutoff: usize) -> Result<Pnd> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Transmissivity(eta));
    }
    let (mu, zeta) = lossy_params(xi, eta);
    let ln_thermal = (mu * (1.0 + mu)).ln();
    let ln_pair = ((1.0 + 2.0 * mu) * (2.0 * zeta).sinh() / 2.0).ln();
    let ln_den = (mu * mu + (1.0 + 2.0 * mu) * zeta.cosh().powi(2)).ln();
    let ln_d0 = ((1.0 + mu).powi(2) + (1.0 + 2.0 * mu) * zeta.sinh().powi(2)).ln();
    let mut logs = Vec::new();
    let probs = (0..=cutoff)
        .map(|m| {
            logs.clear();
            let (a, b) = ((1.0 - m as f64) / 2.0, -(m as f64) / 2.0);
            let mut ln_c = 0.0;
            for k in 0..=m / 2 {
                if k > 0 {
                    let kf = (k - 1) as f64;
                    ln_c += ((a + kf) * (b + kf)).abs().ln() - 2.0 * (k as f64).ln();
                }
                if let (Some(t), Some(p)) = (ln_pow(ln_thermal, m - 2 * k), ln_pow(ln_pair, 2 * k)) {
                    logs.push(ln_c + t + p);
                }
            }
            (log_sum(&logs) - m as f64 * ln_den - 0.5 * ln_d0).exp()
        })
        .collect();
    Ok(single_mode(probs))
}

/// Effective parameters of the lossy displaced squeezed state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplacedLossyParams {
    pub mu: f64,
    pub zeta: f64,
    pub squeeze_phase: f64,
    pub amplitude: f64,
    pub gamma: f64,
}

impl DisplacedLossyParams {
    pub fn new(xi: Complex64, alpha: Complex64, eta: f64) -> Self {
        let r = xi.norm();
        let phx = if r > 0.0 { xi.arg() } else { 0.0 };
        let a = alpha.norm();
        let pha = if a > 0.0 { alpha.arg() } else { 0.0 };
        let (mu, zeta) = lossy_params(r, eta);
        let se = eta.sqrt() * a;
        let amplitude = se * ((2.0 * zeta).sinh() * (2.0 * pha - phx).cos() + (2.0 * zeta).cosh()).max(0.0).sqrt();
        let g = Complex64::from_polar(se, -(pha - phx)) * zeta.sinh() + Complex64::from_polar(se, pha) * zeta.cosh();
        Self { mu, zeta, squeeze_phase: phx, amplitude, gamma: if g.norm() > 0.0 { g.arg() } else { 0.0 } }
    }

    fn den(&self) -> f64 {
        let (mu, z) = (self.mu, self.zeta);
        mu * (mu + (2.0 * z).cosh() + 1.0) + z.cosh().powi(2)
    }

    /// Reciprocal of the thermal base, finite at zero occupation.
    fn w(&self) -> f64 {
        let (mu, z) = (self.mu, self.zeta);
        mu * (mu + 1.0) / (mu * z.sinh().powi(2) + (mu + 1.0) * z.cosh().powi(2) + mu * (mu + 1.0))
    }

    fn prefactor(&self) -> f64 {
        let (mu, z, a) = (self.mu, self.zeta, self.amplitude);
        (a * a * (-2.0 * mu + (2.0 * z).sinh() * (2.0 * self.gamma - self.squeeze_phase).cos() - 2.0 * z.cosh().powi(2))
            / (2.0 * self.den()))
        .exp()
    }

    fn pair(&self, sign: f64) -> Complex64 {
        Complex64::from_polar((2.0 * self.zeta).sinh() * (2.0 * self.mu + 1.0), sign * self.squeeze_phase)
    }

    fn linear(&self, sign: f64) -> Complex64 {
        let (mu, z, a, g, ph) = (self.mu, self.zeta, self.amplitude, self.gamma, self.squeeze_phase);
        Complex64::from_polar(a * z.cosh() * (mu + 1.0), sign * -g) + Complex64::from_polar(a * z.sinh() * mu, sign * (g - ph))
    }
}

/// Lossy displaced squeezed state, literal four-fold sum (cost grows as `m⁴`).
pub fn pnd_lossy_displaced_squeezed_direct(xi: Complex64, alpha: Complex64, eta: f64, cutoff: usize) -> Result<Pnd> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Transmissivity(eta));
    }
    let prm = DisplacedLossyParams::new(xi, alpha, eta);
    let (a1, b1, a2, b2) = (prm.pair(-1.0), prm.linear(1.0), prm.pair(1.0), prm.linear(-1.0));
    let (d, w) = (prm.den(), prm.w());
    let pref = prm.prefactor();
    let lf = |n: usize| ln_factorial(n as u64);
    let probs = (0..=cutoff)
        .map(|m| {
            let mut re = KahanSum::new();
            for k in 0..=m {
                for l in 0..=(m - k) / 2 {
                    let s = k + 2 * l;
                    let Some(ln_w) = ln_pow(w.ln(), m - s) else { continue };
                    for lp in 0..=s / 2 {
                        let kp = s - 2 * lp;
                        let sign = if (l + lp) % 2 == 0 { 1.0 } else { -1.0 };
                        let ln_coef =
                            lf(m) - lf(m - s) - lf(k) - lf(kp) - lf(l) - lf(lp) - 2.0 * (l + lp) as f64 * std::f64::consts::LN_2
                                + ln_w
                                - (k + kp + l + lp) as f64 * d.ln();
                        let z = a1.powu(l as u32) * b1.powu(k as u32) * a2.powu(lp as u32) * b2.powu(kp as u32);
                        re.add(sign * ln_coef.exp() * z.re);
                    }
                }
            }
            pref * re.value() / d.sqrt()
        })
        .collect();
    Ok(single_mode(probs))
}

/// Lossy displaced squeezed state, with the four-fold sum factorized into a
/// three-term recurrence and a binomial sum per outcome.
pub fn pnd_lossy_displaced_squeezed(xi: Complex64, alpha: Complex64, eta: f64, cutoff: usize) -> Result<Pnd> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Transmissivity(eta));
    }
    let prm = DisplacedLossyParams::new(xi, alpha, eta);
    let d = prm.den();
    let lin = prm.linear(1.0) / d;
    let quad = -prm.pair(-1.0) / (4.0 * d);
    // h[s] = √(s!)·[t^s] exp(lin·t + quad·t²)
    let mut h = Vec::with_capacity(cutoff + 1);
    h.push(Complex64::new(1.0, 0.0));
    for s in 0..cutoff {
        let prev = if s > 0 { h[s - 1] } else { Complex64::new(0.0, 0.0) };
        let next = (lin * h[s] + 2.0 * quad * (s as f64).sqrt() * prev) / ((s + 1) as f64).sqrt();
        h.push(next);
    }
    let ln_w = prm.w().ln();
    let pref = prm.prefactor() / d.sqrt();
    let mut logs = Vec::new();
    let probs = (0..=cutoff)
        .map(|m| {
            logs.clear();
            for (s, hs) in h.iter().enumerate().take(m + 1) {
                let mag = hs.norm_sqr();
                if mag == 0.0 {
                    continue;
                }
                if let Some(lw) = ln_pow(ln_w, m - s) {
                    logs.push(ln_binomial(m as u64, s as u64) + lw + mag.ln());
                }
            }
            pref * log_sum(&logs).exp()
        })
        .collect();
    Ok(single_mode(probs))
}

/// Total variation distance and its truncation uncertainty.
pub fn total_variation(p: &Pnd, q: &Pnd) -> Result<(f64, f64)> {
    if p.num_modes != q.num_modes {
        return Err(Error::Dimension(format!("distributions over {} and {} modes", p.num_modes, q.num_modes)));
    }
    let n = p.probs.len().max(q.probs.len());
    let sum: KahanSum =
        (0..n).map(|i| (p.probs.get(i).copied().unwrap_or(0.0) - q.probs.get(i).copied().unwrap_or(0.0)).abs()).collect();
    Ok((0.5 * sum.value(), 0.5 * (p.tail_bound + q.tail_bound)))
}

/// Even, odd and vacuum contributions to the distance from an even-supported target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParitySplit {
    pub delta_even: f64,
    pub delta_odd: f64,
    pub delta_vac: f64,
}

impl ParitySplit {
    pub fn total(&self) -> f64 {
        self.delta_even + self.delta_odd
    }
}

/// Splits the distance by parity of the total photon number.
pub fn parity_split(target: &Pnd, lossy: &Pnd) -> Result<ParitySplit> {
    if target.num_modes != lossy.num_modes {
        return Err(Error::Dimension("parity split needs equal mode counts".into()));
    }
    let pt = target.total_photon_marginal();
    let pl = lossy.total_photon_marginal();
    if let Some((n, &v)) = pt.iter().enumerate().find(|(n, &v)| n % 2 == 1 && v > 1e-12) {
        return Err(Error::InvalidArgument(format!("target has odd support: P({n}) = {v:.3e}")));
    }
    let (mut even, mut odd) = (KahanSum::new(), KahanSum::new());
    let levels = pt.len().max(pl.len());
    for n in 0..levels {
        let a = pt.get(n).copied().unwrap_or(0.0);
        let b = pl.get(n).copied().unwrap_or(0.0);
        if target.num_modes == 1 || n % 2 == 1 {
            if n % 2 == 0 {
                even.add((a - b).abs());
            } else {
                odd.add(b);
            }
        } else {
            let lo = fock::level_offset(target.num_modes, n);
            let hi = fock::level_offset(target.num_modes, n + 1);
            for i in lo..hi {
                even.add((target.probs.get(i).copied().unwrap_or(0.0) - lossy.probs.get(i).copied().unwrap_or(0.0)).abs());
            }
        }
    }
    let delta_vac = 0.5 * (target.probs[0] - lossy.probs[0]).abs();
    Ok(ParitySplit { delta_even: 0.5 * even.value(), delta_odd: 0.5 * odd.value(), delta_vac })
}

/// Vacuum probability of a lossy squeezed vacuum.
pub fn lossy_vacuum_probability(xi: f64, eta: f64) -> f64 {
    1.0 / (1.0 + eta * (2.0 - eta) * xi.sinh().powi(2)).sqrt()
}

/// Odd-photon mass of a lossy squeezed vacuum, halved.
pub fn odd_half_mass(xi: f64, eta: f64) -> f64 {
    0.25 * (1.0 - 1.0 / (1.0 + 4.0 * eta * (1.0 - eta) * xi.sinh().powi(2)).sqrt())
}

/// Lower bound on the distance between a squeezed-vacuum target and a lossy squeezed vacuum.
pub fn delta_lower_bound(xi_tilde: f64, xi: f64, eta: f64) -> f64 {
    0.5 * (1.0 / xi_tilde.cosh() - lossy_vacuum_probability(xi, eta)).abs() + odd_half_mass(xi, eta)
}
