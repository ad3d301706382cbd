//! Layered loss models: passive segments interleaved with per-mode loss layers.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{unitarity_deviation, GaussianChannel, GbsSpec, UNITARY_TOL};

/// Recomposition tolerance between the passive segments and the spec unitary.
pub const RECOMPOSE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerTag {
    Pre,
    Internal,
    Post,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Segment {
    Passive {
        #[serde(with = "crate::serde_matrix::complex")]
        unitary: DMatrix<Complex64>,
    },
    Loss {
        etas: Vec<f64>,
        tag: LayerTag,
    },
}

/// A two-mode mixing element `T(θ, φ)` acting on neighbouring modes.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamSplitter {
    pub modes: (usize, usize),
    pub theta: f64,
    pub phi: f64,
    pub layer: usize,
    pub block: Matrix2<Complex64>,
}

impl BeamSplitter {
    pub fn embed(&self, num_modes: usize) -> DMatrix<Complex64> {
        let mut u = DMatrix::identity(num_modes, num_modes);
        let (a, b) = self.modes;
        u[(a, a)] = self.block[(0, 0)];
        u[(a, b)] = self.block[(0, 1)];
        u[(b, a)] = self.block[(1, 0)];
        u[(b, b)] = self.block[(1, 1)];
        u
    }

    pub fn is_trivial(&self, tol: f64) -> bool {
        self.theta.abs() < tol
    }
}

/// Rectangular mesh of beam splitters plus a diagonal of phases.
///
/// Splitters are listed in the order in which light traverses them; the phase
/// screen sits at position `phase_position` within that list.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub num_modes: usize,
    pub splitters: Vec<BeamSplitter>,
    pub phases: Vec<f64>,
    pub phase_position: usize,
}

impl Decomposition {
    pub fn num_layers(&self) -> usize {
        self.splitters.iter().map(|b| b.layer + 1).max().unwrap_or(0)
    }

    pub fn phase_screen(&self) -> DMatrix<Complex64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.num_modes,
            self.phases.iter().map(|&p| Complex64::from_polar(1.0, p)),
        ))
    }

    pub fn recompose(&self) -> DMatrix<Complex64> {
        let m = self.num_modes;
        let mut u = DMatrix::identity(m, m);
        for (k, bs) in self.splitters.iter().enumerate() {
            if k == self.phase_position {
                u = self.phase_screen() * u;
            }
            u = bs.embed(m) * u;
        }
        if self.phase_position >= self.splitters.len() {
            u = self.phase_screen() * u;
        }
        u
    }
}

fn mixer(theta: f64, phi: f64) -> Matrix2<Complex64> {
    let e = Complex64::from_polar(1.0, phi);
    let (c, s) = (theta.cos(), theta.sin());
    Matrix2::new(e * c, Complex64::new(-s, 0.0), e * s, Complex64::new(c, 0.0))
}

fn apply_left(v: &mut DMatrix<Complex64>, a: usize, b: usize, t: &Matrix2<Complex64>) {
    for col in 0..v.ncols() {
        let (x, y) = (v[(a, col)], v[(b, col)]);
        v[(a, col)] = t[(0, 0)] * x + t[(0, 1)] * y;
        v[(b, col)] = t[(1, 0)] * x + t[(1, 1)] * y;
    }
}

fn apply_right(v: &mut DMatrix<Complex64>, a: usize, b: usize, t: &Matrix2<Complex64>) {
    for row in 0..v.nrows() {
        let (x, y) = (v[(row, a)], v[(row, b)]);
        v[(row, a)] = x * t[(0, 0)] + y * t[(1, 0)];
        v[(row, b)] = x * t[(0, 1)] + y * t[(1, 1)];
    }
}

/// Rectangular decomposition by alternately nulling lower-triangle entries from
/// the right and from the left.
pub fn decompose_interferometer(u: &DMatrix<Complex64>) -> Result<Decomposition> {
    let n = u.nrows();
    if n == 0 || u.ncols() != n {
        return Err(Error::Dimension(format!("interferometer is {}x{}", u.nrows(), u.ncols())));
    }
    let dev = unitarity_deviation(u);
    if dev > UNITARY_TOL {
        return Err(Error::NotUnitary(dev));
    }
    let tiny = 1e-15;
    let mut v = u.clone();
    // Factors applied from the right (in order) and from the left (in order).
    let mut right: Vec<(usize, f64, f64)> = Vec::new();
    let mut left: Vec<(usize, f64, f64)> = Vec::new();
    for (k, i) in (0..n.saturating_sub(1)).rev().enumerate() {
        if k % 2 == 0 {
            for j in (0..n - 1 - i).rev() {
                let row = i + j + 1;
                let (target, pivot) = (v[(row, j)], v[(row, j + 1)]);
                let (theta, phi) = if target.norm() < tiny {
                    (0.0, 0.0)
                } else {
                    let phi = if pivot.norm() < tiny { 0.0 } else { (target / pivot).arg() };
                    (target.norm().atan2(pivot.norm()), phi)
                };
                let t = mixer(theta, phi);
                apply_right(&mut v, j, j + 1, &t.adjoint());
                right.push((j, theta, phi));
            }
        } else {
            for j in 0..n - 1 - i {
                let row = i + j + 1;
                let (target, pivot) = (v[(row, j)], v[(row - 1, j)]);
                let (theta, phi) = if target.norm() < tiny {
                    (0.0, 0.0)
                } else {
                    let phi = if pivot.norm() < tiny { 0.0 } else { (-target / pivot).arg() };
                    (target.norm().atan2(pivot.norm()), phi)
                };
                let t = mixer(theta, phi);
                apply_left(&mut v, row - 1, row, &t);
                left.push((row - 1, theta, phi));
            }
        }
    }
    // Now v = L_p…L_1 · U · R_1†…R_q†, which is diagonal, so
    // U = L_1†…L_p† · D · R_q…R_1 and light meets R_1 first.
    let mut depth = vec![0usize; n];
    let mut splitters = Vec::with_capacity(right.len() + left.len());
    let mut push = |a: usize, theta: f64, phi: f64, block: Matrix2<Complex64>, list: &mut Vec<BeamSplitter>| {
        let layer = depth[a].max(depth[a + 1]);
        depth[a] = layer + 1;
        depth[a + 1] = layer + 1;
        list.push(BeamSplitter { modes: (a, a + 1), theta, phi: phi.rem_euclid(std::f64::consts::TAU), layer, block });
    };
    for &(a, theta, phi) in &right {
        push(a, theta, phi, mixer(theta, phi), &mut splitters);
    }
    let phase_position = splitters.len();
    for &(a, theta, phi) in left.iter().rev() {
        push(a, theta, phi, mixer(theta, phi).adjoint(), &mut splitters);
    }
    let phases = (0..n).map(|i| v[(i, i)].arg().rem_euclid(std::f64::consts::TAU)).collect();
    let dec = Decomposition { num_modes: n, splitters, phases, phase_position };
    let err = (dec.recompose() - u).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if err > RECOMPOSE_TOL {
        return Err(Error::NoSolution(format!("interferometer recomposition error {err:.3e}")));
    }
    Ok(dec)
}

/// Uniform ranges for randomly drawn transmissivities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaRanges {
    pub pre: (f64, f64),
    pub internal: (f64, f64),
    pub post: (f64, f64),
}

/// How the model was specified, kept so it can be rebuilt around a new interferometer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "lowercase")]
pub enum Layout {
    Explicit,
    Layered { pre: Vec<f64>, internal: Option<Vec<Vec<f64>>>, post: Vec<f64> },
}

/// Ordered passive and loss segments; light traverses them front to back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossModel {
    pub num_modes: usize,
    pub segments: Vec<Segment>,
    pub layout: Layout,
}

fn check_layer(etas: &[f64], m: usize, what: &str) -> Result<()> {
    if etas.len() != m {
        return Err(Error::Dimension(format!("{what} layer has {} transmissivities for {m} modes", etas.len())));
    }
    match etas.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        Some(&e) => Err(Error::Transmissivity(e)),
        None => Ok(()),
    }
}

fn check_range(range: (f64, f64)) -> Result<()> {
    let (lo, hi) = range;
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
        return Err(Error::InvalidArgument(format!("transmissivity range [{lo}, {hi}] is invalid")));
    }
    Ok(())
}

fn draw_layer(rng: &mut ChaCha20Rng, range: (f64, f64), m: usize) -> Vec<f64> {
    if range.0 == range.1 {
        return vec![range.0; m];
    }
    let dist = Uniform::new_inclusive(range.0, range.1).expect("range checked");
    (0..m).map(|_| dist.sample(rng)).collect()
}

impl LossModel {
    /// The lossless model: any spec propagates to its target.
    pub fn lossless(num_modes: usize) -> Self {
        Self { num_modes, segments: Vec::new(), layout: Layout::Explicit }
    }

    /// Explicit segment list, validated for widths and transmissivities.
    pub fn explicit(num_modes: usize, segments: Vec<Segment>) -> Result<Self> {
        for seg in &segments {
            match seg {
                Segment::Passive { unitary } => {
                    if unitary.nrows() != num_modes || unitary.ncols() != num_modes {
                        return Err(Error::Dimension(format!("passive segment is not {num_modes}x{num_modes}")));
                    }
                    let dev = unitarity_deviation(unitary);
                    if dev > UNITARY_TOL {
                        return Err(Error::NotUnitary(dev));
                    }
                }
                Segment::Loss { etas, .. } => check_layer(etas, num_modes, "loss")?,
            }
        }
        Ok(Self { num_modes, segments, layout: Layout::Explicit })
    }

    /// Uniform loss `eta` in every mode before and after the interferometer.
    pub fn uniform(u: &DMatrix<Complex64>, eta: f64) -> Result<Self> {
        let m = u.nrows();
        build_loss_model(u, &vec![eta; m], None, &vec![eta; m])
    }

    /// A single loss layer in front of the interferometer.
    pub fn input_loss(u: &DMatrix<Complex64>, etas: &[f64]) -> Result<Self> {
        build_loss_model(u, etas, None, &vec![1.0; u.nrows()])
    }

    /// Pre- and post-interferometer layers with random internal losses after every beam splitter.
    pub fn sampled(u: &DMatrix<Complex64>, ranges: EtaRanges, seed: u64) -> Result<Self> {
        check_range(ranges.pre)?;
        check_range(ranges.internal)?;
        check_range(ranges.post)?;
        let m = u.nrows();
        let layers = decompose_interferometer(u)?.num_layers();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let pre = draw_layer(&mut rng, ranges.pre, m);
        let internal: Vec<Vec<f64>> = (0..layers).map(|_| draw_layer(&mut rng, ranges.internal, m)).collect();
        let post = draw_layer(&mut rng, ranges.post, m);
        build_loss_model(u, &pre, Some(&internal), &post)
    }

    /// Product of all passive segments, ignoring loss.
    pub fn passive_unitary(&self) -> DMatrix<Complex64> {
        let m = self.num_modes;
        self.segments.iter().fold(DMatrix::identity(m, m), |acc, seg| match seg {
            Segment::Passive { unitary } => unitary * acc,
            Segment::Loss { .. } => acc,
        })
    }

    pub fn loss_layers(&self, tag: LayerTag) -> Vec<&[f64]> {
        self.segments
            .iter()
            .filter_map(|s| match s {
                Segment::Loss { etas, tag: t } if *t == tag => Some(etas.as_slice()),
                _ => None,
            })
            .collect()
    }

    pub fn is_lossless(&self) -> bool {
        self.segments.iter().all(|s| match s {
            Segment::Loss { etas, .. } => etas.iter().all(|&e| e == 1.0),
            Segment::Passive { .. } => true,
        })
    }

    /// Same loss placement around a different interferometer.
    pub fn with_interferometer(&self, u: &DMatrix<Complex64>) -> Result<LossModel> {
        match &self.layout {
            Layout::Layered { pre, internal, post } => build_loss_model(u, pre, internal.as_deref(), post),
            Layout::Explicit if self.segments.iter().all(|s| matches!(s, Segment::Loss { .. })) => {
                let mut segments = self.segments.clone();
                segments.push(Segment::Passive { unitary: u.clone() });
                LossModel::explicit(self.num_modes, segments)
            }
            Layout::Explicit => Err(Error::Unsupported(
                "explicit loss models with passive segments cannot be rebuilt around another interferometer".into(),
            )),
        }
    }

    /// Moment map of the whole chain.
    pub fn channel(&self) -> GaussianChannel {
        self.segments.iter().fold(GaussianChannel::identity(self.num_modes), |acc, seg| match seg {
            Segment::Passive { unitary } => acc.then(&GaussianChannel::passive(unitary)),
            Segment::Loss { etas, .. } => acc.then(&GaussianChannel::loss(etas)),
        })
    }

    /// Moment map realizing `spec.unitary` with this model's losses.
    pub fn channel_for(&self, spec: &GbsSpec) -> Result<GaussianChannel> {
        if spec.num_modes() != self.num_modes {
            return Err(Error::Dimension(format!("loss model has {} modes, spec has {}", self.num_modes, spec.num_modes())));
        }
        let composed = self.passive_unitary();
        let err = (&composed - &spec.unitary).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if err <= RECOMPOSE_TOL {
            return Ok(self.channel());
        }
        let no_passive = self.segments.iter().all(|s| matches!(s, Segment::Loss { .. }));
        if no_passive && self.segments.is_empty() {
            return Ok(GaussianChannel::passive(&spec.unitary));
        }
        if matches!(self.layout, Layout::Layered { .. }) || no_passive {
            return Ok(self.with_interferometer(&spec.unitary)?.channel());
        }
        Err(Error::Dimension(format!("passive segments differ from the spec unitary by {err:.3e}")))
    }
}

/// `Loss(pre)`, then the interferometer, then `Loss(post)`; with `internal`
/// the interferometer is decomposed and layer `l` loss follows every beam
/// splitter in mesh column `l`, acting on the two modes it couples.
pub fn build_loss_model(u: &DMatrix<Complex64>, pre: &[f64], internal: Option<&[Vec<f64>]>, post: &[f64]) -> Result<LossModel> {
    let m = u.nrows();
    let dev = unitarity_deviation(u);
    if u.ncols() != m {
        return Err(Error::Dimension("interferometer is not square".into()));
    }
    if dev > UNITARY_TOL {
        return Err(Error::NotUnitary(dev));
    }
    check_layer(pre, m, "pre")?;
    check_layer(post, m, "post")?;
    let mut segments = vec![Segment::Loss { etas: pre.to_vec(), tag: LayerTag::Pre }];
    match internal {
        None => segments.push(Segment::Passive { unitary: u.clone() }),
        Some(layers) => {
            let dec = decompose_interferometer(u)?;
            if layers.len() != dec.num_layers() {
                return Err(Error::Dimension(format!(
                    "{} internal layers for a mesh of depth {}",
                    layers.len(),
                    dec.num_layers()
                )));
            }
            for layer in layers {
                check_layer(layer, m, "internal")?;
            }
            for (k, bs) in dec.splitters.iter().enumerate() {
                if k == dec.phase_position {
                    segments.push(Segment::Passive { unitary: dec.phase_screen() });
                }
                segments.push(Segment::Passive { unitary: bs.embed(m) });
                let mut etas = vec![1.0; m];
                etas[bs.modes.0] = layers[bs.layer][bs.modes.0];
                etas[bs.modes.1] = layers[bs.layer][bs.modes.1];
                segments.push(Segment::Loss { etas, tag: LayerTag::Internal });
            }
            if dec.phase_position >= dec.splitters.len() {
                segments.push(Segment::Passive { unitary: dec.phase_screen() });
            }
        }
    }
    segments.push(Segment::Loss { etas: post.to_vec(), tag: LayerTag::Post });
    let layout = Layout::Layered { pre: pre.to_vec(), internal: internal.map(|l| l.to_vec()), post: post.to_vec() };
    Ok(LossModel { num_modes: m, segments, layout })
}

/// Complex amplitude transfer matrix of a passive-plus-loss chain.
pub fn amplitude_transfer(loss: &LossModel) -> DMatrix<Complex64> {
    let x = loss.channel().transfer;
    let m = loss.num_modes;
    DMatrix::from_fn(m, m, |i, j| Complex64::new(x[(2 * i, 2 * j)], x[(2 * i + 1, 2 * j)]))
}

/// Total output intensity per unit intensity injected into each input mode.
pub fn effective_transmissivity(loss: &LossModel) -> Vec<f64> {
    let t = amplitude_transfer(loss);
    (0..loss.num_modes).map(|j| t.column(j).iter().map(|z| z.norm_sqr()).sum()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{prepare_target, propagate, two_mode_unitary};
    use rand::Rng;

    fn random_unitary(m: usize, seed: u64) -> DMatrix<Complex64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let z = DMatrix::from_fn(m, m, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        z.qr().q()
    }

    fn max_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn identity_decomposes_to_trivial_splitters() {
        let dec = decompose_interferometer(&DMatrix::identity(4, 4)).unwrap();
        assert!(dec.splitters.iter().all(|b| b.is_trivial(1e-14)));
        assert!(dec.phases.iter().all(|&p| p.abs() < 1e-14));
    }

    #[test]
    fn splitter_counts_and_recomposition() {
        for (m, expected) in [(2, 1), (3, 3), (5, 10), (7, 21)] {
            let u = random_unitary(m, m as u64);
            let dec = decompose_interferometer(&u).unwrap();
            assert_eq!(dec.splitters.len(), expected);
            assert!(max_diff(&dec.recompose(), &u) < 1e-10);
            assert!(dec.phases.iter().all(|p| (0.0..std::f64::consts::TAU).contains(p)));
        }
    }

    #[test]
    fn mesh_is_rectangular() {
        let dec = decompose_interferometer(&random_unitary(6, 3)).unwrap();
        assert_eq!(dec.num_layers(), 6);
    }

    #[test]
    fn sequential_losses_multiply() {
        let u = DMatrix::identity(1, 1);
        let model = build_loss_model(&u, &[0.6], None, &[0.7]).unwrap();
        assert!((effective_transmissivity(&model)[0] - 0.42).abs() < 1e-15);
    }

    #[test]
    fn lossless_model_reproduces_target() {
        let spec = GbsSpec::new(
            vec![Complex64::new(0.4, 0.0), Complex64::new(0.5, 0.0)],
            vec![Complex64::default(); 2],
            two_mode_unitary(0.8, 0.44),
        )
        .unwrap();
        let target = prepare_target(&spec).unwrap();
        for model in [
            LossModel::lossless(2),
            LossModel::uniform(&spec.unitary, 1.0).unwrap(),
            build_loss_model(&spec.unitary, &[1.0; 2], Some(&[vec![1.0; 2]]), &[1.0; 2]).unwrap(),
        ] {
            let out = propagate(&spec, &model).unwrap();
            assert!((out.cov() - target.cov()).amax() < 1e-12);
            assert!(effective_transmissivity(&model).iter().all(|&e| (e - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn rejects_bad_transmissivities() {
        let u = DMatrix::identity(2, 2);
        assert!(matches!(build_loss_model(&u, &[1.1, 0.5], None, &[1.0; 2]), Err(Error::Transmissivity(_))));
        assert!(build_loss_model(&u, &[0.5], None, &[1.0; 2]).is_err());
        let bad = EtaRanges { pre: (0.6, 0.5), internal: (0.8, 0.85), post: (0.7, 0.8) };
        assert!(LossModel::sampled(&u, bad, 1).is_err());
    }

    #[test]
    fn sampled_models_are_seed_deterministic() {
        let u = random_unitary(4, 9);
        let ranges = EtaRanges { pre: (0.5, 0.6), internal: (0.8, 0.85), post: (0.7, 0.8) };
        let a = LossModel::sampled(&u, ranges, 17).unwrap();
        let b = LossModel::sampled(&u, ranges, 17).unwrap();
        let c = LossModel::sampled(&u, ranges, 18).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(max_diff(&a.passive_unitary(), &u) < 1e-10);
    }

    #[test]
    fn rebuild_around_new_interferometer() {
        let model = build_loss_model(&two_mode_unitary(0.8, 0.44), &[0.7, 0.6], None, &[0.5, 0.8]).unwrap();
        let other = model.with_interferometer(&two_mode_unitary(0.3, 1.0)).unwrap();
        assert!(max_diff(&other.passive_unitary(), &two_mode_unitary(0.3, 1.0)) < 1e-15);
        assert_eq!(other.loss_layers(LayerTag::Pre), vec![&[0.7, 0.6][..]]);
    }
}
