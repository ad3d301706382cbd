//! Vibronic-spectrum fixtures, scheme comparisons and the squeezing-phase noise study.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{two_mode_unitary, GbsSpec};
use crate::loss::LossModel;
use crate::mitigation::{vacuum_overlap_correct, MitigationResult, Mitigator, Scheme, VacuumStrategy};
use crate::numerics::KahanSum;
use crate::pnd::{total_variation, Pnd, PndOptions};

/// Frequencies closer than this are merged into one spectral line.
pub const BIN_TOLERANCE: f64 = 1e-6;

/// Seed of the bundled seven-mode placeholder interferometer.
pub const PLACEHOLDER_SEED: u64 = 7;

/// Formic-acid input squeezing per mode.
pub const FORMIC_ACID_SQUEEZING: [f64; 7] = [-0.0972, -0.0701, -0.0208, 0.0597, 0.0749, 0.1120, 0.1867];
/// Formic-acid input displacement per mode.
pub const FORMIC_ACID_DISPLACEMENT: [f64; 7] = [0.6176, 0.4362, -0.4334, -0.5482, -0.1207, 0.6419, -0.0611];

/// A molecular transition expressed as a boson-sampler configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoleculeFixture {
    pub name: String,
    pub spec: GbsSpec,
    /// Vibrational frequencies in cm⁻¹, used only to place spectral lines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequencies: Option<Vec<f64>>,
    #[serde(default)]
    pub notes: String,
}

impl MoleculeFixture {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if let Some(f) = &self.frequencies {
            if f.len() != self.spec.num_modes() {
                return Err(Error::Dimension(format!("{} frequencies for {} modes", f.len(), self.spec.num_modes())));
            }
            if f.iter().any(|w| !(*w > 0.0)) {
                return Err(Error::InvalidArgument("vibrational frequencies must be positive".into()));
            }
        }
        Ok(())
    }
}

fn real_vec(v: &[f64]) -> Vec<Complex64> {
    v.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

pub fn tropolone() -> MoleculeFixture {
    MoleculeFixture {
        name: "tropolone".into(),
        spec: GbsSpec::new(real_vec(&[0.19, 0.72]), vec![Complex64::default(); 2], two_mode_unitary(0.27, 0.0))
            .expect("fixture is valid"),
        frequencies: None,
        notes: "two-mode subsystem without normal-coordinate shift".into(),
    }
}

pub fn sulfur_dioxide() -> MoleculeFixture {
    MoleculeFixture {
        name: "sulfur-dioxide".into(),
        spec: GbsSpec::new(real_vec(&[-0.11, -0.05]), real_vec(&[-0.93, 1.01]), two_mode_unitary(0.59, 0.0))
            .expect("fixture is valid"),
        frequencies: None,
        notes: "two-mode transition with displaced inputs".into(),
    }
}

/// Seeded random real orthogonal matrix, from the QR factorization of a Gaussian matrix.
pub fn placeholder_orthogonal(num_modes: usize, seed: u64) -> DMatrix<Complex64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let g = DMatrix::<f64>::from_fn(num_modes, num_modes, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..num_modes {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q.map(|v| Complex64::new(v, 0.0))
}

/// Formic acid with a supplied interferometer, or the bundled placeholder when `None`.
pub fn formic_acid(unitary: Option<DMatrix<Complex64>>) -> Result<MoleculeFixture> {
    let bundled = unitary.is_none();
    let u = unitary.unwrap_or_else(|| placeholder_orthogonal(7, PLACEHOLDER_SEED));
    let spec = GbsSpec::new(real_vec(&FORMIC_ACID_SQUEEZING), real_vec(&FORMIC_ACID_DISPLACEMENT), u)?;
    let notes = if bundled {
        "interferometer is a seeded random orthogonal placeholder, not the molecular unitary".into()
    } else {
        "user-supplied interferometer".into()
    };
    Ok(MoleculeFixture { name: "formic-acid".into(), spec, frequencies: None, notes })
}

/// Bundled fixture by name.
pub fn fixture(name: &str) -> Result<MoleculeFixture> {
    match name {
        "tropolone" => Ok(tropolone()),
        "sulfur-dioxide" | "so2" => Ok(sulfur_dioxide()),
        "formic-acid" => formic_acid(None),
        other => Err(Error::InvalidArgument(format!("unknown fixture {other:?}"))),
    }
}

/// Probability per vibronic transition energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub bins: Vec<(f64, f64)>,
}

impl Spectrum {
    pub fn total(&self) -> f64 {
        self.bins.iter().map(|b| b.1).collect::<KahanSum>().value()
    }
}

/// Bins outcome probabilities by transition energy `Σ m_i ω_i`.
pub fn spectrum(pnd: &Pnd, frequencies: &[f64]) -> Result<Spectrum> {
    if frequencies.len() != pnd.num_modes() {
        return Err(Error::Dimension(format!("{} frequencies for {} modes", frequencies.len(), pnd.num_modes())));
    }
    let mut lines: Vec<(f64, f64)> =
        pnd.iter().map(|(m, p)| (m.iter().zip(frequencies).map(|(&k, w)| k as f64 * w).sum::<f64>(), p)).collect();
    lines.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut bins: Vec<(f64, KahanSum)> = Vec::new();
    for (w, p) in lines {
        match bins.last_mut() {
            Some((w0, acc)) if (w - *w0).abs() <= BIN_TOLERANCE => acc.add(p),
            _ => {
                let mut acc = KahanSum::new();
                acc.add(p);
                bins.push((w, acc));
            }
        }
    }
    Ok(Spectrum { bins: bins.into_iter().map(|(w, acc)| (w, acc.value())).collect() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub scheme: String,
    pub delta: f64,
    pub uncertainty: f64,
    pub result: MitigationResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<Spectrum>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub fixture: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_spectrum: Option<Spectrum>,
    pub rows: Vec<BenchmarkRow>,
}

impl BenchmarkReport {
    pub fn delta(&self, label: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.scheme == label).map(|r| r.delta)
    }
}

/// Applies each scheme to the fixture under the loss model and compares distributions.
pub fn run_benchmark(
    fixture: &MoleculeFixture,
    loss: &LossModel,
    schemes: &[Scheme],
    opts: PndOptions,
) -> Result<BenchmarkReport> {
    fixture.validate()?;
    let mitigator = Mitigator::new(&fixture.spec, loss, opts)?;
    let freqs = fixture.frequencies.as_deref();
    let target_spectrum = freqs.map(|f| spectrum(mitigator.evaluator().target_pnd(), f)).transpose()?;
    let mut rows = Vec::with_capacity(schemes.len());
    for scheme in schemes {
        let result = mitigator.run(scheme)?;
        let spectrum = match freqs {
            Some(f) => Some(spectrum(&mitigator.evaluator().probe_pnd(&result.corrected)?, f)?),
            None => None,
        };
        rows.push(BenchmarkRow {
            scheme: scheme.label(),
            delta: result.delta,
            uncertainty: result.delta_uncertainty,
            result,
            spectrum,
        });
    }
    Ok(BenchmarkReport { fixture: fixture.name.clone(), target_spectrum, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl SampleStats {
    /// Mean, sample standard deviation and range.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().copied().collect::<KahanSum>().value() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).collect::<KahanSum>().value() / (n - 1.0)
        } else {
            0.0
        };
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self { mean, std: var.sqrt(), min, max }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevel {
    pub sigma: f64,
    pub uncorrected: SampleStats,
    pub corrected: SampleStats,
}

/// Standard-normal draw of one sample; the stream depends only on the seed and the index.
fn sample_normal(seed: u64, index: u64) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    StandardNormal.sample(&mut rng)
}

fn rotate_first_squeezing(spec: &GbsSpec, angle: f64) -> GbsSpec {
    let mut s = spec.clone();
    s.squeezing[0] *= Complex64::from_polar(1.0, angle);
    s
}

/// Distance statistics when the first mode's squeezing phase fluctuates.
///
/// Sample `i` uses the phase shift `σ z_i` with `z_i` from its own stream, so
/// every noise level sees the same normal draws.
pub fn phase_noise_study(
    fixture: &MoleculeFixture,
    loss: &LossModel,
    sigmas: &[f64],
    num_samples: usize,
    seed: u64,
    opts: PndOptions,
) -> Result<Vec<NoiseLevel>> {
    if num_samples == 0 {
        return Err(Error::InvalidArgument("the noise study needs at least one sample".into()));
    }
    fixture.validate()?;
    let mitigator = Mitigator::new(&fixture.spec, loss, opts)?;
    let eval = mitigator.evaluator();
    let corrected = vacuum_overlap_correct(&fixture.spec, loss, VacuumStrategy::FixedRatio)?;
    let draws: Vec<f64> = (0..num_samples as u64).map(|i| sample_normal(seed, i)).collect();
    sigmas
        .iter()
        .map(|&sigma| {
            let pairs: Vec<(f64, f64)> = draws
                .par_iter()
                .map(|z| -> Result<(f64, f64)> {
                    let angle = sigma * z;
                    let a = total_variation(eval.target_pnd(), &eval.probe_pnd(&rotate_first_squeezing(&fixture.spec, angle))?)?;
                    let b = total_variation(eval.target_pnd(), &eval.probe_pnd(&rotate_first_squeezing(&corrected, angle))?)?;
                    Ok((a.0, b.0))
                })
                .collect::<Result<_>>()?;
            let (u, c): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            Ok(NoiseLevel { sigma, uncorrected: SampleStats::of(&u), corrected: SampleStats::of(&c) })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::prepare_target;
    use crate::mitigation::SchemeTag;
    use crate::pnd::pnd_gaussian;

    #[test]
    fn fixtures_are_valid() {
        for name in ["tropolone", "sulfur-dioxide", "formic-acid"] {
            fixture(name).unwrap().validate().unwrap();
        }
        assert!(fixture("water").is_err());
        let u = placeholder_orthogonal(7, PLACEHOLDER_SEED);
        let dev = (u.adjoint() * &u - DMatrix::<Complex64>::identity(7, 7)).map(|z| z.norm()).max();
        assert!(dev < 1e-12);
        assert!(u.iter().all(|z| z.im == 0.0));
        assert_eq!(u, placeholder_orthogonal(7, PLACEHOLDER_SEED));
    }

    #[test]
    fn spectrum_places_lines_and_conserves_mass() {
        let st = prepare_target(&sulfur_dioxide().spec).unwrap();
        let pnd = pnd_gaussian(&st, &PndOptions::default()).unwrap();
        let s = spectrum(&pnd, &[500.0, 1000.0]).unwrap();
        assert_eq!(s.bins[0].0, 0.0);
        assert!((s.bins[0].1 - pnd.get(&[0, 0])).abs() < 1e-15);
        assert!((s.bins[1].0 - 500.0).abs() < 1e-12);
        assert!((s.total() - pnd.total()).abs() < 1e-12);
        let merged = s.bins.iter().find(|b| (b.0 - 1000.0).abs() < 1e-9).unwrap().1;
        assert!((merged - pnd.get(&[2, 0]) - pnd.get(&[0, 1])).abs() < 1e-14);
        assert!(spectrum(&pnd, &[1.0]).is_err());
    }

    #[test]
    fn lossless_benchmark_is_exact() {
        let f = tropolone();
        let schemes: Vec<Scheme> =
            [SchemeTag::None, SchemeTag::VacFixedRatio, SchemeTag::Fidelity, SchemeTag::PsWas].map(Scheme::new).to_vec();
        let report = run_benchmark(&f, &LossModel::lossless(2), &schemes, PndOptions::default()).unwrap();
        assert!(report.rows.iter().all(|r| r.delta < 1e-12));
    }

    #[test]
    fn zero_noise_has_no_spread() {
        let f = tropolone();
        let loss = LossModel::uniform(&f.spec.unitary, 0.7).unwrap();
        let levels = phase_noise_study(&f, &loss, &[0.0], 5, 3, PndOptions::default()).unwrap();
        assert_eq!(levels[0].uncorrected.std, 0.0);
        assert_eq!(levels[0].corrected.std, 0.0);
        assert!(levels[0].corrected.mean < levels[0].uncorrected.mean);
        assert!(phase_noise_study(&f, &loss, &[0.1], 0, 3, PndOptions::default()).is_err());
    }

    #[test]
    fn sample_streams_are_independent_of_order() {
        assert_eq!(sample_normal(9, 4), sample_normal(9, 4));
        assert_ne!(sample_normal(9, 4), sample_normal(9, 5));
        let s = SampleStats::of(&[1.0, 3.0]);
        assert_eq!((s.mean, s.min, s.max), (2.0, 1.0, 3.0));
        assert!((s.std - 2f64.sqrt()).abs() < 1e-15);
    }
}
