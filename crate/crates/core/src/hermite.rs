//! Near-diagonal density-matrix recurrence for Gaussian photon statistics.
//!
//! The Fock density matrix of a Gaussian state obeys a multivariate Hermite
//! recurrence in the combined bra/ket index. Diagonal elements only need
//! entries within two quanta of the diagonal, so per base outcome `c` we keep
//!
//! * `g0 = ρ(c, c)`
//! * `p[i] = ρ(c, c + e_i)`
//! * `q[i ≤ j] = ρ(c, c + e_i + e_j)`
//! * `x[i < j] = ρ(c + e_j, c + e_i)`
//!
//! and sweep photon-number levels upward, holding three levels at a time.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fock;
use crate::gaussian::GaussianState;

const NONE: u32 = u32::MAX;
const PAR_THRESHOLD: usize = 512;

/// Quadratic and linear data of the Gaussian generating function.
#[derive(Debug, Clone)]
pub struct Kernel {
    pub num_modes: usize,
    pub a: DMatrix<Complex64>,
    pub b: Vec<Complex64>,
    pub vacuum: f64,
}

/// Complex-basis covariance `W σ W†` with `(a, a†)` ordering.
pub fn complex_covariance(state: &GaussianState) -> (DMatrix<Complex64>, Vec<Complex64>) {
    let m = state.num_modes();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut w = DMatrix::<Complex64>::zeros(2 * m, 2 * m);
    for i in 0..m {
        w[(i, 2 * i)] = Complex64::new(s, 0.0);
        w[(i, 2 * i + 1)] = Complex64::new(0.0, s);
        w[(m + i, 2 * i)] = Complex64::new(s, 0.0);
        w[(m + i, 2 * i + 1)] = Complex64::new(0.0, -s);
    }
    let cov = state.cov().map(|v| Complex64::new(v, 0.0));
    let sc = &w * cov * w.adjoint();
    let alpha = state.amplitudes();
    let bar: Vec<Complex64> = alpha.iter().copied().chain(alpha.iter().map(|a| a.conj())).collect();
    (sc, bar)
}

impl Kernel {
    pub fn new(state: &GaussianState) -> Result<Self> {
        let m = state.num_modes();
        let (sc, bar) = complex_covariance(state);
        let sq = sc + DMatrix::<Complex64>::identity(2 * m, 2 * m) * Complex64::new(0.5, 0.0);
        let det = sq.determinant().re;
        if !(det > 0.0) || !det.is_finite() {
            return Err(Error::Singular("Husimi covariance"));
        }
        let inv = sq.try_inverse().ok_or(Error::Singular("Husimi covariance"))?;
        let mut x = DMatrix::<Complex64>::zeros(2 * m, 2 * m);
        for i in 0..m {
            x[(i, m + i)] = Complex64::new(1.0, 0.0);
            x[(m + i, i)] = Complex64::new(1.0, 0.0);
        }
        let a = &x - &inv * &x;
        let a = (&a + a.transpose()) * Complex64::new(0.5, 0.0);
        let barv = nalgebra::DVector::from_vec(bar.clone());
        let b: Vec<Complex64> = (&inv * &barv).iter().copied().collect();
        let quad = (barv.adjoint() * &inv * &barv)[(0, 0)].re;
        let vacuum = (-0.5 * quad).exp() / det.sqrt();
        Ok(Self { num_modes: m, a, b, vacuum })
    }
}

struct Level {
    outcomes: Vec<Vec<usize>>,
    down: Vec<u32>,
    g0: Vec<Complex64>,
    p: Vec<Complex64>,
    q: Vec<Complex64>,
    x: Vec<Complex64>,
}

#[derive(Clone, Copy)]
struct Layout {
    m: usize,
    nq: usize,
    nx: usize,
}

impl Layout {
    fn xi(&self, i: usize, j: usize) -> usize {
        i * (2 * self.m - i - 1) / 2 + (j - i - 1)
    }
}

fn tri_index(m: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * (2 * m - i + 1) / 2 + (j - i)
}

impl Level {
    fn q(&self, lay: Layout, idx: u32, i: usize, j: usize) -> Complex64 {
        self.q[idx as usize * lay.nq + tri_index(lay.m, i, j)]
    }
    fn x(&self, lay: Layout, idx: u32, i: usize, j: usize) -> Complex64 {
        if i < j {
            self.x[idx as usize * lay.nx + lay.xi(i, j)]
        } else {
            self.x[idx as usize * lay.nx + lay.xi(j, i)].conj()
        }
    }
    fn p(&self, lay: Layout, idx: u32, i: usize) -> Complex64 {
        self.p[idx as usize * lay.m + i]
    }
}

struct Node {
    g0: Complex64,
    p: Vec<Complex64>,
    q: Vec<Complex64>,
    x: Vec<Complex64>,
}

fn sqrtu(n: usize) -> f64 {
    (n as f64).sqrt()
}

fn compute_node(k: &Kernel, lay: Layout, c: &[usize], down: &[u32], lv1: Option<&Level>, lv2: Option<&Level>) -> Node {
    let m = lay.m;
    let a = &k.a;
    let aa = |i: usize, j: usize| a[(i, j)];
    let ab = |i: usize, j: usize| a[(i, m + j)];
    let ba = |i: usize, j: usize| a[(m + i, j)];
    let bb = |i: usize, j: usize| a[(m + i, m + j)];
    let (ba_lin, bb_lin) = (&k.b[..m], &k.b[m..]);
    let zero = Complex64::new(0.0, 0.0);

    let g0 = match c.iter().position(|&v| v > 0) {
        None => Complex64::new(k.vacuum, 0.0),
        Some(i) => {
            let lv1 = lv1.expect("previous level");
            let kidx = down[i];
            let kd = &lv1.down[kidx as usize * m..(kidx as usize + 1) * m];
            let mut acc = ba_lin[i] * lv1.p(lay, kidx, i);
            for j in 0..m {
                let kj = if j == i { c[j] - 1 } else { c[j] };
                if kj > 0 {
                    let lv2 = lv2.expect("second previous level");
                    acc += aa(i, j) * sqrtu(kj) * lv2.q(lay, kd[j], i, j);
                }
                if j == i {
                    acc += ab(i, j) * sqrtu(c[j]) * lv1.g0[kidx as usize];
                } else if c[j] > 0 {
                    let lv2 = lv2.expect("second previous level");
                    acc += ab(i, j) * sqrtu(c[j]) * lv2.x(lay, kd[j], i, j);
                }
            }
            acc / sqrtu(c[i])
        }
    };

    let mut p = vec![zero; m];
    for i in 0..m {
        let mut acc = bb_lin[i] * g0;
        for j in 0..m {
            if c[j] > 0 {
                let prev = lv1.expect("previous level").p(lay, down[j], j);
                acc += ba(i, j) * sqrtu(c[j]) * prev + bb(i, j) * sqrtu(c[j]) * prev.conj();
            }
        }
        p[i] = acc / sqrtu(c[i] + 1);
    }

    let mut q = vec![zero; lay.nq];
    let mut x = vec![zero; lay.nx];
    for i in 0..m {
        for j in i..m {
            let mut acc = bb_lin[i] * p[j];
            for l in 0..m {
                if c[l] > 0 {
                    acc += ba(i, l) * sqrtu(c[l]) * lv1.expect("previous level").q(lay, down[l], j, l);
                }
                if l == j {
                    acc += bb(i, l) * sqrtu(c[l] + 1) * g0;
                } else if c[l] > 0 {
                    acc += bb(i, l) * sqrtu(c[l]) * lv1.expect("previous level").x(lay, down[l], j, l);
                }
            }
            q[tri_index(m, i, j)] = acc / sqrtu(c[i] + 1 + usize::from(i == j));
        }
        for j in (i + 1)..m {
            let mut acc = bb_lin[i] * p[j].conj();
            for l in 0..m {
                if l == j {
                    acc += ba(i, l) * sqrtu(c[l] + 1) * g0;
                } else if c[l] > 0 {
                    acc += ba(i, l) * sqrtu(c[l]) * lv1.expect("previous level").x(lay, down[l], l, j);
                }
                if c[l] > 0 {
                    acc += bb(i, l) * sqrtu(c[l]) * lv1.expect("previous level").q(lay, down[l], j, l).conj();
                }
            }
            x[lay.xi(i, j)] = acc / sqrtu(c[i] + 1);
        }
    }
    Node { g0, p, q, x }
}

fn down_links(outcomes: &[Vec<usize>], m: usize) -> Vec<u32> {
    let mut down = vec![NONE; outcomes.len() * m];
    let mut tmp = vec![0usize; m];
    for (idx, c) in outcomes.iter().enumerate() {
        for j in 0..m {
            if c[j] > 0 {
                tmp.copy_from_slice(c);
                tmp[j] -= 1;
                down[idx * m + j] = fock::rank_in_level(&tmp) as u32;
            }
        }
    }
    down
}

/// Level-by-level evaluation of photon-number probabilities.
pub struct LevelSweep {
    kernel: Kernel,
    lay: Layout,
    n: usize,
    prev1: Option<Level>,
    prev2: Option<Level>,
}

impl LevelSweep {
    pub fn new(state: &GaussianState) -> Result<Self> {
        let kernel = Kernel::new(state)?;
        let m = kernel.num_modes;
        let lay = Layout { m, nq: m * (m + 1) / 2, nx: m * (m - 1) / 2 };
        Ok(Self { kernel, lay, n: 0, prev1: None, prev2: None })
    }

    pub fn num_modes(&self) -> usize {
        self.lay.m
    }

    /// Probabilities of the next photon-number level, in enumeration order.
    pub fn next_level(&mut self) -> Vec<f64> {
        let m = self.lay.m;
        let outcomes = fock::level(m, self.n);
        let down = down_links(&outcomes, m);
        let (k, lay) = (&self.kernel, self.lay);
        let (lv1, lv2) = (self.prev1.as_ref(), self.prev2.as_ref());
        let eval = |idx: usize| compute_node(k, lay, &outcomes[idx], &down[idx * m..(idx + 1) * m], lv1, lv2);
        let nodes: Vec<Node> = if outcomes.len() >= PAR_THRESHOLD {
            (0..outcomes.len()).into_par_iter().map(eval).collect()
        } else {
            (0..outcomes.len()).map(eval).collect()
        };
        let mut level = Level {
            outcomes,
            down,
            g0: Vec::with_capacity(nodes.len()),
            p: Vec::with_capacity(nodes.len() * lay.m),
            q: Vec::with_capacity(nodes.len() * lay.nq),
            x: Vec::with_capacity(nodes.len() * lay.nx),
        };
        for node in nodes {
            level.g0.push(node.g0);
            level.p.extend(node.p);
            level.q.extend(node.q);
            level.x.extend(node.x);
        }
        let probs = level.g0.iter().map(|z| z.re).collect();
        debug_assert_eq!(level.outcomes.len(), level.g0.len());
        self.prev2 = self.prev1.take();
        self.prev1 = Some(level);
        self.n += 1;
        probs
    }
}
