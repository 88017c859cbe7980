//! Single-qubit process tomography of the polarization memory: simulated
//! counts, maximum-likelihood reconstruction of the chi matrix in the Pauli
//! basis, Monte Carlo error bars and the measure-and-prepare bound.

use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::echo::PolarizationChannel;
use crate::error::{Error, Result};
use crate::ion_ensemble::spectrum::csv_err;
use crate::optim::bfgs;

type C = Complex64;

const fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

fn pauli(k: usize) -> Matrix2<C> {
    let (o, l, i) = (c(0.0, 0.0), c(1.0, 0.0), c(0.0, 1.0));
    match k {
        0 => Matrix2::new(l, o, o, l),
        1 => Matrix2::new(o, l, l, o),
        2 => Matrix2::new(o, -i, i, o),
        _ => Matrix2::new(l, o, o, -l),
    }
}

fn paulis() -> [Matrix2<C>; 4] {
    [pauli(0), pauli(1), pauli(2), pauli(3)]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InputState {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl InputState {
    pub const ALL: [InputState; 6] = [Self::H, Self::V, Self::D, Self::A, Self::R, Self::L];

    /// Jones vector; R = (H - iV)/sqrt 2.
    pub fn jones(self) -> [C; 2] {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Self::H => [c(1.0, 0.0), c(0.0, 0.0)],
            Self::V => [c(0.0, 0.0), c(1.0, 0.0)],
            Self::D => [c(s, 0.0), c(s, 0.0)],
            Self::A => [c(s, 0.0), c(-s, 0.0)],
            Self::R => [c(s, 0.0), c(0.0, -s)],
            Self::L => [c(s, 0.0), c(0.0, s)],
        }
    }

    pub fn density(self) -> Matrix2<C> {
        let v = self.jones();
        Matrix2::new(
            v[0] * v[0].conj(),
            v[0] * v[1].conj(),
            v[1] * v[0].conj(),
            v[1] * v[1].conj(),
        )
    }

    fn bloch(self) -> [f64; 3] {
        let r = self.density();
        let p = paulis();
        [1, 2, 3].map(|k| (p[k] * r).trace().re)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    HV,
    DA,
    RL,
}

impl Basis {
    pub const ALL: [Basis; 3] = [Self::HV, Self::DA, Self::RL];

    /// Projectors onto the transmitted and reflected ports.
    pub fn projectors(self) -> [Matrix2<C>; 2] {
        match self {
            Self::HV => [InputState::H.density(), InputState::V.density()],
            Self::DA => [InputState::D.density(), InputState::A.density()],
            Self::RL => [InputState::R.density(), InputState::L.density()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Setting {
    pub input: InputState,
    pub basis: Basis,
    /// Transmitted and reflected counts.
    pub counts: [u64; 2],
    pub trials: u64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TomographyCounts {
    pub settings: Vec<Setting>,
}

impl TomographyCounts {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn total(&self) -> u64 {
        self.settings.iter().map(|s| s.counts[0] + s.counts[1]).sum()
    }

    /// Inputs measured in all three bases must span the Bloch sphere.
    pub fn check_complete(&self) -> Result<()> {
        let mut rows = Vec::new();
        for input in InputState::ALL {
            let full = Basis::ALL
                .iter()
                .all(|b| self.settings.iter().any(|s| s.input == input && s.basis == *b));
            if full {
                let b = input.bloch();
                rows.push([1.0, b[0], b[1], b[2]]);
            }
        }
        let n = rows.len();
        let m = nalgebra::DMatrix::from_fn(n.max(1), 4, |i, j| if n == 0 { 0.0 } else { rows[i][j] });
        if n < 4 || m.rank(1e-9) < 4 {
            return Err(Error::param(
                "counts",
                "settings are not informationally complete (need four independent inputs measured in all three bases)",
            ));
        }
        Ok(())
    }
}

/// Chi matrix in the basis {I, X, Y, Z}: E(rho) = sum chi_mn s_m rho s_n^dag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessMatrix {
    pub chi: Matrix4<C>,
}

#[derive(Serialize, Deserialize)]
struct ChiJson {
    re: [[f64; 4]; 4],
    im: [[f64; 4]; 4],
}

impl ProcessMatrix {
    pub fn identity() -> Self {
        let mut chi = Matrix4::zeros();
        chi[(0, 0)] = c(1.0, 0.0);
        ProcessMatrix { chi }
    }

    /// Process of the Kraus operators `kraus`.
    pub fn from_kraus(kraus: &[Matrix2<C>]) -> Self {
        let p = paulis();
        let mut chi = Matrix4::zeros();
        for k in kraus {
            let a: Vec<C> = p.iter().map(|s| (s * k).trace() * 0.5).collect();
            for m in 0..4 {
                for n in 0..4 {
                    chi[(m, n)] += a[m] * a[n].conj();
                }
            }
        }
        ProcessMatrix { chi }
    }

    /// Trace-decreasing process of a diattenuating memory.
    pub fn from_channel(channel: &PolarizationChannel) -> Self {
        let k = channel.kraus();
        Self::from_kraus(&[Matrix2::new(k[0], c(0.0, 0.0), c(0.0, 0.0), k[1])])
    }

    pub fn apply(&self, rho: &Matrix2<C>) -> Matrix2<C> {
        let p = paulis();
        let mut out = Matrix2::zeros();
        for m in 0..4 {
            for n in 0..4 {
                let x = self.chi[(m, n)];
                if x != c(0.0, 0.0) {
                    out += p[m] * rho * p[n].adjoint() * x;
                }
            }
        }
        out
    }

    /// sum chi_mn s_n^dag s_m, the identity for trace-preserving processes.
    pub fn trace_operator(&self) -> Matrix2<C> {
        let p = paulis();
        let mut m2 = Matrix2::zeros();
        for m in 0..4 {
            for n in 0..4 {
                m2 += p[n].adjoint() * p[m] * self.chi[(m, n)];
            }
        }
        m2
    }

    pub fn trace_preservation_error(&self) -> f64 {
        (self.trace_operator() - Matrix2::identity()).norm()
    }

    /// Trace-preserving process rho -> E(M^-1/2 rho M^-1/2), with M the
    /// trace operator.
    pub fn renormalized(&self) -> Result<Self> {
        let m = self.trace_operator();
        let eig = m.symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| !(l > 1e-300)) {
            return Err(Error::Unphysical(
                "process has a lossless-undefined (zero) transmission axis".into(),
            ));
        }
        let v = eig.eigenvectors;
        let d = Matrix2::from_diagonal(&eig.eigenvalues.map(|l| c(l.powf(-0.5), 0.0)));
        let inv_sqrt = v * d * v.adjoint();
        let p = paulis();
        let b = Matrix4::from_fn(|k, mm| (p[k] * p[mm] * inv_sqrt).trace() * 0.5);
        Ok(ProcessMatrix {
            chi: b * self.chi * b.adjoint(),
        })
    }

    pub fn hermiticity_error(&self) -> f64 {
        (self.chi - self.chi.adjoint()).norm()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (self.chi + self.chi.adjoint()) * c(0.5, 0.0);
        h.symmetric_eigen().eigenvalues.min()
    }

    pub fn check_physical(&self) -> Result<()> {
        if !self.chi.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::Unphysical("chi has non-finite entries".into()));
        }
        let h = self.hermiticity_error();
        if h > 1e-9 {
            return Err(Error::Unphysical(format!(
                "chi is not Hermitian (|chi - chi^dag| = {h:.2e})"
            )));
        }
        let l = self.min_eigenvalue();
        if l < -1e-9 {
            return Err(Error::Unphysical(format!("chi has negative eigenvalue {l:.3e}")));
        }
        if self.chi.trace().re <= 0.0 {
            return Err(Error::Unphysical("chi has zero trace".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let j = ChiJson {
            re: std::array::from_fn(|m| std::array::from_fn(|n| self.chi[(m, n)].re)),
            im: std::array::from_fn(|m| std::array::from_fn(|n| self.chi[(m, n)].im)),
        };
        Ok(serde_json::to_string_pretty(&j)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: ChiJson = serde_json::from_str(text)?;
        Ok(ProcessMatrix {
            chi: Matrix4::from_fn(|m, n| c(j.re[m][n], j.im[m][n])),
        })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["row", "col", "re", "im"]).map_err(csv_err)?;
        let labels = ["I", "X", "Y", "Z"];
        for m in 0..4 {
            for n in 0..4 {
                let z = self.chi[(m, n)];
                wr.write_record([
                    labels[m].to_string(),
                    labels[n].to_string(),
                    z.re.to_string(),
                    z.im.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

/// Re tr(chi_ideal chi) / (tr chi_ideal tr chi).
pub fn process_fidelity(chi: &ProcessMatrix, ideal: &ProcessMatrix) -> Result<f64> {
    chi.check_physical()?;
    ideal.check_physical()?;
    let num = (ideal.chi * chi.chi).trace().re;
    Ok((num / (ideal.chi.trace().re * chi.chi.trace().re)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QptConfig {
    pub mu: f64,
    /// Trials per setting.
    pub trials: u64,
    /// Mean noise counts per detector per trial.
    #[serde(default)]
    pub noise_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

impl QptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::param("mu", "mean photon number must be positive"));
        }
        if self.trials == 0 {
            return Err(Error::param("trials", "need at least one trial per setting"));
        }
        if !(self.noise_rate >= 0.0 && self.noise_rate.is_finite()) {
            return Err(Error::param("noise_rate", "must be non-negative"));
        }
        Ok(())
    }
}

/// Noise rate per detector and trial that gives signal/noise `snr` for a
/// memory of mean efficiency `eta`.
pub fn noise_rate_for_snr(mu: f64, eta: f64, snr: f64) -> Result<f64> {
    if !(snr > 0.0) {
        return Err(Error::param("snr", "must be positive"));
    }
    Ok(mu * eta / snr)
}

fn poisson(lambda: f64, rng: &mut ChaCha8Rng) -> Result<u64> {
    if lambda <= 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(lambda).map_err(|e| Error::param("counts", e.to_string()))?;
    Ok(d.sample(rng) as u64)
}

/// Counts for all 18 settings of the process `process`.
pub fn simulate_process_counts(process: &ProcessMatrix, cfg: &QptConfig) -> Result<TomographyCounts> {
    cfg.validate()?;
    let mut settings = Vec::with_capacity(18);
    let trials = cfg.trials as f64;
    for (i, input) in InputState::ALL.iter().enumerate() {
        let out = process.apply(&input.density());
        for (j, basis) in Basis::ALL.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream((3 * i + j) as u64);
            let [pt, pr] = basis.projectors().map(|p| (p * out).trace().re.max(0.0));
            let t = poisson(cfg.mu * trials * pt + cfg.noise_rate * trials, &mut rng)?;
            let r = poisson(cfg.mu * trials * pr + cfg.noise_rate * trials, &mut rng)?;
            settings.push(Setting {
                input: *input,
                basis: *basis,
                counts: [t, r],
                trials: cfg.trials,
                mu: cfg.mu,
            });
        }
    }
    Ok(TomographyCounts { settings })
}

pub fn simulate_counts(channel: &PolarizationChannel, cfg: &QptConfig) -> Result<TomographyCounts> {
    channel.validate()?;
    simulate_process_counts(&ProcessMatrix::from_channel(channel), cfg)
}

fn chi_from_params(p: &[f64]) -> Matrix4<C> {
    let mut t = Matrix4::<C>::zeros();
    for i in 0..4 {
        t[(i, i)] = c(p[i], 0.0);
    }
    let mut k = 4;
    for i in 1..4 {
        for j in 0..i {
            t[(i, j)] = c(p[k], p[k + 1]);
            k += 2;
        }
    }
    t.adjoint() * t
}

fn params_from_chi(chi: &Matrix4<C>) -> Option<Vec<f64>> {
    // chi = T^dag T with T lower triangular: reverse-order Cholesky.
    let j = Matrix4::from_fn(|a, b| if a + b == 3 { c(1.0, 0.0) } else { c(0.0, 0.0) });
    let flipped = j * chi * j;
    let l = nalgebra::Cholesky::new(flipped + Matrix4::identity() * c(1e-12, 0.0))?.unpack();
    let t = (j * l * j).adjoint();
    let mut p = vec![0.0; 16];
    for i in 0..4 {
        p[i] = t[(i, i)].re;
    }
    let mut k = 4;
    for i in 1..4 {
        for jj in 0..i {
            p[k] = t[(i, jj)].re;
            p[k + 1] = t[(i, jj)].im;
            k += 2;
        }
    }
    Some(p)
}

struct Likelihood {
    weights: Vec<([[C; 16]; 2], [f64; 2])>,
    total: f64,
}

impl Likelihood {
    fn new(counts: &TomographyCounts) -> Self {
        let p = paulis();
        let weights = counts
            .settings
            .iter()
            .filter(|s| s.counts[0] + s.counts[1] > 0)
            .map(|s| {
                let rho = s.input.density();
                let proj = s.basis.projectors();
                let w = proj.map(|pr| {
                    let mut w = [c(0.0, 0.0); 16];
                    for m in 0..4 {
                        for n in 0..4 {
                            w[4 * m + n] = (pr * p[m] * rho * p[n].adjoint()).trace();
                        }
                    }
                    w
                });
                (w, [s.counts[0] as f64, s.counts[1] as f64])
            })
            .collect();
        Likelihood {
            weights,
            total: counts.total() as f64,
        }
    }

    fn nll(&self, chi: &Matrix4<C>) -> f64 {
        let mut acc = 0.0;
        for (w, n) in &self.weights {
            let q = w.map(|w| {
                let mut s = c(0.0, 0.0);
                for m in 0..4 {
                    for k in 0..4 {
                        s += chi[(m, k)] * w[4 * m + k];
                    }
                }
                s.re.max(1e-300)
            });
            let norm = q[0] + q[1];
            for i in 0..2 {
                if n[i] > 0.0 {
                    acc -= n[i] * (q[i] / norm).ln();
                }
            }
        }
        acc / self.total
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reconstruction {
    pub process: ProcessMatrix,
    pub nll: f64,
    pub iterations: u64,
}

const MLE_MAX_ITERS: u64 = 4000;
const MLE_GRAD_TOL: f64 = 1e-5;
/// Smallest log-likelihood improvement per iteration worth pursuing.
const MLE_LOGL_TOL: f64 = 1e-3;

fn reconstruct_from(counts: &TomographyCounts, start: Vec<f64>) -> Result<Reconstruction> {
    counts.check_complete()?;
    let like = Likelihood::new(counts);
    if like.total <= 0.0 {
        return Err(Error::param("counts", "no counts recorded"));
    }
    let f = |p: &[f64]| objective(&like, p);
    let m = bfgs(&f, start, MLE_MAX_ITERS, MLE_GRAD_TOL, MLE_LOGL_TOL / like.total)?;
    let raw = ProcessMatrix {
        chi: chi_from_params(&m.x),
    };
    let mut process = raw.renormalized()?;
    process.chi = (process.chi + process.chi.adjoint()) * c(0.5, 0.0);
    Ok(Reconstruction {
        process,
        nll: m.value,
        iterations: m.iterations,
    })
}

/// NLL of the renormalized process. The NLL does not depend on the scale of
/// T, so the scale is pinned to |p| = 1 by a penalty.
fn objective(like: &Likelihood, p: &[f64]) -> f64 {
    let norm2: f64 = p.iter().map(|x| x * x).sum();
    let pin = (norm2 - 1.0).powi(2);
    match (ProcessMatrix {
        chi: chi_from_params(p),
    })
    .renormalized()
    {
        Ok(x) => like.nll(&x.chi) + pin,
        Err(_) => 1e10,
    }
}

fn maximally_mixed_start() -> Vec<f64> {
    let mut p = vec![0.0; 16];
    p[..4].fill(0.5);
    p
}

/// Maximum-likelihood trace-preserving process for the post-selected
/// statistics in `counts`, started from the maximally mixed process.
pub fn mle_reconstruct(counts: &TomographyCounts) -> Result<Reconstruction> {
    reconstruct_from(counts, maximally_mixed_start())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloError {
    pub std_dev: f64,
    pub mean: f64,
    pub fidelities: Vec<f64>,
}

/// Spread of the identity fidelity over Poisson resamples of `counts`.
/// Each resample draws from its own ChaCha8 stream.
pub fn monte_carlo_error(counts: &TomographyCounts, resamples: usize, seed: u64) -> Result<MonteCarloError> {
    if resamples < 100 {
        return Err(Error::param("resamples", "need at least 100 resamples"));
    }
    let best = mle_reconstruct(counts)?;
    let start = params_from_chi(&best.process.chi).unwrap_or_else(maximally_mixed_start);
    let ideal = ProcessMatrix::identity();
    let fidelities = (0..resamples)
        .into_par_iter()
        .map(|r| -> Result<f64> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let mut resampled = counts.clone();
            for s in &mut resampled.settings {
                for k in 0..2 {
                    s.counts[k] = poisson(s.counts[k] as f64, &mut rng)?;
                }
            }
            let rec = reconstruct_from(&resampled, start.clone())?;
            process_fidelity(&rec.process, &ideal)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = fidelities.len() as f64;
    let mean = fidelities.iter().sum::<f64>() / n;
    let var = fidelities.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(MonteCarloError {
        std_dev: var.sqrt(),
        mean,
        fidelities,
    })
}

/// Best fidelity of a measure-and-prepare memory that answers on the
/// largest-photon-number pulses of a Poisson(mu) source just often enough to
/// match the detection probability mu * eta.
pub fn classical_bound(mu: f64, eta: f64) -> Result<f64> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::param("mu", "must be positive"));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::param("eta", "must lie in (0, 1]"));
    }
    let mut probs = vec![(-mu).exp()];
    let mut tail = 1.0 - probs[0];
    while tail > 1e-12 || probs.len() < 2 {
        let n = probs.len() as f64;
        let next = probs[probs.len() - 1] * mu / n;
        probs.push(next);
        tail -= next;
    }
    let target = (mu * eta).min(1.0 - probs[0]);
    let (mut taken, mut score) = (0.0, 0.0);
    for n in (1..probs.len()).rev() {
        let w = probs[n].min(target - taken);
        if w <= 0.0 {
            break;
        }
        taken += w;
        score += w * (n as f64 + 1.0) / (n as f64 + 2.0);
    }
    Ok(score / taken)
}

/// (F - bound) / sigma.
pub fn sigma_margin(fidelity: f64, sigma: f64, bound: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::param("sigma", "must be positive"));
    }
    Ok((fidelity - bound) / sigma)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flip() -> ProcessMatrix {
        ProcessMatrix::from_kraus(&[pauli(1)])
    }

    #[test]
    fn fidelity_examples() {
        let id = ProcessMatrix::identity();
        assert!((process_fidelity(&id, &id).unwrap() - 1.0).abs() < 1e-15);
        assert!(process_fidelity(&flip(), &id).unwrap().abs() < 1e-15);
        let ch = ProcessMatrix::from_channel(&PolarizationChannel::new(0.070, 0.076, 0.0).unwrap());
        let want = (0.07f64.sqrt() + 0.076f64.sqrt()).powi(2) / (2.0 * 0.146);
        assert!((process_fidelity(&ch, &id).unwrap() - want).abs() < 1e-12);
        assert!((process_fidelity(&ch.renormalized().unwrap(), &id).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn renormalized_process_is_trace_preserving() {
        let ch = ProcessMatrix::from_channel(&PolarizationChannel::new(0.070, 0.076, 0.3).unwrap());
        assert!(ch.trace_preservation_error() > 0.1);
        let n = ch.renormalized().unwrap();
        assert!(n.trace_preservation_error() < 1e-12);
        n.check_physical().unwrap();
    }

    #[test]
    fn cholesky_parameters_round_trip() {
        let p: Vec<f64> = (0..16)
            .map(|i| 0.1 + 0.05 * i as f64 * if i % 3 == 0 { -1.0 } else { 1.0 })
            .collect();
        let mut p = p;
        p[..4].iter_mut().for_each(|x| *x = x.abs());
        let chi = chi_from_params(&p);
        let back = chi_from_params(&params_from_chi(&chi).unwrap());
        assert!((chi - back).norm() < 1e-9);
    }

    #[test]
    fn identity_counts_stay_in_one_port() {
        let cfg = QptConfig {
            mu: 0.32,
            trials: 10_000,
            noise_rate: 0.0,
            seed: 1,
        };
        let counts = simulate_process_counts(&ProcessMatrix::identity(), &cfg).unwrap();
        let s = counts
            .settings
            .iter()
            .find(|s| s.input == InputState::H && s.basis == Basis::HV)
            .unwrap();
        assert!(s.counts[0] > 0 && s.counts[1] == 0);
        assert_eq!(
            counts,
            simulate_process_counts(&ProcessMatrix::identity(), &cfg).unwrap()
        );
    }

    #[test]
    fn diagonal_asymmetry_matches_born_rule() {
        let ch = PolarizationChannel::new(0.070, 0.076, 0.0).unwrap();
        let out = ProcessMatrix::from_channel(&ch).apply(&InputState::R.density());
        let [t, r] = Basis::HV.projectors().map(|p| (p * out).trace().re);
        assert!(((r - t) / (t + r) - 0.006 / 0.146).abs() < 1e-12);
    }

    #[test]
    fn noiseless_identity_reconstruction() {
        let cfg = QptConfig {
            mu: 0.32,
            trials: 100_000,
            noise_rate: 0.0,
            seed: 3,
        };
        let counts = simulate_process_counts(&ProcessMatrix::identity(), &cfg).unwrap();
        let rec = mle_reconstruct(&counts).unwrap();
        rec.process.check_physical().unwrap();
        assert!(rec.process.trace_preservation_error() < 1e-6);
        let f = process_fidelity(&rec.process, &ProcessMatrix::identity()).unwrap();
        assert!(f >= 0.999, "{f}");
    }

    #[test]
    fn incomplete_settings_are_rejected() {
        let cfg = QptConfig {
            mu: 0.32,
            trials: 1000,
            noise_rate: 0.0,
            seed: 3,
        };
        let mut counts = simulate_process_counts(&ProcessMatrix::identity(), &cfg).unwrap();
        counts
            .settings
            .retain(|s| matches!(s.input, InputState::H | InputState::V | InputState::D) || s.basis != Basis::RL);
        assert!(mle_reconstruct(&counts).is_err());
    }

    #[test]
    fn classical_bound_examples() {
        let b = classical_bound(0.32, 0.070).unwrap();
        assert!((0.755..=0.767).contains(&b), "{b}");
        assert!((classical_bound(1e-6, 0.070).unwrap() - 2.0 / 3.0).abs() < 1e-4);
        assert!((classical_bound(0.5, 1.0).unwrap() - classical_bound(0.5, 0.99).unwrap()).abs() < 0.05);
    }

    #[test]
    fn sigma_margin_examples() {
        assert!((sigma_margin(0.994, 0.006, 0.762).unwrap() - 38.67).abs() < 0.01);
        assert_eq!(sigma_margin(0.762, 0.006, 0.762).unwrap(), 0.0);
        let a = sigma_margin(0.994, 0.006, 0.762).unwrap();
        assert!((sigma_margin(0.994, 0.012, 0.762).unwrap() - a / 2.0).abs() < 1e-12);
        assert!(sigma_margin(0.9, 0.0, 0.7).is_err());
    }

    #[test]
    fn counts_json_round_trip() {
        let cfg = QptConfig {
            mu: 0.32,
            trials: 1000,
            noise_rate: 1e-4,
            seed: 9,
        };
        let counts = simulate_process_counts(&ProcessMatrix::identity(), &cfg).unwrap();
        let text = counts.to_json().unwrap();
        assert!(text.trim_start().starts_with('['));
        assert!(text.contains("\"input\": \"H\"") && text.contains("\"basis\": \"HV\""));
        assert_eq!(TomographyCounts::from_json(&text).unwrap(), counts);
        let chi = ProcessMatrix::from_channel(&PolarizationChannel::new(0.07, 0.076, 0.2).unwrap());
        let back = ProcessMatrix::from_json(&chi.to_json().unwrap()).unwrap();
        assert!((back.chi - chi.chi).norm() < 1e-15);
    }
}
