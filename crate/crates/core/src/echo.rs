//! Linear-response time-domain simulation of AFC and SMAFC storage.
//!
//! A pulse is propagated through the medium in the frequency domain with the
//! transfer `exp(-A(nu))`, where `Re A = d/2` and `Im A` is the causal phase
//! obtained from the depth by a discrete Kramers-Kronig construction. Stark
//! gating splits the medium into two halves whose coherences pick up the
//! opposite phases `theta_s(t)`; the field is then integrated along the
//! sample with RK4.

use std::f64::consts::{LN_2, PI};
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ion_ensemble::{spectrum::csv_err, AbsorptionSpectrum};
use crate::stark::{ElectricPulse, StarkConfig};

/// Uniform sampling of the simulated trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub dt_ns: f64,
    pub window_ns: f64,
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid {
            dt_ns: 1.0,
            window_ns: 8000.0,
        }
    }
}

impl TimeGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_ns > 0.0 && self.dt_ns.is_finite()) {
            return Err(Error::param("dt_ns", "must be positive"));
        }
        if !(self.window_ns >= 2.0 * self.dt_ns && self.window_ns.is_finite()) {
            return Err(Error::param("window_ns", "must hold at least two samples"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        (self.window_ns / self.dt_ns).round() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt_ns
    }
}

/// Weak input pulse: complex envelope normalised to unit energy.
#[derive(Debug, Clone, PartialEq)]
pub struct Pulse {
    grid: TimeGrid,
    envelope: Vec<Complex64>,
    pub center_ns: f64,
    pub carrier_mhz: f64,
    pub fwhm_ns: f64,
}

impl Pulse {
    /// Gaussian pulse with intensity FWHM `fwhm_ns` centred at `center_ns`.
    pub fn gaussian(grid: TimeGrid, center_ns: f64, fwhm_ns: f64, carrier_mhz: f64) -> Result<Self> {
        grid.validate()?;
        if !(fwhm_ns > 0.0 && fwhm_ns.is_finite()) {
            return Err(Error::param("fwhm_ns", "must be positive"));
        }
        if !(center_ns >= 0.0 && center_ns < grid.window_ns) {
            return Err(Error::param("center_ns", "must lie inside the time window"));
        }
        let mut envelope: Vec<Complex64> = (0..grid.len())
            .map(|n| {
                let t = grid.time(n);
                let a = (-2.0 * LN_2 * ((t - center_ns) / fwhm_ns).powi(2)).exp();
                Complex64::from_polar(a, 2.0 * PI * carrier_mhz * 1e-3 * t)
            })
            .collect();
        let e: f64 = envelope.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.dt_ns;
        if !(e > 0.0 && e.is_finite()) {
            return Err(Error::param("pulse", "envelope has no energy on the grid"));
        }
        let s = e.sqrt().recip();
        envelope.iter_mut().for_each(|z| *z *= s);
        let p = Pulse {
            grid,
            envelope,
            center_ns,
            carrier_mhz,
            fwhm_ns,
        };
        p.check_sampling()?;
        Ok(p)
    }

    /// Same pulse with the amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut p = self.clone();
        p.envelope.iter_mut().for_each(|z| *z *= factor);
        p
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn envelope(&self) -> &[Complex64] {
        &self.envelope
    }

    pub fn energy(&self) -> f64 {
        self.envelope.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dt_ns
    }

    /// Intensity FWHM of the spectrum in MHz (transform limited).
    pub fn bandwidth_mhz(&self) -> f64 {
        2.0 * LN_2 / PI / self.fwhm_ns * 1e3
    }

    fn check_sampling(&self) -> Result<()> {
        let rate_mhz = 1e3 / self.grid.dt_ns;
        if rate_mhz < 4.0 * (self.bandwidth_mhz() + 2.0 * self.carrier_mhz.abs()) {
            return Err(Error::param(
                "dt_ns",
                "sample rate below four times the pulse bandwidth",
            ));
        }
        Ok(())
    }
}

/// Where to look for echoes: order `m` is centred at `center + m * period`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EchoWindows {
    pub period_ns: Option<f64>,
    pub max_order: u32,
    /// Defaults to min(period / 2, 1.5 FWHM).
    #[serde(default)]
    pub half_width_ns: Option<f64>,
}

impl EchoWindows {
    /// Windows for a comb of tooth spacing `spacing_mhz`.
    pub fn for_comb(spacing_mhz: f64, max_order: u32) -> Self {
        EchoWindows {
            period_ns: Some(1e3 / spacing_mhz),
            max_order,
            half_width_ns: None,
        }
    }

    /// Only the transmitted window.
    pub fn transmitted() -> Self {
        EchoWindows {
            period_ns: None,
            max_order: 0,
            half_width_ns: None,
        }
    }

    fn half_width(&self, pulse: &Pulse) -> f64 {
        self.half_width_ns.unwrap_or_else(|| match self.period_ns {
            Some(t) => (0.5 * t).min(1.5 * pulse.fwhm_ns),
            None => 1.5 * pulse.fwhm_ns,
        })
    }

    fn orders(&self) -> u32 {
        if self.period_ns.is_some() {
            self.max_order
        } else {
            0
        }
    }

    /// `(order, start_ns, end_ns)` of every window.
    pub fn spans(&self, pulse: &Pulse) -> Result<Vec<(u32, f64, f64)>> {
        if let Some(t) = self.period_ns {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::param("period_ns", "must be positive"));
            }
        }
        let hw = self.half_width(pulse);
        if !(hw > 0.0) {
            return Err(Error::param("half_width_ns", "must be positive"));
        }
        if let Some(t) = self.period_ns {
            if 2.0 * hw > t + 1e-9 {
                return Err(Error::param("half_width_ns", "windows of neighbouring orders overlap"));
            }
        }
        let window = pulse.grid.window_ns;
        (0..=self.orders())
            .map(|m| {
                let c = pulse.center_ns + m as f64 * self.period_ns.unwrap_or(0.0);
                if c + hw > window {
                    return Err(Error::Aliasing {
                        window_ns: window,
                        order: m,
                        needed_ns: c + hw,
                    });
                }
                Ok((m, (c - hw).max(0.0), c + hw))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchoMarker {
    pub order: u32,
    pub start_ns: f64,
    pub end_ns: f64,
    /// Window energy over input energy.
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EchoTrace {
    pub time_ns: Vec<f64>,
    pub intensity: Vec<f64>,
    pub markers: Vec<EchoMarker>,
    pub input_energy: f64,
    /// Output energy over the whole internal period, over input energy.
    pub total_efficiency: f64,
    pub dt_ns: f64,
}

impl EchoTrace {
    fn build(grid: TimeGrid, out: &[Complex64], spans: &[(u32, f64, f64)], input_energy: f64) -> Self {
        let n = grid.len();
        let intensity: Vec<f64> = out[..n].iter().map(|z| z.norm_sqr()).collect();
        let total = out.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.dt_ns;
        let time_ns: Vec<f64> = (0..n).map(|i| grid.time(i)).collect();
        let markers = spans
            .iter()
            .map(|&(order, start_ns, end_ns)| {
                let e: f64 = time_ns
                    .iter()
                    .zip(&intensity)
                    .filter(|(t, _)| **t >= start_ns && **t < end_ns)
                    .map(|(_, i)| i)
                    .sum::<f64>()
                    * grid.dt_ns;
                EchoMarker {
                    order,
                    start_ns,
                    end_ns,
                    efficiency: e / input_energy,
                }
            })
            .collect();
        EchoTrace {
            time_ns,
            intensity,
            markers,
            input_energy,
            total_efficiency: total / input_energy,
            dt_ns: grid.dt_ns,
        }
    }

    pub fn marker(&self, order: u32) -> Option<&EchoMarker> {
        self.markers.iter().find(|m| m.order == order)
    }

    pub fn efficiency(&self, order: u32) -> Option<f64> {
        self.marker(order).map(|m| m.efficiency)
    }

    /// Intensity-weighted mean time inside the window of `order`.
    pub fn centroid_ns(&self, order: u32) -> Option<f64> {
        let m = self.marker(order)?;
        let (mut w, mut s) = (0.0, 0.0);
        for (t, i) in self.time_ns.iter().zip(&self.intensity) {
            if *t >= m.start_ns && *t < m.end_ns {
                w += i;
                s += i * t;
            }
        }
        (w > 0.0).then(|| s / w)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["time_ns", "intensity"]).map_err(csv_err)?;
        for (t, i) in self.time_ns.iter().zip(&self.intensity) {
            wr.write_record([t.to_string(), i.to_string()]).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

/// FFT frequency step as a fraction of the spectrum bin.
const OVERSAMPLE: f64 = 4.0;

struct Medium {
    n: usize,
    /// exp(-A) on the FFT frequencies.
    transfer: Vec<Complex64>,
    log_transfer: Vec<Complex64>,
    fwd: std::sync::Arc<dyn Fft<f64>>,
    inv: std::sync::Arc<dyn Fft<f64>>,
}

impl Medium {
    fn new(spectrum: &AbsorptionSpectrum, pulse: &Pulse) -> Result<Self> {
        let grid = pulse.grid;
        let nyquist = 0.5e3 / grid.dt_ns;
        if spectrum.min_mhz() < -nyquist || spectrum.max_mhz() > nyquist {
            return Err(Error::param("dt_ns", "spectrum extends beyond the Nyquist frequency"));
        }
        let reach = 3.0 * pulse.bandwidth_mhz();
        for nu in [pulse.carrier_mhz - reach, pulse.carrier_mhz + reach] {
            if nu < spectrum.min_mhz() || nu > spectrum.max_mhz() {
                return Err(Error::OutOfRange {
                    value_mhz: nu,
                    min_mhz: spectrum.min_mhz(),
                    max_mhz: spectrum.max_mhz(),
                });
            }
        }
        let n = ((OVERSAMPLE * 1e3 / (grid.dt_ns * spectrum.bin_mhz())).round() as usize).max(grid.len());
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let df = 1e3 / (n as f64 * grid.dt_ns);
        let mut a: Vec<Complex64> = (0..n)
            .map(|k| {
                let k = if k < n.div_ceil(2) {
                    k as f64
                } else {
                    k as f64 - n as f64
                };
                Complex64::new(0.5 * spectrum.interp_or(k * df, 0.0), 0.0)
            })
            .collect();
        inv.process(&mut a);
        let scale = 1.0 / n as f64;
        for (j, z) in a.iter_mut().enumerate() {
            *z *= if j == 0 {
                scale
            } else if j < n.div_ceil(2) {
                2.0 * scale
            } else {
                0.0
            };
        }
        if n.is_multiple_of(2) {
            a[n / 2] = Complex64::new(0.0, 0.0);
        }
        fwd.process(&mut a);
        let transfer = a.iter().map(|z| (-z).exp()).collect();
        Ok(Medium {
            n,
            transfer,
            log_transfer: a,
            fwd,
            inv,
        })
    }

    fn padded(&self, pulse: &Pulse) -> Vec<Complex64> {
        let mut x = vec![Complex64::new(0.0, 0.0); self.n];
        x[..pulse.envelope.len()].copy_from_slice(&pulse.envelope);
        x
    }

    fn filter(&self, x: &mut [Complex64], h: &[Complex64], factor: f64) {
        self.fwd.process(x);
        let s = factor / self.n as f64;
        x.iter_mut().zip(h).for_each(|(z, h)| *z *= h * s);
        self.inv.process(x);
    }

    fn exact(&self, pulse: &Pulse) -> Vec<Complex64> {
        let mut x = self.padded(pulse);
        self.filter(&mut x, &self.transfer, 1.0);
        x
    }

    /// dE/dz for the two half-density groups carrying phases `phase[s]`.
    fn derivative(&self, e: &[Complex64], phases: &[Vec<Complex64>; 2]) -> Vec<Complex64> {
        let mut acc = vec![Complex64::new(0.0, 0.0); self.n];
        for ph in phases {
            let mut y: Vec<Complex64> = e.iter().zip(ph).map(|(e, p)| e * p.conj()).collect();
            self.filter(&mut y, &self.log_transfer, 0.5);
            acc.iter_mut().zip(&y).zip(ph).for_each(|((a, y), p)| *a -= y * p);
        }
        acc
    }

    fn gated(&self, pulse: &Pulse, phases: &[Vec<Complex64>; 2]) -> Vec<Complex64> {
        let amax = self.log_transfer.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let steps = ((amax / 0.2).ceil() as usize).max(8);
        let h = 1.0 / steps as f64;
        let mut e = self.padded(pulse);
        let axpy = |x: &[Complex64], k: &[Complex64], c: f64| -> Vec<Complex64> {
            x.iter().zip(k).map(|(x, k)| x + k * c).collect()
        };
        for _ in 0..steps {
            let k1 = self.derivative(&e, phases);
            let k2 = self.derivative(&axpy(&e, &k1, 0.5 * h), phases);
            let k3 = self.derivative(&axpy(&e, &k2, 0.5 * h), phases);
            let k4 = self.derivative(&axpy(&e, &k3, h), phases);
            for i in 0..self.n {
                e[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0);
            }
        }
        e
    }
}

/// Propagates `pulse` through `spectrum` and integrates the windows.
pub fn propagate(pulse: &Pulse, spectrum: &AbsorptionSpectrum, windows: &EchoWindows) -> Result<EchoTrace> {
    let spans = windows.spans(pulse)?;
    let medium = Medium::new(spectrum, pulse)?;
    let out = medium.exact(pulse);
    Ok(EchoTrace::build(pulse.grid, &out, &spans, pulse.energy()))
}

/// Gate pair for recall at order `order`: one pulse midway between the input
/// and the first echo, the reversed pulse midway between echoes `order - 1`
/// and `order`.
pub fn recall_gates(
    pulse: &Pulse,
    period_ns: f64,
    order: u32,
    duration_ns: f64,
    voltage: f64,
) -> Result<[ElectricPulse; 2]> {
    if order < 2 {
        return Err(Error::param("order", "recall needs order 2 or higher"));
    }
    let first = pulse.center_ns + 0.5 * period_ns - 0.5 * duration_ns;
    let second = pulse.center_ns + (order as f64 - 0.5) * period_ns - 0.5 * duration_ns;
    Ok([
        ElectricPulse::new(first, duration_ns, voltage)?,
        ElectricPulse::new(second, duration_ns, -voltage)?,
    ])
}

/// Stark-gated storage. Orders below `target_order` are dephased and the
/// target is recalled once the gate phases cancel.
pub fn smafc_run(
    pulse: &Pulse,
    spectrum: &AbsorptionSpectrum,
    stark: &StarkConfig,
    gates: &[ElectricPulse],
    target_order: u32,
    windows: &EchoWindows,
) -> Result<EchoTrace> {
    stark.validate()?;
    if target_order < 1 {
        return Err(Error::param("target_order", "echo order starts at 1"));
    }
    let windows = EchoWindows {
        max_order: windows.max_order.max(target_order),
        ..*windows
    };
    if windows.period_ns.is_none() {
        return Err(Error::param("period_ns", "gated storage needs the comb period"));
    }
    let spans = windows.spans(pulse)?;
    for g in gates {
        g.validate()?;
        for &(order, lo, hi) in &spans {
            if g.start_ns < hi && g.end_ns() > lo {
                return Err(Error::GateOverlap {
                    start_ns: g.start_ns,
                    end_ns: g.end_ns(),
                    order,
                });
            }
        }
    }
    let medium = Medium::new(spectrum, pulse)?;
    if gates.iter().all(|g| g.voltage == 0.0) {
        let out = medium.exact(pulse);
        return Ok(EchoTrace::build(pulse.grid, &out, &spans, pulse.energy()));
    }
    let dt = pulse.grid.dt_ns;
    let field: Vec<f64> = (0..medium.n)
        .map(|i| {
            let t = i as f64 * dt;
            gates
                .iter()
                .filter(|g| t >= g.start_ns && t < g.end_ns())
                .map(|g| stark.field_from_voltage(g.voltage))
                .sum()
        })
        .collect();
    let phases = stark.coefficients_khz_per_v_cm.map(|k| {
        let mut theta = 0.0;
        field
            .iter()
            .map(|e| {
                let z = Complex64::from_polar(1.0, theta);
                theta += 2.0 * PI * k * 1e-6 * e * dt;
                z
            })
            .collect::<Vec<_>>()
    });
    let out = medium.gated(pulse, &phases);
    Ok(EchoTrace::build(pulse.grid, &out, &spans, pulse.energy()))
}

/// Per-axis device efficiencies and the relative phase picked up by V.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarizationChannel {
    pub eta_h: f64,
    pub eta_v: f64,
    #[serde(default)]
    pub phase_rad: f64,
}

impl PolarizationChannel {
    pub fn new(eta_h: f64, eta_v: f64, phase_rad: f64) -> Result<Self> {
        let c = PolarizationChannel {
            eta_h,
            eta_v,
            phase_rad,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eta_h", self.eta_h), ("eta_v", self.eta_v)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(name, "efficiency must lie in [0, 1]"));
            }
        }
        if !self.phase_rad.is_finite() {
            return Err(Error::param("phase_rad", "must be finite"));
        }
        Ok(())
    }

    /// Kraus operator diag(sqrt(eta_h), sqrt(eta_v) e^{i phase}).
    pub fn kraus(&self) -> [Complex64; 2] {
        [
            Complex64::new(self.eta_h.sqrt(), 0.0),
            Complex64::from_polar(self.eta_v.sqrt(), self.phase_rad),
        ]
    }
}

/// Output Jones vector and the probability that the photon comes out.
pub fn apply_channel(jones_in: [Complex64; 2], channel: &PolarizationChannel) -> ([Complex64; 2], f64) {
    let k = channel.kraus();
    let out = [jones_in[0] * k[0], jones_in[1] * k[1]];
    let p = out[0].norm_sqr() + out[1].norm_sqr();
    (out, p)
}

/// |<in|out>|^2 with `out` renormalised.
pub fn state_fidelity(jones_in: [Complex64; 2], jones_out: [Complex64; 2]) -> f64 {
    let n_in = jones_in[0].norm_sqr() + jones_in[1].norm_sqr();
    let n_out = jones_out[0].norm_sqr() + jones_out[1].norm_sqr();
    let ov = jones_in[0].conj() * jones_out[0] + jones_in[1].conj() * jones_out[1];
    ov.norm_sqr() / (n_in * n_out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountingConfig {
    /// Mean photon number per input pulse.
    pub mu: f64,
    pub trials: u64,
    /// Transmission from the memory output to the detector, including
    /// detector efficiency.
    #[serde(default = "one")]
    pub collection_efficiency: f64,
    /// Mean dark and noise counts per histogram bin per trial.
    #[serde(default)]
    pub noise_rate: f64,
    #[serde(default = "ten")]
    pub bin_ns: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

fn ten() -> f64 {
    10.0
}

impl CountingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::param("mu", "mean photon number must be positive"));
        }
        if !(0.0..=1.0).contains(&self.collection_efficiency) {
            return Err(Error::param("collection_efficiency", "must lie in [0, 1]"));
        }
        if !(self.noise_rate >= 0.0 && self.noise_rate.is_finite()) {
            return Err(Error::param("noise_rate", "must be non-negative"));
        }
        if !(self.bin_ns > 0.0 && self.bin_ns.is_finite()) {
            return Err(Error::param("bin_ns", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountHistogram {
    /// Start time of each bin.
    pub bin_ns: Vec<f64>,
    pub width_ns: f64,
    pub counts: Vec<u64>,
    pub expected: Vec<f64>,
}

/// Signal-to-noise ratio of one echo window with its Poisson error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snr {
    pub value: f64,
    pub error: f64,
    pub signal_counts: u64,
    /// Mean noise counts in a window of the same width.
    pub noise_counts: f64,
}

/// Photon-counting histogram of `trace`. Each bin draws from its own
/// ChaCha8 stream so the result does not depend on the thread schedule.
pub fn counting_histogram(trace: &EchoTrace, cfg: &CountingConfig) -> Result<CountHistogram> {
    cfg.validate()?;
    let span = trace.time_ns.len() as f64 * trace.dt_ns;
    let nbins = (span / cfg.bin_ns).floor() as usize;
    if nbins == 0 {
        return Err(Error::param("bin_ns", "wider than the trace"));
    }
    let mut energy = vec![0.0; nbins];
    for (t, i) in trace.time_ns.iter().zip(&trace.intensity) {
        let b = (t / cfg.bin_ns).floor() as usize;
        if b < nbins {
            energy[b] += i * trace.dt_ns;
        }
    }
    let trials = cfg.trials as f64;
    let expected: Vec<f64> = energy
        .iter()
        .map(|e| cfg.mu * cfg.collection_efficiency * e / trace.input_energy * trials + cfg.noise_rate * trials)
        .collect();
    let counts = expected
        .par_iter()
        .enumerate()
        .map(|(b, &lambda)| -> Result<u64> {
            if lambda <= 0.0 {
                return Ok(0);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(b as u64);
            let d = Poisson::new(lambda).map_err(|e| Error::param("trials", e.to_string()))?;
            Ok(d.sample(&mut rng) as u64)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CountHistogram {
        bin_ns: (0..nbins).map(|b| b as f64 * cfg.bin_ns).collect(),
        width_ns: cfg.bin_ns,
        counts,
        expected,
    })
}

impl CountHistogram {
    fn in_window(&self, b: usize, lo: f64, hi: f64) -> bool {
        let c = self.bin_ns[b] + 0.5 * self.width_ns;
        c >= lo && c < hi
    }

    /// Counts in the window of echo `order` over the mean noise counts in a
    /// window of equal width taken from the bins after the last echo window.
    pub fn snr(&self, trace: &EchoTrace, order: u32) -> Result<Snr> {
        let m = trace
            .marker(order)
            .ok_or_else(|| Error::param("order", format!("trace has no window for order {order}")))?;
        let tail_ns = trace.markers.iter().map(|w| w.end_ns).fold(f64::NEG_INFINITY, f64::max);
        let mut signal = 0u64;
        let mut width = 0usize;
        let (mut noise, mut noise_bins) = (0u64, 0usize);
        for b in 0..self.counts.len() {
            if self.in_window(b, m.start_ns, m.end_ns) {
                signal += self.counts[b];
                width += 1;
            } else if self.bin_ns[b] >= tail_ns {
                noise += self.counts[b];
                noise_bins += 1;
            }
        }
        if width == 0 || noise_bins == 0 {
            return Err(Error::param(
                "bin_ns",
                "no bins inside the echo window or the noise region",
            ));
        }
        let noise_counts = noise as f64 / noise_bins as f64 * width as f64;
        if noise_counts == 0.0 {
            return Ok(Snr {
                value: f64::INFINITY,
                error: f64::INFINITY,
                signal_counts: signal,
                noise_counts,
            });
        }
        let value = signal as f64 / noise_counts;
        let rel = (1.0 / (signal.max(1) as f64) + 1.0 / noise_counts).sqrt();
        Ok(Snr {
            value,
            error: value * rel,
            signal_counts: signal,
            noise_counts,
        })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["bin_ns", "counts"]).map_err(csv_err)?;
        for (t, c) in self.bin_ns.iter().zip(&self.counts) {
            wr.write_record([t.to_string(), c.to_string()]).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

/// Noise rate per bin and trial that gives an expected SNR of `snr` for the
/// window of `order`.
pub fn noise_rate_for_snr(trace: &EchoTrace, cfg: &CountingConfig, order: u32, snr: f64) -> Result<f64> {
    cfg.validate()?;
    if !(snr > 0.0) {
        return Err(Error::param("snr", "must be positive"));
    }
    let m = trace
        .marker(order)
        .ok_or_else(|| Error::param("order", format!("trace has no window for order {order}")))?;
    let signal = cfg.mu * cfg.collection_efficiency * m.efficiency * cfg.trials as f64;
    let bins = ((m.end_ns - m.start_ns) / cfg.bin_ns).round().max(1.0);
    Ok(signal / (snr * bins * cfg.trials.max(1) as f64))
}
