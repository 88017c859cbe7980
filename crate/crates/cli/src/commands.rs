use std::fmt::Write as _;
use std::path::Path;

use remsim_core::afc::{
    fit_finesse, gaussian_efficiency, read_observations_csv, render_comb, square_efficiency, ToothShape,
};
use remsim_core::echo::{
    counting_histogram, noise_rate_for_snr, propagate, recall_gates, smafc_run, CountHistogram, CountingConfig,
    EchoTrace, EchoWindows, PolarizationChannel, Pulse, Snr,
};
use remsim_core::ion_ensemble::{AbsorptionSpectrum, IonEnsemble, Polarization};
use remsim_core::pump::{
    class_membership, prepare_enhanced_stages, run_sequence, subband_means, ClassFrame, EnhancedProfileReport,
    PumpSequence,
};
use remsim_core::stark::{fit_stark_coefficient, read_points_csv, split_spectrum};
use remsim_core::tomography::{
    classical_bound, mle_reconstruct, monte_carlo_error, noise_rate_for_snr as qpt_noise_rate, process_fidelity,
    sigma_margin, simulate_counts, ProcessMatrix, QptConfig, TomographyCounts,
};
use serde::Serialize;
use serde_json::json;

use crate::config::{read_input, Digest256, RunConfig};
use crate::error::{CliError, Result};
use crate::output::{Artifact, Format, Table};
use crate::plot::{self, Chart, Marker, Series, Style};

/// Shared state of one invocation.
pub struct Context {
    pub config: RunConfig,
    pub format: Format,
    pub plot: bool,
    pub inputs: Vec<Digest256>,
}

/// Everything a command produced, not yet written anywhere.
#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub parameters: serde_json::Value,
    pub report: String,
}

/// Independent RNG seeds derived from the global one.
mod stream {
    pub const COUNTS_H: u64 = 0;
    pub const COUNTS_V: u64 = 1;
    pub const QPT: u64 = 2;
    pub const RESAMPLE: u64 = 3;
}

fn sub_seed(seed: u64, k: u64) -> u64 {
    seed.wrapping_mul(8).wrapping_add(k)
}

fn pol_tag(pol: Polarization) -> &'static str {
    match pol {
        Polarization::H => "h",
        Polarization::V => "v",
    }
}

fn spectrum_table(s: &AbsorptionSpectrum) -> Table {
    Table::new(
        &["detuning_mhz", "depth"],
        vec![s.detunings().to_vec(), s.depth().to_vec()],
    )
}

fn trace_table(t: &EchoTrace) -> Table {
    Table::new(&["time_ns", "intensity"], vec![t.time_ns.clone(), t.intensity.clone()])
}

fn histogram_table(h: &CountHistogram) -> Table {
    Table::new(
        &["bin_ns", "counts"],
        vec![h.bin_ns.clone(), h.counts.iter().map(|&c| c as f64).collect()],
    )
}

fn svg(name: &str, chart: &Chart) -> Artifact {
    Artifact::new(format!("{name}.svg"), plot::render(chart))
}

fn spectra_chart(title: &str, curves: &[(&str, &AbsorptionSpectrum)], window: Option<(f64, f64)>) -> Chart {
    let series = curves
        .iter()
        .map(|(label, s)| {
            let (x, y): (Vec<f64>, Vec<f64>) = s
                .detunings()
                .iter()
                .zip(s.depth())
                .filter(|(x, _)| window.is_none_or(|(lo, hi)| **x >= lo && **x <= hi))
                .map(|(x, y)| (*x, *y))
                .unzip();
            Series {
                label: label.to_string(),
                x,
                y,
                style: Style::Line,
            }
        })
        .collect();
    Chart {
        title: title.to_string(),
        x_label: "detuning (MHz)".into(),
        y_label: "optical depth".into(),
        series,
        markers: Vec::new(),
    }
}

fn format_classes(c: &[remsim_core::ion_ensemble::IonClass]) -> String {
    if c.is_empty() {
        return "-".into();
    }
    c.iter().map(|c| c.roman()).collect::<Vec<_>>().join(",")
}

#[derive(Debug, Serialize)]
struct ProfileSummary {
    reports: Vec<EnhancedProfileReport>,
    /// Mean depth of the target sub-bands after pump-1 alone, H then V.
    pump1_subbands: Option<[(f64, f64); 2]>,
    classes_after_pump1: Option<serde_json::Value>,
    classes_after_both: Option<serde_json::Value>,
}

pub struct Prepared {
    pub natural: IonEnsemble,
    pub enhanced: IonEnsemble,
    pub reports: [EnhancedProfileReport; 2],
}

fn membership_json(stage: &IonEnsemble, natural: &IonEnsemble, frame: ClassFrame) -> Result<serde_json::Value> {
    let mut out = serde_json::Map::new();
    for pol in Polarization::BOTH {
        let m = class_membership(stage, natural, pol, frame, 1e-3)?;
        out.insert(
            pol_tag(pol).into(),
            json!({
                "full_band": m.full_band.iter().map(|c| c.roman()).collect::<Vec<_>>(),
                "lower_only": m.lower_only.iter().map(|c| c.roman()).collect::<Vec<_>>(),
                "upper_only": m.upper_only.iter().map(|c| c.roman()).collect::<Vec<_>>(),
                "lower_means": m.lower_means,
                "upper_means": m.upper_means,
            }),
        );
    }
    Ok(out.into())
}

pub fn prepare_ensemble(cfg: &RunConfig) -> Result<Prepared> {
    let natural = cfg.material.ensemble()?;
    let enhanced = prepare_enhanced_stages(&natural)?.enhanced;
    let reports = [
        EnhancedProfileReport::measure(&enhanced, Polarization::H)?,
        EnhancedProfileReport::measure(&enhanced, Polarization::V)?,
    ];
    Ok(Prepared {
        natural,
        enhanced,
        reports,
    })
}

pub fn prepare(ctx: &mut Context, sequence: Option<&Path>) -> Result<Outcome> {
    let natural = ctx.config.material.ensemble()?;
    let mut out = Outcome::default();
    let (prepared, summary) = match sequence {
        Some(path) => {
            let bytes = read_input(path, &mut ctx.inputs)?;
            let text = String::from_utf8(bytes).map_err(|e| CliError::config(path, e))?;
            let seq = PumpSequence::from_json(&text).map_err(|e| CliError::input(path, e))?;
            let e = run_sequence(&natural, &seq)?;
            let reports = Polarization::BOTH
                .iter()
                .filter_map(|&p| EnhancedProfileReport::measure(&e, p).ok())
                .collect();
            let summary = ProfileSummary {
                reports,
                pump1_subbands: None,
                classes_after_pump1: None,
                classes_after_both: None,
            };
            (e, summary)
        }
        None => {
            let stages = prepare_enhanced_stages(&natural)?;
            let sub = [
                subband_means(&stages.after_pump1, Polarization::H)?,
                subband_means(&stages.after_pump1, Polarization::V)?,
            ];
            let summary = ProfileSummary {
                reports: vec![
                    EnhancedProfileReport::measure(&stages.enhanced, Polarization::H)?,
                    EnhancedProfileReport::measure(&stages.enhanced, Polarization::V)?,
                ],
                pump1_subbands: Some(sub),
                classes_after_pump1: Some(membership_json(&stages.after_pump1, &natural, ClassFrame::pump1())?),
                classes_after_both: Some(membership_json(&stages.enhanced, &natural, ClassFrame::pump1())?),
            };
            for (label, stage) in [("pump-1", &stages.after_pump1), ("pump-1+2", &stages.enhanced)] {
                let m = class_membership(stage, &natural, Polarization::H, ClassFrame::pump1(), 1e-3)?;
                let _ = writeln!(
                    out.report,
                    "classes raised after {label} (H): full band {}, lower only {}, upper only {}",
                    format_classes(&m.full_band),
                    format_classes(&m.lower_only),
                    format_classes(&m.upper_only)
                );
            }
            if ctx.plot {
                let p1 = stages.after_pump1.absorption(Polarization::H);
                let nat = natural.absorption(Polarization::H);
                let fin = stages.enhanced.absorption(Polarization::H);
                out.artifacts.push(svg(
                    "preparation_h",
                    &spectra_chart(
                        "enhanced absorption (H)",
                        &[("natural", &nat), ("after pump-1", &p1), ("after pump-1+2", &fin)],
                        Some((-30.0, 30.0)),
                    ),
                ));
            }
            (stages.enhanced, summary)
        }
    };
    for pol in Polarization::BOTH {
        let s = prepared.absorption(pol);
        out.artifacts
            .push(spectrum_table(&s).artifact(&format!("spectrum_{}", pol_tag(pol)), ctx.format));
        if ctx.plot {
            let nat = natural.absorption(pol);
            out.artifacts.push(svg(
                &format!("spectrum_{}", pol_tag(pol)),
                &spectra_chart(
                    &format!("prepared spectrum ({})", pol_tag(pol).to_uppercase()),
                    &[("prepared", &s), ("natural", &nat)],
                    None,
                ),
            ));
        }
    }
    for r in &summary.reports {
        let _ = writeln!(
            out.report,
            "{:?}: mean depth {:.3} (natural {:.2}), enhancement {:.3}, width {:.2} MHz, ripple {:.2}%",
            r.polarization,
            r.mean_depth,
            r.natural_depth,
            r.enhancement,
            r.width_mhz,
            100.0 * r.ripple
        );
    }
    if let Some(sub) = summary.pump1_subbands {
        let _ = writeln!(
            out.report,
            "pump-1 alone sub-band means (H): {:.3} / {:.3}",
            sub[0].0, sub[0].1
        );
    }
    out.artifacts.push(Artifact::json("profile.json", &summary));
    out.parameters =
        json!({ "sequence": sequence.map_or_else(|| "enhanced_profile".to_string(), |p| p.display().to_string()) });
    Ok(out)
}

pub fn stark_fit(ctx: &mut Context, data: &Path) -> Result<Outcome> {
    let bytes = read_input(data, &mut ctx.inputs)?;
    let points = read_points_csv(bytes.as_slice()).map_err(|e| CliError::input(data, e))?;
    let fit = fit_stark_coefficient(&points)?;
    let mut out = Outcome::default();
    for (g, f) in fit.groups.iter().enumerate() {
        let _ = writeln!(
            out.report,
            "group {g}: slope {:.4} +/- {:.4} kHz/(V/cm), intercept {:.3} kHz",
            f.slope, f.slope_stderr, f.intercept
        );
    }
    let _ = writeln!(
        out.report,
        "mean |slope|: {:.4} +/- {:.4} kHz/(V/cm)",
        fit.mean_abs_slope, fit.mean_stderr
    );
    if ctx.plot {
        let mut series = Vec::new();
        for g in 0..2u8 {
            let pts: Vec<_> = points
                .iter()
                .filter(|p| {
                    p.group.map_or(
                        if g == 0 {
                            p.detuning_khz >= 0.0
                        } else {
                            p.detuning_khz <= 0.0
                        },
                        |x| x == g,
                    )
                })
                .collect();
            series.push(Series {
                label: format!("group {g}"),
                x: pts.iter().map(|p| p.field_v_per_cm).collect(),
                y: pts.iter().map(|p| p.detuning_khz).collect(),
                style: Style::Points,
            });
        }
        out.artifacts.push(svg(
            "stark_fit",
            &Chart {
                title: "antihole splitting".into(),
                x_label: "field (V/cm)".into(),
                y_label: "detuning (kHz)".into(),
                series,
                markers: Vec::new(),
            },
        ));
    }
    out.artifacts.push(Artifact::json("stark_fit.json", &fit));
    out.parameters = json!({ "data": data });
    Ok(out)
}

pub fn stark_split(ctx: &mut Context, field: Option<f64>, voltage: Option<f64>, pol: Polarization) -> Result<Outcome> {
    let stark = &ctx.config.stark;
    let field = match (field, voltage) {
        (Some(f), None) => f,
        (None, Some(v)) => stark.field_from_voltage(v),
        _ => return Err(CliError::Usage("give exactly one of --field or --voltage".into())),
    };
    let natural = ctx.config.material.ensemble()?;
    let antihole = run_sequence(&natural, &PumpSequence::stark_antihole())?.absorption(pol);
    let split = split_spectrum(&antihole, stark, field)?;
    let shifts = stark.shifts_mhz(field);
    let mut out = Outcome::default();
    let _ = writeln!(
        out.report,
        "field {field:.2} V/cm: group shifts {:.4} / {:.4} MHz",
        shifts[0], shifts[1]
    );
    let tag = pol_tag(pol);
    out.artifacts
        .push(spectrum_table(&antihole).artifact(&format!("antihole_{tag}"), ctx.format));
    out.artifacts
        .push(spectrum_table(&split).artifact(&format!("split_{tag}"), ctx.format));
    if ctx.plot {
        out.artifacts.push(svg(
            &format!("split_{tag}"),
            &spectra_chart(
                "Stark-split antihole",
                &[("0 V/cm", &antihole), ("split", &split)],
                Some((-3.0, 3.0)),
            ),
        ));
    }
    out.artifacts.push(Artifact::json(
        "split.json",
        &json!({ "field_v_per_cm": field, "shifts_mhz": shifts }),
    ));
    out.parameters = json!({ "field_v_per_cm": field, "voltage": voltage, "polarization": pol });
    Ok(out)
}

pub fn afc_efficiency(model: ToothShape, d: f64, finesse: f64, order: u32, d0: f64) -> Result<Outcome> {
    let eta = match model {
        ToothShape::Gaussian => gaussian_efficiency(d, finesse, order)?,
        ToothShape::Square => square_efficiency(d, finesse, order, d0)?,
    };
    let params = json!({ "model": model, "d": d, "finesse": finesse, "order": order, "d0": d0 });
    Ok(Outcome {
        report: format!("{eta:.4}\n"),
        artifacts: vec![Artifact::json(
            "efficiency.json",
            &json!({ "parameters": params, "efficiency": eta }),
        )],
        parameters: params,
    })
}

pub fn afc_fit(ctx: &mut Context, data: &Path, d: f64, coupling: Option<f64>) -> Result<Outcome> {
    let bytes = read_input(data, &mut ctx.inputs)?;
    let obs = read_observations_csv(bytes.as_slice()).map_err(|e| CliError::input(data, e))?;
    let fit = fit_finesse(&obs, d, coupling)?;
    let mut out = Outcome {
        report: format!(
            "finesse {:.3} +/- {:.3}, coupling {:.4} +/- {:.4}\n",
            fit.finesse, fit.finesse_stderr, fit.coupling, fit.coupling_stderr
        ),
        ..Outcome::default()
    };
    if ctx.plot {
        let orders: Vec<f64> = (1..=obs.iter().map(|o| o.order).max().unwrap_or(1))
            .map(f64::from)
            .collect();
        let model: Vec<f64> = orders
            .iter()
            .map(|&m| fit.coupling * gaussian_efficiency(d, fit.finesse, m as u32).unwrap_or(f64::NAN))
            .collect();
        out.artifacts.push(svg(
            "finesse_fit",
            &Chart {
                title: "echo efficiency by order".into(),
                x_label: "echo order".into(),
                y_label: "efficiency".into(),
                series: vec![
                    Series {
                        label: "data".into(),
                        x: obs.iter().map(|o| f64::from(o.order)).collect(),
                        y: obs.iter().map(|o| o.efficiency).collect(),
                        style: Style::Points,
                    },
                    Series {
                        label: "fit".into(),
                        x: orders,
                        y: model,
                        style: Style::Line,
                    },
                ],
                markers: Vec::new(),
            },
        ));
    }
    out.artifacts.push(Artifact::json("finesse_fit.json", &fit));
    out.parameters = json!({ "data": data, "d": d, "coupling_start": coupling });
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct EchoSummary {
    pub polarization: Polarization,
    pub comb_peak_depth: f64,
    pub gated: bool,
    pub target_order: u32,
    pub efficiencies: Vec<(u32, f64)>,
    pub recalled_efficiency: f64,
    pub closed_form_efficiency: f64,
    pub recall_time_ns: Option<f64>,
    pub total_efficiency: f64,
    pub noise_rate: f64,
    pub snr: Option<Snr>,
}

pub struct EchoStage {
    pub comb: AbsorptionSpectrum,
    pub trace: EchoTrace,
    pub histogram: CountHistogram,
    pub summary: EchoSummary,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EchoOverrides {
    pub voltage: Option<f64>,
    pub duration_ns: Option<f64>,
    pub order: Option<u32>,
    pub ungated: bool,
}

pub fn echo_stage(
    cfg: &RunConfig,
    prepared: &Prepared,
    pol: Polarization,
    over: EchoOverrides,
    seed: u64,
) -> Result<EchoStage> {
    let pi = match pol {
        Polarization::H => 0,
        Polarization::V => 1,
    };
    let depth = cfg.comb.peak_depth.map_or(prepared.reports[pi].mean_depth, |d| d[pi]);
    let spec = cfg.comb.spec(depth);
    let comb = render_comb(&spec, &cfg.material.grid, pol)?;
    let p = &cfg.pulse;
    let pulse = Pulse::gaussian(p.grid, p.center_ns, p.fwhm_ns, p.carrier_mhz)?;
    let period = 1e3 / spec.spacing_mhz;
    let order = over.order.unwrap_or(cfg.gates.order);
    let voltage = over.voltage.unwrap_or(cfg.gates.voltage);
    let duration = over.duration_ns.unwrap_or(cfg.gates.duration_ns);
    // the noise estimate reads the tail after the last window, past the visible echoes
    let windows = EchoWindows::for_comb(spec.spacing_mhz, 2 * order.max(3));
    let gated = !over.ungated && voltage != 0.0;
    let trace = if gated {
        let gates = recall_gates(&pulse, period, order, duration, voltage)?;
        smafc_run(&pulse, &comb, &cfg.stark, &gates, order, &windows)?
    } else {
        propagate(&pulse, &comb, &windows)?
    };
    let closed = match spec.tooth_shape {
        ToothShape::Gaussian => gaussian_efficiency(depth, spec.finesse, order)?,
        ToothShape::Square => square_efficiency(depth, spec.finesse, order, spec.background)?,
    };
    let c = &cfg.counting;
    let mut counting = CountingConfig {
        mu: c.mu,
        trials: c.trials,
        collection_efficiency: c.collection_efficiency,
        noise_rate: 0.0,
        bin_ns: c.bin_ns,
        seed,
    };
    counting.noise_rate = if c.trials > 0 && c.snr > 0.0 {
        noise_rate_for_snr(&trace, &counting, order, c.snr)?
    } else {
        0.0
    };
    let histogram = counting_histogram(&trace, &counting)?;
    let snr = (c.trials > 0).then(|| histogram.snr(&trace, order)).transpose()?;
    let summary = EchoSummary {
        polarization: pol,
        comb_peak_depth: depth,
        gated,
        target_order: order,
        efficiencies: trace
            .markers
            .iter()
            .filter(|m| m.order <= order.max(3))
            .map(|m| (m.order, m.efficiency))
            .collect(),
        recalled_efficiency: trace.efficiency(order).unwrap_or(0.0),
        closed_form_efficiency: closed,
        recall_time_ns: trace.centroid_ns(order).map(|t| t - pulse.center_ns),
        total_efficiency: trace.total_efficiency,
        noise_rate: counting.noise_rate,
        snr,
    };
    Ok(EchoStage {
        comb,
        trace,
        histogram,
        summary,
    })
}

fn echo_artifacts(ctx: &Context, stage: &EchoStage, out: &mut Outcome) {
    let tag = pol_tag(stage.summary.polarization);
    let f = ctx.format;
    out.artifacts
        .push(spectrum_table(&stage.comb).artifact(&format!("comb_{tag}"), f));
    out.artifacts
        .push(trace_table(&stage.trace).artifact(&format!("trace_{tag}"), f));
    out.artifacts
        .push(histogram_table(&stage.histogram).artifact(&format!("histogram_{tag}"), f));
    if ctx.plot {
        let b = ctx.config.comb.bandwidth_mhz;
        out.artifacts.push(svg(
            &format!("comb_{tag}"),
            &spectra_chart("atomic frequency comb", &[("comb", &stage.comb)], Some((-b, b))),
        ));
        let markers: Vec<Marker> = stage
            .trace
            .markers
            .iter()
            .filter(|m| m.order > 0 && m.order <= stage.summary.target_order.max(3))
            .map(|m| Marker {
                x: 0.5 * (m.start_ns + m.end_ns),
                label: format!("m={}", m.order),
            })
            .collect();
        let up = tag.to_uppercase();
        let trace = plot::chart_for(
            &trace_table(&stage.trace),
            plot::PlotKind::Trace,
            &format!("echo trace ({up})"),
            markers.clone(),
        )
        .expect("trace table has its columns");
        out.artifacts.push(svg(&format!("trace_{tag}"), &trace));
        let hist = plot::chart_for(
            &histogram_table(&stage.histogram),
            plot::PlotKind::Histogram,
            &format!("photon counts ({up})"),
            markers,
        )
        .expect("histogram table has its columns");
        out.artifacts.push(svg(&format!("histogram_{tag}"), &hist));
    }
    let s = &stage.summary;
    let _ = writeln!(
        out.report,
        "{:?}: comb d {:.3}, echo-{} efficiency {:.4} (closed form {:.4}){}{}",
        s.polarization,
        s.comb_peak_depth,
        s.target_order,
        s.recalled_efficiency,
        s.closed_form_efficiency,
        s.recall_time_ns.map_or(String::new(), |t| format!(", at {t:.1} ns")),
        s.snr
            .map_or(String::new(), |x| format!(", SNR {:.0} +/- {:.0}", x.value, x.error)),
    );
}

pub fn echo(ctx: &mut Context, pol: Polarization, over: EchoOverrides) -> Result<Outcome> {
    let prepared = prepare_ensemble(&ctx.config)?;
    let k = if pol == Polarization::H {
        stream::COUNTS_H
    } else {
        stream::COUNTS_V
    };
    let stage = echo_stage(&ctx.config, &prepared, pol, over, sub_seed(ctx.config.seed, k))?;
    let mut out = Outcome::default();
    echo_artifacts(ctx, &stage, &mut out);
    out.artifacts
        .push(Artifact::json(format!("echo_{}.json", pol_tag(pol)), &stage.summary));
    out.parameters = json!({ "polarization": pol, "overrides": over });
    Ok(out)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SimulateArgs {
    pub eta_h: f64,
    pub eta_v: f64,
    pub phase_rad: f64,
    pub mu: f64,
    pub trials: u64,
    pub snr: f64,
}

fn simulate(args: SimulateArgs, seed: u64) -> Result<(PolarizationChannel, QptConfig, TomographyCounts)> {
    let channel = PolarizationChannel::new(args.eta_h, args.eta_v, args.phase_rad)?;
    let noise_rate = if args.snr > 0.0 {
        qpt_noise_rate(args.mu, 0.5 * (args.eta_h + args.eta_v), args.snr)?
    } else {
        0.0
    };
    let cfg = QptConfig {
        mu: args.mu,
        trials: args.trials,
        noise_rate,
        seed,
    };
    let counts = simulate_counts(&channel, &cfg)?;
    Ok((channel, cfg, counts))
}

pub fn qpt_simulate(ctx: &mut Context, args: SimulateArgs) -> Result<Outcome> {
    let (channel, cfg, counts) = simulate(args, sub_seed(ctx.config.seed, stream::QPT))?;
    let text = counts.to_json()? + "\n";
    Ok(Outcome {
        report: format!(
            "{} settings, {} counts, noise rate {:.3e} per trial\n",
            counts.settings.len(),
            counts.total(),
            cfg.noise_rate
        ),
        artifacts: vec![
            Artifact::new("counts.json", text),
            Artifact::json("channel.json", &json!({ "channel": channel, "qpt": cfg })),
        ],
        parameters: serde_json::to_value(args).expect("serializable"),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct QptSummary {
    pub fidelity: f64,
    pub nll: f64,
    pub iterations: u64,
    pub mc_std: f64,
    pub mc_mean: f64,
    pub resamples: usize,
    pub mu: f64,
    pub eta: f64,
    pub classical_bound: f64,
    pub sigma_margin: f64,
}

fn chi_artifact(chi: &ProcessMatrix, format: Format) -> Result<Artifact> {
    Ok(match format {
        Format::Csv => {
            let mut buf = Vec::new();
            chi.write_csv(&mut buf)?;
            Artifact::new("chi.csv", buf)
        }
        Format::Json => Artifact::new("chi.json", chi.to_json()? + "\n"),
    })
}

fn analyse(
    counts: &TomographyCounts,
    resamples: usize,
    seed: u64,
    mu: f64,
    eta: f64,
) -> Result<(ProcessMatrix, QptSummary)> {
    let rec = mle_reconstruct(counts)?;
    let fidelity = process_fidelity(&rec.process, &ProcessMatrix::identity())?;
    let mc = monte_carlo_error(counts, resamples, seed)?;
    let bound = classical_bound(mu, eta)?;
    let margin = sigma_margin(fidelity, mc.std_dev, bound)?;
    Ok((
        rec.process,
        QptSummary {
            fidelity,
            nll: rec.nll,
            iterations: rec.iterations,
            mc_std: mc.std_dev,
            mc_mean: mc.mean,
            resamples,
            mu,
            eta,
            classical_bound: bound,
            sigma_margin: margin,
        },
    ))
}

fn qpt_report(s: &QptSummary) -> String {
    format!(
        "process fidelity {:.5} +/- {:.5} ({} resamples)\nclassical bound (mu {}, eta {:.4}): {:.4}\nmargin: {:.1} standard deviations\n",
        s.fidelity, s.mc_std, s.resamples, s.mu, s.eta, s.classical_bound, s.sigma_margin
    )
}

fn qpt_outputs(ctx: &Context, chi: &ProcessMatrix, s: &QptSummary, out: &mut Outcome) -> Result<()> {
    out.artifacts.push(chi_artifact(chi, ctx.format)?);
    if ctx.plot {
        out.artifacts.push(Artifact::new("chi.svg", plot::render_chi(chi)));
    }
    out.artifacts.push(Artifact::json(
        "bound.json",
        &json!({ "mu": s.mu, "eta": s.eta, "classical_bound": s.classical_bound }),
    ));
    out.artifacts.push(Artifact::json(
        "margin.json",
        &json!({ "fidelity": s.fidelity, "sigma": s.mc_std, "bound": s.classical_bound, "sigma_margin": s.sigma_margin }),
    ));
    out.report.push_str(&qpt_report(s));
    Ok(())
}

pub fn qpt_reconstruct(
    ctx: &mut Context,
    counts_path: &Path,
    resamples: Option<usize>,
    eta: Option<f64>,
) -> Result<Outcome> {
    let bytes = read_input(counts_path, &mut ctx.inputs)?;
    let text = String::from_utf8(bytes).map_err(|e| CliError::config(counts_path, e))?;
    let counts = TomographyCounts::from_json(&text).map_err(|e| CliError::input(counts_path, e))?;
    let first = counts
        .settings
        .first()
        .ok_or_else(|| CliError::Validation("counts file has no settings".into()))?;
    let mu = first.mu;
    // detected fraction per pulse, noise included
    let eta = eta.unwrap_or_else(|| {
        let det: f64 = counts.settings.iter().map(|s| (s.counts[0] + s.counts[1]) as f64).sum();
        let sent: f64 = counts.settings.iter().map(|s| s.mu * s.trials as f64).sum();
        (det / sent).clamp(1e-9, 1.0)
    });
    let resamples = resamples.unwrap_or(ctx.config.qpt.resamples);
    let (chi, summary) = analyse(&counts, resamples, sub_seed(ctx.config.seed, stream::RESAMPLE), mu, eta)?;
    let mut out = Outcome::default();
    qpt_outputs(ctx, &chi, &summary, &mut out)?;
    out.artifacts.push(Artifact::json("reconstruction.json", &summary));
    out.parameters = json!({ "counts": counts_path, "resamples": resamples, "mu": mu, "eta": eta });
    Ok(out)
}

pub fn qpt_bound(mu: f64, eta: f64, fidelity: Option<f64>, sigma: Option<f64>) -> Result<Outcome> {
    let bound = classical_bound(mu, eta)?;
    let mut report = format!("{bound:.4}\n");
    let mut result = json!({ "mu": mu, "eta": eta, "classical_bound": bound });
    if let (Some(f), Some(s)) = (fidelity, sigma) {
        let m = sigma_margin(f, s, bound)?;
        let _ = writeln!(report, "margin: {m:.1} standard deviations");
        result["fidelity"] = json!(f);
        result["sigma"] = json!(s);
        result["sigma_margin"] = json!(m);
    }
    Ok(Outcome {
        report,
        artifacts: vec![Artifact::json("bound.json", &result)],
        parameters: json!({ "mu": mu, "eta": eta, "fidelity": fidelity, "sigma": sigma }),
    })
}

pub fn pipeline(ctx: &mut Context) -> Result<Outcome> {
    let cfg = ctx.config.clone();
    let prepared = prepare_ensemble(&cfg)?;
    let mut out = Outcome::default();
    for pol in Polarization::BOTH {
        out.artifacts.push(
            spectrum_table(&prepared.enhanced.absorption(pol))
                .artifact(&format!("spectrum_{}", pol_tag(pol)), ctx.format),
        );
        if ctx.plot {
            let nat = prepared.natural.absorption(pol);
            let fin = prepared.enhanced.absorption(pol);
            out.artifacts.push(svg(
                &format!("spectrum_{}", pol_tag(pol)),
                &spectra_chart(
                    "prepared spectrum",
                    &[("prepared", &fin), ("natural", &nat)],
                    Some((-30.0, 30.0)),
                ),
            ));
        }
    }
    for r in &prepared.reports {
        let _ = writeln!(
            out.report,
            "{:?}: enhanced depth {:.3} ({:.2}x), width {:.2} MHz",
            r.polarization, r.mean_depth, r.enhancement, r.width_mhz
        );
    }
    let over = EchoOverrides {
        voltage: None,
        duration_ns: None,
        order: None,
        ungated: false,
    };
    let h = echo_stage(
        &cfg,
        &prepared,
        Polarization::H,
        over,
        sub_seed(cfg.seed, stream::COUNTS_H),
    )?;
    let v = echo_stage(
        &cfg,
        &prepared,
        Polarization::V,
        over,
        sub_seed(cfg.seed, stream::COUNTS_V),
    )?;
    echo_artifacts(ctx, &h, &mut out);
    echo_artifacts(ctx, &v, &mut out);
    let q = &cfg.qpt;
    let sim = SimulateArgs {
        eta_h: h.summary.recalled_efficiency,
        eta_v: v.summary.recalled_efficiency,
        phase_rad: q.phase_rad,
        mu: q.mu,
        trials: q.trials,
        snr: q.snr,
    };
    let (channel, qcfg, counts) = simulate(sim, sub_seed(cfg.seed, stream::QPT))?;
    out.artifacts
        .push(Artifact::new("counts.json", counts.to_json()? + "\n"));
    let eta = 0.5 * (channel.eta_h + channel.eta_v);
    let (chi, summary) = analyse(&counts, q.resamples, sub_seed(cfg.seed, stream::RESAMPLE), q.mu, eta)?;
    qpt_outputs(ctx, &chi, &summary, &mut out)?;
    out.artifacts.push(Artifact::json(
        "summary.json",
        &json!({
            "profile": prepared.reports,
            "echo": [h.summary, v.summary],
            "channel": channel,
            "qpt_config": qcfg,
            "qpt": summary,
        }),
    ));
    out.parameters = json!({});
    Ok(out)
}

pub fn plot_file(ctx: &mut Context, artifact: &Path, kind: Option<plot::PlotKind>) -> Result<Outcome> {
    let bytes = read_input(artifact, &mut ctx.inputs)?;
    let name = artifact.file_name().and_then(|s| s.to_str()).unwrap_or("artifact");
    let period = 1e3 / ctx.config.comb.spacing_mhz;
    let a = plot::plot_artifact(name, &bytes, kind, period)?;
    Ok(Outcome {
        report: format!("wrote {}\n", a.name),
        artifacts: vec![a],
        parameters: json!({ "artifact": artifact, "kind": kind, "echo_period_ns": period }),
    })
}
