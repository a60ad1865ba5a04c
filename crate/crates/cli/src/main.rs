//! Command-line driver binding the trap, waveform, signal, dynamics,
//! coherence and rate models into file-based pipelines.

mod config;
mod manifest;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use config::RunConfig;
use manifest::Manifest;
use matterlink_core::coherence::{fringe_fit, simulate_ramsey, t2_fit};
use matterlink_core::dynamics::{
    cumulative_distance_km, loss_upper_bound, simulate_link, sweep, InitialState, LinkScenario,
    SweepParameter,
};
use matterlink_core::io::Table;
use matterlink_core::linkrate::{compare, effective_photonic_rate, matter_link_rate_hz};
use matterlink_core::signal::predistort;
use matterlink_core::trap::{build_two_module_layout, TrapField, TrapLayout};
use matterlink_core::waveform::{
    downsample, smooth, synthesize_raw, verify_waveform, waveform_from_text, waveform_to_text,
    SynthesisConfig, TransportWaveform, TrapBasis, WellShape,
};

#[derive(Parser)]
#[command(name = "matterlink", version, about = "Two-module ion transport toolchain")]
struct Cli {
    /// TOML run configuration. Omitted: built-in defaults (layout-init,
    /// rates); other verbs require it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: $MATTERLINK_OUT or ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the configured RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Emit the electrode layout as a structured text file.
    LayoutInit,
    /// Synthesize the transport waveform (raw solve, smoothing,
    /// down-sampling) and write it out.
    Synth {
        /// Also keep the raw 2 um waveform.
        #[arg(long)]
        keep_raw: bool,
    },
    /// Check a waveform against the trap model, well by well.
    Verify {
        /// Waveform file (default: <out>/waveform.tsv).
        #[arg(long)]
        waveform: Option<PathBuf>,
    },
    /// Simulate one inter-module link and write the report and trajectory.
    Link {
        #[arg(long)]
        waveform: Option<PathBuf>,
        /// Play the ideal staircase instead of the filtered chain.
        #[arg(long)]
        ideal: bool,
        /// Pre-distort the waveform with this regularization first.
        #[arg(long)]
        predistort: Option<f64>,
    },
    /// Sweep one parameter over a grid of values.
    Sweep {
        /// duration-us | gap-x-um | misalign-y-um | predistort-reg
        #[arg(long)]
        param: String,
        /// Comma-separated grid values.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        /// Run with the filtered chain rather than ideal playback.
        #[arg(long)]
        filtered: bool,
    },
    /// Run Ramsey scans over the configured delays and fit the coherence
    /// time.
    Ramsey,
    /// Effective photonic-rate chain vs the transport link rate.
    Rates,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn out_dir(cli_out: &Option<PathBuf>) -> PathBuf {
    cli_out
        .clone()
        .or_else(|| std::env::var_os("MATTERLINK_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn load_config(cli: &Cli, optional: bool) -> Result<(RunConfig, String)> {
    match &cli.config {
        Some(path) => {
            let (mut cfg, text) = RunConfig::load(path)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let diags = cfg.validate();
            if !diags.is_empty() {
                for d in &diags {
                    eprintln!("config error: {d}");
                }
                bail!("{} configuration error(s) in {}", diags.len(), path.display());
            }
            Ok((cfg, text))
        }
        None if optional => {
            let mut cfg = RunConfig::defaults();
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            Ok((cfg, String::from("# built-in defaults\n")))
        }
        None => bail!("--config is required for this verb"),
    }
}

fn build_field(cfg: &RunConfig) -> Result<TrapField<f64>> {
    let layout = build_two_module_layout(&cfg.layout.to_params())?;
    Ok(TrapField::new(layout, cfg.drive.to_drive(), cfg.ion.to_ion()?))
}

fn well_shape(cfg: &RunConfig) -> Result<WellShape<f64>> {
    Ok(WellShape::for_axial_frequency(
        cfg.synthesis.axial_frequency_khz * 1e3,
        cfg.ion.to_ion()?,
    ))
}

fn synthesize(
    cfg: &RunConfig,
    field: &TrapField<f64>,
) -> Result<(TransportWaveform<f64>, TransportWaveform<f64>)> {
    let synth: SynthesisConfig<f64> = cfg.synthesis.to_config();
    let basis = TrapBasis::new(field, &synth)?;
    let raw = synthesize_raw(
        &basis,
        field.layout.zones.zone1,
        field.layout.zones.zone2,
        well_shape(cfg)?,
        &synth,
    )?;
    let smoothed = smooth(&raw, &synth)?;
    let down = downsample(&smoothed, &synth)?;
    Ok((raw, down))
}

fn read_waveform(path: &Path) -> Result<TransportWaveform<f64>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read waveform {}", path.display()))?;
    Ok(waveform_from_text(&text)?)
}

fn run(cli: Cli) -> Result<()> {
    let dir = out_dir(&cli.out);
    match &cli.verb {
        Verb::LayoutInit => {
            let (cfg, text) = load_config(&cli, true)?;
            let mut manifest = Manifest::new("layout-init", &text, cfg.seed);
            let layout = build_two_module_layout(&cfg.layout.to_params())?;
            let path = manifest.write_output(&dir, "layout.txt", &layout.to_text())?;
            manifest.finish(&dir)?;
            println!("wrote {}", path.display());
        }
        Verb::Synth { keep_raw } => {
            let (cfg, text) = load_config(&cli, false)?;
            let mut manifest = Manifest::new("synth", &text, cfg.seed);
            let field = build_field(&cfg)?;
            let (raw, down) = synthesize(&cfg, &field)?;
            manifest.write_output(&dir, "layout.txt", &field.layout.to_text())?;
            if *keep_raw {
                manifest.write_output(&dir, "waveform_raw.tsv", &waveform_to_text(&raw))?;
            }
            let path = manifest.write_output(&dir, "waveform.tsv", &waveform_to_text(&down))?;
            manifest.finish(&dir)?;
            println!(
                "wrote {} ({} solutions over {} um, {:.1} us)",
                path.display(),
                down.len(),
                (down.solutions.last().unwrap().position_um - down.solutions[0].position_um)
                    .abs(),
                down.duration_us()
            );
        }
        Verb::Verify { waveform } => {
            let (cfg, text) = load_config(&cli, false)?;
            let mut manifest = Manifest::new("verify", &text, cfg.seed);
            let field = build_field(&cfg)?;
            let path = waveform.clone().unwrap_or_else(|| dir.join("waveform.tsv"));
            let w = read_waveform(&path)?;
            check_waveform_matches_layout(&w, &field.layout)?;
            let report = verify_waveform(&field, &w);
            let mut t = Table::new(vec![
                "intended_um".into(),
                "actual_um".into(),
                "offset_um".into(),
                "axial_hz".into(),
                "field_v_per_m".into(),
                "captured".into(),
            ]);
            t.meta("max_offset_um", report.max_offset_um);
            t.meta("mean_offset_um", report.mean_offset_um);
            t.meta("max_axial_dev_hz", report.max_axial_dev_hz);
            t.meta("uncaptured_rows", report.uncaptured_rows);
            for r in &report.rows {
                t.push_row(vec![
                    r.intended_um,
                    r.actual_um.unwrap_or(f64::NAN),
                    r.offset_um.unwrap_or(f64::NAN),
                    r.axial_hz.unwrap_or(f64::NAN),
                    r.field_v_per_m,
                    if r.captured { 1.0 } else { 0.0 },
                ]);
            }
            manifest.write_output(&dir, "verify.tsv", &t.to_text())?;
            manifest.finish(&dir)?;
            println!(
                "verified {} wells: max offset {:.3} um, axial spread {:.0} Hz, {} uncaptured",
                report.rows.len(),
                report.max_offset_um,
                report.max_axial_dev_hz,
                report.uncaptured_rows
            );
            if report.uncaptured_rows > 0 {
                bail!("{} wells did not capture", report.uncaptured_rows);
            }
        }
        Verb::Link { waveform, ideal, predistort: reg } => {
            let (cfg, text) = load_config(&cli, false)?;
            let mut manifest = Manifest::new("link", &text, cfg.seed);
            let field = build_field(&cfg)?;
            let path = waveform.clone().unwrap_or_else(|| dir.join("waveform.tsv"));
            let mut w = read_waveform(&path)?;
            check_waveform_matches_layout(&w, &field.layout)?;
            let chain = cfg.signal.to_chain()?;
            if let Some(reg) = reg {
                let outcome = predistort(&w, &chain, *reg)?;
                if outcome.clipped {
                    eprintln!("note: pre-distortion clipped at the DAC range");
                }
                w = outcome.waveform;
            }
            let icfg = cfg.integrator.to_config()?;
            let chain_opt = if *ideal { None } else { Some(&chain) };
            let (report, traj) =
                simulate_link(&field, &w, chain_opt, &icfg, InitialState::Cold)?;

            let mut t = Table::new(vec![
                "t_us".into(),
                "x_um".into(),
                "y_um".into(),
                "z_um".into(),
                "vx".into(),
                "vy".into(),
                "vz".into(),
            ]);
            t.meta("seed", cfg.seed);
            for k in 0..traj.t_us.len() {
                let p = traj.pos_um[k];
                let v = traj.vel[k];
                t.push_row(vec![traj.t_us[k], p.x, p.y, p.z, v.x, v.y, v.z]);
            }
            manifest.write_output(&dir, "trajectory.tsv", &t.to_text())?;

            let mut rep = String::new();
            let _ = writeln!(rep, "# transport report");
            let _ = writeln!(rep, "seed = {}", cfg.seed);
            let _ = writeln!(rep, "chain = {}", if *ideal { "ideal" } else { "filtered" });
            let _ = writeln!(rep, "success = {}", report.success);
            let _ = writeln!(rep, "reached_target = {}", report.reached_target);
            let _ = writeln!(rep, "duration_us = {}", report.duration_us);
            let _ = writeln!(rep, "distance_um = {}", report.distance_um);
            let _ = writeln!(rep, "mean_speed_mps = {}", report.mean_speed_mps);
            let _ = writeln!(rep, "link_rate_hz = {}", 1e6 / report.duration_us);
            let _ = writeln!(rep, "final_axial_energy_mev = {}", report.final_axial_energy_mev);
            let _ = writeln!(rep, "final_quanta = {}", report.final_quanta);
            let _ = writeln!(rep, "final_axial_hz = {}", report.final_axial_hz);
            let _ = writeln!(rep, "max_excursion_um = {}", report.max_excursion_um);
            if let Some(t) = report.escaped_at_us {
                let _ = writeln!(rep, "escaped_at_us = {t}");
            }
            manifest.write_output(&dir, "report.txt", &rep)?;
            manifest.finish(&dir)?;
            println!(
                "link {}: {:.3} m/s over {:.0} um, quanta {:.2e}",
                if report.success { "succeeded" } else { "FAILED" },
                report.mean_speed_mps,
                report.distance_um,
                report.final_quanta
            );
        }
        Verb::Sweep { param, values, filtered } => {
            let (cfg, text) = load_config(&cli, false)?;
            let mut manifest = Manifest::new("sweep", &text, cfg.seed);
            let grid: Vec<f64> = values
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| anyhow::anyhow!("bad grid value {s:?}")))
                .collect::<Result<_>>()?;
            let parameter = match param.as_str() {
                "duration-us" => SweepParameter::DurationUs,
                "gap-x-um" => SweepParameter::GapXUm,
                "misalign-y-um" => SweepParameter::MisalignYUm,
                "predistort-reg" => SweepParameter::PredistortReg,
                other => bail!("unknown sweep parameter {other:?}"),
            };
            let scenario = LinkScenario {
                layout_params: cfg.layout.to_params(),
                drive: cfg.drive.to_drive(),
                ion: cfg.ion.to_ion()?,
                synthesis: cfg.synthesis.to_config(),
                shape: well_shape(&cfg)?,
                chain: if *filtered || parameter == SweepParameter::PredistortReg {
                    Some(cfg.signal.to_chain()?)
                } else {
                    None
                },
                integrator: cfg.integrator.to_config()?,
                init: InitialState::Cold,
                predistort_reg: None,
            };
            let rows = sweep(&scenario, parameter, &grid)?;
            let mut t = Table::new(vec![
                "value".into(),
                "ok".into(),
                "success".into(),
                "duration_us".into(),
                "mean_speed_mps".into(),
                "final_quanta".into(),
                "max_excursion_um".into(),
            ]);
            t.meta("param", param);
            t.meta("seed", cfg.seed);
            let mut failures = 0usize;
            for row in &rows {
                match &row.report {
                    Ok(r) => t.push_row(vec![
                        row.value,
                        1.0,
                        if r.success { 1.0 } else { 0.0 },
                        r.duration_us,
                        r.mean_speed_mps,
                        r.final_quanta,
                        r.max_excursion_um,
                    ]),
                    Err(e) => {
                        eprintln!("row {} failed: {e}", row.value);
                        failures += 1;
                        t.push_row(vec![row.value, 0.0, 0.0, f64::NAN, f64::NAN, f64::NAN, f64::NAN]);
                    }
                }
            }
            manifest.write_output(&dir, "sweep.tsv", &t.to_text())?;
            manifest.finish(&dir)?;
            println!("swept {} values of {param} ({failures} failed rows)", rows.len());
            if failures > 0 {
                bail!("{failures} sweep rows failed; completed rows are preserved");
            }
        }
        Verb::Ramsey => {
            let (cfg, text) = load_config(&cli, false)?;
            let mut manifest = Manifest::new("ramsey", &text, cfg.seed);
            let layout = build_two_module_layout(&cfg.layout.to_params())?;
            let zones = (layout.zones.zone1, layout.zones.zone2);
            let qubit = cfg.qubit.to_qubit();
            let noise = cfg.ramsey.to_noise(&qubit);
            let mut contrasts = Vec::new();
            for (k, &tau) in cfg.ramsey.tau_ms.iter().enumerate() {
                let seq = cfg.ramsey.to_sequence(tau)?;
                let data = simulate_ramsey(
                    &qubit,
                    &noise,
                    &seq,
                    zones,
                    cfg.ramsey.shots,
                    cfg.seed.wrapping_add(k as u64),
                )?;
                let mut t = Table::new(vec!["phi2_rad".into(), "P1".into(), "stderr".into()]);
                t.meta("tau_ms", tau);
                t.meta("links", cfg.ramsey.links);
                t.meta("shots", cfg.ramsey.shots);
                t.meta("seed", cfg.seed.wrapping_add(k as u64));
                for p in &data.points {
                    t.push_row(vec![p.phi2_rad, p.p1, p.stderr]);
                }
                manifest.write_output(&dir, &format!("fringe_tau{tau}ms.tsv"), &t.to_text())?;
                let fit = fringe_fit(&data.points)?;
                contrasts.push((tau, fit.contrast, fit.contrast_err, fit.phase_rad));
            }
            let mut t = Table::new(vec!["tau_ms".into(), "contrast".into(), "err".into()]);
            t.meta("links", cfg.ramsey.links);
            for &(tau, c, e, _) in &contrasts {
                t.push_row(vec![tau, c, e]);
            }
            manifest.write_output(&dir, "contrast.tsv", &t.to_text())?;

            let mut rep = String::new();
            let _ = writeln!(rep, "# coherence fit");
            let _ = writeln!(rep, "seed = {}", cfg.seed);
            let _ = writeln!(rep, "links = {}", cfg.ramsey.links);
            for &(tau, c, e, phase) in &contrasts {
                let _ = writeln!(rep, "contrast_tau{tau}ms = {c} +- {e} (phase {phase} rad)");
            }
            if contrasts.len() >= 3 {
                let curve: Vec<(f64, f64)> =
                    contrasts.iter().map(|&(tau, c, _, _)| (tau, c)).collect();
                let fit = t2_fit(&curve)?;
                match fit.t2_ms {
                    Some(t2) => {
                        let _ = writeln!(rep, "t2_ms = {t2} +- {}", fit.t2_err_ms);
                        println!("T2* = {t2:.0} ms +- {:.0} ms", fit.t2_err_ms);
                    }
                    None => {
                        let _ = writeln!(rep, "t2_ms = unbounded (non-decaying)");
                        println!("contrast does not decay over the scanned delays");
                    }
                }
            }
            manifest.write_output(&dir, "t2_fit.txt", &rep)?;
            manifest.finish(&dir)?;
        }
        Verb::Rates => {
            let (cfg, text) = load_config(&cli, true)?;
            let mut manifest = Manifest::new("rates", &text, cfg.seed);
            let p = cfg.photonic.to_params();
            let m = cfg.matterlink.to_params();
            let staged = effective_photonic_rate(&p);
            let cmp = compare(&p, &m);
            let loss = loss_upper_bound::<f64>(15_000_000, 0.95)?;
            let mut rep = String::new();
            let _ = writeln!(rep, "# interconnect rate comparison");
            let _ = writeln!(rep, "raw_rate_hz = {}", staged.raw_hz);
            let _ = writeln!(rep, "converted_rate_hz = {}", staged.converted_hz);
            let _ = writeln!(rep, "converted_fraction = {}", staged.converted_hz / staged.raw_hz);
            let _ = writeln!(rep, "switched_rate_hz = {}", staged.switched_hz);
            let _ = writeln!(rep, "switched_fraction = {}", staged.switched_hz / staged.raw_hz);
            let _ = writeln!(rep, "distilled_rate_hz = {}", staged.distilled_hz);
            let _ = writeln!(rep, "distilled_fraction = {}", staged.distilled_hz / staged.raw_hz);
            let _ = writeln!(rep, "matter_link_rate_hz = {}", matter_link_rate_hz(&m));
            let _ = writeln!(rep, "matter_over_distilled = {}", cmp.matter_over_distilled);
            let _ = writeln!(rep, "distilled_below_1hz = {}", cmp.distilled_below_1hz);
            let _ = writeln!(rep, "loss_point_bound_15e6 = {}", loss.point);
            let _ = writeln!(rep, "loss_exact_upper_95 = {}", loss.exact_upper);
            let _ = writeln!(
                rep,
                "cumulative_distance_km_15e6 = {}",
                cumulative_distance_km(15_000_000, 684.0)
            );
            manifest.write_output(&dir, "rates.txt", &rep)?;
            manifest.finish(&dir)?;
            println!(
                "matter link {:.0}/s vs distilled photonic {:.2}/s",
                matter_link_rate_hz(&m),
                staged.distilled_hz
            );
        }
    }
    Ok(())
}

fn check_waveform_matches_layout(
    w: &TransportWaveform<f64>,
    layout: &TrapLayout<f64>,
) -> Result<()> {
    for id in &w.electrode_ids {
        if layout.electrode(id).is_none() {
            bail!("waveform drives electrode {id:?} which the layout does not contain");
        }
    }
    if w.basis_fingerprint != layout.fingerprint() {
        eprintln!(
            "note: waveform was synthesized for a different layout (fingerprint {} vs {})",
            w.basis_fingerprint,
            layout.fingerprint()
        );
    }
    Ok(())
}
