//! One function per subcommand. Each returns the record to write and a
//! short human-readable report for stdout.

use serde_json::{json, Value as Json};

use super::check::run_checks;
use super::config::{RawConfig, ScenarioConfig};
use super::record::{Manifest, RunRecord, Table};
use super::{counts_model, Experiment};
use crate::cells;
use crate::error::Result;
use crate::lindblad::transmission_scan;
use crate::meanfield::{ramp_experiment, static_critical_coupling, threshold_map, PowerModel};
use crate::params::{EffectiveParams, PhysicalConfig};
use crate::spectrum::{crossing_map, splitting_from_scan, tc_normal_modes, CrossingSetup};
use crate::units::{per_us_to_per_ms, to_mhz};

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    /// report printed on stdout
    pub text: String,
    /// id of the first failing self-check, if any
    pub failed_check: Option<String>,
}

/// Run one experiment without touching the filesystem.
pub fn execute(experiment: Experiment, cfg: &ScenarioConfig, raw: &RawConfig) -> Result<(RunRecord, Outcome)> {
    let (summary, tables, documents, outcome) = match experiment {
        Experiment::Params => params(cfg)?,
        Experiment::SplittingMap => splitting_map(cfg)?,
        Experiment::Transmission => transmission(cfg)?,
        Experiment::Ramp => ramp(cfg)?,
        Experiment::ThresholdMap => thresholds(cfg)?,
        Experiment::QuantumCheck => quantum_check(cfg)?,
    };
    let record = RunRecord {
        manifest: Manifest {
            tool: "dicke-sim".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: experiment.name().into(),
            config_path: String::new(),
            overrides: Vec::new(),
            resolved: raw.resolved_listing(),
            started_at: String::new(),
            finished_at: String::new(),
            files: Vec::new(),
        },
        summary,
        tables,
        documents,
    };
    Ok((record, outcome))
}

type Parts = (Json, Vec<Table>, Vec<(String, Json)>, Outcome);

fn mhz_opt(v: Option<f64>) -> Option<f64> {
    v.map(to_mhz)
}

fn report(lines: &[(String, String)]) -> String {
    let width = lines.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    lines.iter().map(|(k, v)| format!("{k:<width$}  {v}\n")).collect()
}

fn power_model(cfg: &ScenarioConfig, split: f64) -> Result<PowerModel> {
    PowerModel::new(cfg.physical.clone(), cfg.calibration, split, cfg.stark)
}

fn params(cfg: &ScenarioConfig) -> Result<Parts> {
    let model = power_model(cfg, cfg.beam_split())?;
    let eff = model.effective_at(cfg.total_power())?;
    let formula_shift = cfg.physical.differential_stark_shift()?;
    let lambda_c = static_critical_coupling(&eff);
    let rate = cfg.physical.scattering_rate_estimate()?;
    let (lo, hi) = (cfg.ramp.protocol.p_end * 1e-3, cfg.ramp.protocol.p_end * 10.0);
    let p_static = model.static_threshold(lo, hi)?;

    let mhz_rows: Vec<(&str, f64)> = vec![
        ("omega", eff.omega),
        ("omega0", eff.omega0),
        ("delta", eff.delta),
        ("lambda_r", eff.lambda_r),
        ("lambda_s", eff.lambda_s),
        ("lambda_dicke", eff.dicke_coupling()),
        ("cavity_tc", eff.cavity_tc()),
        ("omega_ds_model", eff.omega_ds),
        ("omega_ds_formula", formula_shift),
        ("Delta_r", eff.delta_r),
        ("Delta_s", eff.delta_s),
        ("omega_d", cfg.physical.dispersive_shift(cfg.physical.n_total)?),
        ("eta", cfg.physical.eta),
        ("kappa", eff.kappa),
    ];
    let mut table = Table::new("params", &["quantity", "value", "unit"]);
    let mut lines = Vec::new();
    for (k, v) in &mhz_rows {
        table.push(cells![*k, to_mhz(*v), "MHz"]);
        lines.push((k.to_string(), format!("{:.6} MHz", to_mhz(*v))));
    }
    match &lambda_c {
        Ok(l) => {
            table.push(cells!["lambda_c", to_mhz(*l), "MHz"]);
            lines.push(("lambda_c".into(), format!("{:.6} MHz", to_mhz(*l))));
        }
        Err(e) => lines.push(("lambda_c".into(), format!("unavailable ({e})"))),
    }
    let extra: Vec<(&str, f64, &str)> = vec![
        ("asymmetry", eff.asymmetry(), ""),
        ("N_total", cfg.physical.n_total as f64, ""),
        ("N_lambda", eff.n_lambda as f64, ""),
        ("scattering_rate", rate, "1/ms"),
        ("c_rabi", to_mhz(cfg.calibration.c_rabi), "MHz/sqrt(mW)"),
        ("power_total", cfg.total_power(), "mW"),
    ];
    for (k, v, u) in &extra {
        table.push(cells![*k, *v, *u]);
        let shown = if k.starts_with("N_") { format!("{v}") } else { format!("{v:.6} {u}") };
        lines.push((k.to_string(), shown.trim_end().to_string()));
    }
    table.push(cells!["p_static", p_static, "mW"]);
    lines.push((
        "p_static".into(),
        p_static.map_or("none in range".into(), |p| format!("{p:.4} mW")),
    ));

    let mut summary = serde_json::Map::new();
    for (k, v) in &mhz_rows {
        summary.insert(format!("{k}_mhz"), json!(to_mhz(*v)));
    }
    summary.insert("lambda_c_mhz".into(), json!(lambda_c.as_ref().ok().map(|l| to_mhz(*l))));
    summary.insert("lambda_c_error".into(), json!(lambda_c.as_ref().err().map(|e| e.to_string())));
    summary.insert("asymmetry".into(), json!(eff.asymmetry()));
    summary.insert("n_total".into(), json!(cfg.physical.n_total));
    summary.insert("n_lambda".into(), json!(eff.n_lambda));
    summary.insert("scattering_rate_per_ms".into(), json!(rate));
    summary.insert("kappa_per_ms".into(), json!(per_us_to_per_ms(eff.kappa)));
    summary.insert("c_rabi_mhz_per_sqrt_mw".into(), json!(to_mhz(cfg.calibration.c_rabi)));
    summary.insert("p_static_mw".into(), json!(p_static));
    summary.insert("stark".into(), serde_json::to_value(cfg.stark)?);
    let outcome = Outcome {
        text: report(&lines),
        failed_check: None,
    };
    Ok((Json::Object(summary), vec![table], vec![], outcome))
}

/// Configuration of the splitting experiments: `s` beam off, `η` from the
/// splitting block and `ζ` chosen so the spin meets the cavity at the
/// configured resonance shift.
fn resonant_config(cfg: &ScenarioConfig) -> Result<PhysicalConfig> {
    let s = &cfg.splitting;
    let mut p = cfg.physical.clone();
    p.eta = s.eta;
    let mut p = p.with_beam_power(&cfg.calibration, s.power_r, 1.0)?;
    let at_res = p.with_dispersive_shift(s.resonance_shift)?;
    let cavity = at_res.effective_params()?.cavity_tc();
    p.zeta = p.zeta_for_spin_frequency(cavity)?;
    Ok(p)
}

fn splitting_map(cfg: &ScenarioConfig) -> Result<Parts> {
    let s = &cfg.splitting;
    let base = resonant_config(cfg)?;
    let n = s.atom_points.max(1);
    let atoms = (0..n)
        .map(|i| {
            let f = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
            base.atoms_from_shift(s.omega_d_min + (s.omega_d_max - s.omega_d_min) * f)
        })
        .collect::<Result<Vec<u64>>>()?;
    let setup = CrossingSetup {
        cfg: base,
        calib: cfg.calibration,
        power_r: s.power_r,
        atoms,
        probe: s.probe.clone(),
        eta_p: s.eta_p,
        fock: s.fock,
        spin: s.spin,
        bin_width: s.bin_width,
    };
    let map = crossing_map(&setup)?;

    let mut long = Table::new("map", &["omega_d_mhz", "traces", "delta_p_mhz", "transmission"]);
    for row in &map.rows {
        for (p, t) in map.probe.iter().zip(&row.transmission) {
            long.push(cells![to_mhz(row.bin_center), row.traces, to_mhz(*p), *t]);
        }
    }
    let mut overlay = Table::new(
        "overlay",
        &["omega_d_mhz", "bare_cavity_mhz", "bare_spin_mhz", "lower_mhz", "upper_mhz", "lambda_r_mhz"],
    );
    for o in &map.overlay {
        overlay.push(cells![
            to_mhz(o.omega_d),
            to_mhz(o.bare_cavity),
            to_mhz(o.bare_spin),
            to_mhz(o.lower),
            to_mhz(o.upper),
            to_mhz(o.lambda_r)
        ]);
    }
    let doc = json!({
        "delta_p_mhz": map.probe.iter().map(|p| to_mhz(*p)).collect::<Vec<_>>(),
        "omega_d_mhz": map.rows.iter().map(|r| to_mhz(r.bin_center)).collect::<Vec<_>>(),
        "transmission": map.rows.iter().map(|r| r.transmission.clone()).collect::<Vec<_>>(),
    });

    let at_resonance = map
        .overlay
        .iter()
        .min_by(|a, b| (a.omega_d - s.resonance_shift).abs().total_cmp(&(b.omega_d - s.resonance_shift).abs()))
        .expect("overlay is nonempty");
    let nearest = map
        .rows
        .iter()
        .min_by(|a, b| {
            let da = (a.bin_center - s.resonance_shift).abs();
            let db = (b.bin_center - s.resonance_shift).abs();
            da.total_cmp(&db)
        })
        .expect("rows are nonempty");
    let trace: Vec<(f64, f64)> = map.probe.iter().copied().zip(nearest.transmission.iter().copied()).collect();
    let fit = splitting_from_scan(&trace, cfg.physical.kappa);
    let summary = json!({
        "rows": map.rows.len(),
        "atom_numbers": setup.atoms.len(),
        "branch_gap_mhz": to_mhz(at_resonance.upper - at_resonance.lower),
        "branch_gap_at_omega_d_mhz": to_mhz(at_resonance.omega_d),
        "lambda_r_mhz": to_mhz(at_resonance.lambda_r),
        "resonance_row_omega_d_mhz": to_mhz(nearest.bin_center),
        "fitted_splitting_mhz": fit.as_ref().ok().map(|f| to_mhz(f.splitting)),
        "fit_error": fit.as_ref().err().map(|e| e.to_string()),
    });
    let text = report(&[
        ("rows".into(), map.rows.len().to_string()),
        (
            "branch gap".into(),
            format!("{:.4} MHz at omega_d {:.3} MHz", to_mhz(at_resonance.upper - at_resonance.lower), to_mhz(at_resonance.omega_d)),
        ),
        (
            "fitted splitting".into(),
            fit.as_ref()
                .map_or_else(|e| format!("unavailable ({e})"), |f| format!("{:.4} MHz", to_mhz(f.splitting))),
        ),
    ]);
    Ok((
        summary,
        vec![long, overlay],
        vec![("map".into(), doc)],
        Outcome { text, failed_check: None },
    ))
}

fn transmission(cfg: &ScenarioConfig) -> Result<Parts> {
    let s = &cfg.splitting;
    let p = resonant_config(cfg)?.with_dispersive_shift(s.transmission_omega_d)?;
    let eff: EffectiveParams = p.effective_params()?;
    let scan = transmission_scan(&eff, &s.transmission_probe, s.eta_p, &s.fock, &s.spin)?;
    let mut table = Table::new("transmission", &["delta_p_mhz", "photons", "normalized"]);
    for pt in &scan {
        table.push(cells![to_mhz(pt.delta_p), pt.photons, pt.normalized]);
    }
    let (lo, hi) = tc_normal_modes(eff.cavity_tc(), eff.omega0, eff.lambda_r);
    let (lo, hi) = (lo + eff.eta, hi + eff.eta);
    let trace: Vec<(f64, f64)> = scan.iter().map(|pt| (pt.delta_p, pt.normalized)).collect();
    let fit = splitting_from_scan(&trace, eff.kappa);
    let (deviation, within) = match &fit {
        Ok(f) => {
            let d = (f.peak1 - lo).abs().max((f.peak2 - hi).abs());
            (Some(d), d <= eff.kappa / 2.0)
        }
        Err(_) => (None, false),
    };
    let summary = json!({
        "omega_d_mhz": to_mhz(s.transmission_omega_d),
        "n_total": p.n_total,
        "lambda_r_mhz": to_mhz(eff.lambda_r.abs()),
        "mode_lower_mhz": to_mhz(lo),
        "mode_upper_mhz": to_mhz(hi),
        "peak_lower_mhz": fit.as_ref().ok().map(|f| to_mhz(f.peak1)),
        "peak_upper_mhz": fit.as_ref().ok().map(|f| to_mhz(f.peak2)),
        "half_splitting_mhz": fit.as_ref().ok().map(|f| to_mhz(f.splitting / 2.0)),
        "fit_width_mhz": fit.as_ref().ok().map(|f| to_mhz(f.width)),
        "max_peak_deviation_mhz": mhz_opt(deviation),
        "peaks_within_half_kappa": within,
        "fit_error": fit.as_ref().err().map(|e| e.to_string()),
    });
    let text = report(&[
        ("lambda_r".into(), format!("{:.4} MHz", to_mhz(eff.lambda_r.abs()))),
        ("normal modes".into(), format!("{:.4}, {:.4} MHz", to_mhz(lo), to_mhz(hi))),
        (
            "fitted peaks".into(),
            fit.as_ref().map_or_else(
                |e| format!("unavailable ({e})"),
                |f| format!("{:.4}, {:.4} MHz", to_mhz(f.peak1), to_mhz(f.peak2)),
            ),
        ),
        ("within kappa/2".into(), within.to_string()),
    ]);
    Ok((summary, vec![table], vec![], Outcome { text, failed_check: None }))
}

fn ramp(cfg: &ScenarioConfig) -> Result<Parts> {
    let r = &cfg.ramp;
    let model = power_model(cfg, r.split)?;
    let out = ramp_experiment(&model, &r.protocol, &r.detector, &r.options)?;
    let photons: Vec<f64> = out.series.iter().map(|s| s.photons).collect();
    let counts = counts_model(&photons, cfg.physical.kappa, r.detector.efficiency, r.detector.bin)?;
    let mut table = Table::new(
        "ramp",
        &["t_us", "power_mw", "lambda_mhz", "omega0_mhz", "abs_a2", "s_z", "photons", "counts"],
    );
    for (s, c) in out.series.iter().zip(&counts) {
        table.push(cells![
            s.t,
            s.power,
            to_mhz(s.lambda),
            to_mhz(s.omega0),
            s.abs_a2,
            s.s_z,
            s.photons,
            *c
        ]);
    }
    let (lo, hi) = (r.protocol.p_end * 1e-3, r.protocol.p_end * 10.0);
    let p_static = model.static_threshold(lo, hi)?;
    let lambda_c = p_static.map(|p| model.dicke_coupling_at(p)).transpose()?;
    let res = &out.result;
    let summary = json!({
        "detected": res.detected,
        "p_threshold_mw": res.p_threshold,
        "lambda_at_threshold_mhz": to_mhz(res.lambda_at_threshold),
        "detection_time_us": res.detection_time,
        "p_static_mw": p_static,
        "lambda_c_static_mhz": mhz_opt(lambda_c),
        "ratio_dynamic_static": p_static.map(|p| res.p_threshold / p),
        "n_total": cfg.physical.n_total,
        "duration_us": r.protocol.duration,
        "fluctuation_floor": r.options.fluctuation_floor,
    });
    let text = report(&[
        ("threshold power".into(), format!("{:.4} mW", res.p_threshold)),
        ("detection time".into(), format!("{:.3} us", res.detection_time)),
        (
            "static threshold".into(),
            p_static.map_or("none in range".into(), |p| format!("{p:.4} mW")),
        ),
    ]);
    Ok((summary, vec![table], vec![], Outcome { text, failed_check: None }))
}

fn thresholds(cfg: &ScenarioConfig) -> Result<Parts> {
    let r = &cfg.ramp;
    let model = power_model(cfg, r.split)?;
    let atoms = r
        .map_omega_d
        .iter()
        .map(|w| cfg.physical.atoms_from_shift(*w))
        .collect::<Result<Vec<u64>>>()?;
    let records = threshold_map(&model, &atoms, &r.protocol, &r.detector, &r.options)?;
    let mut table = Table::new(
        "thresholds",
        &[
            "omega_d_mhz",
            "n_total",
            "p_threshold_mw",
            "lambda_dynamic_mhz",
            "p_static_mw",
            "lambda_c_static_mhz",
            "p_static_lower_mw",
            "p_static_upper_mw",
            "p_static_no_stark_mw",
            "error",
        ],
    );
    let mut lines = Vec::new();
    for rec in &records {
        table.push(cells![
            to_mhz(rec.omega_d),
            rec.n_total,
            rec.p_threshold,
            mhz_opt(rec.lambda_dynamic),
            rec.p_static,
            mhz_opt(rec.lambda_c_static),
            rec.p_static_lower,
            rec.p_static_upper,
            rec.p_static_no_stark,
            rec.error.clone().unwrap_or_default()
        ]);
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |p| format!("{p:.3}"));
        lines.push((
            format!("omega_d {:+.3} MHz", to_mhz(rec.omega_d)),
            format!("dynamic {} mW, static {} mW", fmt(rec.p_threshold), fmt(rec.p_static)),
        ));
    }
    let detected = records.iter().filter(|r| r.p_threshold.is_some()).count();
    let summary = json!({
        "points": records.len(),
        "detected": detected,
        "records": serde_json::to_value(&records)?,
    });
    Ok((summary, vec![table], vec![], Outcome { text: report(&lines), failed_check: None }))
}

fn quantum_check(cfg: &ScenarioConfig) -> Result<Parts> {
    let checks = run_checks(&cfg.quantum)?;
    let mut table = Table::new("checks", &["id", "measured", "tolerance", "passed", "skipped", "detail"]);
    let mut lines = Vec::new();
    for c in &checks {
        table.push(cells![c.id.as_str(), c.measured, c.tolerance, c.passed, c.skipped, c.detail.as_str()]);
        let status = if c.skipped {
            "SKIP"
        } else if c.passed {
            "PASS"
        } else {
            "FAIL"
        };
        lines.push((c.id.clone(), format!("{status}  {:.3e} (tol {:.1e})", c.measured, c.tolerance)));
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.id.as_str()).collect();
    let summary = json!({
        "all_passed": failed.is_empty(),
        "failed": failed,
        "checks": serde_json::to_value(&checks)?,
    });
    let outcome = Outcome {
        text: report(&lines),
        failed_check: failed.first().map(|s| s.to_string()),
    };
    Ok((summary, vec![table], vec![], outcome))
}
