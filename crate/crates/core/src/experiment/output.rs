use std::fs;
use std::path::Path;

use crate::dataset::Ordinate;
use crate::error::Result;
use crate::posterior::credible_band;

use super::run::{CalibrationRow, DatasetOutcome, Extrapolation, ResultBundle};

pub const RESULTS_FILE: &str = "results.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const PLOT_FILE: &str = "plot_data.csv";
pub const DIAGNOSTICS_FILE: &str = "fit_diagnostics.json";
pub const CALIBRATION_FILE: &str = "calibration.csv";
pub const FAILURE_FILE: &str = "FAILED";

fn num(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn coord_count(query: &[Ordinate]) -> usize {
    query.iter().map(|t| t.flat().len()).max().unwrap_or(0)
}

fn coords(t: &Ordinate, d: usize) -> Vec<String> {
    let mut f: Vec<String> = t.flat().iter().map(|v| num(*v)).collect();
    f.resize(d, String::new());
    f
}

fn write_results(bundle: &ResultBundle, dir: &Path) -> Result<()> {
    let d = coord_count(&bundle.query);
    let mut w = csv::Writer::from_path(dir.join(RESULTS_FILE))?;
    let mut header = vec!["experiment".to_string(), "h_finest".into()];
    header.extend((1..=d).map(|i| format!("t_{i}")));
    header.extend(
        [
            "posterior_mean",
            "posterior_sd",
            "truth",
            "W",
            "S",
            "S2_band_lo",
            "S2_band_hi",
            "alpha_ml",
            "baseline_richardson",
            "baseline_bs",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    for o in &bundle.outcomes {
        let post = &o.extrapolation.posterior;
        let sd = post.std_devs();
        for (i, t) in post.query.iter().enumerate() {
            let mut row = vec![bundle.config.name.clone(), num(o.h_finest)];
            row.extend(coords(t, d));
            let r = o.report.as_ref();
            row.extend([
                num(post.mean[i]),
                num(sd[i]),
                opt(o.truth.as_ref().map(|v| v[i])),
                opt(r.map(|r| r.w)),
                opt(r.map(|r| r.s)),
                opt(r.map(|r| r.band_lower)),
                opt(r.map(|r| r.band_upper)),
                num(o.extrapolation.alpha[i]),
                opt(o.richardson[i]),
                opt(o.bulirsch_stoer[i]),
            ]);
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_comparison(bundle: &ResultBundle, dir: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join(COMPARISON_FILE))?;
    w.write_record(["experiment", "method", "h_finest", "n_resolutions", "W"])?;
    for o in &bundle.outcomes {
        let bbpn = o.report.as_ref().map(|r| r.w);
        let rows: [(&str, Option<f64>); 4] = [
            ("bbpn", bbpn),
            ("finest_run", o.baseline_error(&o.finest)),
            ("richardson", o.baseline_error(&o.richardson)),
            ("bulirsch_stoer", o.baseline_error(&o.bulirsch_stoer)),
        ];
        for (method, err) in rows {
            w.write_record([
                bundle.config.name.clone(),
                method.to_string(),
                num(o.h_finest),
                o.n_resolutions.to_string(),
                opt(err),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_plot_data(bundle: &ResultBundle, dir: &Path) -> Result<()> {
    let d = coord_count(&bundle.query);
    let mut w = csv::Writer::from_path(dir.join(PLOT_FILE))?;
    let mut header = vec!["experiment".to_string(), "h_finest".into()];
    header.extend((1..=d).map(|i| format!("t_{i}")));
    header.extend(["posterior_mean", "band_lower", "band_upper", "truth", "finest_run"].map(String::from));
    w.write_record(&header)?;
    for o in &bundle.outcomes {
        let post = &o.extrapolation.posterior;
        let (lo, hi) = credible_band(post, bundle.config.model.band_sigmas)?;
        for (i, t) in post.query.iter().enumerate() {
            let mut row = vec![bundle.config.name.clone(), num(o.h_finest)];
            row.extend(coords(t, d));
            row.extend([
                num(post.mean[i]),
                num(lo[i]),
                num(hi[i]),
                opt(o.truth.as_ref().map(|v| v[i])),
                opt(o.finest[i]),
            ]);
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(serde::Serialize)]
struct DiagnosticsEntry<'a> {
    h_finest: f64,
    n_resolutions: usize,
    m: usize,
    fits: &'a [crate::likelihood::FitResult],
}

fn write_diagnostics(outcomes: &[DatasetOutcome], dir: &Path) -> Result<()> {
    let entries: Vec<DiagnosticsEntry<'_>> = outcomes
        .iter()
        .map(|o| DiagnosticsEntry {
            h_finest: o.h_finest,
            n_resolutions: o.n_resolutions,
            m: o.m,
            fits: &o.extrapolation.fits,
        })
        .collect();
    let text = serde_json::to_string_pretty(&entries)?;
    fs::write(dir.join(DIAGNOSTICS_FILE), text)?;
    Ok(())
}

/// Writes results, comparison, plot-data and diagnostics files, plus a failure marker when the run failed.
pub fn emit_outputs(bundle: &ResultBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_results(bundle, dir)?;
    write_comparison(bundle, dir)?;
    write_plot_data(bundle, dir)?;
    write_diagnostics(&bundle.outcomes, dir)?;
    let marker = dir.join(FAILURE_FILE);
    match &bundle.failure {
        Some(f) => fs::write(marker, format!("phase: {}\nerror: {}\n", f.phase, f.message))?,
        None if marker.exists() => fs::remove_file(marker)?,
        None => {}
    }
    Ok(())
}

/// One CSV row per repetition.
pub fn emit_calibration(name: &str, rows: &[CalibrationRow], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(CALIBRATION_FILE))?;
    w.write_record([
        "experiment",
        "repetition",
        "seed",
        "W",
        "S",
        "S2",
        "dof",
        "band_lower",
        "band_upper",
        "inside_band",
        "degraded_rank",
    ])?;
    for r in rows {
        let c = &r.report;
        w.write_record([
            name.to_string(),
            r.repetition.to_string(),
            r.seed.to_string(),
            num(c.w),
            num(c.s),
            num(c.s * c.s),
            c.dof.to_string(),
            num(c.band_lower),
            num(c.band_upper),
            c.inside_band.to_string(),
            c.degraded_rank.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const POSTERIOR_FILE: &str = "posterior.csv";

/// Writes the limit posterior of a user dataset and its fit diagnostics.
pub fn write_extrapolation(ex: &Extrapolation, band_sigmas: f64, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let post = &ex.posterior;
    let d = coord_count(&post.query);
    let (lo, hi) = credible_band(post, band_sigmas)?;
    let sd = post.std_devs();
    let mut w = csv::Writer::from_path(dir.join(POSTERIOR_FILE))?;
    let mut header: Vec<String> = (1..=d).map(|i| format!("t_{i}")).collect();
    header.extend(["posterior_mean", "posterior_sd", "band_lower", "band_upper", "alpha"].map(String::from));
    w.write_record(&header)?;
    for (i, t) in post.query.iter().enumerate() {
        let mut row = coords(t, d);
        row.extend([num(post.mean[i]), num(sd[i]), num(lo[i]), num(hi[i]), num(ex.alpha[i])]);
        w.write_record(&row)?;
    }
    w.flush()?;
    fs::write(dir.join(DIAGNOSTICS_FILE), serde_json::to_string_pretty(&ex.fits)?)?;
    Ok(())
}
