use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use psibench_core::backends::{simulate_grid, summarize_grid, VerboseCompensationParams};
use psibench_core::report::ReportTable;
use psibench_core::stats::fit_threshold_model;

use super::{render_all, warn};
use crate::error::CliError;
use crate::Global;

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Model parameters (TOML: t0, alpha, tau, tmax, beta, dispersion).
    #[arg(long)]
    pub params: PathBuf,
    /// Survival values to simulate at.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.45,0.5,0.55,0.6,0.65,0.7,0.75,0.8,0.85,0.9,0.95"
    )]
    pub psi: Vec<f64>,
    /// Draws per survival value.
    #[arg(long, default_value_t = 1000)]
    pub trials: u32,
}

pub fn execute(global: &Global, args: &SimulateArgs) -> Result<(), CliError> {
    let ctx = args.params.display().to_string();
    let text = std::fs::read_to_string(&args.params).map_err(|e| CliError::from(e).context(&ctx))?;
    let params: VerboseCompensationParams = toml::from_str(&text).map_err(|e| CliError::from(e).context(&ctx))?;
    let draws = simulate_grid(&params, &args.psi, args.trials, global.seed.unwrap_or(0))?;

    let summary = summarize_grid(&draws);
    let mut t = ReportTable::new(
        format!("Simulated output length ({} draws per point)", args.trials),
        &["Psi", "Mean T_out", "Ceiling %"],
    );
    for s in &summary {
        t.push_row(vec![
            format!("{:.3}", s.psi),
            format!("{:.1}", s.mean_tout),
            format!("{:.1}%", 100.0 * s.ceiling_fraction),
        ]);
    }
    let points: Vec<(f64, f64)> = summary.iter().map(|s| (s.psi, s.mean_tout)).collect();
    match fit_threshold_model(&points) {
        Ok(f) => t.footnote(format!(
            "threshold fit: tau={:.3} intercept={:.1} slope_low={:.1} slope_high={:.1}{}",
            f.tau_hat,
            f.intercept,
            f.slope_low,
            f.slope_high,
            if f.degenerate { " (degenerate)" } else { "" }
        )),
        Err(e) => warn(format!("threshold fit skipped: {e}")),
    }

    if let Some(out) = &global.out {
        let mut file =
            std::io::BufWriter::new(std::fs::File::create(out).map_err(|e| CliError::from(e).context(out.display()))?);
        for d in &draws {
            serde_json::to_writer(&mut file, d)?;
            file.write_all(b"\n")?;
        }
        file.flush()?;
        eprintln!("wrote {} draws to {}", draws.len(), out.display());
    }
    print!("{}", render_all(&[t], global.format));
    Ok(())
}
