use std::path::PathBuf;

use clap::Args;
use psibench_core::compression::{compress_first_n, CompressionRatio};
use psibench_core::prompt_structure::tokenize;
use psibench_core::report::ReportTable;
use psibench_core::trial_engine::load_dataset;

use super::emit;
use crate::error::CliError;
use crate::Global;

#[derive(Args, Debug)]
pub struct CompressArgs {
    /// Prompt text.
    #[arg(long, conflicts_with_all = ["file", "prompts"])]
    pub text: Option<String>,
    /// File holding one prompt.
    #[arg(long, conflicts_with = "prompts")]
    pub file: Option<PathBuf>,
    /// Prompt dataset (JSONL).
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1.0,0.7,0.5,0.3")]
    pub ratios: Vec<f64>,
}

pub fn execute(global: &Global, args: &CompressArgs) -> Result<(), CliError> {
    let inputs: Vec<(String, String)> = match (&args.text, &args.file, &args.prompts) {
        (Some(t), _, _) => vec![("text".into(), t.clone())],
        (_, Some(p), _) => vec![(
            p.display().to_string(),
            std::fs::read_to_string(p).map_err(|e| CliError::from(e).context(p.display()))?,
        )],
        (_, _, Some(p)) => load_dataset(p)?.into_iter().map(|d| (d.prompt_id, d.text)).collect(),
        _ => return Err(CliError::usage("give --text, --file or --prompts")),
    };
    let ratios = args
        .ratios
        .iter()
        .map(|&r| CompressionRatio::new(r))
        .collect::<Result<Vec<_>, _>>()?;
    let mut t = ReportTable::new("Compressed prompts", &["Input", "r", "T_in", "Text"]);
    for (name, text) in inputs {
        let prompt = tokenize(&text).map_err(|e| CliError::from(e).context(&name))?;
        for &r in &ratios {
            let c = compress_first_n(&prompt, r);
            t.push_row(vec![
                name.clone(),
                format!("{:.2}", r.value()),
                c.len().to_string(),
                c.text(),
            ]);
        }
    }
    emit(global, &[t])
}
