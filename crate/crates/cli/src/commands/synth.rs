//! `synth`: a seeded synthetic cohort or registry extract.

use survkit::data::{synth_cohort, synth_registry, write_records, Schema};
use survkit::Cohort64;

use super::files;
use crate::config::{InputFormat, RunConfig};
use crate::error::{CliError, Result};
use crate::io::write_with;
use crate::seeds::derive_seed;

/// Writes `synth.csv` and returns its path.
pub fn run(config: &RunConfig) -> Result<std::path::PathBuf> {
    let s = &config.synth;
    let seed = derive_seed(config.seed, "synth");
    let path = config.out.join(files::SYNTH);
    match s.format {
        InputFormat::Cohort => {
            let beta = match &s.beta {
                Some(b) => b.clone(),
                None => (0..s.d).map(|j| if j < 2 { 1.0 } else { 0.0 }).collect(),
            };
            let cohort: Cohort64 = synth_cohort(s.n, s.d, s.model, &beta, s.censor_rate, seed)
                .map_err(|e| CliError::Config(e.to_string()))?
                .cohort;
            write_with(&path, |buf| cohort.write_csv(buf))?;
        }
        InputFormat::Registry => {
            if s.n == 0 {
                return Err(CliError::Config("synth.n must be >= 1".into()));
            }
            let records = synth_registry(s.n, seed);
            write_with(&path, |buf| write_records(buf, &records, &Schema::default()))?;
        }
    }
    log::info!("wrote {}", path.display());
    Ok(path)
}
