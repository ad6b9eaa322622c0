use palmdeid::synth::{make_dataset, HandTemplate};

use crate::{CliResult, SynthArgs};

pub fn cmd_synth(args: &SynthArgs) -> CliResult<()> {
    let manifest = make_dataset(
        args.identities,
        args.sessions,
        args.seed,
        &args.out,
        &HandTemplate::default(),
    )?;
    println!(
        "wrote {} samples to {}",
        manifest.len(),
        args.out.join("manifest.json").display()
    );
    Ok(())
}
