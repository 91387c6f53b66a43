//! Model worker speaking the process-adapter protocol, backed by the
//! synthetic backbone. Used to exercise the subprocess path without weights.

use std::io::{stdin, stdout, BufWriter};
use std::path::PathBuf;

use clap::Parser;
use scm::process::serve;
use scm_core::synthetic::synthetic_backbone_with;
use scm_core::PyramidLayout;

#[derive(Parser)]
struct Args {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Answer every request of this op with an error.
    #[arg(long)]
    fail_on: Option<String>,
    /// Accepted for interface compatibility; unused.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Accepted for interface compatibility; unused.
    #[arg(long)]
    device: Option<String>,
}

fn main() -> std::io::Result<()> {
    let args = Args::parse();
    let layout = PyramidLayout::default();
    let mut adapters = synthetic_backbone_with(args.seed, layout);
    serve(
        &mut adapters,
        layout,
        stdin().lock(),
        BufWriter::new(stdout().lock()),
        args.fail_on.as_deref(),
    )
}
