//! `hdrsr`: command-line front end for inference, decomposition, dataset
//! preparation, training and gradient checking.

mod commands;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hdrsr_core::ErrorKind;

use commands::{
    DecomposeArgs, GradcheckArgs, InferArgs, InitArgs, PrepareArgs, StretchArgs, TrainArgs,
};

#[derive(Debug, Parser)]
#[command(name = "hdrsr", version, about = "HDR reconstruction and x2 super-resolution of LDR images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Upscale an LDR image to HDR irradiance and a tonemapped preview.
    Infer(InferArgs),
    /// Write illumination and reflectance visualizations of an image.
    Decompose(DecomposeArgs),
    /// Build a patch store from paired LDR and tonemapped HDR directories.
    PrepareData(PrepareArgs),
    /// Train the reflectance generator on a patch store.
    Train(TrainArgs),
    /// Check every layer's backward pass against finite differences.
    Gradcheck(GradcheckArgs),
    /// Write freshly initialized generator weights.
    InitWeights(InitArgs),
    /// Scale an HDR image to a display peak luminance.
    Stretch(StretchArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Infer(a) => commands::infer(a),
        Command::Decompose(a) => commands::decompose(a),
        Command::PrepareData(a) => commands::prepare(a),
        Command::Train(a) => commands::train(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::InitWeights(a) => commands::init_weights(a),
        Command::Stretch(a) => commands::stretch(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numerical => 3,
            })
        }
    }
}
