//! `dpp`: command-line access to DPP inference, sampling, and learning.
//!
//! Output is JSON lines. Every randomized subcommand either takes `--seed`
//! or generates one and prints it first, so reruns with the printed seed
//! are byte-identical. Exit codes: 0 success, 2 usage, 3 model validation,
//! 4 infeasible inference, 1 other failures.

mod checks;
mod commands;
mod output;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "dpp", version, about = "Determinantal point process toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print det(L+I) for a model.
    Normalize(commands::NormalizeArgs),
    /// Probability of observing exactly the given subset.
    Prob(commands::ProbArgs),
    /// Inclusion (and optional exclusion) marginals.
    Marginal(commands::MarginalArgs),
    /// Condition on included/excluded items and emit the conditional model.
    Condition(commands::ConditionArgs),
    /// Draw subsets from the DPP.
    Sample(commands::SampleArgs),
    /// Draw fixed-size subsets from the k-DPP.
    Ksample(commands::KsampleArgs),
    /// k-DPP normalizer e_k(lambda).
    Knormalize(commands::KnormalizeArgs),
    /// All k-DPP singleton marginals.
    Kmarginals(commands::KmarginalsArgs),
    /// Budgeted greedy MAP approximation.
    Map(commands::MapArgs),
    /// Minimum Bayes risk decoding over model samples.
    Mbr(commands::MbrArgs),
    /// Maximum-likelihood training of the log-linear quality model.
    Learn(commands::LearnArgs),
    /// Convex learning of a mixture of k-DPP experts.
    MixtureLearn(commands::MixtureLearnArgs),
    /// Draw sets of structures from a structured model.
    SdppSample(commands::SdppSampleArgs),
    /// Part marginals of a structured model.
    SdppMarginals(commands::SdppMarginalsArgs),
    /// Particle-tracking demo with kernel calibration.
    SdppTrack(commands::SdppTrackArgs),
    /// Diverse geographic paths demo.
    SdppPaths(commands::SdppPathsArgs),
    /// Project model features to a lower dimension.
    Project(commands::ProjectArgs),
    /// Validate the random-projection distance bound.
    ProjectAnalyze(commands::ProjectAnalyzeArgs),
    /// Run the brute-force oracle equivalence suite.
    OracleCheck(commands::OracleCheckArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Normalize(a) => commands::normalize(a),
        Command::Prob(a) => commands::prob(a),
        Command::Marginal(a) => commands::marginal(a),
        Command::Condition(a) => commands::condition(a),
        Command::Sample(a) => commands::sample(a),
        Command::Ksample(a) => commands::ksample(a),
        Command::Knormalize(a) => commands::knormalize(a),
        Command::Kmarginals(a) => commands::kmarginals(a),
        Command::Map(a) => commands::map(a),
        Command::Mbr(a) => commands::mbr(a),
        Command::Learn(a) => commands::learn(a),
        Command::MixtureLearn(a) => commands::mixture_learn(a),
        Command::SdppSample(a) => commands::sdpp_sample(a),
        Command::SdppMarginals(a) => commands::sdpp_marginals(a),
        Command::SdppTrack(a) => commands::sdpp_track(a),
        Command::SdppPaths(a) => commands::sdpp_paths(a),
        Command::Project(a) => commands::project(a),
        Command::ProjectAnalyze(a) => commands::project_analyze(a),
        Command::OracleCheck(a) => commands::oracle_check(a),
    };
    match result {
        Ok(()) => {}
        Err(err) => {
            println!("{}", output::error_json(&err));
            std::process::exit(output::exit_code(&err));
        }
    }
}
