//! Command-line front end and HTTP endpoint for `graphex`.

pub mod args;
pub mod commands;
pub mod output;
pub mod server;

use std::io::{self, Write};
use std::time::Duration;

use args::{Cli, Command, ServeArgs};
use graphex::RecommendOptions;

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or missing input; exit status 2.
    Usage(String),
    /// Anything else; exit status 1.
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl ServeArgs {
    pub fn to_config(&self) -> server::ServeConfig {
        server::ServeConfig {
            model: self.model.clone(),
            bind: self.bind,
            max_body_bytes: self.max_body_bytes,
            settings: server::ServeSettings {
                options: RecommendOptions {
                    k: self.k,
                    align: self.align.into(),
                    max_predictions: (self.max_predictions > 0).then_some(self.max_predictions),
                    min_common_tokens: 1,
                },
                timeout: Duration::from_millis(self.timeout_ms),
                unknown_leaf_empty: self.unknown_leaf_empty,
            },
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let result = match &cli.command {
        Command::Train(a) => commands::cmd_train(a, &mut out),
        Command::Infer(a) => commands::cmd_infer(a, &mut out),
        Command::Eval(a) => commands::cmd_eval(a, &mut out),
        Command::Stats(a) => commands::cmd_stats(a, &mut out),
        Command::Serve(a) => {
            if a.k == 0 {
                return Err(CliError::Usage("--k must be at least 1".into()));
            }
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(anyhow::Error::from)?;
            rt.block_on(server::serve(a.to_config()))
        }
    };
    let _ = out.flush();
    result
}
