mod render;

use annolap_core::{
    run_script, AnnotationDraft, AnnotationKind, AnnotationStore, Constellation, Environment,
    SchemaError, Script,
};
use annolap_server::ServiceConfig;
use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use std::fs::{self, OpenOptions};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Personalized, annotated OLAP navigation.
#[derive(Parser)]
#[command(name = "annolap", version)]
struct Cli {
    /// Output format.
    #[arg(
        long,
        global = true,
        value_enum,
        default_value = "json",
        env = "ANNOLAP_OUTPUT"
    )]
    output: Output,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Output {
    Json,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Check a constellation schema.
    Validate {
        #[arg(env = "ANNOLAP_SCHEMA")]
        schema: PathBuf,
    },
    /// Run an operation script and print every step.
    Replay {
        #[command(flatten)]
        inputs: Inputs,
        /// Operation script, one operation per line.
        #[arg(long, env = "ANNOLAP_SCRIPT")]
        script: PathBuf,
        /// User whose preferences drive recommendations.
        #[arg(long, env = "ANNOLAP_USER", default_value = "U1")]
        user: String,
    },
    /// Start the HTTP service.
    Serve {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, env = "ANNOLAP_LISTEN", default_value = "127.0.0.1:8080")]
        listen: String,
        /// Session snapshot written on shutdown and replayed on start.
        #[arg(long, env = "ANNOLAP_SNAPSHOT")]
        snapshot: Option<PathBuf>,
    },
    /// Validate an annotation and append it to the annotation store.
    Annotate {
        anchor: String,
        kind: AnnotationKind,
        text: String,
        #[arg(long, env = "ANNOLAP_SCHEMA")]
        schema: PathBuf,
        #[arg(long, env = "ANNOLAP_ANNOTATIONS")]
        annotations: PathBuf,
        #[arg(long, env = "ANNOLAP_USER", default_value = "U1")]
        author: String,
        /// Annotation this one answers or continues.
        #[arg(long)]
        parent: Option<String>,
    },
}

#[derive(Args)]
struct Inputs {
    #[arg(long, env = "ANNOLAP_SCHEMA")]
    schema: PathBuf,
    /// Directory holding one CSV file per dimension and fact.
    #[arg(long, env = "ANNOLAP_DATA")]
    data: PathBuf,
    #[arg(long, env = "ANNOLAP_PREFERENCES")]
    preferences: Option<PathBuf>,
    #[arg(long, env = "ANNOLAP_ANNOTATIONS")]
    annotations: Option<PathBuf>,
}

/// An error with the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            code: 1,
            error: e.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { schema } => validate(&schema, cli.output),
        Command::Replay {
            inputs,
            script,
            user,
        } => replay(&inputs, &script, &user, cli.output),
        Command::Serve {
            inputs,
            listen,
            snapshot,
        } => serve(inputs, &listen, snapshot).map_err(Failure::from),
        Command::Annotate {
            anchor,
            kind,
            text,
            schema,
            annotations,
            author,
            parent,
        } => {
            let draft = AnnotationDraft {
                kind,
                content: text,
                author,
                parent,
                anchor,
            };
            annotate(&schema, &annotations, draft, cli.output).map_err(Failure::from)
        }
    }
}

fn validate(path: &Path, output: Output) -> Result<(), Failure> {
    let findings = match Constellation::load(path) {
        Ok(_) => Vec::new(),
        Err(SchemaError::Invalid(findings)) => findings,
        Err(e) => {
            return Err(anyhow!(e)
                .context(format!("loading {}", path.display()))
                .into())
        }
    };
    match output {
        Output::Json => println!(
            "{}",
            serde_json::to_string_pretty(
                &json!({ "valid": findings.is_empty(), "findings": findings })
            )?
        ),
        Output::Text if findings.is_empty() => println!("{}: valid", path.display()),
        Output::Text => {
            for f in &findings {
                println!("{f}");
            }
        }
    }
    if findings.is_empty() {
        Ok(())
    } else {
        Err(anyhow!(SchemaError::Invalid(findings)).into())
    }
}

fn load(inputs: &Inputs) -> Result<Environment> {
    Environment::load(
        &inputs.schema,
        &inputs.data,
        inputs.preferences.as_deref(),
        inputs.annotations.as_deref(),
    )
    .context("loading inputs")
}

fn replay(inputs: &Inputs, script_path: &Path, user: &str, output: Output) -> Result<(), Failure> {
    let env = load(inputs)?;
    let text = fs::read_to_string(script_path)
        .with_context(|| format!("reading {}", script_path.display()))?;
    let script = Script::parse(&text).with_context(|| format!("{}", script_path.display()))?;
    let steps = run_script(env.engine(), user, &script).map_err(|e| Failure {
        code: 2,
        error: anyhow!(e),
    })?;
    let mut out = std::io::stdout().lock();
    match output {
        Output::Json => {
            let items: Vec<_> = steps
                .iter()
                .zip(&script.steps)
                .enumerate()
                .map(|(i, ((step, outcome), (line, _)))| {
                    let mut v = outcome.to_json();
                    v["step"] = json!(i + 1);
                    v["line"] = json!(line);
                    v["operation"] = json!(step.to_string());
                    v
                })
                .collect();
            let doc = json!({ "user": user, "steps": items });
            writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
        }
        Output::Text => {
            for (i, ((step, outcome), (line, _))) in steps.iter().zip(&script.steps).enumerate() {
                if i > 0 {
                    writeln!(out)?;
                }
                writeln!(out, "step {} (line {line}): {step}", i + 1)?;
                render::outcome(&mut out, outcome)?;
            }
        }
    }
    Ok(())
}

fn serve(inputs: Inputs, listen: &str, snapshot: Option<PathBuf>) -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let config = ServiceConfig {
        schema: inputs.schema,
        data_dir: inputs.data,
        preferences: inputs.preferences,
        annotations: inputs.annotations,
        snapshot,
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(annolap_server::serve(config, listen))?;
    Ok(())
}

fn annotate(
    schema_path: &Path,
    store_path: &Path,
    draft: AnnotationDraft,
    output: Output,
) -> Result<()> {
    let schema = Constellation::load(schema_path)
        .with_context(|| format!("loading {}", schema_path.display()))?;
    let mut store = if store_path.exists() {
        let f = fs::File::open(store_path)?;
        AnnotationStore::load_jsonl(&schema, BufReader::new(f))
            .with_context(|| format!("loading {}", store_path.display()))?
    } else {
        AnnotationStore::new()
    };
    let added = store.add(&schema, draft)?;
    let line = added.to_json_line();
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(store_path)?;
    writeln!(f, "{line}")?;
    match output {
        Output::Json => println!("{}", serde_json::to_string_pretty(&added.to_json())?),
        Output::Text => println!("{} {} {}", added.id, added.kind, added.anchor),
    }
    Ok(())
}
