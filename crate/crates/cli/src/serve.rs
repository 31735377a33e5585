use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use attune_service::{gateway_from_config, serve, AppState, ServiceConfig};
use clap::Args;
use serde_json::json;

use crate::output::{CliError, Output};

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Service config file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `data_dir` from the config.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Overrides `bind` from the config; must be a loopback address.
    #[arg(long)]
    pub bind: Option<SocketAddr>,
    /// Validate and print the effective configuration, then exit.
    #[arg(long)]
    pub check: bool,
}

/// Loads the config file, or defaults when no path is given.
pub fn load_config(path: Option<&PathBuf>) -> Result<ServiceConfig, CliError> {
    match path {
        Some(p) => Ok(ServiceConfig::load(p).with_context(|| format!("loading {}", p.display()))?),
        None => Ok(ServiceConfig::default()),
    }
}

/// Where the gateway token will come from; the environment wins over the file.
pub fn token_source(config: &ServiceConfig) -> &'static str {
    let env_set = std::env::var(&config.gateway.token_env).is_ok_and(|t| !t.is_empty());
    if env_set {
        "env"
    } else if config.gateway.token.is_some() {
        "file"
    } else {
        "none"
    }
}

pub fn run(args: ServeArgs, out: &Output) -> Result<(), CliError> {
    let mut config = load_config(args.config.as_ref())?;
    if let Some(d) = args.data_dir {
        config.data_dir = d;
    }
    if let Some(b) = args.bind {
        config.bind = b;
    }
    config.validate().context("invalid configuration")?;

    if args.check {
        let v = json!({
            "bind": config.bind.to_string(),
            "data_dir": config.data_dir.display().to_string(),
            "provider": config.gateway.provider,
            "token_env": config.gateway.token_env,
            "token_source": token_source(&config),
        });
        let text = format!(
            "bind {}\ndata_dir {}\ntoken from {}",
            config.bind,
            config.data_dir.display(),
            token_source(&config)
        );
        out.emit(&v, &text);
        return Ok(());
    }

    let gateway = gateway_from_config(&config).context("gateway")?;
    let bind = config.bind;
    let data_dir = config.data_dir.clone();
    let state = Arc::new(
        AppState::open(config, gateway)
            .with_context(|| format!("opening store at {}", data_dir.display()))?,
    );
    let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(bind)
            .await
            .with_context(|| format!("binding {bind}"))?;
        let addr = listener.local_addr().context("reading bound address")?;
        out.emit(
            &json!({"listening": format!("http://{addr}"), "data_dir": data_dir.display().to_string()}),
            &format!("listening on http://{addr}"),
        );
        serve(state, listener, shutdown_signal())
            .await
            .context("serving")?;
        Ok::<(), anyhow::Error>(())
    })?;
    Ok(())
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = match signal(SignalKind::terminate()) {
            Ok(s) => s,
            Err(_) => {
                let _ = tokio::signal::ctrl_c().await;
                return;
            }
        };
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}
