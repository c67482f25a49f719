use std::net::SocketAddr;

use clap::Parser;
use tracing_subscriber::EnvFilter;

/// Simulator experiment server.
#[derive(Parser)]
#[command(name = "mmct-server", version)]
struct Args {
    /// Address to listen on.
    #[arg(long, env = "MMCT_BIND", default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let args = Args::parse();
    let listener = tokio::net::TcpListener::bind(args.bind).await?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    mmct_server::serve(listener).await
}
