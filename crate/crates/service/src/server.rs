//! Running the HTTP service with its background sweeper.

use crate::api::router;
use crate::app::App;
use std::future::Future;
use std::sync::Arc;
use std::time::Duration;
use tokio::net::TcpListener;

/// Periodically record missed checks until the task is aborted.
pub fn spawn_sweeper(app: Arc<App>) -> tokio::task::JoinHandle<()> {
    let period = Duration::from_secs(app.config.sweep_interval_secs);
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            tick.tick().await;
            let app = app.clone();
            match tokio::task::spawn_blocking(move || app.sweep()).await {
                Ok(Ok(recorded)) if !recorded.is_empty() => {
                    tracing::info!(count = recorded.len(), "recorded missed checks");
                }
                Ok(Ok(_)) => {}
                Ok(Err(e)) => tracing::error!("sweep failed: {e}"),
                Err(e) => tracing::error!("sweep task panicked: {e}"),
            }
        }
    })
}

/// Serve on `listener` until `shutdown` resolves.
pub async fn serve(app: Arc<App>, listener: TcpListener, shutdown: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
    let sweeper = spawn_sweeper(app.clone());
    let result = axum::serve(listener, router(app)).with_graceful_shutdown(shutdown).await;
    sweeper.abort();
    result
}

/// Bind `app.config.listen` and serve until Ctrl-C.
pub async fn run(app: Arc<App>) -> std::io::Result<()> {
    let listener = TcpListener::bind(&app.config.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, backend = %app.attendance.pipeline().backend_name(), "listening");
    serve(app, listener, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
