use std::path::PathBuf;
use std::sync::Arc;

use propwatch_modbot::serve::{read_events, serve as run_service, Event, ServeOptions, VerdictRecord};
use propwatch_modbot::telegram::poll_updates;
use propwatch_modbot::{Detector, ServeReport, TelegramClient};
use serde_json::json;
use tokio::io::{AsyncWriteExt, BufReader};
use tokio::sync::{mpsc, watch};

use crate::commands::Ctx;
use crate::error::{CliError, CliResult};

pub fn serve(ctx: &Ctx, input: Option<PathBuf>, listen: Option<String>, poll: bool) -> CliResult<()> {
    let bot = &ctx.settings.bot;
    let mut run = Run::start(ctx)?;
    let detector = Arc::new(Detector::from_config(bot)?);
    let api = match (&bot.api_base, &bot.api_token) {
        (Some(base), Some(token)) => Some(TelegramClient::new(base.clone(), token.clone())?),
        _ if poll => return Err(CliError::Usage("--poll needs bot.api_base and bot.api_token".into())),
        _ => None,
    };
    let options = ServeOptions::from_config(bot);
    let runtime = tokio::runtime::Runtime::new()?;
    let verdicts_path = run.0.output("verdicts.jsonl")?;

    let report = runtime.block_on(async move {
        let (sink, mut records) = mpsc::unbounded_channel::<VerdictRecord>();
        let writer = tokio::spawn(async move {
            let mut f = tokio::fs::File::create(&verdicts_path).await?;
            while let Some(r) = records.recv().await {
                let mut line = serde_json::to_vec(&r).expect("verdicts serialize");
                line.push(b'\n');
                f.write_all(&line).await?;
                f.flush().await?;
            }
            std::io::Result::Ok(())
        });
        let (tx, rx) = mpsc::channel::<Event>(1024);
        let (stop_tx, stop_rx) = watch::channel(false);
        tokio::spawn(async move {
            if tokio::signal::ctrl_c().await.is_ok() {
                log::info!("interrupted; draining");
                let _ = stop_tx.send(true);
            }
        });
        let source = spawn_source(input, listen, poll, api.clone(), tx, stop_rx);
        let report = run_service(detector, rx, api, options, Some(sink)).await;
        source.abort();
        writer
            .await
            .map_err(|e| CliError::Runtime(e.to_string()))?
            .map_err(CliError::from)?;
        report.map_err(CliError::from)
    })?;
    run.finish(&report)
}

fn spawn_source(
    input: Option<PathBuf>,
    listen: Option<String>,
    poll: bool,
    api: Option<TelegramClient>,
    tx: mpsc::Sender<Event>,
    mut stop: watch::Receiver<bool>,
) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        if poll {
            poll_updates(api.expect("checked"), tx, stop, 30).await;
            return;
        }
        if let Some(addr) = listen {
            let listener = match tokio::net::TcpListener::bind(&addr).await {
                Ok(l) => l,
                Err(e) => {
                    log::error!("cannot listen on {addr}: {e}");
                    return;
                }
            };
            log::info!("accepting events on {addr}");
            let mut connections = tokio::task::JoinSet::new();
            loop {
                tokio::select! {
                    accepted = listener.accept() => match accepted {
                        Ok((stream, peer)) => {
                            log::info!("event source connected from {peer}");
                            let tx = tx.clone();
                            connections.spawn(async move {
                                if let Err(e) = read_events(BufReader::new(stream), tx).await {
                                    log::warn!("connection from {peer}: {e}");
                                }
                            });
                        }
                        Err(e) => log::warn!("accept failed: {e}"),
                    },
                    _ = stop.changed() => break,
                }
            }
            connections.abort_all();
            return;
        }
        let result = match input {
            Some(p) if p.as_os_str() != "-" => match tokio::fs::File::open(&p).await {
                Ok(f) => read_events(BufReader::new(f), tx).await,
                Err(e) => Err(std::io::Error::new(e.kind(), format!("{}: {e}", p.display()))),
            },
            _ => read_events(BufReader::new(tokio::io::stdin()), tx).await,
        };
        if let Err(e) = result {
            log::error!("reading events failed: {e}");
        }
    })
}

struct Run(crate::output::Run);

impl Run {
    fn start(ctx: &Ctx) -> CliResult<Self> {
        let mut run = crate::output::Run::new("serve", ctx.common.config.as_deref(), &ctx.common.out, ctx.settings.seed())?;
        run.input(&ctx.settings.bot.pair_model);
        Ok(Self(run))
    }

    fn finish(mut self, report: &ServeReport) -> CliResult<()> {
        let propaganda = report.verdicts.iter().filter(|v| v.is_propaganda()).count();
        let skipped = report.verdicts.iter().filter(|v| v.skipped.is_some()).count();
        self.0.write_json(
            "serve.json",
            &json!({
                "events": report.events,
                "malformed": report.malformed,
                "verdicts": report.verdicts.len(),
                "propaganda": propaganda,
                "skipped": skipped,
                "actions": report.actions,
            }),
        )?;
        println!(
            "{} events, {} verdicts ({propaganda} propaganda), {} actions",
            report.events,
            report.verdicts.len(),
            report.actions.len()
        );
        self.0.finish().map(drop)
    }
}
