//! Churning and stalled clients must not disturb the tick cadence.

mod common;

use std::time::Duration;

use common::{next, Running};
use futures_util::SinkExt;
use psf_core::sim::scenarios;
use psf_teleop::wire::{client_message, ClientCommand, GoalPayload};
use tokio_tungstenite::tungstenite::Message;

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn tick_jitter_under_disconnecting_clients() {
    let srv = Running::start(scenarios::teleop()).await;

    // Connected but never reads: its queue overflows and the server drops it.
    let stalled = srv.connect().await;

    let churn = {
        let addr = srv.addr;
        tokio::spawn(async move {
            for round in 0..30u64 {
                let mut clients = Vec::new();
                for _ in 0..6 {
                    let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws"))
                        .await
                        .unwrap();
                    clients.push(ws);
                }
                for (i, ws) in clients.iter_mut().enumerate() {
                    for _ in 0..(i + round as usize % 3) {
                        let _ = next(ws, Duration::from_secs(1)).await;
                    }
                    let goal = GoalPayload {
                        x: 1.0 + 0.1 * (round % 10) as f64,
                        y: 1.5,
                        theta: None,
                    };
                    let _ = ws
                        .send(Message::Text(client_message(1, &ClientCommand::Goal(goal)).into()))
                        .await;
                }
                // Half leave politely, half just vanish.
                for (i, mut ws) in clients.into_iter().enumerate() {
                    if i % 2 == 0 {
                        let _ = ws.close(None).await;
                    }
                }
                tokio::time::sleep(Duration::from_millis(60)).await;
            }
        })
    };
    churn.await.unwrap();
    tokio::time::sleep(Duration::from_millis(500)).await;
    drop(stalled);

    let served = srv.stop().await;
    // The cold first tick is not paced, so it starts no interval.
    assert_eq!(served.rows.len(), served.cadence.intervals.len() + 2);
    let cadence = served.cadence;
    let mut jitter = cadence.jitter();
    assert!(jitter.len() > 40, "only {} ticks", jitter.len());
    jitter.sort_by(f64::total_cmp);
    let max = *jitter.last().unwrap();
    println!(
        "ticks {}  jitter p50 {:.3}  max {:.3}  overruns {}",
        served.rows.len(),
        jitter[jitter.len() / 2],
        max,
        cadence.overruns
    );
    assert!(max < 0.2, "tick jitter {max:.3} of the period");
}
