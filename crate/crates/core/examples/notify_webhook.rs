//! Deliver an alert to a local webhook that fails twice before accepting,
//! then to one that never accepts so the alert lands in the journal.
//!
//! `cargo run --example notify_webhook`

use std::time::Duration;

use fallwatch::runtime::{alert_payload, FallAlert, Notifier, RetryPolicy, TestReceiver};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let alert = FallAlert {
        event_time: 12.5,
        probability: 0.93,
        window_index: 24,
        device_id: "wrist-1".into(),
    };
    println!("payload {}", alert_payload(&alert));
    let policy = RetryPolicy {
        max_attempts: 3,
        base_delay: Duration::from_millis(50),
    };

    let flaky = TestReceiver::start(vec![503, 503, 200])?;
    let mut notifier = Notifier::http(flaky.url.clone()).with_policy(policy);
    println!("{:?}", notifier.notify(&alert));

    let dir = tempfile::tempdir()?;
    let journal = dir.path().join("undelivered.jsonl");
    let down = TestReceiver::start(vec![500, 500, 500])?;
    let mut notifier = Notifier::http(down.url.clone()).with_policy(policy).with_journal(&journal);
    println!("{:?}", notifier.notify(&alert));
    print!("journal: {}", std::fs::read_to_string(&journal)?);
    Ok(())
}
