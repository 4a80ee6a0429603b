//! Append-only JSON-lines log. One publish frame per line, stamped with
//! `appended_at`.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{BusError, Envelope};
use crate::clock::Millis;

#[derive(Serialize, Deserialize)]
struct LogLine {
    op: String,
    topic: String,
    seq: u64,
    payload: Value,
    published_at: Millis,
    appended_at: Millis,
}

pub struct BusLog {
    file: File,
    sync: bool,
}

impl BusLog {
    /// Opens `path`, returning the log positioned for appends and every
    /// stored envelope in append order.
    pub fn open(path: &Path, sync: bool) -> Result<(Self, Vec<Envelope>), BusError> {
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)?;
        let mut entries = Vec::new();
        let mut last: HashMap<String, u64> = HashMap::new();
        let mut good_len: u64 = 0;
        let mut torn = false;
        {
            let mut reader = BufReader::new(&file);
            let mut buf = Vec::new();
            let mut line_no = 0;
            loop {
                buf.clear();
                let n = reader.read_until(b'\n', &mut buf)?;
                if n == 0 {
                    break;
                }
                line_no += 1;
                let complete = buf.last() == Some(&b'\n');
                let parsed: Result<LogLine, _> = serde_json::from_slice(&buf);
                let line = match (parsed, complete) {
                    (Ok(l), true) => l,
                    // A partial last line is what a crash mid-append leaves.
                    (_, false) => {
                        torn = true;
                        break;
                    }
                    (Err(e), true) => {
                        return Err(BusError::CorruptLog {
                            line: line_no,
                            reason: e.to_string(),
                        })
                    }
                };
                let expected = last.get(&line.topic).copied().unwrap_or(0) + 1;
                if line.op != "publish" || line.seq != expected {
                    return Err(BusError::CorruptLog {
                        line: line_no,
                        reason: format!("topic {} seq {} (expected {expected})", line.topic, line.seq),
                    });
                }
                last.insert(line.topic.clone(), line.seq);
                entries.push(Envelope {
                    topic: line.topic,
                    seq: line.seq,
                    payload: line.payload,
                    published_at: line.published_at,
                });
                good_len += n as u64;
            }
        }
        if torn {
            file.set_len(good_len)?;
            file.seek(SeekFrom::End(0))?;
        }
        Ok((Self { file, sync }, entries))
    }

    /// Writes one line with a single `write_all`, so a killed process
    /// leaves at most one torn line behind. The data reaches the OS before
    /// this returns; with `sync` it also reaches the disk.
    pub fn append(&mut self, env: &Envelope, appended_at: Millis) -> Result<(), BusError> {
        let line = LogLine {
            op: "publish".into(),
            topic: env.topic.clone(),
            seq: env.seq,
            payload: env.payload.clone(),
            published_at: env.published_at,
            appended_at,
        };
        let mut bytes = serde_json::to_vec(&line)?;
        bytes.push(b'\n');
        self.file.write_all(&bytes)?;
        if self.sync {
            self.file.sync_data()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::{Bus, BusHandle};
    use super::*;
    use serde_json::json;
    use std::sync::Arc;

    fn clock() -> Arc<crate::clock::VirtualClock> {
        Arc::new(crate::clock::VirtualClock::new(5))
    }

    #[test]
    fn reopen_restores_topics() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bus.log");
        {
            let b = Bus::open_with_clock(&path, false, clock()).unwrap();
            for i in 0..20 {
                b.publish(&format!("t/{}", i % 3), json!({"i": i})).unwrap();
            }
        }
        let b = Bus::open_with_clock(&path, false, clock()).unwrap();
        assert_eq!(b.len(), 20);
        assert_eq!(b.last_seq("t/0"), 7);
        assert_eq!(b.publish("t/0", json!(0)).unwrap().seq, 8);
        assert_eq!(b.read("t/1", 1)[2].payload, json!({"i": 7}));
    }

    #[test]
    fn torn_tail_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bus.log");
        {
            let b = Bus::open_with_clock(&path, false, clock()).unwrap();
            b.publish("a", json!(1)).unwrap();
            b.publish("a", json!(2)).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"op\":\"publish\",\"topic\":\"a\",\"se").unwrap();
        drop(f);
        let b = Bus::open_with_clock(&path, false, clock()).unwrap();
        assert_eq!(b.len(), 2);
        b.publish("a", json!(3)).unwrap();
        drop(b);
        let b = Bus::open_with_clock(&path, false, clock()).unwrap();
        assert_eq!(b.read("a", 1).iter().map(|e| e.seq).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn corruption_in_the_middle_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bus.log");
        std::fs::write(&path, "garbage\n{}\n").unwrap();
        assert!(matches!(
            Bus::open_with_clock(&path, false, clock()),
            Err(BusError::CorruptLog { line: 1, .. })
        ));
    }

    #[test]
    fn sequence_gap_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bus.log");
        let l = |seq| {
            format!(
                "{{\"op\":\"publish\",\"topic\":\"a\",\"seq\":{seq},\"payload\":null,\"published_at\":0,\"appended_at\":0}}\n"
            )
        };
        std::fs::write(&path, l(1) + &l(3)).unwrap();
        assert!(matches!(
            Bus::open_with_clock(&path, true, clock()),
            Err(BusError::CorruptLog { line: 2, .. })
        ));
    }
}
