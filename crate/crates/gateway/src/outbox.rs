use std::collections::VecDeque;

use serde_json::Value;

use crate::protocol::{Kind, WireMessage};

/// Outbound queue with per-connection sequence stamping. When full, the
/// oldest queued `state_update` that has a later one behind it is dropped
/// and its `new_steps` are carried into that later update, so no executed
/// step is lost. Other kinds are never dropped; the queue may exceed its
/// capacity when it holds nothing droppable.
#[derive(Debug)]
pub struct Outbox {
    queue: VecDeque<WireMessage>,
    capacity: usize,
    next_seq: u64,
    dropped: u64,
}

impl Outbox {
    pub fn new(capacity: usize) -> Self {
        Self { queue: VecDeque::new(), capacity: capacity.max(1), next_seq: 1, dropped: 0 }
    }

    pub fn push(&mut self, mut msg: WireMessage) {
        msg.seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push_back(msg);
        if self.queue.len() > self.capacity {
            self.drop_one();
        }
    }

    fn drop_one(&mut self) {
        let updates: Vec<usize> =
            (0..self.queue.len()).filter(|&i| self.queue[i].kind() == Some(Kind::StateUpdate)).take(2).collect();
        let [first, next] = updates[..] else { return };
        let dropped = self.queue.remove(first).expect("index in range");
        let carried = match dropped.payload.get("new_steps") {
            Some(Value::Array(steps)) => steps.clone(),
            _ => Vec::new(),
        };
        if !carried.is_empty() {
            let target = &mut self.queue[next - 1].payload;
            let mut steps = carried;
            if let Some(Value::Array(later)) = target.get("new_steps") {
                steps.extend(later.iter().cloned());
            }
            target["new_steps"] = Value::Array(steps);
        }
        self.dropped += 1;
    }

    pub fn drain(&mut self) -> Vec<WireMessage> {
        self.queue.drain(..).collect()
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// State updates discarded so far.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn msg(kind: Kind) -> WireMessage {
        WireMessage::new(kind, None, json!({}))
    }

    #[test]
    fn stamps_increasing_seq() {
        let mut o = Outbox::new(8);
        o.push(msg(Kind::HelloAck));
        o.push(msg(Kind::StateUpdate));
        let seqs: Vec<u64> = o.drain().iter().map(|m| m.seq).collect();
        assert_eq!(seqs, vec![1, 2]);
        o.push(msg(Kind::StateUpdate));
        assert_eq!(o.drain()[0].seq, 3);
    }

    fn update(steps: &[u64]) -> WireMessage {
        WireMessage::new(Kind::StateUpdate, None, json!({"phase": "proposing", "new_steps": steps}))
    }

    #[test]
    fn drops_oldest_state_update_only() {
        let mut o = Outbox::new(3);
        o.push(msg(Kind::Suggestion));
        o.push(msg(Kind::StateUpdate));
        o.push(msg(Kind::StateUpdate));
        o.push(msg(Kind::Summary));
        let out = o.drain();
        let kinds: Vec<&str> = out.iter().map(|m| m.kind.as_str()).collect();
        assert_eq!(kinds, ["suggestion", "state_update", "summary"]);
        assert_eq!(out[1].seq, 3);
        assert_eq!(o.dropped(), 1);
    }

    #[test]
    fn dropped_steps_are_carried_forward() {
        let mut o = Outbox::new(2);
        o.push(update(&[0]));
        o.push(update(&[1, 2]));
        o.push(update(&[3]));
        o.push(update(&[]));
        let out = o.drain();
        let all: Vec<u64> = out
            .iter()
            .flat_map(|m| m.payload["new_steps"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()))
            .collect();
        assert_eq!(all, [0, 1, 2, 3]);
        assert_eq!(out.len(), 2);
        assert_eq!(o.dropped(), 2);
    }

    #[test]
    fn lone_state_update_is_kept() {
        let mut o = Outbox::new(1);
        o.push(update(&[0]));
        o.push(msg(Kind::Summary));
        assert_eq!(o.len(), 2);
    }

    #[test]
    fn never_drops_suggestions_or_summaries() {
        let mut o = Outbox::new(2);
        for _ in 0..5 {
            o.push(msg(Kind::Suggestion));
        }
        o.push(msg(Kind::Summary));
        assert_eq!(o.len(), 6);
        assert_eq!(o.dropped(), 0);
    }
}
