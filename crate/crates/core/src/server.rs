//! Line-delimited JSON sidecar protocol.
//!
//! One request per line, one response per line. Sessions hold immutable
//! checkpoint values behind opaque handles, so an external beam search can
//! branch from any parent handle repeatedly; `batch_feed` serves one whole
//! beam step in a single round trip.
//!
//! Requests:
//!   {"op":"init","session":S,"mode":M}
//!   {"op":"feed","session":S,"parent":P,"token_id":T}      parent null/absent = session root
//!   {"op":"batch_feed","session":S,"items":[{"parent":P,"token_id":T},...]}
//!   {"op":"drop","session":S}
//!
//! Errors ({"error":"unknown-handle"} and {"error":"bad-request"}) never
//! terminate the server.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde_json::{json, Value};

use crate::decoder::{feed_token, Checkpoint, FeedOutcome, Mode};
use crate::schema::SqlSchema;
use crate::vocab::Vocabulary;

struct Session {
    root: Checkpoint,
    states: HashMap<String, Checkpoint>,
    next_handle: u64,
}

impl Session {
    fn new(mode: Mode) -> Self {
        Session {
            root: Checkpoint::new(mode),
            states: HashMap::new(),
            next_handle: 1,
        }
    }

    fn resolve(&self, parent: Option<&str>) -> Option<&Checkpoint> {
        match parent {
            None => Some(&self.root),
            Some(handle) => self.states.get(handle),
        }
    }

    fn store(&mut self, checkpoint: Checkpoint) -> String {
        let handle = format!("h{}", self.next_handle);
        self.next_handle += 1;
        self.states.insert(handle.clone(), checkpoint);
        handle
    }
}

#[derive(Default)]
pub struct Server {
    sessions: HashMap<String, Session>,
}

fn bad_request() -> Value {
    json!({"error": "bad-request"})
}

fn unknown_handle() -> Value {
    json!({"error": "unknown-handle"})
}

fn str_field<'a>(msg: &'a Value, key: &str) -> Option<&'a str> {
    msg.get(key).and_then(Value::as_str)
}

impl Server {
    pub fn new() -> Self {
        Self::default()
    }

    /// Handle one request line and produce one response value.
    pub fn handle(&mut self, schema: &SqlSchema, vocab: &Vocabulary, line: &str) -> Value {
        let msg: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(_) => return bad_request(),
        };
        let op = match str_field(&msg, "op") {
            Some(op) => op,
            None => return bad_request(),
        };
        match op {
            "init" => {
                let (session, mode) = match (str_field(&msg, "session"), str_field(&msg, "mode")) {
                    (Some(s), Some(m)) => (s, m),
                    _ => return bad_request(),
                };
                let mode: Mode = match mode.parse() {
                    Ok(m) => m,
                    Err(_) => return bad_request(),
                };
                self.sessions.insert(session.to_string(), Session::new(mode));
                json!({"ok": true})
            }
            "feed" => {
                let session_name = match str_field(&msg, "session") {
                    Some(s) => s.to_string(),
                    None => return bad_request(),
                };
                let item = json!({
                    "parent": msg.get("parent").cloned().unwrap_or(Value::Null),
                    "token_id": msg.get("token_id").cloned().unwrap_or(Value::Null),
                });
                self.feed_one(schema, vocab, &session_name, &item)
            }
            "batch_feed" => {
                let session_name = match str_field(&msg, "session") {
                    Some(s) => s.to_string(),
                    None => return bad_request(),
                };
                let items = match msg.get("items").and_then(Value::as_array) {
                    Some(items) => items.clone(),
                    None => return bad_request(),
                };
                let results: Vec<Value> = items
                    .iter()
                    .map(|item| self.feed_one(schema, vocab, &session_name, item))
                    .collect();
                json!({"results": results})
            }
            "drop" => {
                let session = match str_field(&msg, "session") {
                    Some(s) => s,
                    None => return bad_request(),
                };
                match self.sessions.remove(session) {
                    Some(_) => json!({"ok": true}),
                    None => unknown_handle(),
                }
            }
            _ => bad_request(),
        }
    }

    fn feed_one(
        &mut self,
        schema: &SqlSchema,
        vocab: &Vocabulary,
        session_name: &str,
        item: &Value,
    ) -> Value {
        let token_id = match item.get("token_id").and_then(Value::as_u64) {
            Some(t) if t <= u32::MAX as u64 => t as u32,
            _ => return bad_request(),
        };
        let parent = match item.get("parent") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s.as_str()),
            Some(_) => return bad_request(),
        };
        let session = match self.sessions.get_mut(session_name) {
            Some(s) => s,
            None => return unknown_handle(),
        };
        let checkpoint = match session.resolve(parent) {
            Some(cp) => cp.clone(),
            None => return unknown_handle(),
        };
        match feed_token(&checkpoint, schema, vocab, token_id) {
            Ok(FeedOutcome::Accepted(next)) => {
                let handle = session.store(next);
                json!({"result": "accepted", "state": handle})
            }
            Ok(FeedOutcome::Rejected { reason }) => {
                json!({"result": "rejected", "reason": reason})
            }
            Ok(FeedOutcome::Finished) => json!({"result": "finished"}),
            Err(_) => bad_request(),
        }
    }
}

/// Serve newline-delimited JSON over the given transport until EOF.
pub fn serve<R: BufRead, W: Write>(
    schema: &SqlSchema,
    vocab: &Vocabulary,
    reader: R,
    mut writer: W,
) -> std::io::Result<()> {
    let mut server = Server::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = server.handle(schema, vocab, &line);
        writeln!(writer, "{response}")?;
        writer.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::pets;

    fn vocab() -> Vocabulary {
        Vocabulary::from_pieces(
            &["", "\u{2581}select", "\u{2581}id", "\u{2581}from", "\u{2581}people", "\u{2581}zq"],
            0,
        )
        .unwrap()
    }

    fn handle(server: &mut Server, line: &str) -> Value {
        server.handle(&pets(), &vocab(), line)
    }

    #[test]
    fn init_feed_finish() {
        let mut server = Server::new();
        assert_eq!(
            handle(&mut server, r#"{"op":"init","session":"s","mode":"parse-guards"}"#),
            json!({"ok": true})
        );
        let mut parent = Value::Null;
        for tok in [1, 2, 3, 4] {
            let req = json!({"op":"feed","session":"s","parent":parent,"token_id":tok});
            let resp = handle(&mut server, &req.to_string());
            assert_eq!(resp["result"], "accepted", "{resp}");
            parent = resp["state"].clone();
        }
        let req = json!({"op":"feed","session":"s","parent":parent,"token_id":0});
        assert_eq!(handle(&mut server, &req.to_string())["result"], "finished");
    }

    #[test]
    fn parent_handles_support_branching() {
        let mut server = Server::new();
        handle(&mut server, r#"{"op":"init","session":"s","mode":"lex"}"#);
        let resp = handle(
            &mut server,
            r#"{"op":"feed","session":"s","parent":null,"token_id":1}"#,
        );
        let parent = resp["state"].as_str().unwrap().to_string();
        // same parent, two different tokens: two independent states
        let a = handle(
            &mut server,
            &json!({"op":"feed","session":"s","parent":parent,"token_id":2}).to_string(),
        );
        let b = handle(
            &mut server,
            &json!({"op":"feed","session":"s","parent":parent,"token_id":3}).to_string(),
        );
        assert_eq!(a["result"], "accepted");
        assert_eq!(b["result"], "accepted");
        assert_ne!(a["state"], b["state"]);
    }

    #[test]
    fn batch_feed_serves_one_beam_step() {
        let mut server = Server::new();
        handle(&mut server, r#"{"op":"init","session":"s","mode":"lex"}"#);
        let resp = handle(
            &mut server,
            r#"{"op":"batch_feed","session":"s","items":[{"parent":null,"token_id":1},{"parent":null,"token_id":5}]}"#,
        );
        let results = resp["results"].as_array().unwrap();
        assert_eq!(results[0]["result"], "accepted");
        assert_eq!(results[1]["result"], "rejected");
        assert!(results[1]["reason"].is_string());
    }

    #[test]
    fn errors_do_not_kill_the_server() {
        let mut server = Server::new();
        assert_eq!(handle(&mut server, "not json"), json!({"error":"bad-request"}));
        assert_eq!(
            handle(&mut server, r#"{"op":"feed","session":"nope","token_id":1}"#),
            json!({"error":"unknown-handle"})
        );
        assert_eq!(
            handle(&mut server, r#"{"op":"feed","session":"s","parent":"hx","token_id":1}"#),
            json!({"error":"unknown-handle"})
        );
        // still serviceable
        assert_eq!(
            handle(&mut server, r#"{"op":"init","session":"s","mode":"off"}"#),
            json!({"ok": true})
        );
        assert_eq!(
            handle(&mut server, r#"{"op":"feed","session":"s","parent":"hx","token_id":1}"#),
            json!({"error":"unknown-handle"})
        );
        assert_eq!(
            handle(&mut server, r#"{"op":"drop","session":"s"}"#),
            json!({"ok": true})
        );
        assert_eq!(
            handle(&mut server, r#"{"op":"drop","session":"s"}"#),
            json!({"error":"unknown-handle"})
        );
    }

    #[test]
    fn serve_loop_round_trip() {
        let input = concat!(
            r#"{"op":"init","session":"s","mode":"parse"}"#, "\n",
            r#"{"op":"feed","session":"s","token_id":1}"#, "\n",
            "garbage\n",
            r#"{"op":"drop","session":"s"}"#, "\n",
        );
        let mut output = Vec::new();
        serve(&pets(), &vocab(), input.as_bytes(), &mut output).unwrap();
        let lines: Vec<Value> = String::from_utf8(output)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], json!({"ok": true}));
        assert_eq!(lines[1]["result"], "accepted");
        assert_eq!(lines[2], json!({"error":"bad-request"}));
        assert_eq!(lines[3], json!({"ok": true}));
    }
}
