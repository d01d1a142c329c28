// SPDX-License-Identifier: Apache-2.0

// Shared fixtures for the cli integration targets: a scripted
// chat-completions server and config files wired to the fake simulator
// and the mock synthesis table.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;

use hdlrepair::commands::{cmd_run, RunOverrides};
use hdlrepair_core::gateway::TraceMode;
use serde_json::{json, Value};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn corpus_dir() -> PathBuf {
    fixtures().join("corpus")
}

const ADDER_OK: &str = "module adder_8bit(input [7:0] a, input [7:0] b, input cin, output [7:0] sum, output cout);\n  assign {cout, sum} = a + b + cin;\nendmodule";
const ADDER_SYNTAX: &str = "module adder_8bit(input [7:0] a, input [7:0] b, input cin, output [7:0] sum, output cout);\n  assign {cout, sum} = a + b + cin // FAKE-SYNTAX\nendmodule";
const ADDER_FAST: &str = "// optimized: carry-lookahead\nmodule adder_8bit(input [7:0] a, input [7:0] b, input cin, output [7:0] sum, output cout);\n  wire [8:0] s = {1'b0, a} + {1'b0, b} + cin;\n  assign {cout, sum} = s;\nendmodule";
const COUNTER_OK: &str = "module counter_12(input rst_n, input clk, input valid_count, output reg [3:0] out);\n  always @(posedge clk or negedge rst_n)\n    if (!rst_n) out <= 4'd0;\n    else if (valid_count) out <= (out == 4'd11) ? 4'd0 : out + 4'd1;\nendmodule";
const COUNTER_WRAP: &str = "module counter_12(input rst_n, input clk, input valid_count, output reg [3:0] out);\n  // FAKE-FAIL out=12 expected 0\n  always @(posedge clk or negedge rst_n)\n    if (!rst_n) out <= 4'd0;\n    else if (valid_count) out <= out + 4'd1;\nendmodule";
const CALENDAR_BAD: &str = "module calendar(input CLK, input RST, output reg [5:0] Hours, output reg [5:0] Mins, output reg [5:0] Secs);\n  // FAKE-FAIL Secs never wraps\n  always @(posedge CLK) Secs <= RST ? 6'd0 : Secs + 6'd1;\nendmodule";

/// Scripted reply for a chat request: the design comes from the initial
/// prompt, the attempt index from the number of assistant turns so far.
pub fn scripted_reply(messages: &[Value]) -> String {
    let text = |m: &Value| m["content"].as_str().unwrap_or_default().to_string();
    let first_user = messages
        .iter()
        .find(|m| m["role"] == "user")
        .map(text)
        .unwrap_or_default();
    let last_user = messages
        .iter()
        .rev()
        .find(|m| m["role"] == "user")
        .map(text)
        .unwrap_or_default();
    let attempt = messages.iter().filter(|m| m["role"] == "assistant").count();
    let design = ["adder_8bit", "counter_12", "calendar"]
        .into_iter()
        .find(|d| first_user.contains(&format!("module `{d}`")))
        .unwrap_or("unknown");
    let code = match design {
        "adder_8bit" if last_user.contains("misses its design targets") => ADDER_FAST,
        "adder_8bit" if attempt == 0 => ADDER_SYNTAX,
        "adder_8bit" => ADDER_OK,
        "counter_12" if attempt == 0 => COUNTER_WRAP,
        "counter_12" => COUNTER_OK,
        _ => CALENDAR_BAD,
    };
    format!("Here is the module.\n\n```verilog\n{code}\n```\n")
}

pub struct MockChat {
    pub url: String,
    pub requests: Arc<AtomicUsize>,
}

impl MockChat {
    pub fn start() -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let requests = Arc::new(AtomicUsize::new(0));
        let seen = Arc::clone(&requests);
        std::thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let seen = Arc::clone(&seen);
                std::thread::spawn(move || serve_one(stream, &seen));
            }
        });
        Self { url, requests }
    }
}

fn serve_one(stream: TcpStream, seen: &AtomicUsize) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut len = 0;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
            break;
        }
        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            len = v.trim().parse().unwrap_or(0);
        }
    }
    let mut buf = vec![0; len];
    if reader.read_exact(&mut buf).is_err() {
        return;
    }
    seen.fetch_add(1, Ordering::SeqCst);
    let req: Value = serde_json::from_slice(&buf).unwrap_or(Value::Null);
    let messages = req["messages"].as_array().cloned().unwrap_or_default();
    let body =
        json!({"choices": [{"message": {"role": "assistant", "content": scripted_reply(&messages)}}]}).to_string();
    let mut stream = stream;
    let _ = write!(
        stream,
        "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
}

/// Config for the fixture corpus: K = 2 corrections, n = 2 candidates.
pub fn write_config(dir: &Path, trace: &Path, endpoint: &str) -> PathBuf {
    let tools = fixtures().join("tools");
    let text = format!(
        r#"corpus = {corpus:?}
out = "out"
seed = 7

[generation]
model_id = "mock-chat"
temperature = 0.0

[loop]
max_corrections = 2
n_candidates = 2
ppa_rounds = 2

[backend]
mode = "replay"
trace = {trace:?}
endpoint = {endpoint:?}
retry_attempts = 1
retry_backoff_ms = 1

[simulator]
compile = ["sh", {iv:?}, "-o", "{{out}}", "{{sources}}"]
run = ["sh", {vvp:?}, "{{out}}"]
timeout_s = 10.0

[synthesis]
adapter = "mock"
mock_table = {mock:?}
dialect = "dc"

[parallelism]
workers = 2
"#,
        corpus = corpus_dir(),
        iv = tools.join("fake_iverilog.sh"),
        vvp = tools.join("fake_vvp.sh"),
        mock = fixtures().join("mock_synth.toml"),
    );
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

pub fn run(o: &RunOverrides) -> (i32, String) {
    let stop = AtomicBool::new(false);
    let mut out = Vec::new();
    let code = cmd_run(o, &stop, &mut out);
    (code, String::from_utf8(out).unwrap())
}

pub fn overrides(config: &Path, mode: TraceMode, out: &Path) -> RunOverrides {
    RunOverrides {
        config: Some(config.to_path_buf()),
        mode: Some(mode),
        out: Some(out.to_path_buf()),
        ..RunOverrides::default()
    }
}

/// Record a trace of the fixture corpus against the scripted server and
/// return the config path that replays it.
pub fn recorded(dir: &Path) -> PathBuf {
    let chat = MockChat::start();
    let trace = dir.join("trace.jsonl");
    let config = write_config(dir, &trace, &chat.url);
    let (code, _) = run(&overrides(&config, TraceMode::Record, &dir.join("record")));
    assert_eq!(code, 0, "record run failed");
    assert!(chat.requests.load(Ordering::SeqCst) > 0);
    config
}
