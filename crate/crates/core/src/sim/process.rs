// SPDX-License-Identifier: Apache-2.0

//! Run an external tool with a wall-clock bound and full output capture.

use std::io::{self, Read};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use wait_timeout::ChildExt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessOutput {
    pub stdout: String,
    pub stderr: String,
    /// `None` when killed by a signal, including our own timeout kill.
    pub exit_code: Option<i32>,
    pub timed_out: bool,
    pub duration_ms: u64,
}

/// Spawn `argv` in `cwd`, wait at most `timeout`, kill the whole process
/// group on expiry. Spawn failures (e.g. `NotFound`) are returned as-is.
pub fn run_with_timeout(argv: &[String], cwd: &Path, timeout: Duration) -> io::Result<ProcessOutput> {
    let (program, args) = argv
        .split_first()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "empty command"))?;
    let mut cmd = Command::new(program);
    cmd.args(args)
        .current_dir(cwd)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        cmd.process_group(0);
    }

    let start = Instant::now();
    let mut child = cmd.spawn()?;
    let out_reader = drain(child.stdout.take());
    let err_reader = drain(child.stderr.take());

    let (status, timed_out) = match child.wait_timeout(timeout)? {
        Some(status) => (Some(status), false),
        None => {
            kill_tree(&mut child);
            (child.wait().ok(), true)
        }
    };
    let duration_ms = start.elapsed().as_millis() as u64;
    let stdout = out_reader.join().unwrap_or_default();
    let stderr = err_reader.join().unwrap_or_default();
    let exit_code = if timed_out { None } else { status.and_then(|s| s.code()) };
    Ok(ProcessOutput {
        stdout,
        stderr,
        exit_code,
        timed_out,
        duration_ms,
    })
}

fn drain<R: Read + Send + 'static>(pipe: Option<R>) -> JoinHandle<String> {
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut p) = pipe {
            let _ = p.read_to_end(&mut buf);
        }
        String::from_utf8_lossy(&buf).into_owned()
    })
}

fn kill_tree(child: &mut Child) {
    #[cfg(unix)]
    {
        // Negative pid addresses the group created by process_group(0).
        let pgid = child.id() as libc::pid_t;
        unsafe {
            libc::kill(-pgid, libc::SIGKILL);
        }
    }
    let _ = child.kill();
}
