use std::io::{Read, Write};
use std::process::{Command, Stdio};

use super::{BackendError, Compressor};

/// Runs an external compressor as `argv[0] argv[1..]`, feeding the input on
/// stdin and measuring stdout. Each call spawns its own process, so the
/// adapter is reentrant.
#[derive(Debug, Clone)]
pub struct CommandBackend {
    argv: Vec<String>,
    window: Option<usize>,
}

impl CommandBackend {
    pub fn new(argv: Vec<String>, window: Option<usize>) -> Result<Self, BackendError> {
        if argv.is_empty() || argv[0].is_empty() {
            return Err(BackendError::Config("empty command".into()));
        }
        Ok(Self { argv, window })
    }
}

impl Compressor for CommandBackend {
    fn compress(&self, data: &[u8]) -> Result<Vec<u8>, String> {
        let mut child = Command::new(&self.argv[0])
            .args(&self.argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| format!("cannot start `{}`: {e}", self.argv[0]))?;

        let mut stdin = child.stdin.take().expect("piped stdin");
        let mut stdout = child.stdout.take().expect("piped stdout");
        // Feed stdin on a scoped thread so a full stdout pipe cannot deadlock us.
        let (written, out) = std::thread::scope(|s| {
            let writer = s.spawn(move || stdin.write_all(data));
            let mut out = Vec::new();
            let read = stdout.read_to_end(&mut out);
            (writer.join().expect("stdin writer panicked"), read.map(|_| out))
        });
        let out = out.map_err(|e| format!("reading output: {e}"))?;

        let mut err = String::new();
        if let Some(mut e) = child.stderr.take() {
            let _ = e.read_to_string(&mut err);
        }
        let status = child.wait().map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("exited with {status}: {}", err.trim()));
        }
        written.map_err(|e| format!("writing input: {e}"))?;
        Ok(out)
    }

    fn window(&self) -> Option<usize> {
        self.window
    }
}
