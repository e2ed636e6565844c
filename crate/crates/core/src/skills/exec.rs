use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde_json::{Map, Value};

use crate::sandbox::validate_workspace_path;
use crate::tools::{ToolContext, ToolError, ToolExecutor};

pub const SKILL_COMMAND_TIMEOUT: Duration = Duration::from_secs(30);
const MAX_OUTPUT_BYTES: u64 = 1 << 20;

/// Executable declared by a skill: JSON args on stdin, observation on stdout,
/// run from the workspace root.
#[derive(Debug, Clone)]
pub struct SkillCommand {
    skill_dir: PathBuf,
    command: String,
    workspace_root: PathBuf,
    timeout: Duration,
}

impl SkillCommand {
    pub fn new(skill_dir: &Path, command: &str, workspace_root: &Path) -> Self {
        SkillCommand {
            skill_dir: skill_dir.to_path_buf(),
            command: command.to_string(),
            workspace_root: workspace_root.to_path_buf(),
            timeout: SKILL_COMMAND_TIMEOUT,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn run(&self, args: &Map<String, Value>) -> Result<Value, ToolError> {
        let exe = validate_workspace_path(&self.command, &self.skill_dir)?;
        if !exe.is_file() {
            return Err(ToolError::NotFound(self.command.clone()));
        }
        let mut child = Command::new(&exe)
            .current_dir(&self.workspace_root)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| ToolError::Failed(format!("cannot start {}: {e}", self.command)))?;

        let input = serde_json::to_vec(args).expect("maps serialize");
        let mut stdin = child.stdin.take().expect("piped");
        let writer = std::thread::spawn(move || {
            let _ = stdin.write_all(&input);
        });
        let mut stdout = child.stdout.take().expect("piped").take(MAX_OUTPUT_BYTES);
        let out_reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stdout.read_to_end(&mut buf);
            buf
        });
        let mut stderr = child.stderr.take().expect("piped").take(MAX_OUTPUT_BYTES);
        let err_reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stderr.read_to_end(&mut buf);
            buf
        });

        let deadline = Instant::now() + self.timeout;
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) if Instant::now() >= deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(ToolError::Failed(format!(
                        "skill command {} timed out after {}s",
                        self.command,
                        self.timeout.as_secs_f64()
                    )));
                }
                Ok(None) => std::thread::sleep(Duration::from_millis(10)),
                Err(e) => return Err(ToolError::Failed(format!("waiting for {}: {e}", self.command))),
            }
        };
        let _ = writer.join();
        let out = out_reader.join().unwrap_or_default();
        let err = err_reader.join().unwrap_or_default();
        if !status.success() {
            let stderr = String::from_utf8_lossy(&err);
            let first = stderr.lines().next().unwrap_or("").trim();
            return Err(ToolError::Failed(format!("skill command {} exited with {status}: {first}", self.command)));
        }
        let text = String::from_utf8_lossy(&out).trim().to_string();
        Ok(serde_json::from_str::<Value>(&text).unwrap_or(Value::String(text)))
    }
}

impl ToolExecutor for SkillCommand {
    fn call(&self, _ctx: &mut ToolContext<'_>, args: &Map<String, Value>) -> Result<Value, ToolError> {
        self.run(args)
    }
}
