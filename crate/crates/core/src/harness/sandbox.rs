//! Process-isolated execution of generated code.

use std::collections::VecDeque;
use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TIME_LIMIT: Duration = Duration::from_secs(120);
pub const DEFAULT_MEMORY_LIMIT: u64 = 2 << 30;

/// Captured stdout/stderr is cut to this many bytes (the tail is kept).
const MAX_OUTPUT_BYTES: usize = 256 * 1024;
const POLL_INTERVAL: Duration = Duration::from_millis(5);
const SEARCH_PATH: &str = "/usr/local/bin:/usr/bin:/bin";

/// Placeholder that replaces the working-directory path in captured output,
/// so diagnostics do not depend on where the run happened.
pub const WORKDIR_TOKEN: &str = "<workdir>";

#[derive(Debug, Clone, PartialEq)]
pub struct SandboxRequest {
    /// Program and arguments; relative paths resolve inside `workdir`.
    pub command: Vec<String>,
    pub workdir: PathBuf,
    /// Files written into `workdir` before the run (relative path, bytes).
    pub files: Vec<(PathBuf, Vec<u8>)>,
    pub time_limit: Duration,
    /// Address-space cap in bytes.
    pub memory_limit: Option<u64>,
    pub network: bool,
    /// File the program writes its result document to, relative to `workdir`.
    pub result_file: Option<PathBuf>,
}

impl SandboxRequest {
    pub fn python(workdir: &Path, script: &str, args: &[&str]) -> Self {
        let mut command = vec!["python3".to_string(), "-I".to_string(), script.to_string()];
        command.extend(args.iter().map(|a| a.to_string()));
        Self {
            command,
            workdir: workdir.to_path_buf(),
            files: Vec::new(),
            time_limit: DEFAULT_TIME_LIMIT,
            memory_limit: Some(DEFAULT_MEMORY_LIMIT),
            network: false,
            result_file: Some(PathBuf::from("result.json")),
        }
    }

    pub fn with_file(mut self, name: impl Into<PathBuf>, bytes: impl Into<Vec<u8>>) -> Self {
        self.files.push((name.into(), bytes.into()));
        self
    }

    pub fn with_time_limit(mut self, limit: Duration) -> Self {
        self.time_limit = limit;
        self
    }

    /// Contents of the input file called `name`, if any.
    pub fn file(&self, name: &str) -> Option<&[u8]> {
        self.files
            .iter()
            .find(|(p, _)| p == Path::new(name))
            .map(|(_, b)| b.as_slice())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", content = "code", rename_all = "kebab-case")]
pub enum ExitState {
    Exited(i32),
    Signaled(i32),
    TimedOut,
}

impl ExitState {
    pub fn success(self) -> bool {
        self == ExitState::Exited(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandboxReport {
    pub status: ExitState,
    pub stdout: String,
    pub stderr: String,
    /// Parsed result document, when the program wrote a valid one.
    pub result: Option<serde_json::Value>,
    pub duration: Duration,
}

impl SandboxReport {
    pub fn exited(code: i32, result: Option<serde_json::Value>) -> Self {
        Self {
            status: ExitState::Exited(code),
            stdout: String::new(),
            stderr: String::new(),
            result,
            duration: Duration::ZERO,
        }
    }

    /// Tail of stderr, the most useful part of a Python traceback.
    pub fn stderr_tail(&self, max: usize) -> &str {
        let s = self.stderr.trim_end();
        if s.len() <= max {
            return s;
        }
        let mut start = s.len() - max;
        while !s.is_char_boundary(start) {
            start += 1;
        }
        &s[start..]
    }
}

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("sandbox working directory {path}: {source}")]
    Workdir {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("input file {0} escapes the working directory")]
    Escape(PathBuf),
    #[error("could not start {program}: {source}")]
    Spawn {
        program: String,
        source: std::io::Error,
    },
    #[error("empty command")]
    EmptyCommand,
    #[error("sandbox i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("fake sandbox: {0}")]
    Fake(String),
}

pub trait Sandbox: Send + Sync {
    fn run(&self, request: &SandboxRequest) -> Result<SandboxReport, SandboxError>;
}

impl<S: Sandbox + ?Sized> Sandbox for &S {
    fn run(&self, request: &SandboxRequest) -> Result<SandboxReport, SandboxError> {
        (**self).run(request)
    }
}

impl<S: Sandbox + ?Sized> Sandbox for std::sync::Arc<S> {
    fn run(&self, request: &SandboxRequest) -> Result<SandboxReport, SandboxError> {
        (**self).run(request)
    }
}

/// Runs requests as child processes with a scrubbed environment, a
/// wall-clock limit, an address-space limit and, where the kernel allows
/// it, a private network namespace.
#[derive(Debug, Clone, Default)]
pub struct ProcessSandbox;

fn relative_inside(path: &Path) -> bool {
    !path.is_absolute()
        && path
            .components()
            .all(|c| matches!(c, std::path::Component::Normal(_)))
}

fn spawn_reader<R: Read + Send + 'static>(mut stream: R) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        let mut chunk = [0u8; 8192];
        loop {
            match stream.read(&mut chunk) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    buf.extend_from_slice(&chunk[..n]);
                    if buf.len() > 2 * MAX_OUTPUT_BYTES {
                        buf.drain(..buf.len() - MAX_OUTPUT_BYTES);
                    }
                }
            }
        }
        if buf.len() > MAX_OUTPUT_BYTES {
            buf.drain(..buf.len() - MAX_OUTPUT_BYTES);
        }
        buf
    })
}

fn kill_group(child: &mut Child) {
    // The child leads its own process group; take down any grandchildren.
    unsafe {
        libc::kill(-(child.id() as i32), libc::SIGKILL);
    }
    let _ = child.kill();
}

/// Filesystem write confinement through Landlock. Reads stay unrestricted;
/// creating, writing, truncating, renaming and removing files is allowed only
/// beneath the working directory (and on the device nodes under /dev).
mod landlock {
    use std::ffi::CString;
    use std::os::fd::{FromRawFd, OwnedFd, RawFd};
    use std::os::unix::ffi::OsStrExt;
    use std::path::Path;

    const CREATE_RULESET_VERSION: libc::c_uint = 1;
    const RULE_PATH_BENEATH: libc::c_int = 1;

    const WRITE_FILE: u64 = 1 << 1;
    const REMOVE_DIR: u64 = 1 << 4;
    const REMOVE_FILE: u64 = 1 << 5;
    const MAKE_CHAR: u64 = 1 << 6;
    const MAKE_DIR: u64 = 1 << 7;
    const MAKE_REG: u64 = 1 << 8;
    const MAKE_SOCK: u64 = 1 << 9;
    const MAKE_FIFO: u64 = 1 << 10;
    const MAKE_BLOCK: u64 = 1 << 11;
    const MAKE_SYM: u64 = 1 << 12;
    const REFER: u64 = 1 << 13;
    const TRUNCATE: u64 = 1 << 14;

    #[repr(C)]
    struct RulesetAttr {
        handled_access_fs: u64,
    }

    #[repr(C, packed)]
    struct PathBeneathAttr {
        allowed_access: u64,
        parent_fd: i32,
    }

    fn abi() -> i64 {
        unsafe {
            libc::syscall(
                libc::SYS_landlock_create_ruleset,
                std::ptr::null::<RulesetAttr>(),
                0usize,
                CREATE_RULESET_VERSION,
            )
        }
    }

    pub fn available() -> bool {
        abi() >= 1
    }

    fn handled(abi: i64) -> u64 {
        let mut access = WRITE_FILE
            | REMOVE_DIR
            | REMOVE_FILE
            | MAKE_CHAR
            | MAKE_DIR
            | MAKE_REG
            | MAKE_SOCK
            | MAKE_FIFO
            | MAKE_BLOCK
            | MAKE_SYM;
        if abi >= 2 {
            access |= REFER;
        }
        if abi >= 3 {
            access |= TRUNCATE;
        }
        access
    }

    fn allow(ruleset: &OwnedFd, path: &Path, access: u64) -> bool {
        use std::os::fd::AsRawFd;
        let Ok(c) = CString::new(path.as_os_str().as_bytes()) else {
            return false;
        };
        let fd = unsafe { libc::open(c.as_ptr(), libc::O_PATH | libc::O_CLOEXEC) };
        if fd < 0 {
            return false;
        }
        let dir = unsafe { OwnedFd::from_raw_fd(fd) };
        let attr = PathBeneathAttr {
            allowed_access: access,
            parent_fd: dir.as_raw_fd(),
        };
        let rc = unsafe {
            libc::syscall(
                libc::SYS_landlock_add_rule,
                ruleset.as_raw_fd(),
                RULE_PATH_BENEATH,
                &attr as *const PathBeneathAttr,
                0u32,
            )
        };
        rc == 0
    }

    /// Ruleset confining writes to `workdir`, or `None` when the kernel
    /// lacks Landlock.
    pub fn ruleset(workdir: &Path) -> Option<OwnedFd> {
        let abi = abi();
        if abi < 1 {
            return None;
        }
        let access = handled(abi);
        let attr = RulesetAttr {
            handled_access_fs: access,
        };
        let fd = unsafe {
            libc::syscall(
                libc::SYS_landlock_create_ruleset,
                &attr as *const RulesetAttr,
                std::mem::size_of::<RulesetAttr>(),
                0u32,
            )
        };
        if fd < 0 {
            return None;
        }
        let ruleset = unsafe { OwnedFd::from_raw_fd(fd as RawFd) };
        if !allow(&ruleset, workdir, access) {
            return None;
        }
        // /dev/null and friends; a missing /dev only costs those.
        allow(&ruleset, Path::new("/dev"), WRITE_FILE | (access & TRUNCATE));
        Some(ruleset)
    }

    /// Applies `ruleset` to the calling process. Only async-signal-safe
    /// calls: this runs between fork and exec.
    pub fn restrict_self(ruleset: RawFd) -> std::io::Result<()> {
        unsafe {
            if libc::prctl(libc::PR_SET_NO_NEW_PRIVS, 1, 0, 0, 0) != 0 {
                return Err(std::io::Error::last_os_error());
            }
            if libc::syscall(libc::SYS_landlock_restrict_self, ruleset, 0u32) != 0 {
                return Err(std::io::Error::last_os_error());
            }
        }
        Ok(())
    }
}

/// Whether this kernel lets the process sandbox confine file writes to the
/// working directory.
pub fn write_confinement_available() -> bool {
    landlock::available()
}

fn sanitize(bytes: Vec<u8>, workdir: &str) -> String {
    let text = String::from_utf8_lossy(&bytes).into_owned();
    if workdir.is_empty() {
        text
    } else {
        text.replace(workdir, WORKDIR_TOKEN)
    }
}

impl Sandbox for ProcessSandbox {
    fn run(&self, request: &SandboxRequest) -> Result<SandboxReport, SandboxError> {
        let workdir = &request.workdir;
        std::fs::create_dir_all(workdir).map_err(|source| SandboxError::Workdir {
            path: workdir.clone(),
            source,
        })?;
        let workdir = workdir.canonicalize().map_err(|source| SandboxError::Workdir {
            path: workdir.clone(),
            source,
        })?;
        for (name, bytes) in &request.files {
            if !relative_inside(name) {
                return Err(SandboxError::Escape(name.clone()));
            }
            let path = workdir.join(name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, bytes)?;
        }
        if let Some(result) = &request.result_file {
            let _ = std::fs::remove_file(workdir.join(result));
        }

        let (program, args) = request.command.split_first().ok_or(SandboxError::EmptyCommand)?;
        let mut command = Command::new(program);
        command
            .args(args)
            .current_dir(&workdir)
            .env_clear()
            .env("PATH", SEARCH_PATH)
            .env("HOME", &workdir)
            .env("TMPDIR", &workdir)
            .env("PYTHONHASHSEED", "0")
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .env("OMP_NUM_THREADS", "1")
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        let memory = request.memory_limit;
        let isolate_network = !request.network;
        let ruleset = landlock::ruleset(&workdir);
        let ruleset_fd = ruleset.as_ref().map(std::os::fd::AsRawFd::as_raw_fd);
        unsafe {
            command.pre_exec(move || {
                libc::setpgid(0, 0);
                if let Some(fd) = ruleset_fd {
                    landlock::restrict_self(fd)?;
                }
                if let Some(bytes) = memory {
                    let limit = libc::rlimit {
                        rlim_cur: bytes as libc::rlim_t,
                        rlim_max: bytes as libc::rlim_t,
                    };
                    if libc::setrlimit(libc::RLIMIT_AS, &limit) != 0 {
                        return Err(std::io::Error::last_os_error());
                    }
                }
                if isolate_network {
                    // Needs CAP_SYS_ADMIN; without it the run keeps the
                    // host network and relies on the other limits.
                    libc::unshare(libc::CLONE_NEWNET);
                }
                Ok(())
            });
        }

        let started = Instant::now();
        let mut child = command.spawn().map_err(|source| SandboxError::Spawn {
            program: program.clone(),
            source,
        })?;
        drop(ruleset);
        let stdout = spawn_reader(child.stdout.take().expect("piped stdout"));
        let stderr = spawn_reader(child.stderr.take().expect("piped stderr"));
        let status = loop {
            if let Some(status) = child.try_wait()? {
                break match (status.code(), std::os::unix::process::ExitStatusExt::signal(&status)) {
                    (Some(code), _) => ExitState::Exited(code),
                    (None, Some(sig)) => ExitState::Signaled(sig),
                    (None, None) => ExitState::Signaled(0),
                };
            }
            if started.elapsed() >= request.time_limit {
                kill_group(&mut child);
                let _ = child.wait();
                break ExitState::TimedOut;
            }
            thread::sleep(POLL_INTERVAL);
        };
        let duration = started.elapsed();
        let prefix = workdir.display().to_string();
        let stdout = sanitize(stdout.join().unwrap_or_default(), &prefix);
        let stderr = sanitize(stderr.join().unwrap_or_default(), &prefix);
        let result = match (&request.result_file, status) {
            (Some(name), ExitState::Exited(_)) => std::fs::read(workdir.join(name))
                .ok()
                .and_then(|bytes| serde_json::from_slice(&bytes).ok()),
            _ => None,
        };
        Ok(SandboxReport {
            status,
            stdout,
            stderr,
            result,
            duration,
        })
    }
}

type Handler = dyn Fn(&SandboxRequest) -> Result<SandboxReport, SandboxError> + Send + Sync;

/// Sandbox that never starts a process: each request is answered by a
/// handler, or from a queue of canned reports.
pub struct FakeSandbox {
    handler: Box<Handler>,
    log: Mutex<Vec<SandboxRequest>>,
}

impl FakeSandbox {
    pub fn new<F>(handler: F) -> Self
    where
        F: Fn(&SandboxRequest) -> Result<SandboxReport, SandboxError> + Send + Sync + 'static,
    {
        Self {
            handler: Box::new(handler),
            log: Mutex::new(Vec::new()),
        }
    }

    /// Replays `reports` in order; errors once they run out.
    pub fn canned(reports: impl IntoIterator<Item = SandboxReport>) -> Self {
        let queue = Mutex::new(reports.into_iter().collect::<VecDeque<_>>());
        Self::new(move |_| {
            queue
                .lock()
                .expect("queue lock")
                .pop_front()
                .ok_or_else(|| SandboxError::Fake("no canned report left".into()))
        })
    }

    pub fn requests(&self) -> Vec<SandboxRequest> {
        self.log.lock().expect("log lock").clone()
    }

    pub fn calls(&self) -> usize {
        self.log.lock().expect("log lock").len()
    }
}

impl Sandbox for FakeSandbox {
    fn run(&self, request: &SandboxRequest) -> Result<SandboxReport, SandboxError> {
        self.log.lock().expect("log lock").push(request.clone());
        (self.handler)(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sh(workdir: &Path, script: &str) -> SandboxRequest {
        SandboxRequest {
            command: vec!["/bin/sh".into(), "-c".into(), script.into()],
            workdir: workdir.to_path_buf(),
            files: Vec::new(),
            time_limit: Duration::from_secs(10),
            memory_limit: Some(DEFAULT_MEMORY_LIMIT),
            network: false,
            result_file: Some("result.json".into()),
        }
    }

    #[test]
    fn captures_output_status_and_result() {
        let dir = tempfile::tempdir().unwrap();
        let req = sh(dir.path(), "cat in.txt; echo oops >&2; echo '{\"ok\": 1}' > result.json; exit 3")
            .with_file("in.txt", "hello");
        let report = ProcessSandbox.run(&req).unwrap();
        assert_eq!(report.status, ExitState::Exited(3));
        assert_eq!(report.stdout, "hello");
        assert_eq!(report.stderr.trim(), "oops");
        assert_eq!(report.result, Some(serde_json::json!({"ok": 1})));
    }

    #[test]
    fn timeout_kills_the_process_group() {
        let dir = tempfile::tempdir().unwrap();
        let req = sh(dir.path(), "sleep 30 & sleep 30").with_time_limit(Duration::from_millis(200));
        let report = ProcessSandbox.run(&req).unwrap();
        assert_eq!(report.status, ExitState::TimedOut);
        assert!(report.duration < Duration::from_secs(5));
    }

    #[test]
    fn environment_is_scrubbed_and_paths_sanitized() {
        std::env::set_var("TEXT2ML_SECRET_PROBE", "leak");
        let dir = tempfile::tempdir().unwrap();
        let report = ProcessSandbox
            .run(&sh(dir.path(), "env; pwd"))
            .unwrap();
        assert!(!report.stdout.contains("leak"));
        assert!(report.stdout.contains("PYTHONHASHSEED=0"));
        assert!(report.stdout.contains(WORKDIR_TOKEN));
        assert!(!report.stdout.contains(&dir.path().canonicalize().unwrap().display().to_string()));
    }

    #[test]
    fn input_files_cannot_escape() {
        let dir = tempfile::tempdir().unwrap();
        let req = sh(dir.path(), "true").with_file("../x", "no");
        assert!(matches!(ProcessSandbox.run(&req), Err(SandboxError::Escape(_))));
    }

    #[test]
    fn memory_limit_is_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let mut req = SandboxRequest::python(dir.path(), "-c", &["x = bytearray(512 * 1024 * 1024)"]);
        req.command = vec!["python3".into(), "-I".into(), "-c".into(), "x = bytearray(512 * 1024 * 1024)".into()];
        req.memory_limit = Some(256 << 20);
        let report = ProcessSandbox.run(&req).unwrap();
        assert!(!report.status.success());
        assert!(report.stderr.contains("MemoryError"), "{}", report.stderr);
    }

    #[test]
    fn writes_outside_the_workdir_are_denied() {
        if !write_confinement_available() {
            eprintln!("landlock unavailable; write confinement not exercised");
            return;
        }
        let outside = tempfile::tempdir().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let target = outside.path().join("escaped.txt");
        let script = format!(
            "echo inside > ok.txt && mkdir sub && echo x > sub/y && echo out > {} ; echo done > /dev/null",
            target.display()
        );
        let report = ProcessSandbox.run(&sh(dir.path(), &script)).unwrap();
        assert!(!target.exists(), "write escaped the sandbox");
        assert!(dir.path().join("ok.txt").exists());
        assert!(dir.path().join("sub/y").exists());
        assert!(report.stderr.contains("ermission denied"), "{}", report.stderr);
    }

    #[test]
    fn canned_reports_replay_in_order() {
        let fake = FakeSandbox::canned([SandboxReport::exited(0, None), SandboxReport::exited(1, None)]);
        let dir = tempfile::tempdir().unwrap();
        let req = sh(dir.path(), "unused");
        assert!(fake.run(&req).unwrap().status.success());
        assert!(!fake.run(&req).unwrap().status.success());
        assert!(fake.run(&req).is_err());
        assert_eq!(fake.calls(), 3);
    }
}
