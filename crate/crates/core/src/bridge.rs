//! Client side of the line-delimited JSON protocol used to reach external
//! simulators, plus an in-process stub server for testing.
//!
//! Every request is one JSON object on one line:
//!
//! ```text
//! {"op":"spec"}
//! {"op":"reset","seed":3}
//! {"op":"step","action":[0.1,-0.2]}
//! {"op":"close"}
//! ```
//!
//! and is answered by exactly one line, either
//! `{"ok":true, ...payload}` or `{"ok":false,"error":"..."}`. Floats are
//! written in shortest round-trip form so values survive the trip bit for
//! bit.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::env::{ActuationMode, EnvSpec, Environment, JointState, StepResult};
use crate::error::{Error, Result};
use crate::pd::{compute_torque, PdGains};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    Spec,
    Reset {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Step {
        action: Vec<f64>,
    },
    Close,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemoteSpec {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub control_period: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Response {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminated: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncated: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<RemoteSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Response {
    pub fn failure(msg: impl Into<String>) -> Self {
        Self {
            ok: false,
            error: Some(msg.into()),
            ..Self::default()
        }
    }
}

pub fn encode_line<S: Serialize>(msg: &S) -> String {
    let mut line = serde_json::to_string(msg).expect("protocol messages serialize");
    line.push('\n');
    line
}

/// Where the bridge server lives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    /// Spawn a process and talk over its stdin/stdout.
    Command(Vec<String>),
    /// Connect to `host:port`.
    Tcp(String),
}

impl Endpoint {
    /// `tcp://host:port` selects TCP; anything else is a whitespace-separated
    /// command line.
    pub fn parse(spec: &str) -> Result<Self> {
        if let Some(addr) = spec.strip_prefix("tcp://") {
            return Ok(Endpoint::Tcp(addr.to_string()));
        }
        let argv: Vec<String> = spec.split_whitespace().map(str::to_string).collect();
        if argv.is_empty() {
            return Err(Error::invalid("empty bridge endpoint"));
        }
        Ok(Endpoint::Command(argv))
    }
}

/// A request/response session with one bridge server.
pub struct BridgeClient {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    child: Option<Child>,
    timeout: Duration,
}

impl BridgeClient {
    pub fn connect(endpoint: &Endpoint, timeout: Duration) -> Result<Self> {
        match endpoint {
            Endpoint::Command(argv) => {
                let mut child = Command::new(&argv[0])
                    .args(&argv[1..])
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|e| Error::Environment(format!("cannot spawn bridge `{}`: {e}", argv[0])))?;
                let stdin: ChildStdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                let mut client = Self::from_streams(stdout, stdin, timeout);
                client.child = Some(child);
                Ok(client)
            }
            Endpoint::Tcp(addr) => {
                let stream = TcpStream::connect(addr)
                    .map_err(|e| Error::Environment(format!("cannot connect to bridge at {addr}: {e}")))?;
                let reader = stream
                    .try_clone()
                    .map_err(|e| Error::Environment(format!("bridge socket: {e}")))?;
                Ok(Self::from_streams(reader, stream, timeout))
            }
        }
    }

    /// Wraps an arbitrary reader/writer pair. Lines are read on a helper
    /// thread so every round trip can time out.
    pub fn from_streams<R, W>(reader: R, writer: W, timeout: Duration) -> Self
    where
        R: std::io::Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(reader);
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) => break,
                    Ok(_) => {
                        if tx.send(Ok(line)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        Self {
            writer: Box::new(writer),
            lines: rx,
            child: None,
            timeout,
        }
    }

    pub fn request(&mut self, req: &Request) -> Result<Response> {
        self.writer
            .write_all(encode_line(req).as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|e| Error::Environment(format!("bridge write failed: {e}")))?;
        let line = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(Error::Environment(format!("bridge read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                return Err(Error::Environment(format!("bridge timed out after {:?}", self.timeout)))
            }
            Err(RecvTimeoutError::Disconnected) => return Err(Error::Environment("bridge closed the connection".into())),
        };
        serde_json::from_str(line.trim_end())
            .map_err(|e| Error::Environment(format!("malformed bridge response `{}`: {e}", line.trim_end())))
    }

    fn checked(&mut self, req: &Request) -> Result<Response> {
        let resp = self.request(req)?;
        if resp.ok {
            Ok(resp)
        } else {
            Err(Error::Environment(format!(
                "bridge error: {}",
                resp.error.unwrap_or_else(|| "unspecified".into())
            )))
        }
    }

    pub fn spec(&mut self) -> Result<RemoteSpec> {
        self.checked(&Request::Spec)?
            .spec
            .ok_or_else(|| Error::Environment("spec response without spec".into()))
    }

    pub fn close(&mut self) -> Result<()> {
        let result = self.request(&Request::Close).map(|_| ());
        if let Some(mut child) = self.child.take() {
            let _ = child.wait();
        }
        result
    }
}

impl Drop for BridgeClient {
    fn drop(&mut self) {
        if let Some(mut child) = self.child.take() {
            let _ = self.writer.write_all(encode_line(&Request::Close).as_bytes());
            let _ = self.writer.flush();
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Which observation entries carry joint positions and velocities, so that
/// torque-controlled tasks can close the PD loop on the primary side.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct JointIndexMap {
    pub positions: Vec<usize>,
    pub velocities: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeOptions {
    pub endpoint: Endpoint,
    /// Control steps per episode on the remote side.
    pub episode_steps: usize,
    pub actuation_mode: ActuationMode,
    #[serde(default)]
    pub joints: JointIndexMap,
    /// Expected action dimension; the handshake fails when the remote
    /// disagrees.
    #[serde(default)]
    pub expected_joints: Option<usize>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
}

fn default_timeout_secs() -> f64 {
    DEFAULT_TIMEOUT.as_secs_f64()
}

/// An external task behind a bridge server, exposed as an [`Environment`].
pub struct BridgeEnv {
    client: BridgeClient,
    spec: EnvSpec<f64>,
    joints: JointIndexMap,
    last_obs: Vec<f64>,
    done: bool,
}

impl BridgeEnv {
    pub fn connect(task: &str, options: &BridgeOptions) -> Result<Self> {
        let client = BridgeClient::connect(&options.endpoint, Duration::from_secs_f64(options.timeout_secs))?;
        Self::handshake(task, client, options)
    }

    pub fn handshake(task: &str, mut client: BridgeClient, options: &BridgeOptions) -> Result<Self> {
        let remote = client.spec()?;
        if let Some(expected) = options.expected_joints {
            if expected != remote.act_dim {
                return Err(Error::invalid(format!(
                    "bridge task {task} has {} actuators but the configuration expects {expected}",
                    remote.act_dim
                )));
            }
        }
        let in_range = |idx: &[usize]| idx.iter().all(|&i| i < remote.obs_dim);
        if !in_range(&options.joints.positions) || !in_range(&options.joints.velocities) {
            return Err(Error::invalid(format!(
                "joint index map points past obs_dim {}",
                remote.obs_dim
            )));
        }
        if options.actuation_mode == ActuationMode::Torque
            && (options.joints.positions.len() != remote.act_dim || options.joints.velocities.len() != remote.act_dim)
        {
            return Err(Error::invalid(format!(
                "torque control of {task} needs {} joint position and velocity indices",
                remote.act_dim
            )));
        }
        let spec = EnvSpec {
            name: format!("external:{task}"),
            joint_count: remote.act_dim,
            obs_dim: remote.obs_dim,
            control_period: remote.control_period,
            episode_horizon: remote.control_period * options.episode_steps as f64,
            actuation_mode: options.actuation_mode,
            action_bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); remote.act_dim],
            force_dim: 0,
        };
        Ok(Self {
            client,
            spec,
            joints: options.joints.clone(),
            last_obs: vec![0.0; remote.obs_dim],
            done: true,
        })
    }

    pub fn close(mut self) -> Result<()> {
        self.client.close()
    }
}

impl Environment<f64> for BridgeEnv {
    fn spec(&self) -> &EnvSpec<f64> {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let resp = self.client.checked(&Request::Reset { seed: Some(seed) })?;
        let obs = resp
            .obs
            .ok_or_else(|| Error::Environment("reset response without obs".into()))?;
        if obs.len() != self.spec.obs_dim {
            return Err(Error::Environment(format!(
                "bridge returned {} observations, spec says {}",
                obs.len(),
                self.spec.obs_dim
            )));
        }
        self.last_obs = obs.clone();
        self.done = false;
        Ok(obs)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult<f64>> {
        crate::env::check_action(&self.spec, action)?;
        let resp = self.client.checked(&Request::Step {
            action: action.to_vec(),
        })?;
        let observation = resp
            .obs
            .ok_or_else(|| Error::Environment("step response without obs".into()))?;
        let reward = resp
            .reward
            .ok_or_else(|| Error::Environment("step response without reward".into()))?;
        let terminated = resp.terminated.unwrap_or(false);
        let truncated = resp.truncated.unwrap_or(false);
        self.last_obs = observation.clone();
        self.done = terminated || truncated;
        Ok(StepResult {
            observation,
            reward,
            terminated,
            truncated,
        })
    }

    fn joint_state(&self) -> Option<JointState<f64>> {
        if self.joints.positions.is_empty() {
            return None;
        }
        Some(JointState {
            positions: self.joints.positions.iter().map(|&i| self.last_obs[i]).collect(),
            velocities: self.joints.velocities.iter().map(|&i| self.last_obs[i]).collect(),
        })
    }
}

/// Torques for a torque-actuated remote task from desired positions.
pub fn pd_action(gains: &PdGains<f64>, q_des: &[f64], joints: &JointState<f64>) -> Result<Vec<f64>> {
    compute_torque(gains, q_des, &joints.positions, &joints.velocities)
}

/// Minimal protocol server used for testing clients. The "task" echoes the
/// last action into the first observation slots and rewards the action sum.
pub mod stub {
    use super::*;

    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct StubConfig {
        pub obs_dim: usize,
        pub act_dim: usize,
        pub control_period: f64,
        pub episode_steps: usize,
    }

    impl Default for StubConfig {
        fn default() -> Self {
            Self {
                obs_dim: 4,
                act_dim: 2,
                control_period: 0.05,
                episode_steps: 1000,
            }
        }
    }

    /// Serves one session until `close` or end of input.
    pub fn serve<R: BufRead, W: Write>(reader: R, mut writer: W, config: StubConfig) -> std::io::Result<()> {
        let mut obs: Option<Vec<f64>> = None;
        let mut steps = 0usize;
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (resp, stop) = match serde_json::from_str::<Request>(&line) {
                Err(e) => (Response::failure(format!("malformed request: {e}")), false),
                Ok(Request::Spec) => (
                    Response {
                        ok: true,
                        spec: Some(RemoteSpec {
                            obs_dim: config.obs_dim,
                            act_dim: config.act_dim,
                            control_period: config.control_period,
                        }),
                        ..Response::default()
                    },
                    false,
                ),
                Ok(Request::Reset { seed }) => {
                    let mut o = vec![0.0; config.obs_dim];
                    if let (Some(seed), Some(last)) = (seed, o.last_mut()) {
                        *last = seed as f64;
                    }
                    obs = Some(o.clone());
                    steps = 0;
                    (
                        Response {
                            ok: true,
                            obs: Some(o),
                            ..Response::default()
                        },
                        false,
                    )
                }
                Ok(Request::Step { action }) => match obs.as_mut() {
                    None => (Response::failure("not reset"), false),
                    Some(_) if action.len() != config.act_dim => (
                        Response::failure(format!("expected {} actions, got {}", config.act_dim, action.len())),
                        false,
                    ),
                    Some(o) => {
                        for (slot, a) in o.iter_mut().zip(&action) {
                            *slot = *a;
                        }
                        steps += 1;
                        (
                            Response {
                                ok: true,
                                obs: Some(o.clone()),
                                reward: Some(action.iter().sum()),
                                terminated: Some(false),
                                truncated: Some(steps >= config.episode_steps),
                                ..Response::default()
                            },
                            false,
                        )
                    }
                },
                Ok(Request::Close) => (
                    Response {
                        ok: true,
                        ..Response::default()
                    },
                    true,
                ),
            };
            writer.write_all(encode_line(&resp).as_bytes())?;
            writer.flush()?;
            if stop {
                break;
            }
        }
        Ok(())
    }
}
