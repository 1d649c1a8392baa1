use std::collections::VecDeque;
use std::sync::Mutex;

use super::{check_request, BackendState, LlmBackend, LlmError, Message};

/// Replies from a fixed queue, one entry per call, and keeps every request.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    queue: Mutex<VecDeque<String>>,
    log: Mutex<Vec<Vec<Message>>>,
}

impl ScriptedBackend {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            queue: Mutex::new(responses.into_iter().map(Into::into).collect()),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> usize {
        self.log.lock().expect("log lock").len()
    }

    pub fn requests(&self) -> Vec<Vec<Message>> {
        self.log.lock().expect("log lock").clone()
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().expect("queue lock").len()
    }
}

impl LlmBackend for ScriptedBackend {
    fn complete(&self, messages: &[Message], _state: &BackendState) -> Result<String, LlmError> {
        check_request(messages)?;
        let mut log = self.log.lock().expect("log lock");
        log.push(messages.to_vec());
        self.queue
            .lock()
            .expect("queue lock")
            .pop_front()
            .ok_or(LlmError::QueueExhausted { calls: log.len() })
    }
}

type Responder = dyn Fn(&[Message]) -> Result<String, LlmError> + Send + Sync;

/// Answers each request with a closure over the request messages.
pub struct FnBackend {
    respond: Box<Responder>,
    calls: Mutex<usize>,
}

impl FnBackend {
    pub fn new<F>(respond: F) -> Self
    where
        F: Fn(&[Message]) -> Result<String, LlmError> + Send + Sync + 'static,
    {
        Self {
            respond: Box::new(respond),
            calls: Mutex::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        *self.calls.lock().expect("calls lock")
    }
}

impl LlmBackend for FnBackend {
    fn complete(&self, messages: &[Message], _state: &BackendState) -> Result<String, LlmError> {
        check_request(messages)?;
        *self.calls.lock().expect("calls lock") += 1;
        (self.respond)(messages)
    }
}
