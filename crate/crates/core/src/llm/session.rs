use super::{BackendState, LlmBackend, LlmError, Message};

/// One conversation: a fixed system prompt, the backend state, and the
/// turns exchanged so far (the conversation memory).
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub state: BackendState,
    system: Option<String>,
    turns: Vec<Message>,
}

impl Session {
    pub fn new(state: BackendState, system: Option<String>) -> Self {
        Self {
            state,
            system,
            turns: Vec::new(),
        }
    }

    pub fn turns(&self) -> &[Message] {
        &self.turns
    }

    /// Clears conversation memory; model and sampling settings are kept.
    pub fn reset_memory(mut self) -> Self {
        self.turns.clear();
        self
    }

    pub fn clear(&mut self) {
        self.turns.clear();
    }

    /// Messages that a request with `user` appended would carry.
    pub fn request(&self, user: &str) -> Vec<Message> {
        let mut messages = Vec::with_capacity(self.turns.len() + 2);
        if let Some(system) = &self.system {
            messages.push(Message::system(system.clone()));
        }
        messages.extend(self.turns.iter().cloned());
        messages.push(Message::user(user));
        messages
    }

    /// Sends `user` with the full memory and records both turns.
    pub fn ask(&mut self, backend: &dyn LlmBackend, user: &str) -> Result<String, LlmError> {
        let reply = backend.complete(&self.request(user), &self.state)?;
        self.turns.push(Message::user(user));
        self.turns.push(Message::assistant(reply.clone()));
        Ok(reply)
    }

    /// Sends `user` without reading or writing conversation memory.
    pub fn ask_detached(&self, backend: &dyn LlmBackend, user: &str) -> Result<String, LlmError> {
        let mut messages = Vec::with_capacity(2);
        if let Some(system) = &self.system {
            messages.push(Message::system(system.clone()));
        }
        messages.push(Message::user(user));
        backend.complete(&messages, &self.state)
    }
}
