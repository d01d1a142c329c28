// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

/// Token estimate: one token per four characters, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

/// Ordered chat history for one candidate. After an optional leading
/// system message, roles alternate user/assistant starting with user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub messages: Vec<Message>,
    pub design_name: String,
    pub token_estimate: usize,
}

impl Conversation {
    pub fn new(system_preamble: Option<&str>, design_name: &str) -> Self {
        let mut conv = Self {
            messages: Vec::new(),
            design_name: design_name.to_string(),
            token_estimate: 0,
        };
        if let Some(p) = system_preamble {
            conv.token_estimate = estimate_tokens(p);
            conv.messages.push(Message::new(Role::System, p));
        }
        conv
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn last_role(&self) -> Option<Role> {
        self.messages.last().map(|m| m.role)
    }

    /// Copy of `self` with one more message.
    pub fn append(&self, role: Role, content: &str) -> Result<Self, GatewayError> {
        let mut next = self.clone();
        next.push(role, content)?;
        Ok(next)
    }

    pub fn push(&mut self, role: Role, content: &str) -> Result<(), GatewayError> {
        let allowed = match role {
            Role::System => self.messages.is_empty(),
            Role::User => matches!(self.last_role(), None | Some(Role::System | Role::Assistant)),
            Role::Assistant => self.last_role() == Some(Role::User),
        };
        if !allowed {
            return Err(GatewayError::RoleOrderViolation {
                previous: self.last_role(),
                attempted: role,
            });
        }
        self.token_estimate += estimate_tokens(content);
        self.messages.push(Message::new(role, content));
        Ok(())
    }

    /// Drop messages beyond `len`, e.g. to roll back a failed exchange.
    pub fn truncate(&mut self, len: usize) {
        self.messages.truncate(len);
        self.token_estimate = self.messages.iter().map(|m| estimate_tokens(&m.content)).sum();
    }
}

/// The message window actually sent: drop the oldest user/assistant pairs
/// until the estimate fits `limit`. The system message and the final user
/// message are always kept.
pub fn fit_context(messages: &[Message], limit: usize) -> Result<Vec<Message>, GatewayError> {
    let (system, rest) = match messages.first() {
        Some(m) if m.role == Role::System => (Some(m), &messages[1..]),
        _ => (None, messages),
    };
    let cost = |ms: &[Message]| ms.iter().map(|m| estimate_tokens(&m.content)).sum::<usize>();
    let fixed = system.map_or(0, |m| estimate_tokens(&m.content));
    let mut start = 0;
    while fixed + cost(&rest[start..]) > limit && rest.len() - start > 1 {
        start += 2;
    }
    let estimate = fixed + cost(&rest[start.min(rest.len())..]);
    if estimate > limit {
        return Err(GatewayError::ContextOverflow { estimate, limit });
    }
    Ok(system.into_iter().chain(&rest[start..]).cloned().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_conversation_shapes() {
        let c = Conversation::new(None, "fsm");
        assert!(c.is_empty());
        assert_eq!(c.token_estimate, 0);
        let c = Conversation::new(Some("You are a Verilog expert"), "fsm");
        assert_eq!(c.len(), 1);
        assert_eq!(c.messages[0].role, Role::System);
        assert_eq!(c.token_estimate, estimate_tokens("You are a Verilog expert"));
        assert_eq!(c, Conversation::new(Some("You are a Verilog expert"), "fsm"));
    }

    #[test]
    fn role_alternation() {
        let c = Conversation::new(None, "d").append(Role::User, "hi").unwrap();
        let c2 = c.append(Role::Assistant, "code").unwrap();
        assert!(c2.append(Role::User, "again").is_ok());
        assert!(matches!(
            c.append(Role::User, "twice"),
            Err(GatewayError::RoleOrderViolation { .. })
        ));
        assert!(c.append(Role::System, "late").is_err());
        assert!(Conversation::new(None, "d").append(Role::Assistant, "x").is_err());
        assert_eq!(c.len(), 1, "append leaves the original untouched");
    }

    #[test]
    fn token_estimate_tracks_content() {
        let mut c = Conversation::new(Some("sys"), "d");
        for (i, text) in ["hello world", "module m; endmodule", "fix line 3"].iter().enumerate() {
            let role = if i % 2 == 0 { Role::User } else { Role::Assistant };
            let before = c.token_estimate;
            c.push(role, text).unwrap();
            assert_eq!(c.token_estimate, before + estimate_tokens(text));
        }
        let scratch: usize = c.messages.iter().map(|m| estimate_tokens(&m.content)).sum();
        assert_eq!(c.token_estimate, scratch);
        c.truncate(2);
        assert_eq!(
            c.token_estimate,
            estimate_tokens("sys") + estimate_tokens("hello world")
        );
    }

    #[test]
    fn overflow_drops_oldest_pairs() {
        let long = "x".repeat(400); // 100 tokens
        let mut c = Conversation::new(Some("sys"), "d");
        for i in 0..5 {
            c.push(Role::User, &long).unwrap();
            c.push(Role::Assistant, &format!("reply {i}")).unwrap();
        }
        c.push(Role::User, "latest error").unwrap();
        let window = fit_context(&c.messages, 250).unwrap();
        assert_eq!(window[0].role, Role::System);
        assert_eq!(window.last().unwrap().content, "latest error");
        assert_eq!(window.len() % 2, 0, "system + whole pairs + final user");
        assert!(window.iter().map(|m| estimate_tokens(&m.content)).sum::<usize>() <= 250);
        assert_eq!(fit_context(&c.messages, 100_000).unwrap(), c.messages);
    }

    #[test]
    fn overflow_when_prompt_alone_too_big() {
        let c = Conversation::new(None, "d")
            .append(Role::User, &"y".repeat(100))
            .unwrap();
        assert!(matches!(
            fit_context(&c.messages, 10),
            Err(GatewayError::ContextOverflow {
                estimate: 25,
                limit: 10
            })
        ));
    }
}
