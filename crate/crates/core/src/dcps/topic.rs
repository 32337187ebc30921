//! Topics and content-filtered topics.

use crate::dcps::filter::FilterExpression;
use crate::dcps::types::TypeDescriptor;
use std::sync::Arc;

#[derive(Debug, Clone)]
struct TopicDef {
    name: String,
    descriptor: TypeDescriptor,
    type_hash: u64,
}

/// A named typed data stream. Endpoints match only on identical name and
/// type descriptor (compared structurally via the type hash).
#[derive(Debug, Clone)]
pub struct Topic {
    def: Arc<TopicDef>,
}

impl Topic {
    pub(crate) fn new(name: String, descriptor: TypeDescriptor) -> Topic {
        let type_hash = descriptor.type_hash();
        Topic {
            def: Arc::new(TopicDef {
                name,
                descriptor,
                type_hash,
            }),
        }
    }

    pub fn name(&self) -> &str {
        &self.def.name
    }

    pub fn descriptor(&self) -> &TypeDescriptor {
        &self.def.descriptor
    }

    pub fn type_hash(&self) -> u64 {
        self.def.type_hash
    }
}

/// A topic restricted by a filter expression; readers created on it
/// receive exactly the samples satisfying the expression.
#[derive(Debug, Clone)]
pub struct FilteredTopic {
    pub topic: Topic,
    pub expression: FilterExpression,
    pub text: String,
}

/// Either form a reader can subscribe to.
#[derive(Debug, Clone)]
pub enum TopicRef {
    Plain(Topic),
    Filtered(FilteredTopic),
}

impl TopicRef {
    pub fn topic(&self) -> &Topic {
        match self {
            TopicRef::Plain(t) => t,
            TopicRef::Filtered(f) => &f.topic,
        }
    }

    pub fn filter(&self) -> Option<&FilteredTopic> {
        match self {
            TopicRef::Plain(_) => None,
            TopicRef::Filtered(f) => Some(f),
        }
    }
}

impl From<Topic> for TopicRef {
    fn from(topic: Topic) -> Self {
        TopicRef::Plain(topic)
    }
}

impl From<FilteredTopic> for TopicRef {
    fn from(filtered: FilteredTopic) -> Self {
        TopicRef::Filtered(filtered)
    }
}
