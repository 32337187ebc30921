//! Communication statuses and listener hooks.
//!
//! Statuses are the source of truth and are always maintained; listeners
//! are optional observers invoked from the participant's dispatch context
//! with the status snapshot taken at dispatch time.

use std::fmt;

/// Matched-endpoint status: how many remote endpoints are currently
/// matched, plus a monotone change counter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MatchedStatus {
    pub current_count: u32,
    pub changes: u64,
}

/// Liveliness of matched remote writers as observed by a reader.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LivelinessStatus {
    /// Currently matched (and therefore alive) remote writers.
    pub alive_count: u32,
    /// Cumulative count of liveliness-loss events.
    pub not_alive_count: u64,
    pub changes: u64,
}

/// Full status snapshot for one endpoint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StatusSet {
    pub liveliness_changed: LivelinessStatus,
    pub publication_matched: MatchedStatus,
    pub subscription_matched: MatchedStatus,
    pub sample_lost: u64,
    /// Remote endpoints whose topic and type matched but whose QoS did not.
    pub incompatible_qos: u64,
}

/// Which listener hook an event dispatches to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatusEventKind {
    DataAvailable,
    LivelinessChanged,
    SubscriptionMatched,
    PublicationMatched,
    SampleLost,
}

type Hook = Box<dyn FnMut(&StatusSet) + Send>;

/// Optional listener callbacks for one endpoint. Callbacks run serialized
/// per entity on the participant's dispatch context and must not block;
/// mutating calls back into the API from a callback fail with REENTRANCY.
#[derive(Default)]
pub struct ListenerHooks {
    pub on_data_available: Option<Hook>,
    pub on_liveliness_changed: Option<Hook>,
    pub on_subscription_matched: Option<Hook>,
    pub on_publication_matched: Option<Hook>,
    pub on_sample_lost: Option<Hook>,
}

impl ListenerHooks {
    pub fn none() -> Self {
        ListenerHooks::default()
    }

    pub fn on_data_available(mut self, hook: impl FnMut(&StatusSet) + Send + 'static) -> Self {
        self.on_data_available = Some(Box::new(hook));
        self
    }

    pub fn on_liveliness_changed(
        mut self,
        hook: impl FnMut(&StatusSet) + Send + 'static,
    ) -> Self {
        self.on_liveliness_changed = Some(Box::new(hook));
        self
    }

    pub fn on_subscription_matched(
        mut self,
        hook: impl FnMut(&StatusSet) + Send + 'static,
    ) -> Self {
        self.on_subscription_matched = Some(Box::new(hook));
        self
    }

    pub fn on_publication_matched(
        mut self,
        hook: impl FnMut(&StatusSet) + Send + 'static,
    ) -> Self {
        self.on_publication_matched = Some(Box::new(hook));
        self
    }

    pub fn on_sample_lost(mut self, hook: impl FnMut(&StatusSet) + Send + 'static) -> Self {
        self.on_sample_lost = Some(Box::new(hook));
        self
    }

    pub(crate) fn hook_for(&mut self, kind: StatusEventKind) -> Option<&mut Hook> {
        match kind {
            StatusEventKind::DataAvailable => self.on_data_available.as_mut(),
            StatusEventKind::LivelinessChanged => self.on_liveliness_changed.as_mut(),
            StatusEventKind::SubscriptionMatched => self.on_subscription_matched.as_mut(),
            StatusEventKind::PublicationMatched => self.on_publication_matched.as_mut(),
            StatusEventKind::SampleLost => self.on_sample_lost.as_mut(),
        }
    }
}

impl fmt::Debug for ListenerHooks {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ListenerHooks")
            .field("on_data_available", &self.on_data_available.is_some())
            .field("on_liveliness_changed", &self.on_liveliness_changed.is_some())
            .field(
                "on_subscription_matched",
                &self.on_subscription_matched.is_some(),
            )
            .field(
                "on_publication_matched",
                &self.on_publication_matched.is_some(),
            )
            .field("on_sample_lost", &self.on_sample_lost.is_some())
            .finish()
    }
}
