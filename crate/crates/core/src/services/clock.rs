//! Injectable service clock: calendar date for account/card expiry checks
//! and milliseconds for token TTLs. Tests pin the date and advance time
//! manually; production uses the system clock.

use chrono::NaiveDate;
use std::sync::{Arc, Mutex};

#[derive(Debug)]
struct Inner {
    fixed_today: Option<NaiveDate>,
    /// Manual offset applied on top of the base clock.
    offset_ms: u64,
    /// When set, now_ms counts from zero plus the offset (fully manual).
    manual: bool,
}

#[derive(Debug, Clone)]
pub struct ServiceClock {
    inner: Arc<Mutex<Inner>>,
}

impl ServiceClock {
    pub fn system() -> Self {
        ServiceClock {
            inner: Arc::new(Mutex::new(Inner {
                fixed_today: None,
                offset_ms: 0,
                manual: false,
            })),
        }
    }

    /// Fully manual clock pinned to a date, with now_ms starting at zero.
    pub fn fixed(today: NaiveDate) -> Self {
        ServiceClock {
            inner: Arc::new(Mutex::new(Inner {
                fixed_today: Some(today),
                offset_ms: 0,
                manual: true,
            })),
        }
    }

    pub fn today(&self) -> NaiveDate {
        let inner = self.inner.lock().expect("clock lock");
        inner.fixed_today.unwrap_or_else(|| chrono::Local::now().date_naive())
    }

    pub fn now_ms(&self) -> u64 {
        let inner = self.inner.lock().expect("clock lock");
        let base = if inner.manual {
            0
        } else {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0)
        };
        base + inner.offset_ms
    }

    pub fn set_today(&self, date: NaiveDate) {
        self.inner.lock().expect("clock lock").fixed_today = Some(date);
    }

    pub fn advance_ms(&self, delta: u64) {
        self.inner.lock().expect("clock lock").offset_ms += delta;
    }
}

/// Parses the fixture date format (MM/DD/YYYY).
pub fn parse_date(text: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(text, crate::services::sql::DATE_FORMAT).ok()
}

pub fn format_date(date: NaiveDate) -> String {
    date.format(crate::services::sql::DATE_FORMAT).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_clock_is_manual() {
        let clock = ServiceClock::fixed(parse_date("01/15/2014").unwrap());
        assert_eq!(clock.now_ms(), 0);
        clock.advance_ms(250);
        assert_eq!(clock.now_ms(), 250);
        assert_eq!(format_date(clock.today()), "01/15/2014");
        clock.set_today(parse_date("02/01/2014").unwrap());
        assert_eq!(format_date(clock.today()), "02/01/2014");
    }
}
