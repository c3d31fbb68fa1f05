use std::any::Any;
use std::borrow::Cow;
use std::fmt;

/// Identifies the component an event originates from (a button, a clock, ...).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SourceId(Cow<'static, str>);

impl SourceId {
    pub const fn from_static(id: &'static str) -> Self {
        SourceId(Cow::Borrowed(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&'static str> for SourceId {
    fn from(id: &'static str) -> Self {
        SourceId(Cow::Borrowed(id))
    }
}

impl From<String> for SourceId {
    fn from(id: String) -> Self {
        SourceId(Cow::Owned(id))
    }
}

impl fmt::Display for SourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// App-defined data carried by an event.
#[derive(Default)]
pub struct Payload(Option<Box<dyn Any + Send>>);

impl Payload {
    pub fn none() -> Self {
        Payload(None)
    }

    pub fn new<T: Any + Send>(value: T) -> Self {
        Payload(Some(Box::new(value)))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_none()
    }

    pub fn get<T: Any>(&self) -> Option<&T> {
        self.0.as_ref().and_then(|b| b.downcast_ref::<T>())
    }
}

impl fmt::Debug for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(_) => f.write_str("Payload(..)"),
            None => f.write_str("Payload(none)"),
        }
    }
}

/// A queued unit of input. The sequence number is assigned at enqueue time and
/// is strictly increasing across all producers of one loop.
#[derive(Debug)]
pub struct Event {
    pub(crate) seq: u64,
    pub(crate) source: SourceId,
    pub(crate) kind: Cow<'static, str>,
    pub(crate) payload: Payload,
}

impl Event {
    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn source(&self) -> &SourceId {
        &self.source
    }

    pub fn kind(&self) -> &str {
        &self.kind
    }

    pub fn payload<T: Any>(&self) -> Option<&T> {
        self.payload.get::<T>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payload_downcasts_to_its_own_type_only() {
        let p = Payload::new(42u32);
        assert_eq!(p.get::<u32>(), Some(&42));
        assert!(p.get::<i64>().is_none());
        assert!(Payload::none().get::<u32>().is_none());
    }
}
