//! Name-keyed registries of interchangeable strategies.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{KppError, Result};

/// Strategies of one kind, selected by name at run time.
pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<&'static str, Arc<T>>,
    default: &'static str,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str, default: &'static str) -> Self {
        Registry {
            kind,
            entries: BTreeMap::new(),
            default,
        }
    }

    pub fn register(&mut self, name: &'static str, strategy: Arc<T>) -> &mut Self {
        self.entries.insert(name, strategy);
        self
    }

    pub fn get(&self, name: &str) -> Result<Arc<T>> {
        self.entries
            .get(name)
            .cloned()
            .ok_or_else(|| KppError::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
            })
    }

    pub fn default_strategy(&self) -> Arc<T> {
        self.get(self.default)
            .expect("default strategy is registered")
    }

    pub fn default_name(&self) -> &'static str {
        self.default
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Greeter: Send + Sync {
        fn greet(&self) -> String;
    }

    struct Plain;
    impl Greeter for Plain {
        fn greet(&self) -> String {
            "hi".into()
        }
    }

    #[test]
    fn lookup_by_name() {
        let mut r: Registry<dyn Greeter> = Registry::new("greeter", "plain");
        r.register("plain", Arc::new(Plain));
        assert_eq!(r.get("plain").unwrap().greet(), "hi");
        assert_eq!(r.default_strategy().greet(), "hi");
        assert!(matches!(
            r.get("loud"),
            Err(KppError::UnknownStrategy { .. })
        ));
        assert_eq!(r.names(), vec!["plain"]);
    }
}
