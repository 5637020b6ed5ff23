use std::collections::HashMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::ApiError;

/// Query parameters consumed one by one; leftovers are rejected.
pub(crate) struct Params(HashMap<String, String>);

impl Params {
    pub(crate) fn new(raw: HashMap<String, String>) -> Self {
        Params(raw)
    }

    /// Empty values count as absent, so `?format=` means "any format".
    fn take(&mut self, name: &str) -> Option<String> {
        self.0.remove(name).filter(|v| !v.is_empty())
    }

    pub(crate) fn take_parsed<T>(&mut self, name: &str) -> Result<Option<T>, ApiError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.take(name)
            .map(|v| v.parse::<T>().map_err(|e| ApiError::bad(name, format!("{v:?}: {e}"))))
            .transpose()
    }

    pub(crate) fn take_bool(&mut self, name: &str) -> Result<Option<bool>, ApiError> {
        match self.take(name).as_deref() {
            None => Ok(None),
            Some("true" | "1") => Ok(Some(true)),
            Some("false" | "0") => Ok(Some(false)),
            Some(other) => Err(ApiError::bad(name, format!("{other:?} is not true or false"))),
        }
    }

    pub(crate) fn require(&mut self, name: &str) -> Result<String, ApiError> {
        self.take(name).ok_or_else(|| ApiError::bad(name, "is required"))
    }

    pub(crate) fn require_parsed<T>(&mut self, name: &str) -> Result<T, ApiError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.take_parsed(name)?
            .ok_or_else(|| ApiError::bad(name, "is required"))
    }

    pub(crate) fn finish(self) -> Result<(), ApiError> {
        let mut unknown: Vec<_> = self.0.into_keys().collect();
        unknown.sort();
        match unknown.into_iter().next() {
            Some(name) => Err(ApiError::bad(name, "unknown query parameter")),
            None => Ok(()),
        }
    }
}
