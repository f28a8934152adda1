//! A deliberately small JSONPath dialect.
//!
//! Supported: the root `$`, dot child access (`.name`), bracket child access
//! (`['name']`, `["name"]`, `[3]`) and the wildcard (`.*`, `[*]`). Filters,
//! slices, unions and recursive descent are rejected at parse time.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PathError {
    #[error("JSONPath must start with `$`: {0:?}")]
    MissingRoot(String),
    #[error("unsupported JSONPath feature `{feature}` in {path:?}")]
    Unsupported { path: String, feature: &'static str },
    #[error("malformed JSONPath {path:?} at byte {at}")]
    Malformed { path: String, at: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Segment {
    Name(String),
    Index(usize),
    Wildcard,
}

impl Segment {
    /// The key this segment contributes when a selected node is re-indexed
    /// by its last path element.
    pub fn key(&self) -> Option<String> {
        match self {
            Segment::Name(name) => Some(name.clone()),
            Segment::Index(i) => Some(i.to_string()),
            Segment::Wildcard => None,
        }
    }
}

/// A parsed JSONPath.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JsonPath {
    source: String,
    segments: Vec<Segment>,
}

/// One node picked by [`JsonPath::select`], with the concrete location it was
/// found at.
#[derive(Debug, Clone, PartialEq)]
pub struct Selected<'a> {
    pub location: Vec<Segment>,
    pub value: &'a Value,
}

impl Selected<'_> {
    /// Last concrete path element of the node (`name` or array index).
    pub fn ultimate_key(&self) -> Option<String> {
        self.location.last().and_then(Segment::key)
    }
}

impl JsonPath {
    pub fn parse(src: &str) -> Result<Self, PathError> {
        let bytes = src.as_bytes();
        if bytes.first() != Some(&b'$') {
            return Err(PathError::MissingRoot(src.to_string()));
        }
        let malformed = |at: usize| PathError::Malformed { path: src.to_string(), at };
        let unsupported = |feature| PathError::Unsupported { path: src.to_string(), feature };

        let mut segments = Vec::new();
        let mut i = 1;
        while i < bytes.len() {
            match bytes[i] {
                b'.' => {
                    i += 1;
                    match bytes.get(i) {
                        Some(b'.') => return Err(unsupported("recursive descent")),
                        Some(b'*') => {
                            segments.push(Segment::Wildcard);
                            i += 1;
                        }
                        Some(_) => {
                            let start = i;
                            while i < bytes.len() && bytes[i] != b'.' && bytes[i] != b'[' {
                                i += 1;
                            }
                            let name = &src[start..i];
                            if !name.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '-' || c == '@' || c == '$') {
                                return Err(malformed(start));
                            }
                            segments.push(Segment::Name(name.to_string()));
                        }
                        None => return Err(malformed(i)),
                    }
                }
                b'[' => {
                    i += 1;
                    match bytes.get(i) {
                        Some(b'*') => {
                            if bytes.get(i + 1) != Some(&b']') {
                                return Err(malformed(i + 1));
                            }
                            segments.push(Segment::Wildcard);
                            i += 2;
                        }
                        Some(&q @ (b'\'' | b'"')) => {
                            i += 1;
                            let mut name = String::new();
                            loop {
                                let Some(c) = src[i..].chars().next() else {
                                    return Err(malformed(i));
                                };
                                if c == '\\' {
                                    let Some(escaped) = src[i + 1..].chars().next() else {
                                        return Err(malformed(i));
                                    };
                                    name.push(escaped);
                                    i += 1 + escaped.len_utf8();
                                    continue;
                                }
                                i += c.len_utf8();
                                if c as u32 == q as u32 {
                                    break;
                                }
                                name.push(c);
                            }
                            match bytes.get(i) {
                                Some(b']') => i += 1,
                                Some(b',') => return Err(unsupported("union")),
                                _ => return Err(malformed(i)),
                            }
                            segments.push(Segment::Name(name));
                        }
                        Some(b'?') => return Err(unsupported("filter")),
                        Some(b'(') => return Err(unsupported("script expression")),
                        Some(c) if c.is_ascii_digit() || *c == b'-' || *c == b':' => {
                            let start = i;
                            while i < bytes.len() && bytes[i] != b']' {
                                i += 1;
                            }
                            let inner = &src[start..i];
                            if inner.contains(':') {
                                return Err(unsupported("slice"));
                            }
                            if inner.contains(',') {
                                return Err(unsupported("union"));
                            }
                            let index = inner.parse::<usize>().map_err(|_| malformed(start))?;
                            if i >= bytes.len() {
                                return Err(malformed(i));
                            }
                            i += 1;
                            segments.push(Segment::Index(index));
                        }
                        _ => return Err(malformed(i)),
                    }
                }
                _ => return Err(malformed(i)),
            }
        }
        Ok(Self { source: src.to_string(), segments })
    }

    /// Builds the path `$.<name>` for a single child of the root.
    pub fn child_of_root(name: &str) -> Self {
        let source = if !name.is_empty() && name.chars().all(|c| c.is_alphanumeric() || c == '_') {
            alloc::format!("$.{name}")
        } else {
            alloc::format!("$['{}']", name.replace('\\', "\\\\").replace('\'', "\\'"))
        };
        Self { source, segments: alloc::vec![Segment::Name(name.to_string())] }
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn has_wildcard(&self) -> bool {
        self.segments.iter().any(|s| matches!(s, Segment::Wildcard))
    }

    /// A definite path addresses exactly one location.
    pub fn is_definite(&self) -> bool {
        !self.has_wildcard()
    }

    pub fn last(&self) -> Option<&Segment> {
        self.segments.last()
    }

    /// Evaluates the path. Missing nodes produce an empty selection.
    pub fn select<'a>(&self, root: &'a Value) -> Vec<Selected<'a>> {
        let mut current = alloc::vec![Selected { location: Vec::new(), value: root }];
        for segment in &self.segments {
            let mut next = Vec::new();
            for node in current {
                match (segment, node.value) {
                    (Segment::Name(name), Value::Object(map)) => {
                        if let Some(v) = map.get(name) {
                            next.push(node.child(Segment::Name(name.clone()), v));
                        }
                    }
                    (Segment::Index(i), Value::Array(items)) => {
                        if let Some(v) = items.get(*i) {
                            next.push(node.child(Segment::Index(*i), v));
                        }
                    }
                    (Segment::Wildcard, Value::Object(map)) => {
                        for (k, v) in map {
                            next.push(node.child(Segment::Name(k.clone()), v));
                        }
                    }
                    (Segment::Wildcard, Value::Array(items)) => {
                        for (i, v) in items.iter().enumerate() {
                            next.push(node.child(Segment::Index(i), v));
                        }
                    }
                    _ => {}
                }
            }
            current = next;
        }
        current
    }

    /// True when the path selects at least one node.
    pub fn matches(&self, root: &Value) -> bool {
        !self.select(root).is_empty()
    }

    /// Writes `value` at this definite path, creating intermediate objects.
    ///
    /// Fails with the conflicting location when something other than an
    /// object is already in the way, or when the path is not made of names.
    pub fn insert(&self, root: &mut Map<String, Value>, value: Value) -> Result<(), InsertError> {
        let names: Vec<&str> = self
            .segments
            .iter()
            .map(|s| match s {
                Segment::Name(n) => Ok(n.as_str()),
                _ => Err(InsertError::NotWritable),
            })
            .collect::<Result<_, _>>()?;
        let Some((leaf, parents)) = names.split_last() else {
            return Err(InsertError::NotWritable);
        };
        let mut map = root;
        for name in parents {
            let slot = map.entry(String::from(*name)).or_insert_with(|| Value::Object(Map::new()));
            map = match slot {
                Value::Object(m) => m,
                _ => return Err(InsertError::Occupied),
            };
        }
        if map.contains_key(*leaf) {
            return Err(InsertError::Occupied);
        }
        map.insert(String::from(*leaf), value);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertError {
    Occupied,
    NotWritable,
}

impl<'a> Selected<'a> {
    fn child(&self, seg: Segment, value: &'a Value) -> Selected<'a> {
        let mut location = self.location.clone();
        location.push(seg);
        Selected { location, value }
    }
}

impl fmt::Display for JsonPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl core::str::FromStr for JsonPath {
    type Err = PathError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl serde::Serialize for JsonPath {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> serde::Deserialize<'de> for JsonPath {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn keys(path: &str, doc: &Value) -> Vec<Option<String>> {
        JsonPath::parse(path).unwrap().select(doc).iter().map(Selected::ultimate_key).collect()
    }

    #[test]
    fn dot_and_bracket_are_equivalent() {
        let doc = json!({"credentialSubject": {"e_mail": "a@b", "x y": 1}});
        let a = JsonPath::parse("$.credentialSubject.e_mail").unwrap();
        let b = JsonPath::parse("$['credentialSubject'][\"e_mail\"]").unwrap();
        assert_eq!(a.segments(), b.segments());
        assert_eq!(a.select(&doc)[0].value, &json!("a@b"));
        assert_eq!(JsonPath::parse("$.credentialSubject['x y']").unwrap().select(&doc)[0].value, &json!(1));
    }

    #[test]
    fn wildcard_over_objects_and_arrays() {
        let doc = json!({"a": {"city": "X", "zip": "Y"}, "b": [10, 20]});
        assert_eq!(keys("$.a.*", &doc), [Some("city".into()), Some("zip".into())]);
        assert_eq!(keys("$.b[*]", &doc), [Some("0".into()), Some("1".into())]);
        assert_eq!(JsonPath::parse("$.b[1]").unwrap().select(&doc)[0].value, &json!(20));
    }

    #[test]
    fn missing_nodes_select_nothing() {
        let doc = json!({"a": 1});
        assert!(JsonPath::parse("$.a.b.c").unwrap().select(&doc).is_empty());
        assert!(JsonPath::parse("$.z[*]").unwrap().select(&doc).is_empty());
        assert!(JsonPath::parse("$[0]").unwrap().select(&doc).is_empty());
    }

    #[test]
    fn rejects_out_of_dialect_features() {
        for (path, feature) in [
            ("$..email", "recursive descent"),
            ("$.a[?(@.b)]", "filter"),
            ("$.a[0:2]", "slice"),
            ("$.a[0,1]", "union"),
            ("$.a['b','c']", "union"),
        ] {
            match JsonPath::parse(path) {
                Err(PathError::Unsupported { feature: f, .. }) => assert_eq!(f, feature, "{path}"),
                other => panic!("{path}: {other:?}"),
            }
        }
        assert!(matches!(JsonPath::parse("credentialSubject"), Err(PathError::MissingRoot(_))));
        assert!(matches!(JsonPath::parse("$."), Err(PathError::Malformed { .. })));
        assert!(matches!(JsonPath::parse("$['a'"), Err(PathError::Malformed { .. })));
        assert!(matches!(JsonPath::parse("$[12"), Err(PathError::Malformed { .. })));
    }

    #[test]
    fn insert_creates_parents_and_refuses_overwrite() {
        let mut m = Map::new();
        JsonPath::parse("$.profile.email").unwrap().insert(&mut m, json!("e")).unwrap();
        assert_eq!(Value::Object(m.clone()), json!({"profile": {"email": "e"}}));
        assert_eq!(
            JsonPath::parse("$.profile.email").unwrap().insert(&mut m, json!("f")),
            Err(InsertError::Occupied)
        );
        assert_eq!(
            JsonPath::parse("$.profile.email.deeper").unwrap().insert(&mut m, json!(1)),
            Err(InsertError::Occupied)
        );
        assert_eq!(JsonPath::parse("$").unwrap().insert(&mut m, json!(1)), Err(InsertError::NotWritable));
    }

    #[test]
    fn root_child_roundtrips_through_parse() {
        for name in ["email", "with space", "it's"] {
            let p = JsonPath::child_of_root(name);
            assert_eq!(JsonPath::parse(p.as_str()).unwrap(), p);
        }
    }
}
