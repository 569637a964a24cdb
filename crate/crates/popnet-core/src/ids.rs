//! String-backed identifier newtypes.
//!
//! Keeping each identifier class as its own type prevents, say, a stack id
//! from being passed where an instance id is expected. All of them order and
//! hash like plain strings, which keeps `BTreeMap` iteration lexicographic —
//! the crate-wide determinism guarantee leans on that.

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(
            Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash,
            serde::Serialize, serde::Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(value: impl Into<String>) -> Self {
                Self(value.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(value: &str) -> Self {
                Self(value.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(value: String) -> Self {
                Self(value)
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(
    /// Name of a point of presence, unique within a topology.
    PopName
);
string_id!(
    /// Identifier of a compute instance (`c0001`, `c0002`, ...). Never reused
    /// within a platform lifetime, even after release.
    InstanceId
);
string_id!(
    /// Identifier of an installed service chain (`ch0001`, ...).
    ChainId
);
string_id!(
    /// Identifier of a template-created instance group (`st0001`, ...).
    StackId
);
string_id!(
    /// Name of a node in the network graph: either a PoP or a switch.
    NodeName
);

impl From<&PopName> for NodeName {
    fn from(pop: &PopName) -> Self {
        NodeName::new(pop.as_str())
    }
}

impl From<&NodeName> for PopName {
    fn from(node: &NodeName) -> Self {
        PopName::new(node.as_str())
    }
}
