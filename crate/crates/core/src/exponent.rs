use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// An exponent in `(0, ∞]` with infinity kept as its own case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinite,
}

impl Exponent {
    pub fn from_f64(x: f64) -> Exponent {
        if x.is_infinite() && x > 0.0 {
            Exponent::Infinite
        } else {
            Exponent::Finite(x)
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Exponent::Finite(x) => x,
            Exponent::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Exponent::Infinite)
    }

    /// Hölder conjugate `r/(r-1)`, with `1 ↦ ∞` and `∞ ↦ 1`.
    pub fn conjugate(self) -> Exponent {
        match self {
            Exponent::Infinite => Exponent::Finite(1.0),
            Exponent::Finite(x) if x == 1.0 => Exponent::Infinite,
            Exponent::Finite(x) => Exponent::Finite(x / (x - 1.0)),
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Exponent::Finite(x) => s.serialize_f64(*x),
            Exponent::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(Exponent::from_f64(x)),
            Raw::Text(t) => match t.as_str() {
                "inf" | "infinity" | "Infinity" | "∞" => Ok(Exponent::Infinite),
                other => other
                    .parse::<f64>()
                    .map(Exponent::from_f64)
                    .map_err(serde::de::Error::custom),
            },
        }
    }
}
