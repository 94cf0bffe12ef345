//! Serde helpers that write complex numbers as `{"re": .., "im": ..}` objects.

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
struct Pair {
    re: f64,
    im: f64,
}

pub fn serialize<S: Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
    Pair { re: z.re, im: z.im }.serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
    let p = Pair::deserialize(d)?;
    Ok(Complex64::new(p.re, p.im))
}

pub mod vec {
    use super::Pair;
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<Pair> = v.iter().map(|z| Pair { re: z.re, im: z.im }).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        let pairs = Vec::<Pair>::deserialize(d)?;
        Ok(pairs.into_iter().map(|p| Complex64::new(p.re, p.im)).collect())
    }
}

pub mod vec3 {
    use super::Pair;
    use crate::geometry::CVec3;
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[CVec3], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<[Pair; 3]> = v
            .iter()
            .map(|c| {
                [
                    Pair { re: c.x.re, im: c.x.im },
                    Pair { re: c.y.re, im: c.y.im },
                    Pair { re: c.z.re, im: c.z.im },
                ]
            })
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CVec3>, D::Error> {
        let rows = Vec::<[Pair; 3]>::deserialize(d)?;
        Ok(rows
            .into_iter()
            .map(|[a, b, c]| {
                CVec3::new(
                    Complex64::new(a.re, a.im),
                    Complex64::new(b.re, b.im),
                    Complex64::new(c.re, c.im),
                )
            })
            .collect())
    }
}
