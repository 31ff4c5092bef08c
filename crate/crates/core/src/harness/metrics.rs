use serde::de::{self, Visitor};
use serde::{Deserializer, Serializer};

use crate::error::{Error, Result};
use crate::linalg::RMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mse: f64,
    /// `+inf` when `mse == 0`.
    pub psnr: f64,
    pub ssim: f64,
}

/// MSE, PSNR (dB) and global single-window SSIM with `C1 = (0.01·MAX)²`, `C2 = (0.03·MAX)²`.
pub fn metrics(x_true: &RMatrix, x_est: &RMatrix, max_value: f64) -> Result<Metrics> {
    if x_true.shape() != x_est.shape() {
        return Err(Error::shape(format!("{:?}", x_true.shape()), format!("{:?}", x_est.shape())));
    }
    if x_true.is_empty() {
        return Err(Error::InvalidSize("metrics need at least one entry".into()));
    }
    if !(max_value > 0.0 && max_value.is_finite()) {
        return Err(Error::Domain(format!("MAX must be positive, got {max_value}")));
    }
    let n = x_true.len() as f64;
    let mse = (x_true - x_est).norm_squared() / n;
    let psnr = if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (max_value * max_value / mse).log10()
    };

    let mu_x = x_true.sum() / n;
    let mu_y = x_est.sum() / n;
    let (mut var_x, mut var_y, mut cov) = (0.0, 0.0, 0.0);
    for (a, b) in x_true.iter().zip(x_est.iter()) {
        let (dx, dy) = (a - mu_x, b - mu_y);
        var_x += dx * dx;
        var_y += dy * dy;
        cov += dx * dy;
    }
    var_x /= n;
    var_y /= n;
    cov /= n;
    let c1 = (0.01 * max_value).powi(2);
    let c2 = (0.03 * max_value).powi(2);
    let ssim = ((2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)) / ((mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2));
    Ok(Metrics { mse, psnr, ssim })
}

/// Optional float fields where infinity is written as the string `"inf"`.
pub(crate) mod opt_float {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(x) if *x == f64::INFINITY => s.serialize_str("inf"),
            Some(x) if *x == f64::NEG_INFINITY => s.serialize_str("-inf"),
            Some(x) => s.serialize_f64(*x),
        }
    }

    struct FloatVisitor;

    impl<'de> Visitor<'de> for FloatVisitor {
        type Value = Option<f64>;

        fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
            f.write_str("a number, \"inf\", or nothing")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Self::Value, E> {
            Ok(Some(v))
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Self::Value, E> {
            Ok(Some(v as f64))
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Self::Value, E> {
            Ok(Some(v as f64))
        }

        fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Self::Value, E> {
            if v.is_empty() {
                return Ok(None);
            }
            v.parse().map(Some).map_err(|_| E::custom(format!("not a number: {v}")))
        }

        fn visit_none<E: de::Error>(self) -> std::result::Result<Self::Value, E> {
            Ok(None)
        }

        fn visit_unit<E: de::Error>(self) -> std::result::Result<Self::Value, E> {
            Ok(None)
        }

        fn visit_some<D: Deserializer<'de>>(self, d: D) -> std::result::Result<Self::Value, D::Error> {
            d.deserialize_any(FloatVisitor)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
        d.deserialize_any(FloatVisitor)
    }
}
