use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DVector;

/// Coefficients of a P1 function in the nodal basis (`u = Σ ū_j ψ_j`).
#[derive(Clone, Debug, PartialEq)]
pub struct NodalField(pub DVector<f64>);

/// Dual coordinates `ĝ_i = ⟨ψ_i, g⟩₀` of a range-side element.
#[derive(Clone, Debug, PartialEq)]
pub struct DualField(pub DVector<f64>);

macro_rules! field_impls {
    ($t:ident) => {
        impl $t {
            pub fn zeros(n: usize) -> Self {
                Self(DVector::zeros(n))
            }

            pub fn from_vec(v: Vec<f64>) -> Self {
                Self(DVector::from_vec(v))
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            pub fn as_slice(&self) -> &[f64] {
                self.0.as_slice()
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|v| v.is_finite())
            }
        }

        impl Add for &$t {
            type Output = $t;
            fn add(self, rhs: &$t) -> $t {
                $t(&self.0 + &rhs.0)
            }
        }

        impl Sub for &$t {
            type Output = $t;
            fn sub(self, rhs: &$t) -> $t {
                $t(&self.0 - &rhs.0)
            }
        }

        impl Mul<f64> for &$t {
            type Output = $t;
            fn mul(self, rhs: f64) -> $t {
                $t(&self.0 * rhs)
            }
        }

        impl Neg for &$t {
            type Output = $t;
            fn neg(self) -> $t {
                $t(-&self.0)
            }
        }
    };
}

field_impls!(NodalField);
field_impls!(DualField);
