//! Numerical core for the regularised Yukawa₂ model: finite CAR/Fock algebra,
//! the extended-CAR localisation seminorms, singular kernels, noise and
//! renormalised trees, parabolic Besov estimation and the local solver.
//!
//! The crate is `no_std` with `alloc`; FFTs are supplied by the caller through
//! [`spectral::Dft`].

#![no_std]

extern crate alloc;

pub type C64 = num_complex::Complex64;

pub mod error;
pub mod linalg;
pub mod spectral;
pub mod singleparticle;
pub mod fock;
pub mod grassmann;
pub mod kernels;
pub mod noise;
pub mod besov;
pub mod trees;
pub mod solver;

pub use error::{Error, Result};
