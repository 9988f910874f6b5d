#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod episodes;
pub mod error;
pub mod example;
pub mod metatrain;
pub mod model;
pub mod optim;
pub mod par;
pub mod params;
pub mod seed;
pub mod tensor;

pub use error::{Error, Result};
