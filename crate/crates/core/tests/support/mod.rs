#![allow(dead_code)]
pub mod classical_q9;
