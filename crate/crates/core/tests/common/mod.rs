#![allow(dead_code)]

pub mod datasets;
pub mod ortho_check;
pub mod qp_oracle;
