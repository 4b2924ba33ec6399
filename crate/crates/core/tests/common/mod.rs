#![allow(dead_code)]

pub mod hat_oracle;
