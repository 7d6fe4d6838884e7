#![allow(dead_code)]

pub mod cases;
pub mod data;
pub mod metrics;
pub mod nets;
