#![allow(dead_code)]
pub mod duhamel;
