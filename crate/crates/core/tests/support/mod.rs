#![allow(dead_code)]

pub mod gen;
pub mod mock;
pub mod oracle;
