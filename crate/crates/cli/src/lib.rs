// SPDX-License-Identifier: Apache-2.0

//! Library side of the `platsec` command: experiment flows, batch runs,
//! reports and output digests.

pub mod batch;
pub mod cli;
pub mod config;
pub mod digest;
pub mod flows;
pub mod report;
