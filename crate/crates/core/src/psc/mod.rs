// SPDX-License-Identifier: Apache-2.0

//! Power side-channel leakage: measurement metrics and the database-driven
//! estimation flow.

pub mod estimation;
pub mod metrics;
