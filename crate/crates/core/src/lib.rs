//! Byzantine-robust secure aggregation for federated learning.

pub mod adversary;
pub mod crypto;
pub mod fl;
pub mod field;
pub mod fixed;
pub mod robust;
pub mod secagg;
pub mod seed;
pub mod zk;
