pub mod measurement;
pub mod perspectives;
pub mod protocol;
pub mod qcore;
pub mod reasoning;
