pub mod forest;
pub mod oracle;
