pub mod enumeration;
pub mod oracle;
